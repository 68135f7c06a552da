import numpy as np
import pytest

from erwlab.arrows import (
    CHECK_HITTING,
    CHECK_PREFIX,
    ORDER_CHECKS,
    ArrowSystem,
    WalkPath,
    check_theorem_order_properties,
    first_prefix_violation,
    format_arrow_table,
    mutual_levels,
    parse_arrow_table,
    prefix_dominates,
    walk_from_arrows,
)
from erwlab.exceptions import InvalidEnvironmentError, UnmaterializedCellError
from erwlab.streams import SeedKey
from erwlab.walk import CoupledSample, corrupt_sample, simulate_coupled
from tests.conftest import load_arrows


def _fixture_sample(left: str, right: str, n: int) -> CoupledSample:
    l_system = load_arrows(left)
    r_system = load_arrows(right)
    return CoupledSample(
        l_system=l_system,
        r_system=r_system,
        l_path=walk_from_arrows(l_system, n),
        r_path=walk_from_arrows(r_system, n),
        seed_key=SeedKey(0, 0),
    )


class TestArrowSystem:
    def test_all_right_arrows(self):
        path = walk_from_arrows(ArrowSystem(lambda x, k: 1), 10)
        assert path.positions.tolist() == list(range(11))

    def test_all_left_arrows(self):
        system = ArrowSystem(lambda x, k: -1)
        path = walk_from_arrows(system, 10)
        assert path.positions.tolist() == [-m for m in range(11)]
        assert system.cell_count == 10

    def test_hand_trace(self):
        system = load_arrows("hand_trace.arrows")
        path = walk_from_arrows(system, 4)
        assert path.positions.tolist() == [0, 1, 0, 1, 2]
        assert path.local_times == {0: 2, 1: 2}

    def test_frozen_system_refuses_new_cells(self):
        system = load_arrows("hand_trace.arrows")
        with pytest.raises(UnmaterializedCellError) as e:
            walk_from_arrows(system, 6)
        assert e.value.details == {"site": 3, "visit": 1}

    def test_only_consulted_cells_are_materialized(self, swap_kernel):
        sample = simulate_coupled(swap_kernel, SeedKey(4, 2), 300)
        assert sample.l_system.cell_count == 300
        assert sample.r_system.cell_count == 300
        assert sample.l_system.frozen

    def test_with_cell_copies(self):
        system = load_arrows("hand_trace.arrows")
        changed = system.with_cell(0, 1, -1)
        assert changed.row(0) == (-1, 1)
        assert system.row(0) == (1, 1)
        assert not changed.frozen
        with pytest.raises(UnmaterializedCellError):
            system.with_cell(5, 1, 1)
        with pytest.raises(ValueError):
            system.with_cell(0, 1, 0)


class TestPrefixDomination:
    def test_counterexample_positions_are_not_ordered(self):
        sample = _fixture_sample("counterexample_left.arrows", "counterexample_right.arrows", 4)
        assert prefix_dominates(sample.l_system, sample.r_system)
        assert sample.l_path.positions.tolist() == [0, -1, 0, 1, 2]
        assert sample.r_path.positions.tolist() == [0, 1, 2, 1, 0]
        assert sample.l_path.positions[-1] > sample.r_path.positions[-1]
        # hitting times and extremes are still ordered
        report = check_theorem_order_properties(sample, guard=1)
        assert report.ok
        assert set(report.counts) == set(ORDER_CHECKS)

    def test_reversed_systems_fail(self):
        left = load_arrows("counterexample_left.arrows")
        right = load_arrows("counterexample_right.arrows")
        assert not prefix_dominates(right, left)
        assert first_prefix_violation(right, left) == (0, 1)
        assert first_prefix_violation(left, right) is None

    def test_explicit_window(self):
        left = load_arrows("counterexample_left.arrows")
        right = load_arrows("counterexample_right.arrows")
        assert prefix_dominates(left, right, sites=[0, -1], depth=1)
        with pytest.raises(UnmaterializedCellError):
            prefix_dominates(left, right, sites=[1], depth=2)
        with pytest.raises(ValueError):
            prefix_dominates(left, right, sites=[0])


class TestWalkPath:
    @pytest.fixture
    def path(self):
        return WalkPath([0, 1, 0, -1, 0, 1, 2, 3, 2, 3, 4])

    def test_must_start_at_origin(self):
        with pytest.raises(ValueError):
            WalkPath([1, 2])

    def test_first_hit_times(self, path):
        assert path.first_hit_times(np.arange(6)).tolist() == [0, 1, 6, 7, 10, -1]
        assert path.hitting_time(-1) == 3
        assert path.hitting_time(-2) is None
        assert path.hitting_time(5) is None

    def test_first_visit_after(self, path):
        found = path.first_visit_after(np.array([0, 1, 3, -5, 4]), np.array([0, 1, 7, 0, 10]))
        assert found.tolist() == [2, 5, 9, -1, -1]

    def test_running_extremes(self, path):
        assert path.running_max.tolist() == [0, 1, 1, 1, 1, 1, 2, 3, 3, 3, 4]
        assert path.running_min[-1] == -1
        assert path.suffix_min.tolist()[:4] == [-1, -1, -1, -1]
        assert path.is_nearest_neighbour()

    def test_regeneration_levels(self, path):
        levels, times = path.regeneration_levels(2)
        assert levels.tolist() == [2]
        assert times.tolist() == [6]
        with pytest.raises(ValueError):
            path.regeneration_levels(0)

    def test_visit_counts(self, path):
        assert path.visit_counts(4) == {-1: 1, 0: 3, 1: 1}

    def test_truncated(self, path):
        assert path.truncated(3).positions.tolist() == [0, 1, 0, -1]
        assert path.truncated(50) is path


class TestOrderChecks:
    @pytest.mark.parametrize("kernel_name", ["identity_kernel", "pointwise_kernel", "swap_kernel", "composed_kernel"])
    def test_coupled_samples_respect_the_order(self, kernel_name, request):
        kernel = request.getfixturevalue(kernel_name)
        for replica in range(5):
            sample = simulate_coupled(kernel, SeedKey(17, replica), 600)
            report = check_theorem_order_properties(sample, guard=10)
            assert report.ok, report.violations
            assert report.replica == replica

    def test_identity_confirms_every_level(self, identity_kernel):
        sample = simulate_coupled(identity_kernel, SeedKey(2, 0), 800)
        levels, t_l, t_r, confirmed = mutual_levels(sample.l_path, sample.r_path, 10)
        assert levels.size > 0
        assert confirmed.all()
        np.testing.assert_array_equal(t_l, t_r)

    def test_corrupted_sample_is_flagged(self, swap_kernel):
        sample = corrupt_sample(simulate_coupled(swap_kernel, SeedKey(9, 0), 400))
        report = check_theorem_order_properties(sample, guard=10)
        assert not report.ok
        assert report.counts[CHECK_PREFIX] == 1
        assert report.violations[0].startswith(CHECK_PREFIX)

    def test_crafted_hitting_order_violation(self):
        sample = _fixture_sample("counterexample_right.arrows", "counterexample_left.arrows", 4)
        report = check_theorem_order_properties(sample, guard=1)
        assert report.counts[CHECK_PREFIX] == 1
        assert report.counts[CHECK_HITTING] == 2


class TestArrowTables:
    def test_parse_and_format(self):
        cells = parse_arrow_table("0: + −\n# comment\n-1: +   # trailing\n\n")
        assert cells == {0: [1, -1], -1: [1]}
        assert format_arrow_table(ArrowSystem(cells=cells)) == "-1: +\n0: + -\n"

    @pytest.mark.parametrize("text", ["0 + +", "a: +", "0: + x"])
    def test_parse_errors(self, text):
        with pytest.raises(InvalidEnvironmentError):
            parse_arrow_table(text)


def test_extreme_and_reflexive_domination():
    left = ArrowSystem(cells={0: [-1, -1, -1], 1: [-1]})
    right = ArrowSystem(cells={0: [1, 1, 1], 1: [1]})
    assert prefix_dominates(left, right)
    assert prefix_dominates(left, left)
    assert not prefix_dominates(right, left)
    assert not prefix_dominates(
        ArrowSystem(cells={3: [1, 1]}), ArrowSystem(cells={3: [-1, 1]}), sites=[3], depth=2
    )
