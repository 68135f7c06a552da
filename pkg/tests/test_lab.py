import json

import pytest

from erwlab import Laboratory
from erwlab.arrows import CHECK_PREFIX, ORDER_CHECKS
from erwlab.exceptions import InvalidEnvironmentError, KernelValidationError, ValidationError
from erwlab.models import (
    CoupledOracleSummary,
    DominanceReport,
    ExperimentConfig,
    OracleAnswer,
    OracleDump,
)
from erwlab.regen import REGEN_CHECKS
from erwlab.services.check_service import SUITE_CHECKS
from erwlab.services.sweep_service import SWEEP_COLUMNS, format_sweep_csv

SWAP = {"construction": "swap", "swap": [1, 2]}
POINTWISE = {"construction": "pointwise", "q": {"probs": [0.95, 0.9, 0.9]}}


def make_lab(**fields) -> Laboratory:
    return Laboratory(ExperimentConfig.from_dict(fields))


class TestConfiguration:
    def test_defaults(self):
        config = ExperimentConfig.from_dict({"environment": {"probs": [0.9]}})
        assert config.horizon == 1000
        assert config.guard == 50
        assert config.kernel is None
        assert config.format is None

    @pytest.mark.parametrize(
        "fields",
        [
            {"horizon": 0},
            {"seed": -1},
            {"seed": 2**64},
            {"kernel": {"construction": "swap"}},
            {"kernel": {"construction": "pointwise"}},
            {"format": "xml"},
        ],
    )
    def test_rejects_bad_fields(self, fields):
        with pytest.raises(ValidationError):
            ExperimentConfig.from_dict(fields)

    def test_bad_cookies_surface_as_environment_errors(self):
        with pytest.raises(InvalidEnvironmentError):
            ExperimentConfig.from_dict({"environment": {"probs": [0.9, 1.0]}})

    def test_from_file_and_overrides(self, tmp_path):
        path = tmp_path / "experiment.json"
        path.write_text(json.dumps({"environment": {"probs": [0.7, 0.9, 0.9]}, "kernel": SWAP, "seed": 5}))
        config = ExperimentConfig.from_file(str(path)).with_overrides(seed=None, replicas=7)
        assert config.seed == 5
        assert config.replicas == 7
        lab = Laboratory.from_file(str(path), horizon=40)
        assert lab.config.horizon == 40
        assert lab.kernel.q_env.probs == (0.9, 0.7, 0.9)

    def test_missing_environment(self):
        lab = make_lab()
        assert lab.kernel is None
        with pytest.raises(InvalidEnvironmentError):
            lab.classify()

    def test_worker_count(self, monkeypatch):
        monkeypatch.setenv("ERW_THREADS", "1")
        assert make_lab(workers=4).workers == 1


class TestClassify:
    def test_classify_and_validate(self):
        lab = make_lab(environment={"probs": [0.9, 0.9, 0.9]})
        assert lab.classify().label == "TransientPositiveSpeed"
        assert lab.validate_kernel().ok

    def test_invalid_kernel_is_reported(self):
        lab = make_lab(environment={"probs": [0.9, 0.7]}, kernel=SWAP)
        result = lab.validate_kernel()
        assert not result.ok
        assert result.index == 2


class TestCheck:
    def test_swap_suite_passes(self):
        lab = make_lab(
            environment={"probs": [0.7, 0.9, 0.9]},
            kernel=SWAP,
            replicas=20,
            horizon=500,
            guard=10,
            oracle_horizon=4,
        )
        report = lab.check()
        assert report.ok
        assert set(report.counts) == set(SUITE_CHECKS)
        assert report.samples == 20
        assert report.exact_atoms_checked > 0
        assert report.witness is not None
        assert report.witness.m0 == 1
        assert report.replay == []

    def test_identity_suite_skips_the_witness(self):
        report = make_lab(environment={"probs": [0.9, 0.9, 0.9]}, replicas=5, horizon=200, guard=10).check()
        assert report.ok
        assert report.witness is None

    def test_invalid_kernel_stops_the_suite(self):
        with pytest.raises(KernelValidationError):
            make_lab(environment={"probs": [0.9, 0.7]}, kernel=SWAP, replicas=2, horizon=20).check()

    def test_negative_control_is_caught(self):
        lab = make_lab(
            environment={"probs": [0.7, 0.9, 0.9]},
            kernel=SWAP,
            replicas=10,
            horizon=300,
            guard=10,
            negative_control=True,
        )
        report = lab.check()
        assert not report.ok
        assert report.negative_control
        assert report.counts[CHECK_PREFIX] >= 1
        assert report.replay[0]["seed"] == 0

    def test_replicas_replay_in_isolation(self):
        fields = dict(
            environment={"probs": [0.7, 0.9, 0.9]},
            kernel=SWAP,
            horizon=300,
            guard=10,
            negative_control=True,
        )
        path_checks = ORDER_CHECKS + REGEN_CHECKS
        full = make_lab(replicas=6, **fields).check()
        rerun = {name: 0 for name in path_checks}
        failing = []
        for replica in range(6):
            single = make_lab(replicas=1, first_replica=replica, **fields).check()
            if any(single.counts[name] for name in path_checks):
                failing.append(replica)
                assert single.replay == [{"seed": 0, "replica": replica}]
            for name in path_checks:
                rerun[name] += single.counts[name]
        assert rerun == {name: full.counts[name] for name in path_checks}
        assert failing
        assert [sample["replica"] for sample in full.replay] == failing


class TestSpeed:
    def test_single_environment(self):
        lab = make_lab(
            environment={"probs": [0.9, 0.9, 0.9]},
            replicas=30,
            horizon=2000,
            guard=20,
            guard_sensitivity=[10, 20],
            bootstrap_resamples=200,
        )
        report = lab.speed()
        assert not report.insufficient
        assert report.regeneration.value > 0
        assert [row.guard for row in report.guard_sensitivity] == [10, 20]
        assert report.paired is None
        assert report.regen_probability.epsilon_q is None
        assert report.environment.label == "TransientPositiveSpeed"

    def test_pointwise_pair(self):
        lab = make_lab(
            environment={"probs": [0.9, 0.9, 0.9]},
            kernel=POINTWISE,
            replicas=30,
            horizon=2000,
            guard=20,
            guard_sensitivity=[],
            bootstrap_resamples=200,
        )
        report = lab.speed()
        assert report.paired is not None
        assert report.paired.paired_diff.value >= 0
        assert report.regen_probability.indicator_violations == 0

    def test_insufficient_regenerations(self):
        lab = make_lab(environment={"probs": [0.5]}, replicas=10, horizon=300, guard=100, guard_sensitivity=[])
        report = lab.speed()
        assert report.insufficient
        assert report.regeneration is None
        assert "insufficient regenerations" in report.regeneration_error


class TestOracle:
    def test_dump(self):
        result = make_lab(environment={"probs": [0.9, 0.9, 0.9]}, oracle_horizon=3).oracle()
        assert isinstance(result, OracleDump)
        assert len(result.atoms) == 8
        assert result.total_mass == pytest.approx(1.0)
        assert result.atoms[0].exact is not None

    def test_query(self):
        lab = make_lab(environment={"probs": [0.9]}, oracle_horizon=3, oracle_query="hit 1")
        result = lab.oracle()
        assert isinstance(result, OracleAnswer)
        assert result.value == pytest.approx(0.945)
        three = make_lab(environment={"probs": [0.9, 0.9, 0.9]}, oracle_horizon=3, oracle_query="hit 1")
        assert three.oracle().value == pytest.approx(0.981)

    def test_joint_and_dominance(self):
        joint = make_lab(environment={"probs": [0.7, 0.9]}, kernel=SWAP, oracle_horizon=5, oracle_query="joint").oracle()
        assert isinstance(joint, CoupledOracleSummary)
        assert joint.violating_atoms == 0
        dominance = make_lab(environment={"probs": [0.7, 0.9]}, kernel=SWAP, oracle_horizon=6, oracle_query="dominance").oracle()
        assert isinstance(dominance, DominanceReport)
        assert dominance.ok

    def test_dominance_needs_a_kernel(self):
        lab = make_lab(environment={"probs": [0.9]}, oracle_horizon=4, oracle_query="dominance")
        with pytest.raises(KernelValidationError):
            lab.oracle()


class TestSweep:
    def test_rows_and_csv(self):
        lab = make_lab(grid=[[0.9, 0.9, 0.9], [0.9, 1.0], [0.9, 0.9]])
        rows = lab.sweep()
        assert [row.classification for row in rows] == ["TransientPositiveSpeed", None, "TransientZeroSpeed"]
        assert rows[1].error is not None
        assert rows[0].probs == "0.9;0.9;0.9"
        lines = lab.sweep_csv().splitlines()
        assert lines[0] == ",".join(SWEEP_COLUMNS)
        assert len(lines) == 4

    def test_speed_columns(self):
        lab = make_lab(
            grid=[[0.9, 0.9, 0.9]], sweep_speed=True, replicas=20, horizon=2000, guard=20, bootstrap_resamples=100
        )
        (row,) = lab.sweep()
        assert row.speed > 0
        assert row.speed_ci95_low <= row.speed <= row.speed_ci95_high
        assert row.blocks >= 10

    def test_empty_grid(self):
        assert make_lab().sweep() == []
        assert format_sweep_csv([]) == ",".join(SWEEP_COLUMNS) + "\n"

    def test_fair_cookies_sit_on_the_boundary(self):
        (row,) = make_lab(grid=[[0.5, 0.5, 0.5]]).sweep()
        assert row.classification == "RecurrentOrLeft-boundary"
        assert row.delta == pytest.approx(0.0)
