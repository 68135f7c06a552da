import logging
from typing import TYPE_CHECKING, Callable, Dict, Iterable, List, Optional, Tuple

import numpy as np

from erwlab.exceptions import InvalidEnvironmentError, UnmaterializedCellError
from erwlab.models import DEFAULT_GUARD, PropertyReport

if TYPE_CHECKING:
    from erwlab.walk import CoupledSample

logger = logging.getLogger(__name__)

CHECK_PREFIX = "prefix_domination"
CHECK_HITTING = "hitting_time_order"
CHECK_MAX = "running_max_order"
CHECK_MIN = "running_min_order"
CHECK_VISITS = "visit_count_order"
ORDER_CHECKS = (CHECK_PREFIX, CHECK_HITTING, CHECK_MAX, CHECK_MIN, CHECK_VISITS)

MAX_REPORTED = 5

_STEP_SYMBOLS = {"+": 1, "-": -1, "−": -1}

ArrowSource = Callable[[int, int], int]


class ArrowSystem:
    """Map (site, visit) -> step in {-1, +1}, filled lazily from ``source``.

    Only cells a walk actually consults are materialized. A frozen system (or
    one without a source) refuses to materialize anything new.
    """

    def __init__(
        self,
        source: Optional[ArrowSource] = None,
        cells: Optional[Dict[int, Iterable[int]]] = None,
    ) -> None:
        self._source = source
        self._cells: Dict[int, List[int]] = {
            int(x): [int(s) for s in row] for x, row in (cells or {}).items()
        }
        self._frozen = False

    @classmethod
    def from_table(cls, text: str) -> "ArrowSystem":
        return cls(cells=parse_arrow_table(text))

    def arrow(self, x: int, k: int) -> int:
        row = self._cells.get(x)
        if row is None:
            row = self._cells[x] = []
        if k <= len(row):
            return row[k - 1]
        if self._frozen or self._source is None:
            raise UnmaterializedCellError(details={"site": x, "visit": k})
        while len(row) < k:
            row.append(self._source(x, len(row) + 1))
        return row[k - 1]

    def freeze(self) -> "ArrowSystem":
        self._frozen = True
        return self

    @property
    def frozen(self) -> bool:
        return self._frozen

    def depth(self, x: int) -> int:
        return len(self._cells.get(x, ()))

    def row(self, x: int) -> Tuple[int, ...]:
        return tuple(self._cells.get(x, ()))

    @property
    def sites(self) -> List[int]:
        return sorted(x for x, row in self._cells.items() if row)

    @property
    def cell_count(self) -> int:
        return sum(len(row) for row in self._cells.values())

    def with_cell(self, x: int, k: int, step: int) -> "ArrowSystem":
        """Copy sharing the source, with cell (x, k) forced to ``step``."""
        if step not in (-1, 1):
            raise ValueError("Arrow steps are -1 or +1")
        if k > self.depth(x):
            raise UnmaterializedCellError(details={"site": x, "visit": k})
        copy = ArrowSystem(self._source, self._cells)
        copy._cells[x][k - 1] = step
        return copy


class WalkPath:
    """Positions X_0 = 0, X_1, ..., X_n of a nearest-neighbour walk."""

    def __init__(
        self, positions: Iterable[int], local_times: Optional[Dict[int, int]] = None
    ) -> None:
        self.positions = np.asarray(positions, dtype=np.int64)
        if self.positions.size == 0 or self.positions[0] != 0:
            raise ValueError("A walk path starts at 0")
        self._local_times = local_times
        self._running_max: Optional[np.ndarray] = None
        self._running_min: Optional[np.ndarray] = None
        self._suffix_min: Optional[np.ndarray] = None
        self._visit_keys: Optional[np.ndarray] = None

    @property
    def horizon(self) -> int:
        return self.positions.size - 1

    @property
    def local_times(self) -> Dict[int, int]:
        """Departures from each site so far."""
        if self._local_times is None:
            sites, counts = np.unique(self.positions[:-1], return_counts=True)
            self._local_times = dict(zip(sites.tolist(), counts.tolist()))
        return self._local_times

    @property
    def running_max(self) -> np.ndarray:
        if self._running_max is None:
            self._running_max = np.maximum.accumulate(self.positions)
        return self._running_max

    @property
    def running_min(self) -> np.ndarray:
        if self._running_min is None:
            self._running_min = np.minimum.accumulate(self.positions)
        return self._running_min

    @property
    def suffix_min(self) -> np.ndarray:
        """suffix_min[t] = min_{s >= t} X_s."""
        if self._suffix_min is None:
            self._suffix_min = np.minimum.accumulate(self.positions[::-1])[::-1]
        return self._suffix_min

    def is_nearest_neighbour(self) -> bool:
        return bool(np.all(np.abs(np.diff(self.positions)) == 1))

    def truncated(self, n: int) -> "WalkPath":
        if n >= self.horizon:
            return self
        return WalkPath(self.positions[: n + 1])

    def first_hit_times(self, levels: np.ndarray) -> np.ndarray:
        """First t with X_t = level for each level >= 0; -1 when never hit."""
        levels = np.asarray(levels, dtype=np.int64)
        times = np.searchsorted(self.running_max, levels, side="left")
        times = np.where(times > self.horizon, -1, times)
        return np.where(levels < 0, -1, times)

    def hitting_time(self, x: int) -> Optional[int]:
        if x >= 0:
            t = int(np.searchsorted(self.running_max, x, side="left"))
        else:
            t = int(np.searchsorted(-self.running_min, -x, side="left"))
        return t if t <= self.horizon else None

    def first_visit_after(self, values: np.ndarray, times: np.ndarray) -> np.ndarray:
        """First s > times[i] with X_s = values[i]; -1 when there is none."""
        n = self.positions.size
        lowest = int(self.positions.min())
        if self._visit_keys is None:
            self._visit_keys = np.sort(
                (self.positions - lowest) * n + np.arange(n, dtype=np.int64)
            )
        values = np.asarray(values, dtype=np.int64)
        times = np.asarray(times, dtype=np.int64)
        query = (values - lowest) * n + times + 1
        idx = np.searchsorted(self._visit_keys, query, side="left")
        found = np.full(values.shape, -1, dtype=np.int64)
        inside = (idx < self._visit_keys.size) & (values >= lowest)
        hit = self._visit_keys[np.minimum(idx, self._visit_keys.size - 1)]
        same_value = inside & (hit // n == values - lowest)
        found[same_value] = hit[same_value] % n
        return found

    def regeneration_levels(self, guard: int) -> Tuple[np.ndarray, np.ndarray]:
        """Censored regeneration levels and their first-hit times.

        A level x >= 0 qualifies when the path reaches it, never goes below it
        afterwards within the horizon, and climbs to x + guard.
        """
        if guard < 1:
            raise ValueError("guard must be >= 1")
        top = int(self.positions.max()) - guard
        if top < 0:
            empty = np.empty(0, dtype=np.int64)
            return empty, empty
        levels = np.arange(0, top + 1, dtype=np.int64)
        times = self.first_hit_times(levels)
        keep = self.suffix_min[times] >= levels
        return levels[keep], times[keep]

    def visit_counts(self, until: int) -> Dict[int, int]:
        """#{m <= until : X_m = x} for every visited x."""
        sites, counts = np.unique(self.positions[: until + 1], return_counts=True)
        return dict(zip(sites.tolist(), counts.tolist()))

    def __len__(self) -> int:
        return self.positions.size

    def __repr__(self) -> str:
        head = self.positions[:8].tolist()
        return f"WalkPath(horizon={self.horizon}, start={head})"


def walk_from_arrows(system: ArrowSystem, n: int) -> WalkPath:
    """Drive the walk E_{m+1} = E_m + arrow(E_m, #departures from E_m so far)."""
    if n < 0:
        raise ValueError("horizon must be >= 0")
    positions = [0] * (n + 1)
    departures: Dict[int, int] = {}
    cells = system._cells
    arrow = system.arrow
    x = 0
    for m in range(1, n + 1):
        k = departures.get(x, 0) + 1
        departures[x] = k
        row = cells.get(x)
        if row is not None and k <= len(row):
            x += row[k - 1]
        else:
            x += arrow(x, k)
        positions[m] = x
    return WalkPath(positions, departures)


def prefix_dominates(
    left: ArrowSystem,
    right: ArrowSystem,
    sites: Optional[Iterable[int]] = None,
    depth: Optional[int] = None,
) -> bool:
    """Whether cumulative arrow sums of ``left`` never exceed those of ``right``.

    Without a window, every site is compared on the depth both systems have
    materialized. An explicit window must be fully materialized in both.
    """
    if sites is None:
        window = [
            (x, min(left.depth(x), right.depth(x)))
            for x in set(left.sites) | set(right.sites)
        ]
    else:
        if depth is None or depth < 1:
            raise ValueError("An explicit window needs depth >= 1")
        window = []
        for x in sites:
            for system in (left, right):
                if system.depth(x) < depth:
                    raise UnmaterializedCellError(
                        message="Window exceeds materialized cells",
                        details={"site": x, "depth": depth, "materialized": system.depth(x)},
                    )
            window.append((x, depth))
    for x, d in window:
        if d == 0:
            continue
        gap = np.cumsum(np.asarray(right.row(x)[:d]) - np.asarray(left.row(x)[:d]))
        if np.any(gap < 0):
            return False
    return True


def first_prefix_violation(
    left: ArrowSystem, right: ArrowSystem
) -> Optional[Tuple[int, int]]:
    for x in sorted(set(left.sites) | set(right.sites)):
        d = min(left.depth(x), right.depth(x))
        if d == 0:
            continue
        gap = np.cumsum(np.asarray(right.row(x)[:d]) - np.asarray(left.row(x)[:d]))
        bad = np.nonzero(gap < 0)[0]
        if bad.size:
            return x, int(bad[0]) + 1
    return None


def mutual_levels(
    l_path: WalkPath, r_path: WalkPath, guard: int
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """L's censored regeneration levels, judged for R on the same relative window.

    Returns (levels, t_l, t_r, r_confirmed). For a level x of L, R must reach
    x, stay >= x, and climb to x + guard during the horizon - T_L(x) steps
    after T_R(x).
    """
    levels, t_l = l_path.regeneration_levels(guard)
    if levels.size == 0:
        empty = np.empty(0, dtype=np.int64)
        return levels, t_l, empty, np.empty(0, dtype=bool)
    n = l_path.horizon
    t_r = r_path.first_hit_times(levels)
    reached = t_r >= 0
    window_end = t_r + (n - t_l)
    dips = r_path.first_visit_after(levels - 1, np.where(reached, t_r, 0))
    stays = (dips < 0) | (dips > window_end)
    climb = r_path.first_hit_times(levels + guard)
    climbs = (climb >= 0) & (climb <= window_end)
    return levels, t_l, t_r, reached & stays & climbs


def check_theorem_order_properties(
    sample: "CoupledSample", n: Optional[int] = None, guard: int = DEFAULT_GUARD
) -> PropertyReport:
    """Path-wise consequences of L-arrows <= R-arrows up to horizon ``n``.

    Hitting times of positive levels, running maxima and minima, and visit
    counts left of the last mutually confirmed regeneration level.
    """
    n = sample.horizon if n is None else min(n, sample.horizon)
    l_path = sample.l_path.truncated(n)
    r_path = sample.r_path.truncated(n)
    counts = {name: 0 for name in ORDER_CHECKS}
    messages: List[str] = []

    def record(name: str, message: str, amount: int = 1) -> None:
        counts[name] += amount
        if len(messages) < MAX_REPORTED:
            messages.append(f"{name}: {message}")

    violation = first_prefix_violation(sample.l_system, sample.r_system)
    if violation is not None:
        record(CHECK_PREFIX, f"cumulative sums cross at site {violation[0]}, visit {violation[1]}")

    top = int(l_path.positions.max())
    if top > 0:
        levels = np.arange(1, top + 1)
        t_l = l_path.first_hit_times(levels)
        t_r = r_path.first_hit_times(levels)
        bad = (t_r < 0) | (t_r > t_l)
        if np.any(bad):
            first = int(levels[bad][0])
            record(CHECK_HITTING, f"R reaches level {first} after L", int(bad.sum()))

    bad_max = l_path.running_max > r_path.running_max
    if np.any(bad_max):
        record(CHECK_MAX, f"running max of L exceeds R at m={int(np.argmax(bad_max))}", int(bad_max.sum()))
    bad_min = l_path.running_min > r_path.running_min
    if np.any(bad_min):
        record(CHECK_MIN, f"running min of L exceeds R at m={int(np.argmax(bad_min))}", int(bad_min.sum()))

    levels, t_l, t_r, confirmed = mutual_levels(l_path, r_path, guard)
    if np.any(confirmed):
        last = int(np.nonzero(confirmed)[0][-1])
        level = int(levels[last])
        l_visits = l_path.visit_counts(int(t_l[last]))
        r_visits = r_path.visit_counts(int(t_r[last]))
        for x, r_count in r_visits.items():
            if x < level and l_visits.get(x, 0) < r_count:
                record(CHECK_VISITS, f"R visits {x} more often than L below level {level}")

    report = PropertyReport(
        counts=counts,
        violations=messages,
        seed=sample.seed_key.seed,
        replica=sample.seed_key.replica,
    )
    if not report.ok:
        logger.warning(f"Order violations in replica {sample.seed_key}: {messages}")
    return report


def parse_arrow_table(text: str) -> Dict[int, List[int]]:
    """Parse lines ``x: s_1 s_2 ... s_K`` with s in {+, -}; '#' starts a comment."""
    cells: Dict[int, List[int]] = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        site, sep, steps = line.partition(":")
        if not sep:
            raise InvalidEnvironmentError(
                message="Arrow table line needs 'site: steps'", details={"line": number}
            )
        try:
            x = int(site.strip())
        except ValueError as e:
            raise InvalidEnvironmentError(
                message="Arrow table site must be an integer", details={"line": number}
            ) from e
        row = []
        for symbol in steps:
            if symbol.isspace():
                continue
            if symbol not in _STEP_SYMBOLS:
                raise InvalidEnvironmentError(
                    message=f"Unknown arrow symbol {symbol!r}", details={"line": number}
                )
            row.append(_STEP_SYMBOLS[symbol])
        cells[x] = row
    return cells


def format_arrow_table(system: ArrowSystem) -> str:
    lines = []
    for x in system.sites:
        steps = " ".join("+" if s > 0 else "-" for s in system.row(x))
        lines.append(f"{x}: {steps}")
    return "\n".join(lines) + ("\n" if lines else "")
