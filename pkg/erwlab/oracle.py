"""Exact laws of short walks, enumerated path by path.

These are the ground truth the Monte Carlo code is tested against. Paths are
tuples of positions (X_0, ..., X_n); probabilities are Fractions up to
EXACT_HORIZON steps and floats beyond.
"""
import itertools
import logging
import math
from fractions import Fraction
from typing import Callable, Dict, Iterator, List, Optional, Tuple, Union

from erwlab.coupling import CouplingKernel, JointTable, exact_joint_distribution, require_valid
from erwlab.env import CookieEnvironment
from erwlab.exceptions import HorizonGuardError, InvalidEnvironmentError
from erwlab.models import (
    CoupledOracleSummary,
    DominanceReport,
    DominanceRow,
    OracleAnswer,
)
from erwlab.pool import run_ordered

logger = logging.getLogger(__name__)

SINGLE_HORIZON_GUARD = 20
JOINT_HORIZON_GUARD = 8
DOMINANCE_HORIZON_GUARD = 14
EXACT_HORIZON = 10
# Coupled enumeration splits L-paths by this many leading steps.
PREFIX_STEPS = 3
# Float comparisons of near-equal tails.
TAIL_TOLERANCE = 1e-12

Number = Union[Fraction, float]
Path = Tuple[int, ...]


def _guard(n: int, limit: int) -> None:
    if not 0 <= n <= limit:
        raise HorizonGuardError(details={"horizon": n, "guard": limit})


def _total(values) -> Number:
    values = list(values)
    if values and isinstance(values[0], Fraction):
        return sum(values, Fraction(0))
    return math.fsum(values)


class ExactDistribution:
    """Outcome -> probability, for single paths or (L-path, R-path) pairs."""

    def __init__(self, atoms: Dict, horizon: int, exact: bool) -> None:
        self.atoms = atoms
        self.horizon = horizon
        self.exact = exact

    def __len__(self) -> int:
        return len(self.atoms)

    def __iter__(self) -> Iterator:
        return iter(self.atoms.items())

    def total(self) -> Number:
        return _total(self.atoms.values())

    def probability(self, event: Callable[..., bool]) -> Number:
        return _total(w for outcome, w in self.atoms.items() if event(outcome))

    def marginal(self, project: Callable) -> Dict:
        grouped: Dict = {}
        for outcome, w in self.atoms.items():
            grouped.setdefault(project(outcome), []).append(w)
        return {key: _total(ws) for key, ws in grouped.items()}

    def hit_by(self, x: int, t: Optional[int] = None) -> Number:
        t = self.horizon if t is None else t
        return self.probability(lambda path: x in path[: t + 1])

    def max_at_least(self, x: int) -> Number:
        return self.probability(lambda path: max(path) >= x)

    def min_at_least(self, x: int) -> Number:
        return self.probability(lambda path: min(path) >= x)

    def min_at_most(self, x: int) -> Number:
        return self.probability(lambda path: min(path) <= x)

    def end_at(self, x: int) -> Number:
        return self.probability(lambda path: path[-1] == x)


def _cookies(env: CookieEnvironment, depth: int, exact: bool) -> List[Number]:
    if exact:
        return [Fraction(env.cookie(k)) for k in range(1, depth + 1)]
    return [env.cookie(k) for k in range(1, depth + 1)]


def exact_path_distribution(env: CookieEnvironment, n: int) -> ExactDistribution:
    """Probability of each of the 2^n nearest-neighbour paths from 0.

    A step from x on its k-th departure goes right with p_k and left with 1 - p_k.
    """
    _guard(n, SINGLE_HORIZON_GUARD)
    exact = n <= EXACT_HORIZON
    probs = _cookies(env, max(1, (n + 1) // 2 + 1), exact)
    one = Fraction(1) if exact else 1.0
    atoms: Dict[Path, Number] = {}
    stack: List[Tuple[Path, Number]] = [((0,), one)]
    while stack:
        path, w = stack.pop()
        if len(path) == n + 1:
            atoms[path] = w
            continue
        x = path[-1]
        p = probs[path.count(x) - 1]
        stack.append((path + (x - 1,), w * (one - p)))
        stack.append((path + (x + 1,), w * p))
    return ExactDistribution(atoms, n, exact)


def arrow_consumption(path: Path) -> Dict[int, Tuple[int, ...]]:
    """Per site, the 0/1 cookie outcomes the path used, in departure order."""
    used: Dict[int, List[int]] = {}
    for a, b in zip(path, path[1:]):
        used.setdefault(a, []).append(1 if b > a else 0)
    return {x: tuple(bits) for x, bits in used.items()}


def all_paths(n: int) -> List[Path]:
    paths = []
    for steps in itertools.product((1, -1), repeat=n):
        paths.append(tuple(itertools.accumulate(steps, initial=0)))
    return paths


class _PrefixMasses:
    """P(Y_1..a = ys, Z_1..b = zs) from a per-site joint table."""

    def __init__(self, table: JointTable) -> None:
        self._table = table
        self._by_length: Dict[Tuple[int, int], Dict] = {}

    def mass(self, ys: Tuple[int, ...], zs: Tuple[int, ...]) -> Number:
        lengths = (len(ys), len(zs))
        grouped = self._by_length.get(lengths)
        if grouped is None:
            grouped = {}
            for (y, z), w in self._table.items():
                key = (y[: lengths[0]], z[: lengths[1]])
                grouped[key] = grouped.get(key, 0) + w
            self._by_length[lengths] = grouped
        return grouped.get((ys, zs), 0)


def _coupled_rows(task) -> List[Tuple[Tuple[Path, Path], Number]]:
    """Positive atoms whose L-path is one of ``l_paths``, against every R-path."""
    table, n, exact, l_paths = task
    masses = _PrefixMasses(table)
    paths = all_paths(n)
    consumption = [arrow_consumption(path) for path in paths]
    one: Number = Fraction(1) if exact else 1.0
    rows = []
    for l_path in l_paths:
        l_used = arrow_consumption(l_path)
        for r_path, r_used in zip(paths, consumption):
            w = one
            for x in l_used.keys() | r_used.keys():
                w = w * masses.mass(l_used.get(x, ()), r_used.get(x, ()))
                if w == 0:
                    break
            if w != 0:
                rows.append(((l_path, r_path), w))
    return rows


def exact_coupled_distribution(
    kernel: CouplingKernel, n: int, workers: int = 1
) -> ExactDistribution:
    """Joint law of (L-path, R-path) under the kernel, sites independent.

    The weight of a path pair is the product over sites of the joint
    probability of the cookie prefixes each walk consumed there. L-paths are
    split by their first PREFIX_STEPS steps and the groups run on ``workers``.
    """
    _guard(n, JOINT_HORIZON_GUARD)
    require_valid(kernel)
    exact = n <= EXACT_HORIZON
    depth = max(1, (n + 1) // 2 + 1)
    table = exact_joint_distribution(kernel, depth, exact)

    prefix = min(n, PREFIX_STEPS)
    groups: Dict[Path, List[Path]] = {}
    for path in all_paths(n):
        groups.setdefault(path[: prefix + 1], []).append(path)
    tasks = [(table, n, exact, l_paths) for l_paths in groups.values()]

    atoms: Dict[Tuple[Path, Path], Number] = {}
    for rows in run_ordered(_coupled_rows, tasks, workers):
        atoms.update(rows)
    logger.debug(f"Coupled oracle at n={n}: {len(atoms)} positive atoms")
    return ExactDistribution(atoms, n, exact)


def _first_hit(path: Path, x: int) -> Optional[int]:
    try:
        return path.index(x)
    except ValueError:
        return None


def atom_respects_order(l_path: Path, r_path: Path) -> bool:
    """Hitting times of positive levels and running max/min ordered as L <= R."""
    for x in range(1, max(l_path) + 1):
        t_r = _first_hit(r_path, x)
        if t_r is None or t_r > l_path.index(x):
            return False
    l_max = list(itertools.accumulate(l_path, max))
    r_max = list(itertools.accumulate(r_path, max))
    l_min = list(itertools.accumulate(l_path, min))
    r_min = list(itertools.accumulate(r_path, min))
    return all(a <= b for a, b in zip(l_max, r_max)) and all(
        a <= b for a, b in zip(l_min, r_min)
    )


def summarize_coupled(kernel: CouplingKernel, n: int, workers: int = 1) -> CoupledOracleSummary:
    joint = exact_coupled_distribution(kernel, n, workers)
    violating = sum(1 for (l, r), _ in joint if not atom_respects_order(l, r))
    gap = 0.0
    for env, side in ((kernel.p_env, 0), (kernel.q_env, 1)):
        single = exact_path_distribution(env, n)
        marginal = joint.marginal(lambda pair, side=side: pair[side])
        for path, w in single:
            gap = max(gap, abs(float(marginal.get(path, 0)) - float(w)))
    return CoupledOracleSummary(
        horizon=n,
        support_size=len(joint),
        total_mass=float(joint.total()),
        diagonal=all(l == r for (l, r), _ in joint),
        violating_atoms=violating,
        marginal_error=gap,
    )


def _row(statistic: str, level: int, time: Optional[int], p: Number, q: Number) -> DominanceRow:
    holds = p <= q if isinstance(p, Fraction) else float(p) <= float(q) + TAIL_TOLERANCE
    return DominanceRow(
        statistic=statistic, level=level, time=time, p=float(p), q=float(q), holds=bool(holds)
    )


def exact_dominance_check(
    p_env: CookieEnvironment, q_env: CookieEnvironment, n: int
) -> DominanceReport:
    """Compare the exact laws of the p- and q-walks at horizon n.

    P(max >= x), P(min >= x) and every hitting-time CDF P(T_x <= t) of the
    q-walk must be at least those of the p-walk.
    """
    _guard(n, DOMINANCE_HORIZON_GUARD)
    law_p = exact_path_distribution(p_env, n)
    law_q = exact_path_distribution(q_env, n)
    rows = []
    for x in range(-n, n + 1):
        rows.append(_row("max", x, None, law_p.max_at_least(x), law_q.max_at_least(x)))
        rows.append(_row("min", x, None, law_p.min_at_least(x), law_q.min_at_least(x)))
    for x in range(1, n + 1):
        for t in range(x, n + 1):
            rows.append(_row("hit", x, t, law_p.hit_by(x, t), law_q.hit_by(x, t)))
    report = DominanceReport(horizon=n, rows=rows)
    if not report.ok:
        logger.warning(f"Exact dominance fails on {len(report.violations)} rows")
    return report


def _query_parts(query: str) -> Tuple[str, Optional[int]]:
    words = query.split()
    if len(words) == 1 and words[0] in ("joint", "dominance"):
        return words[0], None
    if len(words) == 2 and words[0] in ("hit", "max", "min", "end"):
        try:
            return words[0], int(words[1])
        except ValueError:
            pass
    raise InvalidEnvironmentError(
        message="Oracle query must be 'hit X', 'max X', 'min X', 'end X', 'joint' or 'dominance'",
        details={"query": query},
    )


def answer_query(env: CookieEnvironment, n: int, query: str) -> OracleAnswer:
    """Single-walk event probabilities: 'hit X' (reach X by n), 'max X' (max >= X),
    'min X' (min <= X), 'end X' (X_n = X)."""
    kind, x = _query_parts(query)
    if x is None:
        raise InvalidEnvironmentError(
            message=f"Query '{kind}' needs a kernel, not a single environment"
        )
    law = exact_path_distribution(env, n)
    value = {
        "hit": law.hit_by,
        "max": law.max_at_least,
        "min": law.min_at_most,
        "end": law.end_at,
    }[kind](x)
    return OracleAnswer(
        query=query,
        horizon=n,
        value=float(value),
        exact=str(value) if isinstance(value, Fraction) else None,
    )


def query_kind(query: str) -> str:
    return _query_parts(query)[0]
