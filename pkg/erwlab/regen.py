import logging
import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from erwlab.arrows import WalkPath, mutual_levels
from erwlab.coupling import CouplingKernel, compute_m0, require_valid, sample_site_pair
from erwlab.env import CookieEnvironment, classify
from erwlab.exceptions import DominationViolationError, InsufficientRegenerationsError
from erwlab.models import (
    DEFAULT_BOOTSTRAP_RESAMPLES,
    DEFAULT_GUARD,
    Classification,
    PairedSpeedEstimate,
    PropertyReport,
    RegenerationReport,
    RegenProbabilityEstimate,
    SpeedEstimate,
    SpeedMethod,
    WitnessReport,
)
from erwlab.pool import run_ordered
from erwlab.stats import (
    bootstrap_ratio_ci,
    normal_mean_ci,
    paired_bootstrap_ratio_ci,
    paired_proportion_difference,
    proportion,
)
from erwlab.streams import CounterStream, SeedKey
from erwlab.walk import CoupledSample, simulate_coupled, simulate_erw

logger = logging.getLogger(__name__)

MIN_BLOCKS = 10
MAX_REPORTED_REPLICAS = 20
TASKS_PER_WORKER = 4

CHECK_INCLUSION = "regeneration_inclusion"
CHECK_DURATION = "block_duration_order"
CHECK_INDICATOR = "indicator_order"
REGEN_CHECKS = (CHECK_INCLUSION, CHECK_DURATION, CHECK_INDICATOR)

ZERO_SPEED_CAVEAT = "zero-speed regime: no estimator is consistent at finite horizon"


def find_regenerations(path: WalkPath, guard: int = DEFAULT_GUARD) -> RegenerationReport:
    """Levels x >= 0 the path reaches, never leaves to the left, and clears by ``guard``.

    Blocks run between consecutive levels; the segments before the first and
    after the last level touch the path's edges and are discarded.
    """
    levels, times = path.regeneration_levels(guard)
    if levels.size == 0:
        discarded = 1
    else:
        discarded = 1 + int(levels[0] > 0)
    return RegenerationReport(
        levels=levels.tolist(),
        hit_times=times.tolist(),
        horizon=path.horizon,
        guard=guard,
        discarded_blocks=discarded,
    )


def mutual_regeneration_check(sample: CoupledSample, guard: int = DEFAULT_GUARD) -> PropertyReport:
    """Regeneration levels of L are levels of R, with shorter R-blocks between them.

    R is judged over the window L was observed in, shifted to R's own hitting
    times, which is what survives a finite horizon path by path.
    """
    counts = {name: 0 for name in REGEN_CHECKS}
    messages: List[str] = []
    levels, t_l, t_r, confirmed = mutual_levels(sample.l_path, sample.r_path, guard)

    missing = np.nonzero(~confirmed)[0]
    if missing.size:
        counts[CHECK_INCLUSION] = int(missing.size)
        messages.append(f"{CHECK_INCLUSION}: level {int(levels[missing[0]])} of L is not a level of R")

    both = confirmed[:-1] & confirmed[1:]
    longer = (np.diff(t_r) > np.diff(t_l)) & both
    if np.any(longer):
        counts[CHECK_DURATION] = int(longer.sum())
        first = int(np.nonzero(longer)[0][0])
        messages.append(
            f"{CHECK_DURATION}: R needs longer from {int(levels[first])} to {int(levels[first + 1])}"
        )

    l_zero = find_regenerations(sample.l_path, guard).zero_is_regen
    r_zero = find_regenerations(sample.r_path, guard).zero_is_regen
    if l_zero and not r_zero:
        counts[CHECK_INDICATOR] = 1
        messages.append(f"{CHECK_INDICATOR}: 0 regenerates for L but not for R")

    return PropertyReport(
        counts=counts,
        violations=messages,
        seed=sample.seed_key.seed,
        replica=sample.seed_key.replica,
    )


def _replica_tasks(
    payload, seed: int, replicas: int, workers: int, *extra, first: int = 0
) -> List[tuple]:
    chunks = 1 if workers <= 1 else min(replicas, workers * TASKS_PER_WORKER)
    size = math.ceil(replicas / max(chunks, 1))
    stop = first + replicas
    return [
        (payload, seed, start, min(stop, start + size), *extra)
        for start in range(first, stop, size)
    ]


def map_replicas(
    worker: Callable[[tuple], list],
    payload,
    seed: int,
    replicas: int,
    workers: int = 1,
    *extra,
    first: int = 0,
) -> list:
    """Run ``worker`` over replica index chunks; results come back in replica order.

    Replicas are numbered from ``first``, so a single failing replica can be
    rerun on its own with ``replicas=1``.
    """
    tasks = _replica_tasks(payload, seed, replicas, workers, *extra, first=first)
    results = []
    for chunk in run_ordered(worker, tasks, workers):
        results.extend(chunk)
    return results


def _erw_blocks_chunk(task) -> list:
    env, seed, start, stop, horizon, guards = task
    out = []
    for replica in range(start, stop):
        path = simulate_erw(env, SeedKey(seed, replica), horizon)
        blocks = {}
        for guard in guards:
            report = find_regenerations(path, guard)
            blocks[guard] = (report.displacements, report.durations)
        out.append((int(path.positions[-1]), blocks))
    return out


@dataclass
class SpeedSamples:
    """Pooled regeneration blocks per guard and final positions, in replica order."""

    horizon: int
    final_positions: np.ndarray
    blocks: Dict[int, Tuple[np.ndarray, np.ndarray]]

    @property
    def replicas(self) -> int:
        return self.final_positions.size


def simulate_speed_samples(
    env: CookieEnvironment,
    seed: int,
    replicas: int,
    horizon: int,
    guards: Sequence[int] = (DEFAULT_GUARD,),
    workers: int = 1,
) -> SpeedSamples:
    guards = tuple(sorted(set(guards)))
    results = map_replicas(_erw_blocks_chunk, env, seed, replicas, workers, horizon, guards)
    blocks = {}
    for guard in guards:
        disp = [r[1][guard][0] for r in results]
        dur = [r[1][guard][1] for r in results]
        blocks[guard] = (
            np.concatenate(disp) if disp else np.empty(0, dtype=np.int64),
            np.concatenate(dur) if dur else np.empty(0, dtype=np.int64),
        )
    finals = np.array([r[0] for r in results], dtype=np.int64)
    return SpeedSamples(horizon=horizon, final_positions=finals, blocks=blocks)


def speed_caveats(env: CookieEnvironment) -> List[str]:
    diagnostics = classify(env)
    caveats = []
    if diagnostics.classification != Classification.TRANSIENT_POSITIVE_SPEED or diagnostics.boundary:
        caveats.append(ZERO_SPEED_CAVEAT)
    if diagnostics.caveat:
        caveats.append(diagnostics.caveat)
    return caveats


def speed_from_blocks(
    displacements: np.ndarray,
    durations: np.ndarray,
    guard: int,
    replicas: int,
    resamples: int = DEFAULT_BOOTSTRAP_RESAMPLES,
    seed: int = 0,
    caveats: Optional[List[str]] = None,
) -> SpeedEstimate:
    if displacements.size < MIN_BLOCKS:
        raise InsufficientRegenerationsError(
            details={"blocks": int(displacements.size), "required": MIN_BLOCKS, "guard": guard}
        )
    value, intervals = bootstrap_ratio_ci(displacements, durations, resamples, seed)
    return SpeedEstimate(
        value=value,
        ci95=intervals[0.95],
        ci99=intervals[0.99],
        method=SpeedMethod.REGENERATION,
        block_count=int(displacements.size),
        replica_count=replicas,
        guard=guard,
        caveats=caveats or [],
    )


def naive_from_positions(
    final_positions: np.ndarray, horizon: int, caveats: Optional[List[str]] = None
) -> SpeedEstimate:
    value, intervals = normal_mean_ci(final_positions / horizon)
    return SpeedEstimate(
        value=value,
        ci95=intervals[0.95],
        ci99=intervals[0.99],
        method=SpeedMethod.NAIVE,
        replica_count=int(final_positions.size),
        caveats=caveats or [],
    )


def speed_regeneration(
    env: CookieEnvironment,
    seed: int,
    replicas: int,
    horizon: int,
    guard: int = DEFAULT_GUARD,
    resamples: int = DEFAULT_BOOTSTRAP_RESAMPLES,
    workers: int = 1,
) -> SpeedEstimate:
    """Speed as total block displacement over total block duration, pooled over replicas."""
    samples = simulate_speed_samples(env, seed, replicas, horizon, (guard,), workers)
    displacements, durations = samples.blocks[guard]
    return speed_from_blocks(
        displacements, durations, guard, replicas, resamples, seed, speed_caveats(env)
    )


def naive_speed(
    env: CookieEnvironment, seed: int, replicas: int, horizon: int, workers: int = 1
) -> SpeedEstimate:
    """Mean of X_horizon / horizon over replicas with a normal interval."""
    samples = simulate_speed_samples(env, seed, replicas, horizon, (), workers)
    return naive_from_positions(samples.final_positions, horizon, speed_caveats(env))


def _coupled_blocks_chunk(task) -> list:
    kernel, seed, start, stop, horizon, guard = task
    out = []
    for replica in range(start, stop):
        sample = simulate_coupled(kernel, SeedKey(seed, replica), horizon)
        levels, t_l, t_r, confirmed = mutual_levels(sample.l_path, sample.r_path, guard)
        if not np.all(confirmed):
            raise DominationViolationError(
                message="Regeneration level of L is not a level of R",
                details={"seed": seed, "replica": replica},
            )
        dur_l = np.diff(t_l)
        dur_r = np.diff(t_r)
        if np.any(dur_r > dur_l):
            raise DominationViolationError(
                message="R-block lasts longer than the matching L-block",
                details={"seed": seed, "replica": replica},
            )
        out.append((np.diff(levels), dur_l, dur_r))
    return out


def coupled_speed_pair(
    kernel: CouplingKernel,
    seed: int,
    replicas: int,
    horizon: int,
    guard: int = DEFAULT_GUARD,
    resamples: int = DEFAULT_BOOTSTRAP_RESAMPLES,
    workers: int = 1,
) -> PairedSpeedEstimate:
    """Both speeds from L's mutual regeneration levels: shared displacements, T_L vs T_R."""
    require_valid(kernel)
    results = map_replicas(_coupled_blocks_chunk, kernel, seed, replicas, workers, horizon, guard)
    displacements = np.concatenate([r[0] for r in results])
    dur_l = np.concatenate([r[1] for r in results])
    dur_r = np.concatenate([r[2] for r in results])
    if displacements.size < MIN_BLOCKS:
        raise InsufficientRegenerationsError(
            details={"blocks": int(displacements.size), "required": MIN_BLOCKS, "guard": guard}
        )
    caveats = speed_caveats(kernel.p_env)
    estimates = paired_bootstrap_ratio_ci(displacements, dur_l, dur_r, resamples, seed)

    def build(key: str, method: SpeedMethod) -> SpeedEstimate:
        value, intervals = estimates[key]
        return SpeedEstimate(
            value=value,
            ci95=intervals[0.95],
            ci99=intervals[0.99],
            method=method,
            block_count=int(displacements.size),
            replica_count=replicas,
            guard=guard,
            caveats=caveats,
        )

    return PairedSpeedEstimate(
        speed_p=build("p", SpeedMethod.REGENERATION),
        speed_q=build("q", SpeedMethod.REGENERATION),
        paired_diff=build("diff", SpeedMethod.PAIRED),
    )


def _escapes(path: WalkPath) -> bool:
    return bool(path.horizon > 0 and np.all(path.positions[1:] > 0))


def _regen_indicator_chunk(task) -> list:
    payload, seed, start, stop, horizon, guard = task
    out = []
    for replica in range(start, stop):
        key = SeedKey(seed, replica)
        if isinstance(payload, CookieEnvironment):
            path = simulate_erw(payload, key, horizon)
            out.append((find_regenerations(path, guard).zero_is_regen, _escapes(path), False, False))
        else:
            sample = simulate_coupled(payload, key, horizon)
            out.append(
                (
                    find_regenerations(sample.l_path, guard).zero_is_regen,
                    _escapes(sample.l_path),
                    find_regenerations(sample.r_path, guard).zero_is_regen,
                    _escapes(sample.r_path),
                )
            )
    return out


def regen_probability(
    target: Union[CookieEnvironment, CouplingKernel],
    seed: int,
    replicas: int,
    horizon: int,
    guard: int = DEFAULT_GUARD,
    workers: int = 1,
) -> RegenProbabilityEstimate:
    """Frequency of 0 being a (censored) regeneration level, and of strict escape.

    For a kernel, both walks come from the same coupled samples and the paired
    difference q - p is reported with the count of replicas where 0
    regenerates for L but not for R.
    """
    coupled = isinstance(target, CouplingKernel)
    if coupled:
        require_valid(target)
    rows = np.array(
        map_replicas(_regen_indicator_chunk, target, seed, replicas, workers, horizon, guard),
        dtype=bool,
    ).reshape(-1, 4)
    zero_p, escape_p, zero_q, escape_q = rows.T
    estimate = RegenProbabilityEstimate(
        epsilon_p=proportion(int(zero_p.sum()), replicas),
        escape_p=proportion(int(escape_p.sum()), replicas),
        replicas=replicas,
        guard=guard,
    )
    if coupled:
        estimate.epsilon_q = proportion(int(zero_q.sum()), replicas)
        estimate.escape_q = proportion(int(escape_q.sum()), replicas)
        estimate.difference = paired_proportion_difference(zero_p, zero_q)
        estimate.indicator_violations = int(np.sum(zero_p & ~zero_q))
        if estimate.indicator_violations:
            logger.warning(
                f"{estimate.indicator_violations} replicas regenerate at 0 for L but not for R"
            )
    return estimate


def witness_preconditions(
    kernel: CouplingKernel, stream: CounterStream, m0: int
) -> bool:
    """Cookie pattern at sites 0 and 1 that makes L bounce m0 times while R moves on.

    Site 0: the first m0 + 1 cookies are 1 for both walks. Site 1: the first
    m0 cookies of L are 0 and R's m0-th cookie is 1.
    """
    y0, z0 = sample_site_pair(kernel, stream, m0 + 1, site=0)
    if not (np.all(y0 == 1) and np.all(z0 == 1)):
        return False
    y1, z1 = sample_site_pair(kernel, stream, m0 + 1, site=1)
    return bool(np.all(y1[:m0] == 0) and z1[m0 - 1] == 1)


def _witness_chunk(task) -> list:
    kernel, seed, start, stop, horizon, guard, m0 = task
    out = []
    for replica in range(start, stop):
        key = SeedKey(seed, replica)
        if not witness_preconditions(kernel, CounterStream.from_key(key), m0):
            out.append(None)
            continue
        sample = simulate_coupled(kernel, key, horizon)
        levels, t_l, t_r, confirmed = mutual_levels(sample.l_path, sample.r_path, guard)
        at_two = np.nonzero(levels == 2)[0]
        if not (at_two.size and confirmed[at_two[0]]):
            out.append(None)
            continue
        positive = np.nonzero(levels > 0)[0][0]
        out.append((int(t_l[positive]), int(t_r[positive])))
    return out


def witness_event_frequency(
    kernel: CouplingKernel,
    seed: int,
    replicas: int,
    horizon: int,
    guard: int = DEFAULT_GUARD,
    workers: int = 1,
    first_replica: int = 0,
) -> WitnessReport:
    """How often the strict-speedup configuration occurs, and whether it always delivers.

    On every witness replica L must reach its first positive regeneration
    level strictly later than R.
    """
    m0 = compute_m0(kernel)
    results = map_replicas(
        _witness_chunk, kernel, seed, replicas, workers, horizon, guard, m0, first=first_replica
    )
    witnesses = [(r, hit) for r, hit in enumerate(results, start=first_replica) if hit is not None]
    violating = [r for r, (t_l, t_r) in witnesses if not t_l > t_r]
    if violating:
        logger.warning(f"Witness replicas where L is not slower: {violating[:MAX_REPORTED_REPLICAS]}")
    return WitnessReport(
        m0=m0,
        frequency=len(witnesses) / replicas,
        witness_count=len(witnesses),
        replicas=replicas,
        conditional_violations=len(violating),
        violating_replicas=violating[:MAX_REPORTED_REPLICAS],
    )
