import itertools
import logging
import math
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from erwlab.env import CookieEnvironment, comparison_horizon, same_law
from erwlab.exceptions import (
    CouplingPreconditionError,
    DominationViolationError,
    HorizonGuardError,
    InvalidEnvironmentError,
    KernelValidationError,
)
from erwlab.models import Construction, KernelSpec, KernelValidation
from erwlab.streams import BASE_CHANNEL, CounterStream

logger = logging.getLogger(__name__)

JOINT_DEPTH_GUARD = 12
INTERNAL_DEPTH_GUARD = 16
MIN_DEPTH_BLOCK = 32

Number = Union[Fraction, float]
Bits = Tuple[int, ...]
JointTable = Dict[Tuple[Bits, Bits], Number]


def _number(value: float, exact: bool) -> Number:
    return Fraction(value) if exact else float(value)


def swap_mixing_coefficient(p_i: float, p_j: float) -> float:
    """Probability of turning the outcome (0, 1) at (i, j) into (1, 0).

    Outcomes (1, 1), (0, 0) and (1, 0) are kept; (0, 1) becomes (1, 0) with
    probability a = (p_j - p_i) / ((1 - p_i) p_j), which makes the output pair
    independent Ber(p_j) x Ber(p_i).
    """
    if not p_j > p_i:
        raise KernelValidationError(
            message="Favorable swap requires p_j > p_i",
            details={"p_i": p_i, "p_j": p_j},
        )
    return (p_j - p_i) / ((1.0 - p_i) * p_j)


def _exact_mixing_coefficient(p_i: Number, p_j: Number) -> Number:
    return (p_j - p_i) / ((1 - p_i) * p_j)


class _Stage:
    """One generator of the order: maps a Ber(p) sequence to a Ber(q) sequence."""

    construction: Construction
    needs_uniforms = True

    def __init__(self, p_env: CookieEnvironment, q_env: CookieEnvironment) -> None:
        self.p_env = p_env
        self.q_env = q_env

    def violation(self) -> Optional[Tuple[str, Optional[int]]]:
        return None

    def first_strict_index(self) -> Optional[int]:
        return None

    def max_finite_index(self) -> int:
        return 0

    def periods(self) -> List[int]:
        return [e.size for e in (self.p_env, self.q_env) if e.is_periodic]

    def push(self, y: np.ndarray, v: np.ndarray, k_start: int) -> np.ndarray:
        raise NotImplementedError

    def transitions(self, y: Bits, exact: bool) -> List[Tuple[Bits, Number]]:
        raise NotImplementedError


class _IdentityStage(_Stage):
    construction = Construction.IDENTITY
    needs_uniforms = False

    def __init__(self, p_env: CookieEnvironment) -> None:
        super().__init__(p_env, p_env)

    def push(self, y, v, k_start):
        return y

    def transitions(self, y, exact):
        return [(y, _number(1.0, exact))]


class _PointwiseStage(_Stage):
    """Z_k = 1{U_k < q_k} for the uniform U_k that produced Y_k = 1{U_k < p_k}.

    U_k is rebuilt from Y_k and a fresh uniform V_k (U = V p if Y = 1, else
    p + V (1 - p)), so the stage also works on the output of an earlier stage.
    """

    construction = Construction.POINTWISE

    def violation(self):
        n = comparison_horizon(self.p_env, self.q_env)
        p = self.p_env.cookies(1, n)
        q = self.q_env.cookies(1, n)
        above = np.nonzero(p > q)[0]
        if above.size:
            return "pointwise increase requires p_k <= q_k", int(above[0]) + 1
        if not np.any(p < q):
            return "pointwise increase requires p_k < q_k for at least one k", None
        return None

    def first_strict_index(self):
        n = comparison_horizon(self.p_env, self.q_env)
        strict = np.nonzero(self.p_env.cookies(1, n) < self.q_env.cookies(1, n))[0]
        return int(strict[0]) + 1 if strict.size else None

    def push(self, y, v, k_start):
        depth = y.shape[1]
        p = self.p_env.cookies(k_start, depth)
        q = self.q_env.cookies(k_start, depth)
        u = np.where(y == 1, v * p, p + v * (1.0 - p))
        return (u < q).astype(np.int8)

    def transitions(self, y, exact):
        outcomes: List[Tuple[Bits, Number]] = [((), _number(1.0, exact))]
        for k, bit in enumerate(y, start=1):
            if bit == 1:
                outcomes = [(z + (1,), w) for z, w in outcomes]
                continue
            p = _number(self.p_env.cookie(k), exact)
            q = _number(self.q_env.cookie(k), exact)
            rise = (q - p) / (1 - p)
            if rise == 0:
                outcomes = [(z + (0,), w) for z, w in outcomes]
                continue
            outcomes = [
                (z + (b,), w * (rise if b else 1 - rise))
                for z, w in outcomes
                for b in (0, 1)
            ]
        return outcomes


class _SwapStage(_Stage):
    """Favorable swap of cookies i < j (every period for periodic environments)."""

    construction = Construction.SWAP

    def __init__(self, p_env: CookieEnvironment, i: int, j: int) -> None:
        self.i = i
        self.j = j
        self._env_error: Optional[str] = None
        try:
            q_env = p_env.swapped(i, j)
        except InvalidEnvironmentError as e:
            self._env_error = e.message
            q_env = p_env
        super().__init__(p_env, q_env)

    def violation(self):
        if self.i >= self.j:
            return "favorable swap requires i < j", self.i
        if self._env_error is not None:
            return self._env_error, self.j
        if not self.p_env.cookie(self.j) > self.p_env.cookie(self.i):
            return "favorable swap requires p_j > p_i", self.j
        return None

    def first_strict_index(self):
        return self.i

    def max_finite_index(self):
        return 0 if self.p_env.is_periodic else self.j

    def _pairs(self, k_start: int, depth: int) -> List[Tuple[int, int]]:
        k_end = k_start + depth
        if not self.p_env.is_periodic:
            starts = [0]
        else:
            m = self.p_env.size
            first = max(0, (k_start - 1 - self.i) // m)
            starts = range(first * m, k_end, m)
        pairs = []
        for offset in starts:
            a, b = self.i + offset, self.j + offset
            inside_a = k_start <= a < k_end
            inside_b = k_start <= b < k_end
            if inside_a and inside_b:
                pairs.append((a - k_start, b - k_start))
            elif inside_a or inside_b:
                raise KernelValidationError(
                    message="Swap pair straddles a cookie block",
                    details={"i": a, "j": b, "block_start": k_start},
                )
        return pairs

    def _coefficient(self, exact: bool) -> Number:
        p_i = _number(self.p_env.cookie(self.i), exact)
        p_j = _number(self.p_env.cookie(self.j), exact)
        if exact:
            return _exact_mixing_coefficient(p_i, p_j)
        return swap_mixing_coefficient(p_i, p_j)

    def push(self, y, v, k_start):
        pairs = self._pairs(k_start, y.shape[1])
        if not pairs:
            return y
        a = self._coefficient(exact=False)
        z = y.copy()
        for ci, cj in pairs:
            flip = (y[:, ci] == 0) & (y[:, cj] == 1) & (v[:, ci] < a)
            z[flip, ci] = 1
            z[flip, cj] = 0
        return z

    def transitions(self, y, exact):
        a = self._coefficient(exact)
        outcomes: List[Tuple[Bits, Number]] = [(y, _number(1.0, exact))]
        for ci, cj in self._pairs(1, len(y)):
            if y[ci] == 0 and y[cj] == 1:
                nxt = []
                for z, w in outcomes:
                    flipped = list(z)
                    flipped[ci], flipped[cj] = 1, 0
                    nxt.append((tuple(flipped), w * a))
                    nxt.append((z, w * (1 - a)))
                outcomes = nxt
        return outcomes


class CouplingKernel:
    """A per-site joint law of (Y, Z) with Y ~ prod Ber(p_k), Z ~ prod Ber(q_k).

    Built from the two generators of the order (pointwise increases and
    favorable swaps) and their compositions; stage s turns the output of stage
    s - 1 into its own q-sequence, so prefix domination composes.
    """

    def __init__(self, stages: Sequence[_Stage], construction: Construction) -> None:
        if not stages:
            raise KernelValidationError(message="A kernel needs at least one stage")
        self.stages: Tuple[_Stage, ...] = tuple(stages)
        self.construction = construction

    @classmethod
    def identity(cls, p_env: CookieEnvironment) -> "CouplingKernel":
        return cls([_IdentityStage(p_env)], Construction.IDENTITY)

    @classmethod
    def pointwise(
        cls, p_env: CookieEnvironment, q_env: CookieEnvironment
    ) -> "CouplingKernel":
        return cls([_PointwiseStage(p_env, q_env)], Construction.POINTWISE)

    @classmethod
    def swap(cls, p_env: CookieEnvironment, i: int, j: int) -> "CouplingKernel":
        return cls([_SwapStage(p_env, i, j)], Construction.SWAP)

    @classmethod
    def compose(cls, kernels: Sequence["CouplingKernel"]) -> "CouplingKernel":
        stages = [stage for kernel in kernels for stage in kernel.stages]
        return cls(stages, Construction.COMPOSE)

    @classmethod
    def from_spec(cls, p_env: CookieEnvironment, spec: KernelSpec) -> "CouplingKernel":
        if spec.construction == Construction.IDENTITY:
            return cls.identity(p_env)
        if spec.construction == Construction.POINTWISE:
            return cls.pointwise(p_env, CookieEnvironment.from_spec(spec.q))
        if spec.construction == Construction.SWAP:
            i, j = spec.swap
            return cls.swap(p_env, i, j)
        kernels = []
        current = p_env
        for sub_spec in spec.compose:
            kernel = cls.from_spec(current, sub_spec)
            kernels.append(kernel)
            current = kernel.q_env
        return cls.compose(kernels)

    @property
    def p_env(self) -> CookieEnvironment:
        return self.stages[0].p_env

    @property
    def q_env(self) -> CookieEnvironment:
        return self.stages[-1].q_env

    @property
    def is_identity(self) -> bool:
        return all(isinstance(s, _IdentityStage) for s in self.stages)

    @property
    def block_alignment(self) -> int:
        alignment = 1
        for stage in self.stages:
            for period in stage.periods():
                alignment = math.lcm(alignment, period)
        return alignment

    def depth_block(self, minimum: int = MIN_DEPTH_BLOCK) -> int:
        """Smallest aligned block length >= ``minimum`` that no swap pair straddles."""
        needed = max(minimum, max(s.max_finite_index() for s in self.stages))
        alignment = self.block_alignment
        return -(-needed // alignment) * alignment

    @property
    def m0(self) -> int:
        return compute_m0(self)

    def sample_block(
        self, stream: CounterStream, sites: np.ndarray, k_start: int, depth: int
    ) -> Tuple[np.ndarray, np.ndarray]:
        """(Y, Z) for ``sites`` x visits k_start..k_start+depth-1, as int8 0/1 arrays.

        ``k_start - 1`` must be a multiple of :meth:`depth_block` or 0.
        """
        sites = np.asarray(sites, dtype=np.int64)
        ks = np.arange(k_start, k_start + depth)
        u = stream.uniforms(sites[:, None], ks[None, :], BASE_CHANNEL)
        y = (u < self.p_env.cookies(k_start, depth)).astype(np.int8)
        z = y
        for channel, stage in enumerate(self.stages, start=1):
            if not stage.needs_uniforms:
                continue
            v = stream.uniforms(sites[:, None], ks[None, :], channel)
            z = stage.push(z, v, k_start)
        return y, z

    def __repr__(self) -> str:
        return (
            f"CouplingKernel({self.construction.value}, p={list(self.p_env.probs)}, "
            f"q={list(self.q_env.probs)}, stages={len(self.stages)})"
        )


def validate_kernel(kernel: CouplingKernel) -> KernelValidation:
    for position, stage in enumerate(kernel.stages):
        if position > 0 and not same_law(kernel.stages[position - 1].q_env, stage.p_env):
            return KernelValidation(
                ok=False,
                violation="composition stage input does not match previous output",
                stage=position,
            )
        failure = stage.violation()
        if failure is not None:
            message, index = failure
            return KernelValidation(ok=False, violation=message, stage=position, index=index)
    return KernelValidation(ok=True)


def require_valid(kernel: CouplingKernel) -> None:
    result = validate_kernel(kernel)
    if not result.ok:
        raise KernelValidationError(
            message=f"Invalid coupling kernel: {result.violation}",
            details=result.model_dump(exclude_none=True),
        )


def assert_prefix_domination(
    y: np.ndarray, z: np.ndarray, carry: Optional[np.ndarray] = None, **context
) -> np.ndarray:
    """Check sum_{j<=m} Y_j <= sum_{j<=m} Z_j along the last axis.

    ``carry`` holds sum(Z) - sum(Y) of earlier blocks. Returns the updated carry.
    """
    gap = np.cumsum(z.astype(np.int64) - y.astype(np.int64), axis=-1)
    if carry is not None:
        gap = gap + np.asarray(carry)[..., None]
    if np.any(gap < 0):
        where = np.argwhere(gap < 0)[0]
        raise DominationViolationError(
            details={"cell": [int(w) for w in where], **context}
        )
    return gap[..., -1]


def sample_site_pair(
    kernel: CouplingKernel, stream: CounterStream, depth: int, site: int = 0
) -> Tuple[np.ndarray, np.ndarray]:
    """(Y_1..Y_depth, Z_1..Z_depth) at ``site``; reproducible from the stream key."""
    if depth < 1:
        raise ValueError("depth must be >= 1")
    require_valid(kernel)
    block = kernel.depth_block()
    ys, zs = [], []
    k = 1
    while k <= depth:
        y, z = kernel.sample_block(stream, np.array([site]), k, block)
        ys.append(y[0])
        zs.append(z[0])
        k += block
    y = np.concatenate(ys)[:depth]
    z = np.concatenate(zs)[:depth]
    assert_prefix_domination(y, z, site=site, replica=stream.replica)
    return y, z


def _internal_depth(kernel: CouplingKernel, depth: int) -> int:
    needed = max(depth, max(s.max_finite_index() for s in kernel.stages))
    alignment = kernel.block_alignment
    return -(-needed // alignment) * alignment


def exact_joint_distribution(
    kernel: CouplingKernel, depth: int, exact: bool = True
) -> JointTable:
    """Exact law of (Y_1..Y_depth, Z_1..Z_depth) under the kernel.

    With ``exact`` the atoms are Fractions of the (binary) input probabilities.
    """
    if not 1 <= depth <= JOINT_DEPTH_GUARD:
        raise HorizonGuardError(details={"depth": depth, "guard": JOINT_DEPTH_GUARD})
    require_valid(kernel)
    full = _internal_depth(kernel, depth)
    if full > INTERNAL_DEPTH_GUARD:
        raise HorizonGuardError(
            message="Kernel needs too deep an enumeration",
            details={"internal_depth": full, "guard": INTERNAL_DEPTH_GUARD},
        )

    p = [_number(kernel.p_env.cookie(k), exact) for k in range(1, full + 1)]
    one = _number(1.0, exact)
    table: Dict[Tuple[Bits, Bits], Number] = {}
    for y in itertools.product((0, 1), repeat=full):
        weight = one
        for bit, pk in zip(y, p):
            weight = weight * (pk if bit else one - pk)
        outcomes = [(y, weight)]
        for stage in kernel.stages:
            nxt = []
            for z, w in outcomes:
                nxt.extend((z2, w * w2) for z2, w2 in stage.transitions(z, exact))
            outcomes = nxt
        for z, w in outcomes:
            if w == 0:
                continue
            key = (y[:depth], z[:depth])
            table[key] = table.get(key, 0) + w
    return table


def strict_prefix_probability(
    kernel: CouplingKernel, depth: int, exact: bool = True
) -> Number:
    """P(sum_{j<=m} Y_j < sum_{j<=m} Z_j for some m <= depth), from the exact table."""
    table = exact_joint_distribution(kernel, depth, exact)
    total = _number(0.0, exact)
    for (y, z), w in table.items():
        if any(a < b for a, b in zip(itertools.accumulate(y), itertools.accumulate(z))):
            total += w
    return total


def compute_m0(kernel: CouplingKernel) -> int:
    """Least m with P(sum_{j<=m} Y_j < sum_{j<=m} Z_j) > 0."""
    require_valid(kernel)
    indices = [s.first_strict_index() for s in kernel.stages]
    indices = [i for i in indices if i is not None]
    if not indices:
        raise CouplingPreconditionError(
            details={"construction": kernel.construction.value}
        )
    return min(indices)
