import logging
import math
from typing import List, Optional, Sequence

import numpy as np

from erwlab.exceptions import InvalidEnvironmentError
from erwlab.models import (
    Classification,
    EnvDiagnostics,
    EnvironmentForm,
    EnvironmentSpec,
    check_probabilities,
)

logger = logging.getLogger(__name__)

FAIR = 0.5
# Absolute tolerance used when comparing delta, pbar and theta against thresholds.
THRESHOLD_TOL = 1e-9


class CookieEnvironment:
    """A non-random elliptic cookie environment.

    ``FINITE``: cookies p_1..p_M, then 1/2 on every later departure.
    ``PERIODIC``: p_1..p_M repeated, p_{i+M} = p_i.

    Instances are immutable and safe to share between workers.
    """

    __slots__ = ("_form", "_probs", "_array")

    def __init__(
        self, probs: Sequence[float], form: EnvironmentForm = EnvironmentForm.FINITE
    ) -> None:
        object.__setattr__(self, "_form", EnvironmentForm(form))
        object.__setattr__(self, "_probs", tuple(check_probabilities(list(probs))))
        object.__setattr__(self, "_array", np.asarray(self._probs, dtype=np.float64))

    def __setattr__(self, name, value):
        raise AttributeError("CookieEnvironment is immutable")

    def __reduce__(self):
        return (CookieEnvironment, (self._probs, self._form))

    @classmethod
    def finite(cls, probs: Sequence[float]) -> "CookieEnvironment":
        return cls(probs, EnvironmentForm.FINITE)

    @classmethod
    def periodic(cls, probs: Sequence[float]) -> "CookieEnvironment":
        return cls(probs, EnvironmentForm.PERIODIC)

    @classmethod
    def from_spec(cls, spec: EnvironmentSpec) -> "CookieEnvironment":
        return cls(spec.probs, spec.form)

    def to_spec(self) -> EnvironmentSpec:
        return EnvironmentSpec(form=self._form, probs=list(self._probs))

    @property
    def form(self) -> EnvironmentForm:
        return self._form

    @property
    def probs(self) -> tuple:
        return self._probs

    @property
    def size(self) -> int:
        """M: number of stored cookies (the period for periodic environments)."""
        return len(self._probs)

    @property
    def is_periodic(self) -> bool:
        return self._form == EnvironmentForm.PERIODIC

    def cookie(self, k: int) -> float:
        if k < 1:
            raise ValueError(f"Cookie index must be >= 1, got {k}")
        if self.is_periodic:
            return self._probs[(k - 1) % self.size]
        if k <= self.size:
            return self._probs[k - 1]
        return FAIR

    def cookies(self, start: int, count: int) -> np.ndarray:
        """Vector of p_start, ..., p_{start+count-1}."""
        ks = np.arange(start, start + count)
        if self.is_periodic:
            return self._array[(ks - 1) % self.size]
        out = np.full(count, FAIR)
        inside = ks <= self.size
        out[inside] = self._array[ks[inside] - 1]
        return out

    def swapped(self, i: int, j: int) -> "CookieEnvironment":
        """The environment with cookies i and j exchanged.

        Periodic environments swap i + nM and j + nM in every period, so both
        indices must lie within one period.
        """
        if i < 1 or j < 1:
            raise InvalidEnvironmentError(
                message="Swap indices are 1-based", details={"i": i, "j": j}
            )
        if self.is_periodic:
            if max(i, j) > self.size:
                raise InvalidEnvironmentError(
                    message="Periodic swap indices must lie within one period",
                    details={"i": i, "j": j, "period": self.size},
                )
            probs = list(self._probs)
        else:
            probs = list(self._probs) + [FAIR] * max(0, max(i, j) - self.size)
        probs[i - 1], probs[j - 1] = probs[j - 1], probs[i - 1]
        return CookieEnvironment(probs, self._form)

    def __eq__(self, other) -> bool:
        if not isinstance(other, CookieEnvironment):
            return NotImplemented
        return self._form == other._form and self._probs == other._probs

    def __hash__(self) -> int:
        return hash((self._form, self._probs))

    def __repr__(self) -> str:
        return f"CookieEnvironment({self._form.value}, {list(self._probs)})"


def comparison_horizon(*envs: CookieEnvironment) -> int:
    """Index N beyond which the joint cookie pattern of ``envs`` repeats.

    Checking k = 1..N decides any per-index relation between the environments.
    """
    finite_size = max((e.size for e in envs if not e.is_periodic), default=0)
    period = 1
    for e in envs:
        if e.is_periodic:
            period = math.lcm(period, e.size)
    has_periodic = any(e.is_periodic for e in envs)
    return finite_size + (period if has_periodic else 0) or 1


def same_law(p: CookieEnvironment, q: CookieEnvironment) -> bool:
    n = comparison_horizon(p, q)
    return bool(np.array_equal(p.cookies(1, n), q.cookies(1, n)))


def cookie_prob(env: CookieEnvironment, k: int) -> float:
    return env.cookie(k)


def delta(env: CookieEnvironment) -> float:
    """Sum over k of (2 p_k - 1) for a finite-excitation environment."""
    if env.is_periodic:
        if all(p == FAIR for p in env.probs):
            return 0.0
        raise InvalidEnvironmentError(
            message="delta diverges for periodic environments; use pbar and theta",
            details={"pbar": pbar(env)},
        )
    return math.fsum(2.0 * p - 1.0 for p in env.probs)


def pbar(env: CookieEnvironment) -> float:
    return math.fsum(env.probs) / env.size


def theta(env: CookieEnvironment) -> float:
    if not env.is_periodic:
        raise InvalidEnvironmentError(
            message="theta is defined for periodic environments only"
        )
    partial = 0.0
    terms: List[float] = []
    for p in env.probs:
        partial += 2.0 * p - 1.0
        terms.append((1.0 - p) * partial)
    numerator = math.fsum(terms)
    denominator = 4.0 * math.fsum(p * (1.0 - p) for p in env.probs)
    return numerator / denominator


def _near(value: float, target: float) -> bool:
    return abs(value - target) <= THRESHOLD_TOL


def _classify_finite(env: CookieEnvironment) -> EnvDiagnostics:
    d = delta(env)
    boundary = any(_near(abs(d), t) for t in (0.0, 1.0, 2.0))
    if d > 2.0 + THRESHOLD_TOL:
        classification = Classification.TRANSIENT_POSITIVE_SPEED
    elif d > 1.0 + THRESHOLD_TOL:
        classification = Classification.TRANSIENT_ZERO_SPEED
    else:
        classification = Classification.RECURRENT_OR_LEFT
    return EnvDiagnostics(
        form=env.form,
        probs=list(env.probs),
        delta=d,
        classification=classification,
        boundary=boundary,
    )


def _classify_periodic(env: CookieEnvironment) -> EnvDiagnostics:
    mean = pbar(env)
    th = theta(env)
    caveat: Optional[str] = None
    d: Optional[float] = None
    divergence: Optional[str] = None

    if all(p == FAIR for p in env.probs):
        d = 0.0
    elif _near(mean, FAIR):
        divergence = "oscillating"
    else:
        divergence = "+inf" if mean > FAIR else "-inf"

    if mean > FAIR + THRESHOLD_TOL:
        classification = Classification.TRANSIENT_POSITIVE_SPEED
    elif _near(mean, FAIR) and th > 1.0 + THRESHOLD_TOL:
        classification = Classification.TRANSIENT_RIGHT_UNKNOWN_SPEED
        caveat = "no speed-positivity criterion is known when pbar = 1/2"
    elif _near(mean, FAIR):
        classification = Classification.RECURRENT_OR_LEFT
        caveat = "theta <= 1 is not known to rule out right-transience"
    else:
        classification = Classification.RECURRENT_OR_LEFT

    return EnvDiagnostics(
        form=env.form,
        probs=list(env.probs),
        delta=d,
        delta_divergence=divergence,
        pbar=mean,
        theta=th,
        classification=classification,
        boundary=_near(mean, FAIR),
        caveat=caveat,
    )


def classify(env: CookieEnvironment) -> EnvDiagnostics:
    diagnostics = (
        _classify_periodic(env) if env.is_periodic else _classify_finite(env)
    )
    logger.debug(f"Classified {env!r} as {diagnostics.label}")
    return diagnostics
