import logging
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Tuple

import numpy as np

from erwlab.arrows import ArrowSystem, WalkPath, walk_from_arrows
from erwlab.coupling import CouplingKernel, assert_prefix_domination, require_valid
from erwlab.env import CookieEnvironment
from erwlab.exceptions import MaterializationCapError
from erwlab.streams import CounterStream, SeedKey

logger = logging.getLogger(__name__)

SITE_CHUNK = 64
DEFAULT_SITE_CAP = 2**20

# Arrow rows as plain lists: the walk reads them one cell at a time.
Rows = Tuple[List[int], List[int]]


class CookieSource:
    """Kernel-driven arrows 2Y - 1 (left walk) and 2Z - 1 (right walk) for one replica.

    Cookies are generated for 64 neighbouring sites at a time, one depth block
    deep, and deepened per site on demand. Every block is checked for prefix
    domination before it is handed out.
    """

    def __init__(
        self,
        kernel: CouplingKernel,
        stream: CounterStream,
        cap: int = DEFAULT_SITE_CAP,
    ) -> None:
        self.kernel = kernel
        self.stream = stream
        self.cap = cap
        self._block = kernel.depth_block()
        self._rows: Dict[int, Rows] = {}
        self._carry: Dict[int, int] = {}

    def _context(self, **extra) -> dict:
        return {"seed": self.stream.seed, "replica": self.stream.replica, **extra}

    def _fill_chunk(self, x: int) -> None:
        start = (x // SITE_CHUNK) * SITE_CHUNK
        sites = np.arange(start, start + SITE_CHUNK, dtype=np.int64)
        sites = sites[[int(s) not in self._rows for s in sites]]
        y, z = self.kernel.sample_block(self.stream, sites, 1, self._block)
        carry = assert_prefix_domination(y, z, **self._context(chunk=start))
        left = (2 * y - 1).tolist()
        right = (2 * z - 1).tolist()
        for row, site in enumerate(sites.tolist()):
            self._rows[site] = (left[row], right[row])
            self._carry[site] = int(carry[row])

    def _deepen(self, x: int, k: int) -> Rows:
        if k > self.cap:
            raise MaterializationCapError(
                details=self._context(site=x, visit=k, cap=self.cap)
            )
        left, right = self._rows[x]
        while len(left) < k:
            y, z = self.kernel.sample_block(
                self.stream, np.array([x]), len(left) + 1, self._block
            )
            carry = assert_prefix_domination(
                y[0], z[0], carry=self._carry[x], **self._context(site=x)
            )
            self._carry[x] = int(carry)
            left.extend((2 * y[0] - 1).tolist())
            right.extend((2 * z[0] - 1).tolist())
        return left, right

    def rows(self, x: int, k: int) -> Rows:
        rows = self._rows.get(x)
        if rows is None:
            self._fill_chunk(x)
            rows = self._rows[x]
        if len(rows[0]) < k:
            rows = self._deepen(x, k)
        return rows

    def l_arrow(self, x: int, k: int) -> int:
        return self.rows(x, k)[0][k - 1]

    def r_arrow(self, x: int, k: int) -> int:
        return self.rows(x, k)[1][k - 1]

    @property
    def sites_generated(self) -> int:
        return len(self._rows)


@dataclass(frozen=True)
class CoupledSample:
    l_system: ArrowSystem
    r_system: ArrowSystem
    l_path: WalkPath
    r_path: WalkPath
    seed_key: SeedKey

    @property
    def horizon(self) -> int:
        return self.l_path.horizon


def simulate_erw(env: CookieEnvironment, seed_key: SeedKey, n: int) -> WalkPath:
    """Excited random walk in ``env``, driven by the p-cookies of ``seed_key``.

    Uses the same stream cells as the left walk of any coupling out of ``env``,
    so both produce identical paths for identical keys.
    """
    source = CookieSource(CouplingKernel.identity(env), CounterStream.from_key(seed_key))
    return walk_from_arrows(ArrowSystem(source.l_arrow), n)


def simulate_coupled(kernel: CouplingKernel, seed_key: SeedKey, n: int) -> CoupledSample:
    """Left and right walks on one probability space, with L-arrows <= R-arrows."""
    require_valid(kernel)
    source = CookieSource(kernel, CounterStream.from_key(seed_key))
    l_system = ArrowSystem(source.l_arrow)
    r_system = ArrowSystem(source.r_arrow)
    l_path = walk_from_arrows(l_system, n)
    r_path = walk_from_arrows(r_system, n)
    logger.debug(
        f"Replica {seed_key}: {source.sites_generated} sites generated, "
        f"L ends at {int(l_path.positions[-1])}, R at {int(r_path.positions[-1])}"
    )
    return CoupledSample(
        l_system=l_system.freeze(),
        r_system=r_system.freeze(),
        l_path=l_path,
        r_path=r_path,
        seed_key=seed_key,
    )


def hitting_time(path: WalkPath, x: int) -> Optional[int]:
    """First m with X_m = x, or None when the path never reaches x."""
    return path.hitting_time(x)


def _corruptible_cell(sample: CoupledSample) -> Optional[Tuple[int, int]]:
    for x in sample.r_system.sites:
        depth = min(sample.l_system.depth(x), sample.r_system.depth(x))
        if depth == 0:
            continue
        left = np.asarray(sample.l_system.row(x)[:depth])
        right = np.asarray(sample.r_system.row(x)[:depth])
        before = np.concatenate([[0], np.cumsum(right - left)[:-1]])
        hits = np.nonzero((left == 1) & (right == 1) & (before == 0))[0]
        if hits.size:
            return x, int(hits[0]) + 1
    return None


def corrupt_sample(sample: CoupledSample) -> CoupledSample:
    """Flip one R-arrow from +1 to -1 where L also has +1 and the sums are level.

    The right walk is re-driven from the altered system, so every downstream
    check sees the corruption.
    """
    cell = _corruptible_cell(sample)
    if cell is None:
        raise ValueError(f"No corruptible cell in replica {sample.seed_key}")
    x, k = cell
    r_system = sample.r_system.with_cell(x, k, -1)
    r_path = walk_from_arrows(r_system, sample.horizon)
    logger.debug(f"Corrupted R-arrow ({x}, {k}) in replica {sample.seed_key}")
    return replace(sample, r_system=r_system.freeze(), r_path=r_path)
