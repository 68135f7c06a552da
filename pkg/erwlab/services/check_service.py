import logging
from typing import Dict, List

from erwlab.arrows import ORDER_CHECKS, check_theorem_order_properties
from erwlab.coupling import CouplingKernel, require_valid
from erwlab.exceptions import CouplingPreconditionError, HorizonGuardError
from erwlab.models import CheckSuiteReport
from erwlab.oracle import JOINT_HORIZON_GUARD, summarize_coupled
from erwlab.regen import REGEN_CHECKS, map_replicas, mutual_regeneration_check, witness_event_frequency
from erwlab.streams import SeedKey
from erwlab.walk import corrupt_sample, simulate_coupled

logger = logging.getLogger(__name__)

CHECK_EXACT_ORDER = "exact_atom_order"
CHECK_EXACT_MARGINALS = "exact_marginals"
CHECK_WITNESS = "witness_conditional"
CHECK_CONTROL = "negative_control_unapplied"
SUITE_CHECKS = ORDER_CHECKS + REGEN_CHECKS + (CHECK_EXACT_ORDER, CHECK_EXACT_MARGINALS, CHECK_WITNESS)

MARGINAL_TOLERANCE = 1e-10
MAX_REPLAY = 20


def _check_chunk(task) -> List[Dict[str, int]]:
    (kernel, negative_control), seed, start, stop, horizon, guard = task
    out = []
    for replica in range(start, stop):
        sample = simulate_coupled(kernel, SeedKey(seed, replica), horizon)
        counts: Dict[str, int] = {}
        if negative_control:
            try:
                sample = corrupt_sample(sample)
            except ValueError:
                counts[CHECK_CONTROL] = 1
        counts.update(check_theorem_order_properties(sample, horizon, guard).counts)
        counts.update(mutual_regeneration_check(sample, guard).counts)
        out.append(counts)
    return out


class CheckService:
    """Path-wise order checks over coupled samples, plus an exhaustive pass at small n."""

    def __init__(self, lab):
        self.lab = lab

    def _kernel(self) -> CouplingKernel:
        kernel = self.lab.kernel or CouplingKernel.identity(self.lab.environment)
        require_valid(kernel)
        return kernel

    def _exact_counts(self, kernel: CouplingKernel, counts: Dict[str, int]) -> int:
        n = min(self.lab.config.oracle_horizon, JOINT_HORIZON_GUARD)
        try:
            summary = summarize_coupled(kernel, n, self.lab.workers)
        except HorizonGuardError as e:
            logger.info(f"Skipping exhaustive check: {e}")
            return 0
        counts[CHECK_EXACT_ORDER] += summary.violating_atoms
        if summary.marginal_error > MARGINAL_TOLERANCE:
            counts[CHECK_EXACT_MARGINALS] += 1
        return summary.support_size

    def run(self) -> CheckSuiteReport:
        config = self.lab.config
        kernel = self._kernel()
        counts = {name: 0 for name in SUITE_CHECKS}
        replay = []
        unapplied = 0

        results = map_replicas(
            _check_chunk,
            (kernel, config.negative_control),
            config.seed,
            config.replicas,
            self.lab.workers,
            config.horizon,
            config.guard,
            first=config.first_replica,
        )
        for replica, sample_counts in enumerate(results, start=config.first_replica):
            unapplied += sample_counts.pop(CHECK_CONTROL, 0)
            for name, value in sample_counts.items():
                counts[name] += value
            if any(sample_counts.values()) and len(replay) < MAX_REPLAY:
                replay.append({"seed": config.seed, "replica": replica})
        if unapplied:
            logger.warning(f"Negative control found no cell to corrupt in {unapplied} samples")

        atoms = self._exact_counts(kernel, counts)

        witness = None
        if not kernel.is_identity:
            try:
                witness = witness_event_frequency(
                    kernel,
                    config.seed,
                    config.replicas,
                    config.horizon,
                    config.guard,
                    self.lab.workers,
                    config.first_replica,
                )
                counts[CHECK_WITNESS] += witness.conditional_violations
            except CouplingPreconditionError as e:
                logger.info(f"Skipping witness event: {e}")

        report = CheckSuiteReport(
            samples=config.replicas,
            horizon=config.horizon,
            guard=config.guard,
            counts=counts,
            exact_atoms_checked=atoms,
            replay=replay,
            negative_control=config.negative_control,
            witness=witness,
        )
        logger.info(f"Check suite finished: {sum(counts.values())} violations")
        return report
