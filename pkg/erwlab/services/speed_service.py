import logging

from erwlab.env import classify
from erwlab.exceptions import InsufficientRegenerationsError
from erwlab.models import GuardEstimate, SpeedReport
from erwlab.regen import (
    coupled_speed_pair,
    naive_from_positions,
    regen_probability,
    simulate_speed_samples,
    speed_caveats,
    speed_from_blocks,
)

logger = logging.getLogger(__name__)


class SpeedService:
    def __init__(self, lab):
        self.lab = lab

    def run(self) -> SpeedReport:
        """Naive and regeneration speeds of the p-walk, guard sensitivity from the same
        paths, and the coupled pair when a non-identity kernel is configured."""
        config = self.lab.config
        env = self.lab.environment
        caveats = speed_caveats(env)
        guards = sorted(set(config.guard_sensitivity) | {config.guard})
        samples = simulate_speed_samples(
            env, config.seed, config.replicas, config.horizon, guards, self.lab.workers
        )

        sensitivity = []
        for guard in guards:
            displacements, durations = samples.blocks[guard]
            try:
                estimate = speed_from_blocks(
                    displacements,
                    durations,
                    guard,
                    samples.replicas,
                    config.bootstrap_resamples,
                    config.seed,
                    caveats,
                )
                sensitivity.append(GuardEstimate(guard=guard, estimate=estimate))
            except InsufficientRegenerationsError as e:
                sensitivity.append(GuardEstimate(guard=guard, error=str(e)))
        main = next(row for row in sensitivity if row.guard == config.guard)

        report = SpeedReport(
            environment=classify(env),
            horizon=config.horizon,
            replicas=config.replicas,
            seed=config.seed,
            naive=naive_from_positions(samples.final_positions, config.horizon, caveats),
            regeneration=main.estimate,
            regeneration_error=main.error,
            guard_sensitivity=sensitivity,
        )

        kernel = self.lab.kernel
        if kernel is not None and not kernel.is_identity:
            try:
                report.paired = coupled_speed_pair(
                    kernel,
                    config.seed,
                    config.replicas,
                    config.horizon,
                    config.guard,
                    config.bootstrap_resamples,
                    self.lab.workers,
                )
            except InsufficientRegenerationsError as e:
                report.paired_error = str(e)
        report.regen_probability = regen_probability(
            kernel if kernel is not None else env,
            config.seed,
            config.replicas,
            config.horizon,
            config.guard,
            self.lab.workers,
        )
        if report.insufficient:
            logger.warning("Speed report is missing regeneration estimates")
        return report
