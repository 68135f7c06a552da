import csv
import io
import logging
from typing import List, Optional

from erwlab.env import CookieEnvironment, classify
from erwlab.exceptions import ErwLabError
from erwlab.models import EnvironmentForm, SweepRow
from erwlab.pool import run_ordered
from erwlab.regen import speed_regeneration

logger = logging.getLogger(__name__)

SWEEP_COLUMNS = list(SweepRow.model_fields)


def _sweep_point(task) -> SweepRow:
    probs, form, speed, seed, replicas, horizon, guard, resamples = task
    row = SweepRow(probs=";".join(repr(float(p)) for p in probs), form=form)
    try:
        env = CookieEnvironment(probs, form)
        diagnostics = classify(env)
        row.delta = diagnostics.delta
        row.pbar = diagnostics.pbar
        row.theta = diagnostics.theta
        row.classification = diagnostics.label
        if speed:
            estimate = speed_regeneration(env, seed, replicas, horizon, guard, resamples)
            row.speed = estimate.value
            row.speed_ci95_low = estimate.ci95.low
            row.speed_ci95_high = estimate.ci95.high
            row.speed_ci99_low = estimate.ci99.low
            row.speed_ci99_high = estimate.ci99.high
            row.blocks = estimate.block_count
    except ErwLabError as e:
        row.error = str(e)
    return row


def format_sweep_csv(rows: List[SweepRow]) -> str:
    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=SWEEP_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        data = row.model_dump(mode="json")
        writer.writerow({k: "" if v is None else v for k, v in data.items()})
    return buffer.getvalue()


class SweepService:
    """Diagnostics, and optionally a regeneration speed, for every grid point.

    Each grid point uses the configured seed, so neighbouring points share
    their cookie uniforms.
    """

    def __init__(self, lab):
        self.lab = lab

    def run(self, grid: Optional[List[List[float]]] = None) -> List[SweepRow]:
        config = self.lab.config
        grid = config.grid if grid is None else grid
        form = EnvironmentForm(config.grid_form)
        tasks = [
            (
                list(probs),
                form,
                config.sweep_speed,
                config.seed,
                config.replicas,
                config.horizon,
                config.guard,
                config.bootstrap_resamples,
            )
            for probs in grid
        ]
        rows = run_ordered(_sweep_point, tasks, self.lab.workers)
        failed = sum(1 for row in rows if row.error)
        if failed:
            logger.warning(f"{failed} of {len(rows)} grid points failed")
        return rows
