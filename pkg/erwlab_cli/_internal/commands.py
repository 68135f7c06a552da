import csv
import io
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

from erwlab.exceptions import ErwLabError, InvalidEnvironmentError
from erwlab.lab import Laboratory
from erwlab.models import (
    CheckSuiteReport,
    EnvironmentForm,
    ExperimentConfig,
    OutputFormat,
    SpeedReport,
)
from erwlab.services.sweep_service import format_sweep_csv

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_VIOLATION = 2
EXIT_INSUFFICIENT = 3


def parse_probs(text: str) -> List[float]:
    try:
        return [float(p) for p in text.replace(";", ",").split(",") if p.strip()]
    except ValueError as e:
        raise InvalidEnvironmentError(
            message="--probs must be a comma-separated list of numbers",
            details={"probs": text},
        ) from e


def _overrides(args) -> Dict[str, Any]:
    overrides = {
        "seed": getattr(args, "seed", None),
        "replicas": getattr(args, "replicas", None),
        "horizon": getattr(args, "horizon", None),
        "guard": getattr(args, "guard", None),
        "out": getattr(args, "out", None),
        "format": getattr(args, "format", None),
        "negative_control": getattr(args, "negative_control", None),
        "workers": getattr(args, "workers", None),
    }
    replica = getattr(args, "replica", None)
    if replica is not None:
        overrides["first_replica"] = replica
        if overrides["replicas"] is None:
            overrides["replicas"] = 1
    probs = getattr(args, "probs", None)
    if probs is not None:
        form = getattr(args, "form", None) or EnvironmentForm.FINITE.value
        overrides["environment"] = {"form": form, "probs": parse_probs(probs)}
    return overrides


def get_laboratory(args, **extra) -> Laboratory:
    """Build the laboratory from --config (if any) with command-line overrides on top."""
    overrides = {**_overrides(args), **extra}
    config_path = getattr(args, "config", None)
    if config_path:
        if not Path(config_path).exists():
            raise InvalidEnvironmentError(
                message=f"Configuration file not found: {config_path}"
            )
        config = ExperimentConfig.from_file(config_path).with_overrides(**overrides)
    else:
        config = ExperimentConfig.from_dict(
            {k: v for k, v in overrides.items() if v is not None}
        )
    logger.debug(f"Running with configuration: {config.model_dump_json()}")
    return Laboratory(config)


def _emit(text: str, config: ExperimentConfig) -> None:
    if config.out:
        with open(config.out, "w") as out_file:
            out_file.write(text)
        print(f"✅ Report written to {config.out}", file=sys.stderr)
    else:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")


def _fail(e: Exception) -> int:
    if isinstance(e, ErwLabError):
        print(f"❌ {e}", file=sys.stderr)
        return e.exit_code
    logger.error(f"Unexpected error: {e}", exc_info=True)
    print(f"❌ Unexpected error: {e}", file=sys.stderr)
    return EXIT_VALIDATION


def _csv(rows: List[Dict[str, Any]], columns: List[str]) -> str:
    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=columns, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: "" if v is None else v for k, v in row.items()})
    return buffer.getvalue()


def check_report_csv(report: CheckSuiteReport) -> str:
    rows = [{"check": name, "count": count} for name, count in report.counts.items()]
    return _csv(rows, ["check", "count"])


def speed_report_csv(report: SpeedReport) -> str:
    columns = ["estimate", "method", "guard", "value", "ci95_low", "ci95_high", "ci99_low", "ci99_high", "blocks", "replicas", "error"]
    rows = []

    def add(name: str, estimate, guard: Optional[int] = None, error: Optional[str] = None):
        row = {"estimate": name, "guard": guard, "error": error}
        if estimate is not None:
            row.update(
                method=estimate.method.value,
                guard=estimate.guard,
                value=estimate.value,
                ci95_low=estimate.ci95.low,
                ci95_high=estimate.ci95.high,
                ci99_low=estimate.ci99.low,
                ci99_high=estimate.ci99.high,
                blocks=estimate.block_count,
                replicas=estimate.replica_count,
            )
        rows.append(row)

    add("naive", report.naive)
    for row in report.guard_sensitivity:
        add("regeneration", row.estimate, row.guard, row.error)
    if report.paired is not None:
        add("speed_p", report.paired.speed_p)
        add("speed_q", report.paired.speed_q)
        add("paired_diff", report.paired.paired_diff)
    elif report.paired_error:
        add("paired_diff", None, error=report.paired_error)
    return _csv(rows, columns)


def cmd_classify(args) -> int:
    try:
        lab = get_laboratory(args)
        diagnostics = lab.classify()
        _emit(diagnostics.model_dump_json(indent=2), lab.config)
        return EXIT_OK
    except Exception as e:
        return _fail(e)


def cmd_check(args) -> int:
    try:
        lab = get_laboratory(args)
        report = lab.check()
        if (lab.config.format or OutputFormat.CSV) == OutputFormat.CSV:
            _emit(check_report_csv(report), lab.config)
        else:
            _emit(report.model_dump_json(indent=2), lab.config)
        if report.ok:
            print(f"✅ {report.samples} samples, no violations", file=sys.stderr)
            return EXIT_OK
        print(f"❌ {sum(report.counts.values())} violations", file=sys.stderr)
        for sample in report.replay:
            print(f"   replay: --seed {sample['seed']} --replica {sample['replica']}", file=sys.stderr)
        return EXIT_VIOLATION
    except Exception as e:
        return _fail(e)


def cmd_speed(args) -> int:
    try:
        lab = get_laboratory(args)
        report = lab.speed()
        if (lab.config.format or OutputFormat.JSON) == OutputFormat.CSV:
            _emit(speed_report_csv(report), lab.config)
        else:
            _emit(report.model_dump_json(indent=2), lab.config)
        if report.insufficient:
            print("❌ insufficient regenerations", file=sys.stderr)
            return EXIT_INSUFFICIENT
        return EXIT_OK
    except Exception as e:
        return _fail(e)


def cmd_oracle(args) -> int:
    try:
        extra = {"horizon": None}
        if getattr(args, "horizon", None) is not None:
            extra["oracle_horizon"] = args.horizon
        if getattr(args, "query", None):
            extra["oracle_query"] = args.query
        lab = get_laboratory(args, **extra)
        result = lab.oracle()
        _emit(result.model_dump_json(indent=2), lab.config)
        return EXIT_OK
    except Exception as e:
        return _fail(e)


def cmd_sweep(args) -> int:
    try:
        extra = {}
        if getattr(args, "speed", False):
            extra["sweep_speed"] = True
        if getattr(args, "grid", None):
            with open(args.grid, "r") as grid_file:
                extra["grid"] = json.load(grid_file)
        lab = get_laboratory(args, **extra)
        rows = lab.sweep()
        if (lab.config.format or OutputFormat.CSV) == OutputFormat.CSV:
            _emit(format_sweep_csv(rows), lab.config)
        else:
            _emit(json.dumps([row.model_dump(mode="json") for row in rows], indent=2), lab.config)
        return EXIT_OK
    except Exception as e:
        return _fail(e)
