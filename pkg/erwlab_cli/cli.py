import argparse
import importlib.metadata
import logging
import sys

from erwlab_cli._internal.commands import (
    cmd_check,
    cmd_classify,
    cmd_oracle,
    cmd_speed,
    cmd_sweep,
)


def _package_version() -> str:
    try:
        return importlib.metadata.version("erwlab")
    except importlib.metadata.PackageNotFoundError:
        return "unknown"


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=str, help="Path to a JSON experiment configuration")
    common.add_argument("--probs", type=str, help="Cookie vector, e.g. 0.9,0.9,0.9")
    common.add_argument(
        "--form", choices=["finite", "periodic"], help="Environment form for --probs"
    )
    common.add_argument("--seed", type=int, help="Master seed (unsigned 64-bit)")
    common.add_argument("--replicas", type=int, help="Number of replicas")
    common.add_argument(
        "--replica", type=int, help="First replica index; alone it reruns just that replica"
    )
    common.add_argument("--horizon", type=int, help="Steps per walk")
    common.add_argument("--guard", type=int, help="Regeneration guard buffer")
    common.add_argument("--out", type=str, help="Write the report here instead of stdout")
    common.add_argument("--format", choices=["csv", "json"], help="Report format")
    common.add_argument("--workers", type=int, help="Worker processes (capped by ERW_THREADS)")
    common.add_argument(
        "--negative-control",
        action="store_const",
        const=True,
        default=None,
        help="Flip one R-arrow in every checked sample",
    )
    return common


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="Experiments on one-dimensional excited random walks.",
        formatter_class=argparse.RawTextHelpFormatter,
    )
    parser.add_argument(
        "--version", action="version", version=f"erwlab v{_package_version()}"
    )
    parser.add_argument(
        "-v", "--verbose", action="store_true", help="Log debug output to stderr"
    )

    subparsers = parser.add_subparsers(title="commands", metavar="")
    common = _common_parser()

    classify_parser = subparsers.add_parser(
        "classify", parents=[common], help="Delta, pbar and theta diagnostics and the regime."
    )
    classify_parser.set_defaults(func=cmd_classify)

    check_parser = subparsers.add_parser(
        "check", parents=[common], help="Run the path-wise order checks over coupled samples."
    )
    check_parser.set_defaults(func=cmd_check)

    speed_parser = subparsers.add_parser(
        "speed", parents=[common], help="Naive, regeneration and paired speed estimates."
    )
    speed_parser.set_defaults(func=cmd_speed)

    oracle_parser = subparsers.add_parser(
        "oracle",
        parents=[common],
        help="Exact laws at small horizons ('--horizon' is the enumeration depth).",
    )
    oracle_parser.add_argument(
        "--query",
        type=str,
        help="'hit X', 'max X', 'min X', 'end X', 'joint' or 'dominance'",
    )
    oracle_parser.set_defaults(func=cmd_oracle)

    sweep_parser = subparsers.add_parser(
        "sweep", parents=[common], help="Diagnostics (and speeds) over a grid of environments."
    )
    sweep_parser.add_argument("--grid", type=str, help="JSON file with a list of cookie vectors")
    sweep_parser.add_argument(
        "--speed", action="store_true", help="Estimate the regeneration speed per point"
    )
    sweep_parser.set_defaults(func=cmd_sweep)

    return parser


def main(argv=None) -> None:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )

    if hasattr(args, "func"):
        sys.exit(args.func(args))
    else:
        parser.print_help()
