"""Command line entry point.

Subcommands mirror the pipeline: ``collect``, ``train``, ``eval-openloop``,
``eval-mpc``, ``report``. Exit code 0 on success, 1 on usage problems (bad
flags, malformed config, missing files, hash mismatches), 2 on numerical
failures inside a pipeline stage.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from .config import ConfigError, default_config, load_config
from .control import Infeasible, MaxIterations
from .diffeo import TrainingDiverged
from .linalg import NotConverged
from .pipeline import (
    HashMismatch,
    PipelineError,
    cmd_collect,
    cmd_eval_mpc,
    cmd_eval_openloop,
    cmd_report,
    cmd_train,
)
from .sim import Diverged


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with code 2 on bad flags; that slot is reserved for
    # numerical failures here, so usage problems become a raised error
    def error(self, message):
        raise UsageError(message)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="config file path (omit for built-in cartpole defaults)")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--out", default=".", help="output directory root (default: current)")


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="kooplift", description="lifted linear models and MPC on them")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("collect", help="run the collection protocol, write the dataset")
    _add_common(p)

    p = sub.add_parser("train", help="train the diffeomorphism, build the basis, fit models")
    _add_common(p)
    p.add_argument("--dataset", help="dataset directory (default: <out>/data)")
    p.add_argument("--allow-hash-mismatch", action="store_true",
                   help="use artifacts produced under a different config")

    p = sub.add_parser("eval-openloop", help="replay test-run controls through every model")
    _add_common(p)
    p.add_argument("--models", nargs="+", help="model files (default: <out>/models/*.json)")
    p.add_argument("--test-seed", type=int, help="seed for test trajectories (default: config seed)")
    p.add_argument("--allow-hash-mismatch", action="store_true",
                   help="use artifacts produced under a different config")

    p = sub.add_parser("eval-mpc", help="closed-loop MPC with each model, compare costs")
    _add_common(p)
    p.add_argument("--models", nargs="+", help="model files (default: <out>/models/*.json)")
    p.add_argument("--allow-hash-mismatch", action="store_true",
                   help="use artifacts produced under a different config")

    p = sub.add_parser("report", help="render evaluation outputs as tables and figures")
    p.add_argument("--out", default=".", help="output directory root (default: current)")

    return parser


def _resolve_config(args):
    cfg = load_config(args.config) if args.config else default_config()
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


def _pct(value: float) -> str:
    return f"{value:+.2f}%"


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as err:
        print(f"usage error: {err}", file=sys.stderr)
        return 1
    except SystemExit as err:  # --help
        return 0 if err.code in (0, None) else 1

    try:
        if args.command == "collect":
            res = cmd_collect(_resolve_config(args), args.out)
            print(
                f"wrote {res['n_trajectories']} trajectories to {res['path']}"
                f" ({res['dropped']} dropped, {res['seconds']:.1f} s)"
            )
        elif args.command == "train":
            res = cmd_train(
                _resolve_config(args), args.out,
                dataset_path=args.dataset,
                allow_hash_mismatch=args.allow_hash_mismatch,
            )
            print(
                f"models written to {res['path']} in {res['seconds']:.1f} s\n"
                f"  diffeo best epoch {res['diffeo_best_epoch']}"
                f" (holdout loss {res['diffeo_holdout_loss']:.4e})\n"
                f"  keedmd l1={res['keedmd_l1']} l2={res['keedmd_l2']};"
                f" edmd_rbf l1={res['edmd_rbf_l1']} l2={res['edmd_rbf_l2']}"
            )
        elif args.command == "eval-openloop":
            res = cmd_eval_openloop(
                _resolve_config(args), args.out,
                model_paths=args.models,
                test_seed=args.test_seed,
                allow_hash_mismatch=args.allow_hash_mismatch,
            )
            print(f"open-loop curves written to {res['path']} ({res['seconds']:.1f} s)")
            for name, err in res["final_mean_error"].items():
                over = res["overflowed"][name]
                extra = f", {over} overflowed" if over else ""
                print(f"  {name}: final mean error {err:.4f}{extra}")
        elif args.command == "eval-mpc":
            res = cmd_eval_mpc(
                _resolve_config(args), args.out,
                model_paths=args.models,
                allow_hash_mismatch=args.allow_hash_mismatch,
            )
            print(f"closed-loop results written to {res['path']} ({res['seconds']:.1f} s)")
            for name, cost in res["costs"].items():
                print(f"  {name}: realized cost {cost:.4f}")
            for pair, improvement in res["improvements"].items():
                print(f"  {pair}: improvement {_pct(improvement)}")
        elif args.command == "report":
            res = cmd_report(args.out)
            print(f"report written to {res['path']}")
            for fig in res["figures"]:
                print(f"  figure: {fig}")
    except (ConfigError, HashMismatch, UsageError, FileNotFoundError, NotADirectoryError) as err:
        print(f"usage error: {err}", file=sys.stderr)
        return 1
    except (PipelineError, MaxIterations, Infeasible, Diverged, NotConverged, TrainingDiverged) as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
