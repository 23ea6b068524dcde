import argparse
import json
import logging
import platform
import sys
import time
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import scipy

from .. import __version__
from ..certify import global_certificate, irp_gap
from ..core import DLMError, NumericalError
from ..solvers import SolverConfig, am_dlm_solve
from ..utils import configure_logging, set_max_workers
from .checks import prox_check
from .data import write_matrix_csv
from .experiments import (
    AVAILABLE_PRESETS,
    DataSource,
    ExperimentConfig,
    incremental_compare,
    k_sweep_experiment,
    multi_init_experiment,
    preset_spec,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2

# subcommand -> ExperimentConfig.kind
COMMANDS = {
    "solve": "solve",
    "certify": "certify",
    "multi-init": "multi_init",
    "k-sweep": "k_sweep",
    "incremental": "incremental_compare",
}

EXPERIMENTS = {
    "multi_init": multi_init_experiment,
    "k_sweep": k_sweep_experiment,
    "incremental_compare": incremental_compare,
}

# flag dest -> ExperimentConfig field
FLAG_FIELDS = {
    "specs": "specs",
    "alphas": "alphas",
    "ds": "ds",
    "ks": "ks",
    "nus_d": "nus_d",
    "nus_h": "nus_h",
    "T": "T",
    "n_inits": "n_inits",
    "init_means": "init_means",
    "init_sd": "init_sd",
    "repetitions": "repetitions",
    "seed": "seed",
    "data": "data_path",
    "averaged": "averaged",
    "include_large": "include_large",
    "max_iters": "max_iters",
    "tol": "tol",
    "epochs": "epochs",
    "eta0": "eta0",
    "workers": "workers",
    "out": "out",
    "progress": "show_progress",
}


class UsageError(DLMError):
    pass


class ArgumentParser(argparse.ArgumentParser):
    """argparse with usage errors mapped to exit code 1."""

    def error(self, message: str) -> None:
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> List[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _ints(text: str) -> List[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _names(text: str) -> List[str]:
    return [v.strip() for v in text.split(",") if v.strip()]


def _add_problem_flags(parser: argparse.ArgumentParser, grid: bool) -> None:
    parser.add_argument("--config", help="JSON config file (or a previous run manifest)")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--out", help="Output directory")
    parser.add_argument("--data", help="CSV data matrix; synthetic Gaussian data when omitted")
    parser.add_argument("--T", type=int, help="Samples of the synthetic data")
    parser.add_argument("--averaged", action="store_true", default=None)
    parser.add_argument("--max-iters", dest="max_iters", type=int)
    parser.add_argument("--tol", type=float)
    parser.add_argument("--init-sd", dest="init_sd", type=float)
    parser.add_argument("--progress", action="store_true", default=None)
    if grid:
        parser.add_argument("--specs", type=_names, help=f"Comma list of {AVAILABLE_PRESETS}")
        parser.add_argument("--alphas", type=_floats)
        parser.add_argument("--ds", type=_ints)
        parser.add_argument("--ks", type=_ints)
        parser.add_argument("--nus-d", dest="nus_d", type=_floats)
        parser.add_argument("--nus-h", dest="nus_h", type=_floats)
        parser.add_argument("--n-inits", dest="n_inits", type=int)
        parser.add_argument("--init-means", dest="init_means", type=_floats)
        parser.add_argument("--repetitions", type=int)
        parser.add_argument(
            "--include-large", dest="include_large", action="store_true", default=None
        )
        parser.add_argument("--epochs", type=int)
        parser.add_argument("--eta0", type=float)
        parser.add_argument("--workers", type=int)
    else:
        parser.add_argument("--spec", dest="specs", type=lambda v: [v], help="Preset name")
        parser.add_argument("--alpha", dest="alphas", type=lambda v: [float(v)])
        parser.add_argument("--d", dest="ds", type=lambda v: [int(v)])
        parser.add_argument("--k", dest="ks", type=lambda v: [int(v)])
        parser.add_argument("--nu-d", dest="nus_d", type=lambda v: [float(v)])
        parser.add_argument("--nu-h", dest="nus_h", type=lambda v: [float(v)])


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(prog="dlm-opt", description="Dictionary learning optimisation toolkit")
    parser.add_argument("--log-level", dest="log_level", help="Overrides DLM_LOG_LEVEL")
    sub = parser.add_subparsers(dest="command", parser_class=ArgumentParser)
    sub.required = True

    solve = sub.add_parser("solve", help="Batch AM-DLM on one problem")
    _add_problem_flags(solve, grid=False)

    certify = sub.add_parser("certify", help="Solve, then run the global-optimality certificate")
    _add_problem_flags(certify, grid=False)
    certify.add_argument("--hessian", action="store_true", help="Also report the Hessian probe")
    certify.add_argument(
        "--irp", action="store_true", help="Also report the induced-regularizer gap"
    )

    for name, text in (
        ("multi-init", "Multi-initialisation optimality study"),
        ("k-sweep", "Objective spread and gap across inner dimensions"),
        ("incremental", "Batch versus online and SGD solvers"),
    ):
        _add_problem_flags(sub.add_parser(name, help=text), grid=True)

    check = sub.add_parser("prox-check", help="Check the squared-l1 prox against its oracle")
    check.add_argument("--trials", type=int, default=1000)
    check.add_argument("--seed", type=int, default=1)
    check.add_argument("--max-dim", dest="max_dim", type=int, default=5)
    check.add_argument("--out", help="Output directory")
    return parser


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    """JSON config (or manifest) first, then every flag that was given on the command line."""
    kind = COMMANDS[args.command]
    raw: Dict[str, Any] = {}
    if args.config:
        with open(args.config, encoding="utf-8") as handle:
            raw = json.load(handle)
        if "config" in raw and isinstance(raw["config"], dict):
            raw = raw["config"]
        if not isinstance(raw, dict):
            raise UsageError(f"{args.config} must hold a JSON object")
    raw["kind"] = kind
    for dest, name in FLAG_FIELDS.items():
        value = getattr(args, dest, None)
        if value is not None:
            raw[name] = value

    cfg = ExperimentConfig.for_kind(**raw)
    cfg.validate()
    if kind in EXPERIMENTS and not cfg.out:
        raise UsageError(f"{args.command} needs --out")
    if kind in EXPERIMENTS and args.seed is None and "seed" not in raw:
        raise UsageError(f"{args.command} needs --seed (or a seed in the config file)")
    return cfg


def _versions() -> Dict[str, str]:
    return {
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "dlm_opt": __version__,
    }


def _write_json(payload: Dict[str, Any], path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _write_manifest(
    out: Path,
    command: str,
    config: Dict[str, Any],
    timings: Dict[str, Any],
    outputs: List[str],
    **resolved: Any,
) -> None:
    manifest = {
        "command": command,
        "config": config,
        "versions": _versions(),
        "timings": timings,
        "outputs": outputs,
    }
    manifest.update(resolved)
    _write_json(manifest, out / "manifest.json")


def _solve(cfg: ExperimentConfig, args: argparse.Namespace) -> int:
    source = DataSource(cfg)
    base = source.matrix(cfg.ds[0])
    name, alpha, k = cfg.specs[0], cfg.alphas[0], cfg.ks[0]
    spec = preset_spec(
        name,
        alpha,
        k,
        base.rows,
        nu_d=cfg.nus_d[0],
        nu_h=cfg.nus_h[0],
        averaged=cfg.averaged,
        s=cfg.s,
        alpha_s=cfg.alpha_s,
        split=cfg.split,
        unsquared_l1=cfg.unsquared_l1,
    )
    X = source.for_spec(base, spec)
    solver_config = SolverConfig(
        seed=cfg.seed,
        init_mean=cfg.resolved_init_means()[0],
        init_sd=cfg.init_sd,
        max_iters=cfg.max_iters,
        tol=cfg.tol,
        show_progress=cfg.show_progress,
    )

    start = time.perf_counter()
    fact, report = am_dlm_solve(X, spec, solver_config)
    timings: Dict[str, Any] = {"solve_seconds": report.wall_clock}

    extra: Dict[str, Any] = {}
    if args.command == "certify":
        report.certificate = global_certificate(fact, X, spec, with_hessian=args.hessian)
        if args.irp:
            extra["irp_gap"] = irp_gap(fact, spec, seed=cfg.seed)
    timings["total_seconds"] = time.perf_counter() - start

    print(
        f"objective={report.final_objective:.10g} iterations={report.iterations} "
        f"converged={report.converged}"
    )
    if report.certificate is not None:
        print(f"globally_optimal={report.certificate.globally_optimal}")

    if cfg.out:
        out = Path(cfg.out)
        write_matrix_csv(fact.D, out / "D.csv")
        write_matrix_csv(fact.H, out / "H.csv")
        _write_json({**report.to_dict(), **extra}, out / "report.json")
        _write_manifest(
            out,
            args.command,
            cfg.to_dict(),
            timings,
            ["D.csv", "H.csv", "report.json"],
            problem=spec.to_dict(),
            solver=solver_config.to_dict(),
        )
    return EXIT_OK


def _experiment(cfg: ExperimentConfig, args: argparse.Namespace) -> int:
    set_max_workers(cfg.workers)
    report = EXPERIMENTS[cfg.kind](cfg)
    out = Path(cfg.out)
    outputs = ["report.csv", "summary.csv"]
    report.to_csv(out / "report.csv")
    report.summary_to_csv(out / "summary.csv")
    if report.traces:
        report.traces_to_csv(out / "traces.csv")
        outputs.append("traces.csv")
    _write_manifest(out, args.command, cfg.to_dict(), report.timings(), outputs)

    for failure in report.failures:
        logger.warning("cell %s %s: %s", failure.spec, failure.params, failure.status)
    print(f"{len(report.records)} records written to {out}, {len(report.failures)} failed")
    return EXIT_OK


def _prox_check(args: argparse.Namespace) -> int:
    start = time.perf_counter()
    result = prox_check(args.trials, args.seed, args.max_dim)
    print(
        f"prox-check: {result.trials} trials, max gap {result.max_oracle_gap:.3g}, "
        f"max residual {result.max_residual:.3g}, {result.failures} failures"
    )
    if args.out:
        out = Path(args.out)
        _write_json(result.to_dict(), out / "prox_check.json")
        config = {"trials": args.trials, "seed": args.seed, "max_dim": args.max_dim}
        _write_manifest(
            out,
            "prox-check",
            config,
            {"total_seconds": time.perf_counter() - start},
            ["prox_check.json"],
        )
    return EXIT_OK if result.passed else EXIT_NUMERICAL


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Entry point of the dlm-opt command.

    Returns:
        int: 0 on success, 1 on a usage or configuration error, 2 on a numerical failure
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code is None else int(exc.code)
    configure_logging(args.log_level)

    try:
        if args.command == "prox-check":
            return _prox_check(args)
        cfg = resolve_config(args)
        if cfg.kind in EXPERIMENTS:
            return _experiment(cfg, args)
        return _solve(cfg, args)
    except NumericalError as exc:
        print(f"dlm-opt: numerical failure: {exc}", file=sys.stderr)
        if exc.diagnostic:
            print(json.dumps(exc.diagnostic, default=str), file=sys.stderr)
        return EXIT_NUMERICAL
    except (DLMError, ValueError, TypeError, OSError) as exc:
        print(f"dlm-opt: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    finally:
        set_max_workers(None)


if __name__ == "__main__":
    sys.exit(main())
