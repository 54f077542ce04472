"""Command line entry point: ``lrstrang {converge,svdump,adaptive,reference,run}``.

Exit codes: 0 success, 2 configuration error, 3 numerical divergence.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from .errors import ConfigError, LowRankError, NonlinearityBlowup
from .harness.experiments import adaptive_rank_run, convergence_sweep, resolve_problem, singular_value_dump
from .harness.reference import DEFAULT_TAU_REF, POLICIES, reference_solution
from .harness.report import write_manifest
from .integrators import SCHEMES
from .problems import PROBLEMS

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3

DEFAULT_TAUS = {
    "heat": "4e-3,2e-3,1e-3,5e-4",
    "cubic": "4e-3,2e-3,1e-3,5e-4",
    "lyap-random": ",".join(repr(0.0125 / 2**k) for k in range(8)),
}
DEFAULT_RANKS = {"heat": "16", "cubic": "2,3,4,5", "lyap-random": "11"}

log = logging.getLogger("lrstrang")


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma separated numbers, got {text!r}") from exc


def _ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma separated integers, got {text!r}") from exc


def _common(p: argparse.ArgumentParser, problem_default: str | None = None) -> None:
    p.add_argument("--problem", choices=sorted(PROBLEMS), default=problem_default, required=problem_default is None)
    p.add_argument("--m", type=int, default=128)
    p.add_argument("--T", type=float, default=0.3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--inner-substeps", type=int, default=1)
    p.add_argument("--domain", type=_floats, default=None, help="lyap-random only: lo,hi")
    p.add_argument("--distribution", choices=("uniform", "normal"), default=None, help="lyap-random only")
    p.add_argument("--manifest", default=None, help="run manifest path (default: next to the output)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lrstrang", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("converge", help="error and order sweep over (tau, rank)")
    _common(p)
    p.add_argument("--taus", type=_floats, default=None)
    p.add_argument("--ranks", type=_ints, default=None)
    p.add_argument("--theta", type=_floats, default=None, help="adaptive thresholds, one column each")
    p.add_argument("--r-init", type=int, default=None, help="initial rank for adaptive columns")
    p.add_argument("--reference", choices=POLICIES, default="dense-strang-fine")
    p.add_argument("--tau-ref", type=float, default=DEFAULT_TAU_REF)
    p.add_argument("--checkpoint-dir", default=None)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--timing", action="store_true", help="fill runtime_ms (makes the CSV nondeterministic)")
    p.add_argument("--out", required=True)

    p = sub.add_parser("svdump", help="leading singular values of the final state")
    _common(p)
    p.add_argument("--scheme", choices=SCHEMES, default="fullrank_strang")
    p.add_argument("--tau", type=float, default=DEFAULT_TAU_REF)
    p.add_argument("--rank", type=int, default=None, help="rank for the low-rank schemes")
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--out", required=True)

    p = sub.add_parser("adaptive", help="rank-adaptive run with per-step rank history")
    _common(p, "cubic")
    p.add_argument("--tau", type=float, default=0.005)
    p.add_argument("--theta", type=float, default=1e-8)
    p.add_argument("--rank", type=int, default=3)
    p.add_argument("--out", required=True)

    p = sub.add_parser("reference", help="compute or reuse a checkpointed dense reference")
    _common(p)
    p.add_argument("--tau-ref", type=float, default=DEFAULT_TAU_REF)
    p.add_argument("--out", required=True, help="checkpoint directory")

    p = sub.add_parser("run", help="run a subcommand from a JSON config")
    p.add_argument("--config", required=True)
    return parser


def _problem_kwargs(args) -> dict:
    kw = {}
    if args.domain is not None:
        if args.problem != "lyap-random" or len(args.domain) != 2:
            raise ConfigError("--domain takes lo,hi and applies to lyap-random only")
        kw["domain"] = tuple(args.domain)
    if args.distribution is not None:
        if args.problem != "lyap-random":
            raise ConfigError("--distribution applies to lyap-random only")
        kw["distribution"] = args.distribution
    return kw


def _problem(args):
    return resolve_problem(args.problem, args.m, args.T, args.seed, **_problem_kwargs(args))


def _cmd_converge(args):
    taus = args.taus if args.taus is not None else _floats(DEFAULT_TAUS[args.problem])
    ranks = args.ranks if args.ranks is not None else ([] if args.theta else _ints(DEFAULT_RANKS[args.problem]))
    thetas = args.theta or []
    if any(t <= 0 for t in taus) or any(r < 1 for r in ranks) or any(th <= 0 for th in thetas):
        raise ConfigError("taus and thetas must be positive, ranks >= 1")
    if any(r > args.m for r in ranks):
        raise ConfigError(f"rank exceeds m={args.m}")
    if args.reference == "checkpoint" and args.checkpoint_dir is None:
        raise ConfigError("--reference checkpoint needs --checkpoint-dir")
    out = Path(args.out)
    report = convergence_sweep(
        _problem(args), taus, ranks, thetas, args.reference, out,
        tau_ref=args.tau_ref, checkpoint_dir=args.checkpoint_dir, inner_substeps=args.inner_substeps,
        r_init=args.r_init, workers=args.workers, include_timing=args.timing, seed=args.seed,
    )
    for mode in dict.fromkeys(r.rank_mode for r in report.rows):
        ps = ", ".join("-" if p is None else f"{p:.2f}" for _, p in report.orders_for(mode))
        log.info("%s: orders [%s]", mode, ps)
    code = EXIT_DIVERGED if report.diverged else EXIT_OK
    return code, [out / "convergence.csv", out / "report.json"], out / "manifest.json"


def _cmd_svdump(args):
    problem = _problem(args)
    if not 1 <= args.k <= problem.m:
        raise ConfigError(f"k must lie in [1, m={problem.m}]")
    out = Path(args.out)
    sigma = singular_value_dump(
        problem, args.scheme, args.tau, args.T, args.k, out, rank=args.rank, inner_substeps=args.inner_substeps
    )
    log.info("sigma_%d / sigma_1 = %.3e", args.k, sigma[-1] / sigma[0])
    return EXIT_OK, [out], out.with_suffix(".manifest.json")


def _cmd_adaptive(args):
    if not args.theta > 0 or args.rank < 1 or not args.tau > 0:
        raise ConfigError("adaptive needs tau > 0, theta > 0, rank >= 1")
    out = Path(args.out)
    hist = adaptive_rank_run(
        _problem(args), args.tau, args.theta, args.rank, args.T, out, inner_substeps=args.inner_substeps
    )
    log.info("ranks %d..%d over %d steps", min(hist.ranks), hist.max_rank, len(hist.records))
    return EXIT_OK, [out], out.with_suffix(".manifest.json")


def _cmd_reference(args):
    if not args.tau_ref > 0:
        raise ConfigError("tau-ref must be positive")
    ref = reference_solution(_problem(args), "checkpoint", args.tau_ref, args.out, args.inner_substeps)
    log.info("%s", ref.describe())
    return EXIT_OK, [ref.path / "X.mtx", ref.path / "manifest.json"], ref.path / "run-manifest.json"


COMMANDS = {
    "converge": _cmd_converge,
    "svdump": _cmd_svdump,
    "adaptive": _cmd_adaptive,
    "reference": _cmd_reference,
}


def config_to_argv(config: dict) -> list[str]:
    """Translate a JSON config ``{"command": ..., flag: value, ...}`` to argv."""
    if not isinstance(config, dict) or "command" not in config:
        raise ConfigError("config must be a JSON object with a 'command' key")
    argv = [str(config["command"])]
    for key, value in config.items():
        if key == "command" or value is None:
            continue
        flag = "--" + key.replace("_", "-")
        if isinstance(value, bool):
            if value:
                argv.append(flag)
        elif isinstance(value, (list, tuple)):
            argv += [flag, ",".join(str(v) for v in value)]
        else:
            argv += [flag, str(value)]
    return argv


def _config_of(args) -> dict:
    return {k: v for k, v in vars(args).items() if k not in ("verbose",)}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")

    if args.command == "run":
        try:
            config = json.loads(Path(args.config).read_text())
            inner = config_to_argv(config)
        except (OSError, json.JSONDecodeError, ConfigError) as exc:
            print(f"lrstrang: error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        if inner[0] == "run":
            print("lrstrang: error: a config may not invoke 'run'", file=sys.stderr)
            return EXIT_CONFIG
        verbosity = ["-" + "v" * args.verbose] if args.verbose else []
        return main(verbosity + inner)

    start = time.perf_counter()
    try:
        code, outputs, manifest = COMMANDS[args.command](args)
    except NonlinearityBlowup as exc:
        print(f"lrstrang: diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (ConfigError, ValueError, KeyError) as exc:
        print(f"lrstrang: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except LowRankError as exc:
        print(f"lrstrang: error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    manifest = Path(args.manifest) if args.manifest else manifest
    write_manifest(manifest, args.command, _config_of(args), time.perf_counter() - start, outputs, {"exit_code": code})
    if code == EXIT_DIVERGED:
        print("lrstrang: one or more sweep cells diverged", file=sys.stderr)
    return code


def main_exit() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
