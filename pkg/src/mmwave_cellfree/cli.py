"""Command-line entry point: ``cellfree-sim {run,validate,selftest}``."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .harness import DEFAULT_SWEEP_DBM, RunMode, default_threads, standard_modes, run_campaign, write_results
from .scenario import ConfigError, ScenarioConfig, load_config


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of numbers, got {text!r}") from None


def _read_config(path: str | None, **overrides) -> ScenarioConfig:
    if path is None:
        return ScenarioConfig(**overrides)
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return load_config(text, **overrides)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cellfree-sim", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a Monte Carlo campaign and write CSV files")
    run.add_argument("--config", help="key = value config file (defaults if omitted)")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--pmax-dbm", type=_floats, default=list(DEFAULT_SWEEP_DBM),
                     help="comma-separated P_max sweep in dBm")
    run.add_argument("--modes", default=None,
                     help="comma-separated run modes mode-bf-csi-alg[-power_model], "
                          "e.g. uc-fd-perfect-opt_gee,cf-hybrid-estimated-uni")
    run.add_argument("--drops", type=int, help="override the number of drops")
    run.add_argument("--seed", type=int, help="override master_seed")
    run.add_argument("--threads", type=int, default=None,
                     help="worker processes (default: $CELLFREE_SIM_THREADS or 1)")
    run.add_argument("--traces", action="store_true", help="also write trace_<row>.csv files")
    run.add_argument("--no-timing", action="store_true",
                     help="write wall_ms as 0 so reruns are byte-identical")

    val = sub.add_parser("validate", help="check a config file and exit")
    val.add_argument("--config", help="config file (defaults if omitted)")

    sub.add_parser("selftest", help="run the built-in oracle checks")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "validate":
            cfg = _read_config(args.config)
            print(f"ok: M={cfg.num_aps} K={cfg.num_ms} N_AP={cfg.n_ap} N_MS={cfg.n_ms} mode={cfg.mode}")
            return 0
        if args.command == "selftest":
            from .selftest import run_selftest

            return 0 if run_selftest(verbose=True) else 1
        overrides = {}
        if args.drops is not None:
            overrides["drops"] = args.drops
        if args.seed is not None:
            overrides["master_seed"] = args.seed
        cfg = _read_config(args.config, **overrides)
        if args.modes:
            modes = [RunMode.parse(t, cfg.power_model) for t in args.modes.split(",") if t.strip()]
        else:
            modes = standard_modes(cfg.power_model)
        if not args.pmax_dbm:
            raise ConfigError("--pmax-dbm must list at least one value")
        threads = args.threads if args.threads is not None else default_threads()
        results = run_campaign(cfg, args.pmax_dbm, modes, threads=threads,
                               keep_traces=args.traces, timing=not args.no_timing)
        files = write_results(results, args.out, traces=args.traces)
        failed = sum(r.error is not None for r in results.rows)
        print(f"wrote {len(results.rows)} rows ({failed} failed) to {files[0]}")
        return 0
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
