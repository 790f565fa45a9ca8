"""Monte Carlo campaigns over drops, run modes and P_max sweeps."""
from __future__ import annotations

import csv
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .channel import synth_all_channels
from .optimizer import ConvergenceTrace, OptimizerOptions, maximize_ase, maximize_gee, uniform_allocation
from .protocol import (EffectiveChannelSet, associate, effective_channels, generate_pilots, hybridize,
                       ms_combiner, uplink_train, zf_precoders)
from .rate import PowerModel, ase_per_hz, effective_gains, power_consumed
from .scenario import ScenarioConfig, Stream, derive_noise_power, drop_realization, stream

MODES = ("cf", "uc")
BEAMFORMING = ("fd", "hybrid")
CSI = ("perfect", "estimated")
POWER_ALGS = ("opt_gee", "opt_ase", "uni")
POWER_MODELS = ("basic", "idle_aware")

RESULTS_HEADER = ["drop", "mode", "beamforming", "csi", "power_alg", "power_model", "pmax_dbm",
                  "gee_mbit_per_joule", "sum_ase_bit_s_hz", "per_user_ase", "wall_ms"]
SUMMARY_HEADER = ["mode", "beamforming", "csi", "power_alg", "power_model", "pmax_dbm", "n",
                  "gee_mean", "gee_std", "sum_ase_mean", "sum_ase_std"]
TRACE_HEADER = ["sweep", "ap", "true_gee", "surrogate", "lambda"]

DEFAULT_SWEEP_DBM = tuple(range(-10, 31, 5))


@dataclass(frozen=True, order=True)
class RunMode:
    """One curve of a campaign: everything in a run except P_max and the drop."""

    mode: str
    beamforming: str
    csi: str
    power_alg: str
    power_model: str = "basic"

    def __post_init__(self):
        for value, allowed in ((self.mode, MODES), (self.beamforming, BEAMFORMING), (self.csi, CSI),
                               (self.power_alg, POWER_ALGS), (self.power_model, POWER_MODELS)):
            if value not in allowed:
                raise ValueError(f"{value!r} is not one of {allowed}")

    @classmethod
    def parse(cls, text: str, default_power_model: str = "basic") -> "RunMode":
        """Parse ``mode-beamforming-csi-alg[-power_model]``, e.g. ``uc-fd-perfect-opt_gee``."""
        parts = text.strip().lower().split("-")
        if len(parts) == 4:
            parts.append(default_power_model)
        if len(parts) != 5:
            raise ValueError(f"cannot parse run mode {text!r}; expected mode-beamforming-csi-alg[-power_model]")
        return cls(*parts)

    def label(self) -> str:
        return "-".join((self.mode, self.beamforming, self.csi, self.power_alg, self.power_model))


@dataclass(frozen=True, order=True)
class RunDescriptor:
    drop: int
    run: RunMode
    pmax_dbm: float


@dataclass
class Row:
    desc: RunDescriptor
    gee: float
    sum_ase: float
    per_user_ase: tuple[float, ...]
    wall_ms: float
    trace: ConvergenceTrace | None = None
    error: str | None = None
    eta: np.ndarray | None = field(default=None, repr=False)


@dataclass
class CampaignResults:
    rows: list[Row]

    def aggregates(self) -> dict[tuple[RunMode, float], tuple[int, float, float, float, float]]:
        """(n, gee mean, gee std, sum-ASE mean, sum-ASE std) per (run mode, P_max) cell."""
        cells: dict[tuple[RunMode, float], list[Row]] = {}
        for r in self.rows:
            if r.error is None:
                cells.setdefault((r.desc.run, r.desc.pmax_dbm), []).append(r)
        out = {}
        for key in sorted(cells):
            g = np.array([r.gee for r in cells[key]])
            a = np.array([r.sum_ase for r in cells[key]])
            ddof = 1 if g.size > 1 else 0
            out[key] = (g.size, float(np.mean(g)), float(np.std(g, ddof=ddof)),
                        float(np.mean(a)), float(np.std(a, ddof=ddof)))
        return out

    def select(self, run: RunMode | str, pmax_dbm: float | None = None) -> list[Row]:
        if isinstance(run, str):
            run = RunMode.parse(run)
        return [r for r in self.rows
                if r.desc.run == run and (pmax_dbm is None or r.desc.pmax_dbm == pmax_dbm)]


def dbm_to_w(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def standard_modes(power_model: str = "basic") -> list[RunMode]:
    """OPT/UNI x UC/CF over the four CSI/beamforming scenarios."""
    return [RunMode(mode, bf, csi, alg, power_model)
            for csi in CSI for bf in BEAMFORMING for mode in MODES for alg in ("opt_gee", "uni")]


def _csi_sets(cfg: ScenarioConfig, drop: int, H: np.ndarray, L: np.ndarray, noise: float,
              estimated: bool) -> dict[str, EffectiveChannelSet]:
    sets = {"perfect": effective_channels(H, L)}
    if estimated:
        pilots = generate_pilots(cfg.num_ms, cfg.mux_order, cfg.tau_p,
                                 stream(cfg.master_seed, drop, Stream.PILOT), cfg.orthogonal_pilots)
        sets["estimated"] = uplink_train(H, L, pilots, cfg.p_ul_w, noise,
                                         stream(cfg.master_seed, drop, Stream.NOISE))
    return sets


def _gains_for(cfg, drop, run, H, L, noise, eff):
    assoc = associate(eff.S, run.mode, cfg.uc_cluster_size)
    pre = zf_precoders(eff, assoc, cfg.zf_ridge_rel, cfg.zf_scope)
    if run.beamforming == "hybrid":
        pre = hybridize(pre, cfg.n_rf, cfg.bcd_sweeps, cfg, drop)
    return effective_gains(H, L, pre, noise, cfg.bandwidth_hz), assoc, pre


def drop_gains(cfg: ScenarioConfig, drop: int, run: RunMode | str):
    """Gain tensor, association and precoders of one drop under one run mode."""
    if isinstance(run, str):
        run = RunMode.parse(run, cfg.power_model)
    H = synth_all_channels(drop_realization(cfg, drop), cfg)
    L = ms_combiner(cfg.n_ms, cfg.mux_order)
    noise = derive_noise_power(cfg)
    eff = _csi_sets(cfg, drop, H, L, noise, run.csi == "estimated")[run.csi]
    return _gains_for(cfg, drop, run, H, L, noise, eff)


def power_model_for(cfg: ScenarioConfig, kind: str | None = None) -> PowerModel:
    return PowerModel(kind or cfg.power_model, cfg.delta, cfg.p_circuit_w, cfg.idle_fraction)


def run_drop(cfg: ScenarioConfig, drop: int, modes: Sequence[RunMode], sweep_dbm: Sequence[float],
             keep_traces: bool = False, timing: bool = True) -> list[Row]:
    """All rows for one drop; channels are drawn once and shared by every mode."""
    geom = drop_realization(cfg, drop)
    H = synth_all_channels(geom, cfg)
    L = ms_combiner(cfg.n_ms, cfg.mux_order)
    noise = derive_noise_power(cfg)
    opts = OptimizerOptions.from_config(cfg)
    sweep = sorted(float(p) for p in sweep_dbm)
    csi_sets: dict[str, EffectiveChannelSet] = {}

    rows = []
    for run in sorted(set(modes)):
        model = power_model_for(cfg, run.power_model)
        try:
            if run.csi not in csi_sets:
                csi_sets.update(_csi_sets(cfg, drop, H, L, noise, run.csi == "estimated"))
            gains, assoc, _ = _gains_for(cfg, drop, run, H, L, noise, csi_sets[run.csi])
        except Exception as exc:  # recorded per row, campaign continues
            rows.extend(_error_row(RunDescriptor(drop, run, p), exc) for p in sweep)
            continue
        prev = None
        for p_dbm in sweep:
            desc = RunDescriptor(drop, run, p_dbm)
            pmax = dbm_to_w(p_dbm)
            t0 = time.perf_counter()
            try:
                if run.power_alg == "uni":
                    eta, trace = uniform_allocation(assoc, pmax), ConvergenceTrace(reason="closed form")
                elif run.power_alg == "opt_gee":
                    eta, trace = maximize_gee(gains, pmax, model, opts, init=prev)
                else:
                    eta, trace = maximize_ase(gains, pmax, opts, init=prev, model=model)
                prev = eta
                per_user = ase_per_hz(gains, eta)
            except Exception as exc:
                rows.append(_error_row(desc, exc))
                continue
            wall = (time.perf_counter() - t0) * 1e3 if timing else 0.0
            sum_ase = float(per_user.sum())
            g = cfg.bandwidth_hz * sum_ase / power_consumed(eta, model) / 1e6
            rows.append(Row(desc, g, sum_ase, tuple(map(float, per_user)), wall,
                            trace if keep_traces else None, eta=eta))
    return rows


def _error_row(desc: RunDescriptor, exc: Exception) -> Row:
    return Row(desc, math.nan, math.nan, (), 0.0, error=f"{type(exc).__name__}: {exc}")


def _run_drop_args(args):
    return run_drop(*args)


def default_threads() -> int:
    return max(1, int(os.environ.get("CELLFREE_SIM_THREADS", "1")))


def run_campaign(cfg: ScenarioConfig, sweep_dbm: Sequence[float] = DEFAULT_SWEEP_DBM,
                 modes: Iterable[RunMode] | None = None, drops: Iterable[int] | None = None,
                 threads: int | None = None, keep_traces: bool = False,
                 timing: bool = True) -> CampaignResults:
    """Run every mode at every P_max on every drop.

    Drops are distributed over ``threads`` worker processes; rows are sorted
    canonically afterwards so the output does not depend on scheduling.
    """
    sweep = list(sweep_dbm)
    if not sweep:
        raise ValueError("P_max sweep must not be empty")
    modes = list(modes) if modes is not None else standard_modes(cfg.power_model)
    drops = list(drops) if drops is not None else list(range(cfg.drops))
    threads = default_threads() if threads is None else max(1, threads)
    jobs = [(cfg, d, modes, sweep, keep_traces, timing) for d in drops]
    if threads == 1 or len(jobs) <= 1:
        chunks = [_run_drop_args(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(_run_drop_args, jobs))
    rows = sorted((r for chunk in chunks for r in chunk), key=lambda r: r.desc)
    return CampaignResults(rows)


def _fmt(x: float) -> str:
    return repr(float(x))


def write_results(results: CampaignResults, out_dir, traces: bool = False) -> list[Path]:
    """Write results.csv, summary.csv and (optionally) one trace file per row."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        written = [out / "results.csv", out / "summary.csv"]
        with open(written[0], "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(RESULTS_HEADER)
            for r in results.rows:
                d = r.desc
                per_user = ";".join(map(_fmt, r.per_user_ase)) if r.error is None else f"ERROR {r.error}"
                w.writerow([d.drop, d.run.mode, d.run.beamforming, d.run.csi, d.run.power_alg,
                            d.run.power_model, _fmt(d.pmax_dbm), _fmt(r.gee), _fmt(r.sum_ase),
                            per_user, _fmt(r.wall_ms)])
        with open(written[1], "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(SUMMARY_HEADER)
            for (run, p), (n, gm, gs, am, as_) in results.aggregates().items():
                w.writerow([run.mode, run.beamforming, run.csi, run.power_alg, run.power_model,
                            _fmt(p), n, _fmt(gm), _fmt(gs), _fmt(am), _fmt(as_)])
        if traces:
            for i, r in enumerate(results.rows):
                if r.trace is None or not r.trace.entries:
                    continue
                path = out / f"trace_{i}.csv"
                with open(path, "w", newline="") as fh:
                    w = csv.writer(fh, lineterminator="\n")
                    w.writerow(TRACE_HEADER)
                    for e in r.trace.entries:
                        w.writerow([e.sweep, e.ap, _fmt(e.true_gee), _fmt(e.surrogate), _fmt(e.lam)])
                written.append(path)
    except OSError as exc:
        raise OSError(f"cannot write results to {exc.filename or out}: {exc.strerror}") from exc
    return written
