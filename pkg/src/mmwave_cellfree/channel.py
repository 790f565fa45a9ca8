"""Clustered narrowband mmWave channel with an optional LOS component."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scenario import NetworkGeometry, ScenarioConfig, Stream, stream


def array_response(angle, n: int) -> np.ndarray:
    """Half-wavelength ULA steering vector(s), unit norm.

    ``angle`` may be a scalar (returns shape ``(n,)``) or an array of shape
    ``(r,)`` (returns ``(n, r)``, one column per angle).
    """
    if n < 1:
        raise ValueError("array needs at least one element")
    angle = np.asarray(angle, dtype=float)
    idx = np.arange(n).reshape((n,) + (1,) * angle.ndim)
    return np.exp(1j * np.pi * idx * np.sin(angle)) / np.sqrt(n)


def los_probability(d, d0: float = 18.0, d1: float = 36.0):
    """LOS probability min(d0/d, 1)(1 - exp(-d/d1)) + exp(-d/d1)."""
    d = np.asarray(d, dtype=float)
    near = np.minimum(d0 / np.maximum(d, 1e-300), 1.0)
    tail = np.exp(-d / d1)
    p = near * (1.0 - tail) + tail
    return p if p.ndim else float(p)


def path_loss(d, los, shadow_db, cfg: ScenarioConfig):
    """Linear large-scale power gain of a link of length ``d`` metres."""
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise ValueError("path loss undefined for non-positive distance")
    n_exp = np.where(los, cfg.pl_exp_los, cfg.pl_exp_nlos)
    pl_db = cfg.pl0_db + 10.0 * n_exp * np.log10(d) + shadow_db
    g = 10.0 ** (-pl_db / 10.0)
    return g if g.ndim else float(g)


@dataclass(frozen=True)
class ClusterGeometry:
    aoa_ap: np.ndarray  # (n_cl, n_ray) angles at the AP array
    aod_ms: np.ndarray  # (n_cl, n_ray) angles at the MS array
    gains: np.ndarray  # (n_cl, n_ray) complex, CN(0, 1)
    path_lengths: np.ndarray  # (n_cl, n_ray)
    los_phase: float
    los_aoa_ap: float
    los_aod_ms: float


def draw_clusters(rng: np.random.Generator, d: float, cfg: ScenarioConfig) -> ClusterGeometry:
    shape = (cfg.n_cl, cfg.n_ray)
    spread = np.deg2rad(cfg.ray_spread_deg)
    centre_ap = rng.uniform(-np.pi / 2, np.pi / 2, size=(cfg.n_cl, 1))
    centre_ms = rng.uniform(-np.pi / 2, np.pi / 2, size=(cfg.n_cl, 1))
    aoa = centre_ap + rng.laplace(0.0, spread, size=shape)
    aod = centre_ms + rng.laplace(0.0, spread, size=shape)
    gains = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)
    los_phase = rng.uniform(0.0, 2 * np.pi)
    los_ap, los_ms = rng.uniform(-np.pi / 2, np.pi / 2, size=2)
    return ClusterGeometry(aoa, aod, gains, np.full(shape, float(d)), los_phase, los_ap, los_ms)


def assemble_channel(cl: ClusterGeometry, los: bool, shadow_db: float, cfg: ScenarioConfig) -> np.ndarray:
    """Build H (n_ap x n_ms) from drawn cluster variates.

    Scattered rays use the NLOS exponent; the LOS term (when present) the LOS one.
    """
    gamma = np.sqrt(cfg.n_ap * cfg.n_ms / (cfg.n_cl * cfg.n_ray))
    att = np.sqrt(path_loss(cl.path_lengths.ravel(), False, shadow_db, cfg))
    a_ap = array_response(cl.aoa_ap.ravel(), cfg.n_ap)
    a_ms = array_response(cl.aod_ms.ravel(), cfg.n_ms)
    h = gamma * (a_ap * (cl.gains.ravel() * att)) @ a_ms.conj().T
    if los:
        d = float(cl.path_lengths.flat[0])
        amp = np.sqrt(cfg.n_ap * cfg.n_ms * path_loss(d, True, shadow_db, cfg))
        h = h + amp * np.exp(1j * cl.los_phase) * np.outer(
            array_response(cl.los_aoa_ap, cfg.n_ap), array_response(cl.los_aod_ms, cfg.n_ms).conj())
    return h


def synth_channel(geom: NetworkGeometry, k: int, m: int, cfg: ScenarioConfig,
                  rng: np.random.Generator | None = None) -> np.ndarray:
    """Channel matrix H_{k,m} between user ``k`` and AP ``m``."""
    if rng is None:
        rng = stream(cfg.master_seed, geom.drop, Stream.CHANNEL, k, m)
    cl = draw_clusters(rng, geom.distances[m, k], cfg)
    return assemble_channel(cl, bool(geom.los[m, k]), float(geom.shadowing_db[m, k]), cfg)


def synth_all_channels(geom: NetworkGeometry, cfg: ScenarioConfig) -> np.ndarray:
    """All channels of a drop, shape (K, M, n_ap, n_ms)."""
    K, M = cfg.num_ms, cfg.num_aps
    h = np.empty((K, M, cfg.n_ap, cfg.n_ms), dtype=complex)
    for k in range(K):
        for m in range(M):
            h[k, m] = synth_channel(geom, k, m, cfg)
    return h
