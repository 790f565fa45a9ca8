"""Scenario configuration, geometry drops and the seeding contract.

Every random quantity in the simulator comes from :func:`stream`, which keys
a Philox generator by ``(master_seed, drop, tag, *extra)``.  Results are thus
independent of evaluation order and of how drops are spread over workers.
"""
from __future__ import annotations

import dataclasses
import enum
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np


class ConfigError(ValueError):
    """Raised for malformed or inconsistent configuration documents."""


class Stream(enum.IntEnum):
    GEOMETRY = 0
    CHANNEL = 1
    PILOT = 2
    NOISE = 3
    HYBRID = 4


def stream(master_seed: int, drop: int, tag: Stream, *extra: int) -> np.random.Generator:
    """Independent generator for one (seed, drop, purpose[, indices]) key."""
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(drop), int(tag), *map(int, extra)))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class ScenarioConfig:
    # system (defaults follow the numerical-results section of the reference study)
    f0_hz: float = 73e9
    bandwidth_hz: float = 200e6
    area_side_m: float = 250.0
    num_aps: int = 100
    num_ms: int = 5
    n_ap: int = 16
    n_ms: int = 8
    mux_order: int = 1
    uc_cluster_size: int = 2
    mode: str = "uc"
    tau_p: int = 64
    tau_c: int = 200
    p_ul_w: float = 1e-3
    noise_psd_dbm_hz: float = -174.0
    noise_figure_db: float = 6.0
    p_max_w: float = 1.0
    delta: float = 1.0
    p_circuit_w: float = 1.0
    power_model: str = "basic"
    idle_fraction: float = 0.5
    n_cl: int = 5
    n_ray: int = 10
    n_rf: int = 4
    drops: int = 50
    master_seed: int = 0
    # channel
    pl0_db_offset: float = 32.4
    pl_exp_los: float = 2.0
    pl_exp_nlos: float = 3.2
    shadow_sigma_db: float = 4.0
    los_d0_m: float = 18.0
    los_d1_m: float = 36.0
    ray_spread_deg: float = 5.0
    # protocol
    zf_ridge_rel: float = 1e-9
    zf_scope: str = "global"
    bcd_sweeps: int = 20
    orthogonal_pilots: bool = False
    # optimizer
    opt_tol_outer: float = 1e-4
    opt_max_sweeps: int = 20
    sca_iters_per_ap: int = 5
    dinkelbach_tol: float = 1e-6
    dinkelbach_max: int = 30
    pg_max_iters: int = 200
    sqrt_floor: float = 1e-12
    warm_start: bool = True

    def __post_init__(self) -> None:
        _validate(self)

    def replace(self, **changes: Any) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    @property
    def pl0_db(self) -> float:
        """Path-loss intercept at 1 m: offset + 20 log10(f0 in GHz)."""
        return self.pl0_db_offset + 20.0 * math.log10(self.f0_hz / 1e9)


_CHOICES = {
    "mode": ("cf", "uc"),
    "power_model": ("basic", "idle_aware"),
    "zf_scope": ("global", "per_ap"),
}

_POSITIVE = (
    "f0_hz", "bandwidth_hz", "area_side_m", "num_aps", "num_ms", "n_ap", "n_ms",
    "mux_order", "uc_cluster_size", "tau_p", "tau_c", "p_ul_w", "p_max_w",
    "p_circuit_w", "n_cl", "n_ray", "n_rf", "drops", "los_d0_m", "los_d1_m",
    "bcd_sweeps", "opt_tol_outer", "opt_max_sweeps", "sca_iters_per_ap",
    "dinkelbach_tol", "dinkelbach_max", "pg_max_iters", "sqrt_floor",
)


def _validate(cfg: ScenarioConfig) -> None:
    for name in _POSITIVE:
        if not getattr(cfg, name) > 0:
            raise ConfigError(f"{name} must be strictly positive (got {getattr(cfg, name)!r})")
    for name, allowed in _CHOICES.items():
        if getattr(cfg, name) not in allowed:
            raise ConfigError(f"{name} must be one of {allowed} (got {getattr(cfg, name)!r})")
    if cfg.n_ms % cfg.mux_order:
        raise ConfigError(f"mux_order (P={cfg.mux_order}) must divide n_ms ({cfg.n_ms})")
    if cfg.tau_p >= cfg.tau_c:
        raise ConfigError(f"tau_p must satisfy tau_p < tau_c (got tau_p={cfg.tau_p}, tau_c={cfg.tau_c})")
    if cfg.tau_p < cfg.mux_order:
        raise ConfigError(f"tau_p ({cfg.tau_p}) must be >= mux_order ({cfg.mux_order})")
    if cfg.mode == "uc" and cfg.uc_cluster_size > cfg.num_ms:
        raise ConfigError(
            f"uc_cluster_size (N={cfg.uc_cluster_size}) must not exceed num_ms ({cfg.num_ms}) in UC mode")
    if not 1 <= cfg.n_rf <= cfg.n_ap:
        raise ConfigError(f"n_rf must lie in [1, n_ap={cfg.n_ap}] (got {cfg.n_rf})")
    if cfg.delta < 1:
        raise ConfigError(f"delta must be >= 1 (got {cfg.delta})")
    if not 0 < cfg.idle_fraction <= 1:
        raise ConfigError(f"idle_fraction must lie in (0, 1] (got {cfg.idle_fraction})")
    if cfg.shadow_sigma_db < 0 or cfg.ray_spread_deg < 0 or cfg.zf_ridge_rel < 0:
        raise ConfigError("shadow_sigma_db, ray_spread_deg and zf_ridge_rel must be non-negative")
    if not 0 <= cfg.master_seed < 2**64:
        raise ConfigError(f"master_seed must be a 64-bit unsigned integer (got {cfg.master_seed})")


def _coerce(key: str, raw: str, kind: type) -> Any:
    text = raw.strip()
    try:
        if kind is bool:
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if kind is int:
            try:
                return int(text, 0)
            except ValueError:
                as_float = float(text)  # accepts "1e3"
                if not as_float.is_integer():
                    raise
                return int(as_float)
        if kind is float:
            return float(text)
        return text.lower()
    except ValueError:
        raise ConfigError(f"cannot parse value {raw.strip()!r} for key {key!r} as {kind.__name__}") from None


_FIELD_TYPES = {f.name: {"float": float, "int": int, "str": str, "bool": bool}[f.type]
                for f in dataclasses.fields(ScenarioConfig)}


def load_config(text: str, **overrides: Any) -> ScenarioConfig:
    """Parse a flat ``key = value`` document (``#`` starts a comment).

    Unspecified keys keep their defaults; unknown keys are errors.
    """
    values: dict[str, Any] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in _FIELD_TYPES:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = _coerce(key, raw, _FIELD_TYPES[key])
    values.update(overrides)
    return ScenarioConfig(**values)


def dump_config(cfg: ScenarioConfig) -> str:
    lines = []
    for f in dataclasses.fields(cfg):
        v = getattr(cfg, f.name)
        lines.append(f"{f.name} = {str(v).lower() if isinstance(v, bool) else v}")
    return "\n".join(lines) + "\n"


def derive_noise_power(cfg: ScenarioConfig) -> float:
    """Thermal noise power in watts over the configured bandwidth."""
    dbm = cfg.noise_psd_dbm_hz + 10.0 * math.log10(cfg.bandwidth_hz) + cfg.noise_figure_db
    return 10.0 ** ((dbm - 30.0) / 10.0)


@dataclass(frozen=True)
class NetworkGeometry:
    ap_positions: np.ndarray  # (M, 2)
    ms_positions: np.ndarray  # (K, 2)
    distances: np.ndarray  # (M, K)
    los: np.ndarray  # (M, K) bool
    shadowing_db: np.ndarray  # (M, K)
    drop: int = field(default=0)


def drop_realization(cfg: ScenarioConfig, drop: int) -> NetworkGeometry:
    """Positions, LOS flags and shadowing for one Monte Carlo drop."""
    from .channel import los_probability

    if drop < 0:
        raise ValueError("drop index must be non-negative")
    rng = stream(cfg.master_seed, drop, Stream.GEOMETRY)
    aps = rng.uniform(0.0, cfg.area_side_m, size=(cfg.num_aps, 2))
    mss = rng.uniform(0.0, cfg.area_side_m, size=(cfg.num_ms, 2))
    dist = np.linalg.norm(aps[:, None, :] - mss[None, :, :], axis=-1)
    p_los = los_probability(dist, cfg.los_d0_m, cfg.los_d1_m)
    los = rng.random(dist.shape) < p_los
    shadow = rng.normal(0.0, cfg.shadow_sigma_db, size=dist.shape)
    for a in (aps, mss, dist, los, shadow):
        a.flags.writeable = False
    return NetworkGeometry(aps, mss, dist, los, shadow, drop)
