"""GEE- and ASE-maximizing downlink power control.

The allocation is optimized one AP at a time.  For AP ``m`` the rate of each
user is written as g1 - g2 (log-det of total and interference-plus-noise
covariances); g2 is linearized at the current powers, giving a lower bound
that is tight there.  The bound's energy efficiency is maximized by
Dinkelbach iterations, each solved with projected gradient ascent on the
feasible set {x >= 0, sum x <= Pmax}.  A candidate is only accepted when the
true objective does not decrease, so traces are monotone by construction.

Internally everything is in bit/s/Hz and watts; the bandwidth only enters
when reporting.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .protocol import Association
from .rate import GainTensor, PowerModel, RateError, ase_per_hz, is_feasible, logdet2, power_consumed
from .scenario import ScenarioConfig

_LN2 = math.log(2.0)


class OptimizationError(RuntimeError):
    def __init__(self, msg: str, trace: "ConvergenceTrace"):
        super().__init__(msg)
        self.trace = trace


@dataclass(frozen=True)
class OptimizerOptions:
    tol_outer: float = 1e-4
    max_sweeps: int = 20
    sca_iters_per_ap: int = 5
    dinkelbach_tol: float = 1e-6
    dinkelbach_max: int = 30
    pg_max_iters: int = 200
    armijo_c: float = 1e-4
    backtrack: float = 0.5
    pg_step_tol: float = 1e-9  # fraction of Pmax
    pg_gain_tol: float = 1e-10  # relative to the surrogate rate
    pg_scaled: bool = True
    pg_scale_floor: float = 1e-3  # fraction of Pmax / n added to x in the scaling
    sqrt_floor: float = 1e-12
    warm_start: bool = True

    def __post_init__(self):
        for name in ("tol_outer", "dinkelbach_tol", "sqrt_floor", "armijo_c", "pg_step_tol", "pg_gain_tol", "pg_scale_floor"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("max_sweeps", "sca_iters_per_ap", "dinkelbach_max", "pg_max_iters"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        if not 0 < self.backtrack < 1:
            raise ValueError("backtrack factor must lie in (0, 1)")

    @classmethod
    def from_config(cls, cfg: ScenarioConfig) -> "OptimizerOptions":
        return cls(tol_outer=cfg.opt_tol_outer, max_sweeps=cfg.opt_max_sweeps,
                   sca_iters_per_ap=cfg.sca_iters_per_ap, dinkelbach_tol=cfg.dinkelbach_tol,
                   dinkelbach_max=cfg.dinkelbach_max, pg_max_iters=cfg.pg_max_iters,
                   sqrt_floor=cfg.sqrt_floor, warm_start=cfg.warm_start)


@dataclass(frozen=True)
class TraceEntry:
    sweep: int
    ap: int  # -1 for the initial point
    true_gee: float  # Mbit/J
    objective: float  # value being maximized: GEE (Mbit/J) or sum-ASE (bit/s/Hz)
    surrogate: float  # lower-bound numerator at the accepted point, bit/s
    lam: float  # final Dinkelbach parameter, Mbit/J; nan for ASE runs


@dataclass
class ConvergenceTrace:
    entries: list[TraceEntry] = field(default_factory=list)
    reason: str = ""
    lambda_sequences: list[list[float]] = field(default_factory=list)
    final_gradients: dict[int, np.ndarray] = field(default_factory=dict)

    def objective(self) -> np.ndarray:
        return np.array([e.objective for e in self.entries])

    def true_gee(self) -> np.ndarray:
        return np.array([e.true_gee for e in self.entries])

    def __len__(self) -> int:
        return len(self.entries)


def uniform_allocation(assoc: Association, pmax) -> np.ndarray:
    """Each AP splits its budget evenly over the users it serves."""
    mask = assoc.mask
    pmax = np.broadcast_to(np.asarray(pmax, dtype=float), (mask.shape[0],))
    counts = mask.sum(axis=1)
    share = np.divide(pmax, counts, out=np.zeros_like(pmax), where=counts > 0)
    return mask * share[:, None]


def project_box_simplex(v, pmax: float) -> np.ndarray:
    """Euclidean projection onto {x >= 0, sum(x) <= pmax}."""
    x = np.maximum(np.asarray(v, dtype=float), 0.0)
    if x.sum() <= pmax:
        return x
    u = np.sort(x)[::-1]
    css = np.cumsum(u) - pmax
    idx = np.arange(1, u.size + 1)
    rho = np.flatnonzero(u - css / idx > 0)[-1]
    theta = css[rho] / (rho + 1)
    return np.maximum(x - theta, 0.0)


def _cov(A: np.ndarray, noise: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    AAh = A @ np.conj(np.swapaxes(A, -1, -2))
    K = A.shape[0]
    own = AAh[np.arange(K), np.arange(K)]
    R = noise + np.einsum("kl,klpq->kpq", 1.0 - np.eye(K), AAh)
    return R, R + own


class _APProblem:
    """Powers of one AP as variables, every other AP frozen.

    With a single stream per user (P = 1) every block is a scalar and the
    log-dets reduce to logs; that case avoids the batched linear algebra.
    """

    def __init__(self, gains: GainTensor, eta: np.ndarray, m: int, sqrt_floor: float):
        self.m = m
        self.users = np.flatnonzero(gains.mask[m])
        self.floor = sqrt_floor
        self.K = gains.B.shape[0]
        self.scalar = gains.B.shape[-1] == 1
        rest = eta.copy()
        rest[m] = 0.0
        A_rest = np.einsum("ml,klmpq->klpq", np.sqrt(rest), gains.B)
        Bm = gains.B[:, self.users, m]  # (K, n, P, P)
        if self.scalar:
            self.A_rest, self.Bm, self.noise = A_rest[..., 0, 0], Bm[..., 0, 0], gains.noise[:, 0, 0].real
        else:
            self.A_rest, self.Bm, self.noise = A_rest, Bm, gains.noise
        # own[k, j] marks users[j] == k: that block belongs to g1 only
        self.own = self.users[None, :] == np.arange(self.K)[:, None]
        self.offdiag = 1.0 - np.eye(self.K)

    def streams(self, x: np.ndarray) -> np.ndarray:
        A = self.A_rest.copy()
        s = np.sqrt(x)[None, :]
        A[:, self.users] += s * self.Bm if self.scalar else s[..., None, None] * self.Bm
        return A

    def covariances(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        A = self.streams(x)
        if self.scalar:
            pw = A.real ** 2 + A.imag ** 2
            R = self.noise + (pw * self.offdiag).sum(axis=1)
            return A, R, R + np.diagonal(pw)
        R, T = _cov(A, self.noise)
        return A, R, T

    def _logdet(self, X: np.ndarray) -> np.ndarray:
        return np.log2(X) if self.scalar else logdet2(X)

    def g(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Per-user (g1, g2) in bit/s/Hz."""
        _, R, T = self.covariances(x)
        return self._logdet(T), self._logdet(R)

    def g1_sum(self, x: np.ndarray) -> float:
        return float(np.sum(self._logdet(self.covariances(x)[2])))

    def _grad_logdet(self, x: np.ndarray, use_total: bool) -> np.ndarray:
        """d logdet2(T_k or R_k) / d x_j, shape (K, n)."""
        _, R, T = self.covariances(x)
        M = T if use_total else R
        C = self.A_rest[:, self.users]  # contribution of the other APs
        # Re tr(B^H M^-1 B) + Re tr(B^H M^-1 C) / sqrt(x), floored at zero power
        if self.scalar:
            inv = 1.0 / M[:, None]
            direct = (self.Bm.real ** 2 + self.Bm.imag ** 2) * inv
            cross = np.real(np.conj(self.Bm) * C) * inv
        else:
            Minv = np.linalg.inv(M)
            Bh = np.conj(np.swapaxes(self.Bm, -1, -2))
            MB = np.einsum("kpq,kjqr->kjpr", Minv, self.Bm)
            MC = np.einsum("kpq,kjqr->kjpr", Minv, C)
            direct = np.real(np.einsum("kjpq,kjqp->kj", Bh, MB))
            cross = np.real(np.einsum("kjpq,kjqp->kj", Bh, MC))
        grad = (direct + cross / np.sqrt(np.maximum(x, self.floor))[None, :]) / _LN2
        if not use_total:
            grad = np.where(self.own, 0.0, grad)
        return grad

    def grad_g1(self, x: np.ndarray) -> np.ndarray:
        return self._grad_logdet(x, True)

    def grad_g2(self, x: np.ndarray) -> np.ndarray:
        return self._grad_logdet(x, False)


def _pg_ascent(f, grad, x: np.ndarray, pmax: float, opts: OptimizerOptions, scale: float = 1.0):
    """Projected gradient ascent with Armijo backtracking; never decreases f.

    The ascent direction is the gradient scaled per coordinate by
    ``x + pg_scale_floor * pmax / n`` (plain gradient if ``pg_scaled`` is off):
    the sqrt coupling makes curvature blow up near zero power, and without the
    scaling the small coordinates dictate a tiny step for all of them.  Trial
    steps follow the Barzilai-Borwein rule.  Stops once a step gains less than
    ``pg_gain_tol * scale`` or moves less than ``pg_step_tol * pmax``.
    """
    fx = f(x)
    tiny = 1e-13 * pmax
    g = grad(x)
    floor = opts.pg_scale_floor * pmax / max(x.size, 1)
    x_prev = g_prev = None
    for _ in range(opts.pg_max_iters):
        w = x + floor if opts.pg_scaled else np.ones_like(x)
        v = w * g
        vmax = np.max(np.abs(v))
        if not np.isfinite(vmax):
            raise RateError("non-finite gradient in power update")
        if vmax == 0:
            break
        step = pmax / vmax
        if x_prev is not None:
            s, y = x - x_prev, g - g_prev
            sy = float(s @ y)
            if sy < 0:  # negative curvature along s for an ascent problem
                step = float(s @ (s / w)) / -sy
        moved = False
        while step * vmax > tiny:
            xn = project_box_simplex(x + step * v, pmax)
            d = xn - x
            if np.max(np.abs(d)) <= tiny:
                break
            slope = float(g @ d)
            if slope > 0:
                fn = f(xn)
                if fn >= fx + opts.armijo_c * slope:
                    moved = True
                    break
            step *= opts.backtrack
        if not moved:
            break
        gain = fn - fx
        x_prev, g_prev = x, g
        x, fx = xn, fn
        if gain <= opts.pg_gain_tol * max(scale, abs(fx)) or np.max(np.abs(d)) <= opts.pg_step_tol * pmax:
            break
        g = grad(x)
    return x, fx


def _objective(gains: GainTensor, eta: np.ndarray, model: PowerModel, kind: str) -> tuple[float, float]:
    """(objective, GEE in Mbit/J) for the true channels."""
    sum_ase = float(ase_per_hz(gains, eta).sum())
    g = gains.bandwidth * sum_ase / power_consumed(eta, model) / 1e6
    return (g if kind == "gee" else sum_ase), g


def _optimize(gains: GainTensor, pmax, model: PowerModel, opts: OptimizerOptions, kind: str,
              init: np.ndarray | None) -> tuple[np.ndarray, ConvergenceTrace]:
    """Run from uniform allocation; if a warm start beats that result, also run from it.

    Starting from the warm point alone tends to inherit its zero entries, so it
    is only a fallback that keeps results monotone along a P_max sweep.
    """
    M = gains.mask.shape[0]
    pmax_m = np.broadcast_to(np.asarray(pmax, dtype=float), (M,))
    eta, trace = _ascend(gains, pmax_m, model, opts, kind, uniform_allocation(Association(gains.mask), pmax_m))
    if init is not None and opts.warm_start:
        warm = np.where(gains.mask, np.clip(init, 0.0, None), 0.0)
        scale = np.where(warm.sum(axis=1) > pmax_m, pmax_m / np.maximum(warm.sum(axis=1), 1e-300), 1.0)
        warm = warm * scale[:, None]
        if _objective(gains, warm, model, kind)[0] > trace.entries[-1].objective:
            eta_w, trace_w = _ascend(gains, pmax_m, model, opts, kind, warm)
            if trace_w.entries[-1].objective > trace.entries[-1].objective:
                eta, trace = eta_w, trace_w
    return eta, trace


def _ascend(gains: GainTensor, pmax_m: np.ndarray, model: PowerModel, opts: OptimizerOptions, kind: str,
            eta: np.ndarray) -> tuple[np.ndarray, ConvergenceTrace]:
    M = gains.mask.shape[0]
    bw = gains.bandwidth
    trace = ConvergenceTrace()
    obj, g_now = _objective(gains, eta, model, kind)
    trace.entries.append(TraceEntry(0, -1, g_now, obj, math.nan, math.nan))

    pc = np.broadcast_to(np.asarray(model.p_circuit, dtype=float), (M,))
    for sweep in range(1, opts.max_sweeps + 1):
        start = obj
        for m in range(M):
            for _ in range(opts.sca_iters_per_ap):
                sub = _APProblem(gains, eta, m, opts.sqrt_floor)
                if sub.users.size == 0:
                    break
                x0 = eta[m, sub.users].copy()
                g2_0 = sub.g(x0)[1].sum()
                lin = sub.grad_g2(x0).sum(axis=0)

                def numer(x):
                    return sub.g1_sum(x) - g2_0 - lin @ (x - x0)

                def numer_grad(x):
                    return sub.grad_g1(x).sum(axis=0) - lin

                if kind == "gee":
                    others = np.delete(eta, m, axis=0)
                    d_rest = power_consumed(others, _subset(model, pc, m)) if M > 1 else 0.0
                    x, lam, lams = _dinkelbach(numer, numer_grad, x0, pmax_m[m], model.delta,
                                               d_rest + pc[m], opts)
                    trace.lambda_sequences.append(lams)
                    lam_report = lam * bw / 1e6
                else:
                    x, _ = _pg_ascent(numer, numer_grad, x0, pmax_m[m], opts, abs(numer(x0)))
                    lam_report = math.nan

                candidates = [x]
                if kind == "gee" and model.kind == "idle_aware" and np.any(x0 > 0):
                    candidates.append(np.zeros_like(x0))
                best = None
                for cand in candidates:
                    trial = eta.copy()
                    trial[m, sub.users] = cand
                    try:
                        t_obj, t_g = _objective(gains, trial, model, kind)
                    except RateError as exc:
                        trace.reason = "non-finite objective"
                        raise OptimizationError(str(exc), trace) from exc
                    if not math.isfinite(t_obj):
                        trace.reason = "non-finite objective"
                        raise OptimizationError(f"non-finite objective at AP {m}", trace)
                    if t_obj >= obj and (best is None or t_obj > best[1]):
                        best = (trial, t_obj, t_g, cand)
                if best is None:
                    break
                eta, obj, g_now, cand = best
                if not is_feasible(eta, gains.mask, pmax_m):
                    trace.reason = "infeasible iterate"
                    raise OptimizationError(f"infeasible allocation after AP {m} update", trace)
                trace.entries.append(TraceEntry(sweep, m, g_now, obj, bw * numer(cand), lam_report))
                if np.max(np.abs(cand - x0)) <= 1e-12 * max(pmax_m[m], 1e-300):
                    break
        if obj - start <= opts.tol_outer * abs(start):
            trace.reason = "converged"
            break
    else:
        trace.reason = "max_sweeps"

    for m in range(M):
        sub = _APProblem(gains, eta, m, opts.sqrt_floor)
        if sub.users.size:
            x = eta[m, sub.users]
            trace.final_gradients[m] = bw * (sub.grad_g1(x).sum(axis=0) - sub.grad_g2(x).sum(axis=0))
    return eta, trace


def _subset(model: PowerModel, pc: np.ndarray, m: int) -> PowerModel:
    return PowerModel(model.kind, model.delta, np.delete(pc, m), model.idle_fraction)


def _dinkelbach(numer, numer_grad, x0: np.ndarray, pmax: float, delta: float, d_const: float,
                opts: OptimizerOptions):
    """max numer(x) / (delta * sum(x) + d_const) over the AP's feasible set."""

    def denom(x):
        return delta * float(np.sum(x)) + d_const

    x = x0
    scale = abs(numer(x))
    lam = numer(x) / denom(x)
    lams = [lam]
    for _ in range(opts.dinkelbach_max):
        x, _ = _pg_ascent(lambda y: numer(y) - lam * denom(y),
                          lambda y: numer_grad(y) - lam * delta, x, pmax, opts, scale)
        n, d = numer(x), denom(x)
        resid = n - lam * d
        lam = n / d
        lams.append(lam)
        if abs(resid) <= opts.dinkelbach_tol * max(abs(n), 1e-300):
            break
    return x, lam, lams


def maximize_gee(gains: GainTensor, pmax, model: PowerModel, opts: OptimizerOptions | None = None,
                 init: np.ndarray | None = None) -> tuple[np.ndarray, ConvergenceTrace]:
    """Alternating per-AP GEE maximization; returns (eta, trace)."""
    return _optimize(gains, pmax, model, opts or OptimizerOptions(), "gee", init)


def maximize_ase(gains: GainTensor, pmax, opts: OptimizerOptions | None = None,
                 init: np.ndarray | None = None, model: PowerModel | None = None
                 ) -> tuple[np.ndarray, ConvergenceTrace]:
    """Same machinery with the sum-ASE as objective (no fractional step)."""
    return _optimize(gains, pmax, model or PowerModel(), opts or OptimizerOptions(), "ase", init)


# -- per-user views of the decomposition, bit/s ------------------------------

def g_split_eval(gains: GainTensor, eta: np.ndarray, k: int) -> tuple[float, float]:
    """(g1, g2) for user ``k`` in bit/s; g1 - g2 is the user's ASE."""
    from .rate import g_split

    g1, g2 = g_split(gains, eta)
    return float(gains.bandwidth * g1[k]), float(gains.bandwidth * g2[k])


def grad_g2_wrt_ap(gains: GainTensor, eta: np.ndarray, m: int, k: int,
                   sqrt_floor: float = 1e-12) -> np.ndarray:
    """d g2_k / d eta[m, l] for l in K(m), bit/s per watt."""
    sub = _APProblem(gains, eta, m, sqrt_floor)
    return gains.bandwidth * sub.grad_g2(eta[m, sub.users])[k]


def surrogate_rate(gains: GainTensor, eta: np.ndarray, eta0: np.ndarray, m: int, k: int,
                   sqrt_floor: float = 1e-12) -> float:
    """Lower bound on user k's rate around eta0, with only AP m's powers free."""
    sub = _APProblem(gains, eta0, m, sqrt_floor)
    x0 = eta0[m, sub.users]
    x = eta[m, sub.users]
    g1 = sub.g(x)[0][k]
    g2_0 = sub.g(x0)[1][k]
    lin = sub.grad_g2(x0)[k]
    return float(gains.bandwidth * (g1 - g2_0 - lin @ (x - x0)))
