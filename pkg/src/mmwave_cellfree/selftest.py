"""Quick oracle-backed checks runnable from an installed package."""
from __future__ import annotations

import numpy as np

from .harness import drop_gains, power_model_for
from .optimizer import OptimizerOptions, grad_g2_wrt_ap, maximize_gee, uniform_allocation
from .protocol import dft_analog, generate_pilots, hybrid_factorize, ms_combiner, uplink_train
from .rate import ase_per_hz, ase_per_hz_ratio_form, covariances, power_consumed
from .scenario import ScenarioConfig


def _desk(**kw) -> ScenarioConfig:
    base = dict(num_aps=6, num_ms=3, n_ap=8, n_ms=4, drops=1, master_seed=7)
    base.update(kw)
    return ScenarioConfig(**base)


def check_zf_normalization():
    _, _, pre = drop_gains(_desk(), 0, "cf-fd-perfect-uni")
    tr = np.sum(np.abs(pre.Q) ** 2, axis=(-2, -1))[pre.mask.T]
    err = float(np.max(np.abs(tr - 1.0)))
    return err <= 1e-12, f"max |tr(QQ^H) - 1| = {err:.2e}"


def check_rate_forms():
    gains, assoc, _ = drop_gains(_desk(), 0, "uc-fd-perfect-uni")
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(5):
        eta = rng.random(assoc.mask.shape) * assoc.mask
        a, b = ase_per_hz(gains, eta), ase_per_hz_ratio_form(gains, eta)
        worst = max(worst, float(np.max(np.abs(a - b) / np.maximum(np.abs(b), 1e-300))))
    return worst <= 1e-9, f"max relative gap = {worst:.2e}"


def check_gradient():
    gains, assoc, _ = drop_gains(_desk(), 0, "cf-fd-perfect-uni")
    rng = np.random.default_rng(2)
    eta = (0.05 + rng.random(assoc.mask.shape)) * assoc.mask * 0.1
    worst = 0.0
    for m in range(2):
        users = assoc.served_by(m)
        for k in range(gains.B.shape[0]):
            g = grad_g2_wrt_ap(gains, eta, m, k)
            fd = np.empty_like(g)
            for j, l in enumerate(users):
                h = 1e-6 * max(eta[m, l], 1e-3)
                up, dn = eta.copy(), eta.copy()
                up[m, l] += h
                dn[m, l] -= h
                # one log-det of R_dn^-1 R_up avoids cancelling two large log-dets
                ratio = np.linalg.solve(covariances(gains, dn)[0][k], covariances(gains, up)[0][k])
                fd[j] = gains.bandwidth * np.linalg.slogdet(ratio)[1] / np.log(2.0) / (2 * h)
            scale = max(np.linalg.norm(fd), np.linalg.norm(g), 1e-12 * gains.bandwidth)
            worst = max(worst, float(np.linalg.norm(fd - g)) / scale)
    return worst <= 1e-4, f"max relative error = {worst:.2e}"


def check_estimation():
    rng = np.random.default_rng(3)
    K, M, n_ap, n_ms = 2, 3, 4, 2
    H = rng.standard_normal((K, M, n_ap, n_ms)) + 1j * rng.standard_normal((K, M, n_ap, n_ms))
    L = ms_combiner(n_ms, 1)
    phi = generate_pilots(K, 1, 4, rng, orthogonal_across_users=True)
    est = uplink_train(H, L, phi, 1e-3, 0.0, None)
    err = float(np.max(np.abs(est.S - H @ L)) / np.max(np.abs(H @ L)))
    return err <= 1e-10, f"relative error = {err:.2e}"


def check_hybrid_recovery():
    rng = np.random.default_rng(4)
    F = rng.standard_normal((8, 3)) + 1j * rng.standard_normal((8, 3))
    _, _, hist = hybrid_factorize(F, 8, 3, init=dft_analog(8, 8))
    mono = all(b <= a + 1e-12 for a, b in zip(hist, hist[1:]))
    return hist[0] <= 1e-8 and mono, f"first residual = {hist[0]:.2e}"


def check_grid_oracle():
    cfg = _desk(num_aps=1, num_ms=1, mode="cf")
    gains, assoc, _ = drop_gains(cfg, 0, "cf-fd-perfect-opt_gee")
    model = power_model_for(cfg)
    pmax = 1.0
    eta, _ = maximize_gee(gains, pmax, model, OptimizerOptions())
    grid = np.linspace(0.0, pmax, 10_000)
    best = max(cfg.bandwidth_hz * ase_per_hz(gains, np.array([[p]]))[0] / power_consumed(np.array([[p]]), model)
               for p in grid) / 1e6
    got = cfg.bandwidth_hz * ase_per_hz(gains, eta).sum() / power_consumed(eta, model) / 1e6
    rel = abs(got - best) / best
    return rel <= 0.01, f"optimizer {got:.4g} vs grid {best:.4g} Mbit/J"


def check_opt_beats_uniform():
    cfg = _desk()
    gains, assoc, _ = drop_gains(cfg, 0, "uc-fd-perfect-opt_gee")
    model = power_model_for(cfg)
    eta, trace = maximize_gee(gains, 0.1, model)
    uni = uniform_allocation(assoc, 0.1)
    f = lambda e: ase_per_hz(gains, e).sum() / power_consumed(e, model)
    mono = bool(np.all(np.diff(trace.objective()) >= 0))
    return f(eta) >= f(uni) and mono, f"OPT/UNI = {f(eta) / f(uni):.3f}"


CHECKS = [check_zf_normalization, check_rate_forms, check_gradient, check_estimation,
          check_hybrid_recovery, check_grid_oracle, check_opt_beats_uniform]


def run_selftest(verbose: bool = False) -> bool:
    ok_all = True
    for check in CHECKS:
        try:
            ok, detail = check()
        except Exception as exc:  # a crash is a failed check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        ok_all &= ok
        if verbose:
            print(f"{'PASS' if ok else 'FAIL'}  {check.__name__[6:]:<22} {detail}")
    return ok_all
