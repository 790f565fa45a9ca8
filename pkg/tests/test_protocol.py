import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mmwave_cellfree.harness import drop_gains
from mmwave_cellfree.protocol import (EffectiveChannelSet, SingularGramError, associate, dft_analog,
                                      effective_channels, generate_pilots, hybrid_factorize, hybridize,
                                      ms_combiner, uplink_train, zf_precoders)
from mmwave_cellfree.scenario import ScenarioConfig


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


# -- combiner -----------------------------------------------------------------

def test_combiner_single_stream():
    np.testing.assert_array_equal(ms_combiner(8, 1), np.ones((8, 1)))


def test_combiner_two_streams():
    L = ms_combiner(8, 2)
    expected = np.zeros((8, 2))
    expected[:4, 0] = expected[4:, 1] = 1
    np.testing.assert_array_equal(L, expected)
    np.testing.assert_array_equal(L.T @ L, 4 * np.eye(2))


def test_combiner_divisibility():
    with pytest.raises(ValueError):
        ms_combiner(8, 3)


# -- pilots -------------------------------------------------------------------

@settings(max_examples=30, deadline=None)
@given(K=st.integers(1, 6), p=st.sampled_from([1, 2, 4]), blocks=st.integers(1, 8), seed=st.integers(0, 2**32 - 1))
def test_pilot_rows_orthonormal(K, p, blocks, seed):
    tau_p = 4 * blocks
    phi = generate_pilots(K, p, tau_p, np.random.default_rng(seed))
    assert phi.shape == (K, p, tau_p)
    for k in range(K):
        np.testing.assert_allclose(phi[k] @ phi[k].conj().T, np.eye(p), atol=1e-14)
    np.testing.assert_allclose(np.abs(phi), 1 / np.sqrt(tau_p))


def test_pilot_values_default_length():
    phi = generate_pilots(5, 1, 64, np.random.default_rng(0))
    assert set(np.unique(phi)) == {-1 / 8, 1 / 8}


def test_pilots_random_across_users():
    phi = generate_pilots(6, 1, 64, np.random.default_rng(1))
    cross = phi[:, 0] @ phi[:, 0].T
    assert np.any(np.abs(cross[~np.eye(6, dtype=bool)]) > 0)


def test_orthogonal_across_users():
    phi = generate_pilots(2, 1, 4, np.random.default_rng(2), orthogonal_across_users=True)
    assert abs(phi[0] @ phi[1].conj().T).max() < 1e-15
    phi = generate_pilots(4, 2, 8, np.random.default_rng(3), orthogonal_across_users=True)
    rows = phi.reshape(8, 8)
    np.testing.assert_allclose(rows @ rows.T, np.eye(8), atol=1e-14)


def test_pilot_errors():
    with pytest.raises(ValueError):
        generate_pilots(2, 4, 2, np.random.default_rng())
    with pytest.raises(ValueError):
        generate_pilots(3, 2, 4, np.random.default_rng(), orthogonal_across_users=True)


# -- training -----------------------------------------------------------------

@pytest.fixture
def small_channels():
    rng = np.random.default_rng(10)
    H = crandn(rng, 3, 4, 6, 4)
    return H, ms_combiner(4, 2)


def test_training_exact_without_noise(small_channels):
    H, L = small_channels
    phi = generate_pilots(3, 2, 8, np.random.default_rng(0), orthogonal_across_users=True)
    est = uplink_train(H, L, phi, 1e-3, 0.0, None)
    assert est.flavor == "estimated"
    S = H @ L
    assert np.max(np.abs(est.S - S)) / np.max(np.abs(S)) <= 1e-10


def test_training_noise_only(small_channels):
    H, L = small_channels
    phi = generate_pilots(3, 2, 8, np.random.default_rng(0))
    p, s2 = 2e-3, 0.5
    est = uplink_train(np.zeros_like(H), L, phi, p, s2, np.random.default_rng(4))
    W = np.random.default_rng(4)
    W = np.sqrt(s2 / 2) * (W.standard_normal((4, 6, 8)) + 1j * W.standard_normal((4, 6, 8)))
    expected = np.einsum("mat,kpt->kmap", W, phi.conj()) / np.sqrt(p)
    np.testing.assert_allclose(est.S, expected, atol=1e-13)


def test_pilot_contamination_residual(small_channels):
    H, L = small_channels
    H = H[:2]
    phi = generate_pilots(2, 2, 8, np.random.default_rng(7))
    p = np.array([1e-3, 4e-3])
    est = uplink_train(H, L, phi, p, 0.0, None)
    S = H @ L
    for k, l in ((0, 1), (1, 0)):
        expected = np.sqrt(p[l] / p[k]) * S[l] @ phi[l] @ phi[k].conj().T
        np.testing.assert_allclose(est.S[k] - S[k], expected, atol=1e-12)


def test_estimation_error_slope(small_channels):
    H, L = small_channels
    phi = generate_pilots(3, 2, 8, np.random.default_rng(0), orthogonal_across_users=True)
    powers = np.logspace(-9, -3, 7)
    errs = []
    for s2 in powers:
        errs.append(np.mean([np.linalg.norm(uplink_train(H, L, phi, 1.0, s2, np.random.default_rng(i)).S - H @ L)
                             for i in range(30)]))
    slope = np.polyfit(np.log10(powers), np.log10(errs), 1)[0]
    assert slope == pytest.approx(0.5, abs=0.05)


# -- association --------------------------------------------------------------

def test_cf_serves_everyone():
    S = crandn(np.random.default_rng(0), 5, 7, 4, 1)
    a = associate(S, "cf")
    assert a.mask.all()
    assert all(a.served_by(m) == (0, 1, 2, 3, 4) for m in range(7))


def test_uc_top_n_and_duality():
    rng = np.random.default_rng(1)
    S = crandn(rng, 5, 100, 4, 1)
    a = associate(S, "uc", 2)
    assert a.mask.sum() == 200
    norms = np.linalg.norm(S.reshape(5, 100, -1), axis=-1)
    for m in range(100):
        chosen = a.served_by(m)
        assert len(chosen) == 2
        assert min(norms[chosen, m]) >= max(np.delete(norms[:, m], chosen))
    for k in range(5):
        for m in range(100):
            assert (m in a.servers(k)) == (k in a.served_by(m))


def test_uc_ties_prefer_lower_index():
    S = np.ones((4, 1, 2, 1), dtype=complex)
    assert associate(S, "uc", 2).served_by(0) == (0, 1)


def test_uc_cluster_size_checked():
    with pytest.raises(ValueError):
        associate(np.ones((2, 1, 2, 1)), "uc", 3)


# -- zero forcing ---------------------------------------------------------------

def test_zf_unit_trace(small_cfg):
    for mode in ("uc", "cf"):
        _, _, pre = drop_gains(small_cfg, 0, f"{mode}-fd-perfect-uni")
        tr = np.einsum("kmap,kmap->km", pre.Q, pre.Q.conj()).real
        assert np.max(np.abs(tr[pre.mask.T] - 1)) <= 1e-12
        assert np.all(tr[~pre.mask.T] == 0)


def test_zf_single_link_is_matched_filter():
    s = crandn(np.random.default_rng(3), 16, 1)
    eff = EffectiveChannelSet(s.reshape(1, 1, 16, 1), "true")
    q = zf_precoders(eff, associate(eff.S, "cf")).Q[0, 0, :, 0]
    cos = abs(np.vdot(q, s[:, 0])) / (np.linalg.norm(q) * np.linalg.norm(s))
    assert cos == pytest.approx(1.0, abs=1e-10)


def test_zf_singular_without_ridge():
    s = crandn(np.random.default_rng(3), 16, 1)
    eff = EffectiveChannelSet(s.reshape(1, 1, 16, 1), "true")
    with pytest.raises(SingularGramError, match="rank"):
        zf_precoders(eff, associate(eff.S, "cf"), ridge_rel=0.0)


def test_zf_nulls_interference_when_well_posed():
    # one AP: (S S^H + eps I)^-1 S = S (S^H S + eps I)^-1, i.e. ZF as eps -> 0
    rng = np.random.default_rng(4)
    S = crandn(rng, 3, 1, 8, 1)
    pre = zf_precoders(EffectiveChannelSet(S, "true"), associate(S, "cf"), ridge_rel=1e-12)
    G = S[:, 0, :, 0].conj() @ pre.Q[:, 0, :, 0].T  # G[k, l] = s_k^H q_l
    off = G[~np.eye(3, dtype=bool)]
    assert np.max(np.abs(off)) < 1e-9 * np.max(np.abs(np.diag(G)))


def test_zf_per_ap_scope(small_cfg):
    gains_g, _, pre_g = drop_gains(small_cfg, 0, "cf-fd-perfect-uni")
    _, _, pre_p = drop_gains(small_cfg.replace(zf_scope="per_ap"), 0, "cf-fd-perfect-uni")
    tr = np.einsum("kmap,kmap->km", pre_p.Q, pre_p.Q.conj()).real
    np.testing.assert_allclose(tr, 1.0, atol=1e-12)
    assert not np.allclose(pre_g.Q, pre_p.Q)


def test_cf_equals_uc_with_full_cluster(small_cfg):
    cfg = small_cfg.replace(uc_cluster_size=small_cfg.num_ms)
    g_cf, _, p_cf = drop_gains(cfg, 0, "cf-fd-perfect-uni")
    g_uc, _, p_uc = drop_gains(cfg, 0, "uc-fd-perfect-uni")
    np.testing.assert_array_equal(p_cf.Q, p_uc.Q)
    np.testing.assert_array_equal(g_cf.B, g_uc.B)


# -- hybrid -------------------------------------------------------------------

@pytest.mark.parametrize("n_rf, cols", [(1, 3), (2, 2), (4, 5), (4, 2), (8, 6)])
def test_bcd_residual_monotone(n_rf, cols):
    rng = np.random.default_rng(n_rf * 10 + cols)
    F = crandn(rng, 8, cols)
    W_rf, W_bb, hist = hybrid_factorize(F, n_rf, 25, rng)
    assert np.all(np.diff(hist) <= 1e-12 * np.linalg.norm(F))
    np.testing.assert_allclose(np.abs(W_rf), 1 / np.sqrt(8), rtol=1e-14)
    assert np.linalg.norm(F - W_rf @ W_bb) == pytest.approx(hist[-1])


def test_bcd_constant_modulus_every_sweep():
    rng = np.random.default_rng(0)
    F = crandn(rng, 16, 5)
    for sweeps in (1, 2, 5):
        W_rf, _, _ = hybrid_factorize(F, 4, sweeps, np.random.default_rng(1))
        assert np.max(np.abs(np.abs(W_rf) - 0.25)) < 1e-15


def test_bcd_exact_with_full_rf():
    F = crandn(np.random.default_rng(2), 16, 5)
    init = dft_analog(16, 16)
    np.testing.assert_allclose(init.conj().T @ init, np.eye(16), atol=1e-13)
    _, _, hist = hybrid_factorize(F, 16, 1, init=init)
    assert hist[0] <= 1e-8


def test_bcd_rejects_bad_rf_count():
    with pytest.raises(ValueError):
        hybrid_factorize(np.ones((4, 1)), 5, 1)
    with pytest.raises(ValueError):
        hybrid_factorize(np.ones((4, 1)), 0, 1)


def test_hybridize_unit_trace_and_factors(small_cfg):
    gains, assoc, pre = drop_gains(small_cfg.replace(n_rf=2), 0, "cf-hybrid-perfect-uni")
    assert pre.kind == "hybrid"
    tr = np.einsum("kmap,kmap->km", pre.Q, pre.Q.conj()).real
    np.testing.assert_allclose(tr[pre.mask.T], 1.0, atol=1e-12)
    for m, W in pre.analog.items():
        assert W.shape == (8, 2)
        np.testing.assert_allclose(np.abs(W), 1 / np.sqrt(8), rtol=1e-14)
        assert np.all(np.diff(pre.residuals[m]) <= 1e-12 * pre.residuals[m][0])
