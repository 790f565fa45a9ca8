import numpy as np
import pytest

from mmwave_cellfree.channel import (ClusterGeometry, array_response, assemble_channel, draw_clusters,
                                     los_probability, path_loss, synth_channel)
from mmwave_cellfree.scenario import ScenarioConfig, drop_realization


def test_array_response_broadside():
    np.testing.assert_allclose(array_response(0.0, 4), 0.5 * np.ones(4))


@pytest.mark.parametrize("n", [1, 3, 8, 16])
def test_array_response_unit_norm(n):
    rng = np.random.default_rng(n)
    for theta in rng.uniform(-np.pi, np.pi, 20):
        assert np.linalg.norm(array_response(theta, n)) == pytest.approx(1.0, abs=1e-14)


@pytest.mark.parametrize("n", [4, 8, 16])
def test_array_responses_orthogonal_on_grid(n):
    # sin(t1) - sin(t2) = 2/n makes the inner product a full sum of n-th roots of unity
    t2 = np.arcsin(-0.3)
    t1 = np.arcsin(-0.3 + 2.0 / n)
    assert abs(np.vdot(array_response(t1, n), array_response(t2, n))) < 1e-14


def test_array_response_vectorized():
    angles = np.array([0.1, -0.4, 1.2])
    cols = array_response(angles, 5)
    assert cols.shape == (5, 3)
    for j, a in enumerate(angles):
        np.testing.assert_allclose(cols[:, j], array_response(a, 5))


def test_array_response_rejects_empty():
    with pytest.raises(ValueError):
        array_response(0.0, 0)


def test_los_probability_limits():
    assert los_probability(0.0) == pytest.approx(1.0)
    assert los_probability(1e-9) == pytest.approx(1.0)
    assert los_probability(1e6) < 1e-4
    assert los_probability(18.0, 18.0, 36.0) == pytest.approx(1.0)
    d = np.linspace(0, 500, 1000)
    p = los_probability(d)
    assert np.all((p >= 0) & (p <= 1)) and np.all(np.diff(p) <= 1e-15)


def test_path_loss_reference_value():
    cfg = ScenarioConfig()
    expected = 10 ** (-(32.4 + 20 * np.log10(73)) / 10)
    assert path_loss(1.0, True, 0.0, cfg) == pytest.approx(expected)
    assert np.log10(expected) == pytest.approx(-6.967, abs=1e-3)


def test_path_loss_ordering():
    cfg = ScenarioConfig()
    d = np.linspace(1, 300, 50)
    for los in (True, False):
        assert np.all(np.diff(path_loss(d, los, 0.0, cfg)) < 0)
    assert np.all(path_loss(d, False, 0.0, cfg) <= path_loss(d, True, 0.0, cfg))


def test_path_loss_rejects_zero_distance():
    with pytest.raises(ValueError):
        path_loss(0.0, True, 0.0, ScenarioConfig())


def test_channel_dimensions():
    cfg = ScenarioConfig(num_aps=3, num_ms=2)
    geom = drop_realization(cfg, 0)
    h = synth_channel(geom, 1, 2, cfg)
    assert h.shape == (16, 8) and np.all(np.isfinite(h))


def test_channel_deterministic():
    cfg = ScenarioConfig(num_aps=3, num_ms=2)
    geom = drop_realization(cfg, 0)
    np.testing.assert_array_equal(synth_channel(geom, 1, 0, cfg), synth_channel(geom, 1, 0, cfg))


def _single_ray(cfg, los=False, gain=1.0):
    one = np.ones((1, 1))
    return ClusterGeometry(0.3 * one, -0.7 * one, gain * one.astype(complex), one, 0.0, 0.2, 0.5)


def test_single_ray_is_rank_one():
    # unit gain and unit attenuation: zero-dB path loss at 1 m
    cfg = ScenarioConfig(n_cl=1, n_ray=1, pl0_db_offset=-20 * np.log10(73.0), shadow_sigma_db=0.0)
    h = assemble_channel(_single_ray(cfg), False, 0.0, cfg)
    expected = np.sqrt(16 * 8) * np.outer(array_response(0.3, 16), array_response(-0.7, 8).conj())
    np.testing.assert_allclose(h, expected, atol=1e-13)
    assert np.linalg.matrix_rank(h) == 1
    assert np.linalg.norm(h) ** 2 == pytest.approx(16 * 8)


def test_los_only_is_rank_one():
    cfg = ScenarioConfig(n_cl=1, n_ray=1)
    h = assemble_channel(_single_ray(cfg, gain=0.0), True, 0.0, cfg)
    assert np.linalg.matrix_rank(h, tol=1e-8 * np.linalg.norm(h)) == 1


def test_ray_order_does_not_matter():
    cfg = ScenarioConfig(n_cl=3, n_ray=4)
    cl = draw_clusters(np.random.default_rng(5), 40.0, cfg)
    perm = np.random.default_rng(6).permutation(4)
    shuffled = ClusterGeometry(cl.aoa_ap[:, perm], cl.aod_ms[:, perm], cl.gains[:, perm],
                               cl.path_lengths[:, perm], cl.los_phase, cl.los_aoa_ap, cl.los_aod_ms)
    np.testing.assert_allclose(assemble_channel(cl, False, 1.0, cfg),
                               assemble_channel(shuffled, False, 1.0, cfg), rtol=1e-12, atol=0)


def test_gamma_rescaling():
    a_cfg = ScenarioConfig(n_cl=2, n_ray=6)
    cl = draw_clusters(np.random.default_rng(8), 30.0, a_cfg)
    b_cfg = ScenarioConfig(n_cl=4, n_ray=5)
    ha = assemble_channel(cl, False, 0.0, a_cfg)
    hb = assemble_channel(cl, False, 0.0, b_cfg)
    np.testing.assert_allclose(hb, ha * np.sqrt(12 / 20), rtol=1e-12)


def test_scattered_power_normalization():
    """E ||H||_F^2 = n_ap n_ms L for the scattered part, checked by Monte Carlo."""
    cfg = ScenarioConfig(n_cl=2, n_ray=5)
    d, shadow = 60.0, 0.0
    rng = np.random.default_rng(42)
    L = path_loss(d, False, shadow, cfg)
    ratios = [np.linalg.norm(assemble_channel(draw_clusters(rng, d, cfg), False, shadow, cfg)) ** 2
              / (cfg.n_ap * cfg.n_ms * L) for _ in range(10_000)]
    assert np.mean(ratios) == pytest.approx(1.0, rel=0.05)
