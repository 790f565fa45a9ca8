"""Uplink training, user-centric association and zero-forcing precoding.

Run: python3 demos/02_training_and_zf.py
"""
import numpy as np

from mmwave_cellfree import (ScenarioConfig, associate, derive_noise_power, drop_realization,
                             effective_channels, generate_pilots, ms_combiner, synth_all_channels,
                             uplink_train, zf_precoders)

cfg = ScenarioConfig(num_aps=20, num_ms=4, n_ap=8, n_ms=4, uc_cluster_size=2)
H = synth_all_channels(drop_realization(cfg, 0), cfg)
L = ms_combiner(cfg.n_ms, cfg.mux_order)
noise = derive_noise_power(cfg)
print(f"noise power over {cfg.bandwidth_hz / 1e6:g} MHz: {10 * np.log10(noise / 1e-3):.1f} dBm")

rng = np.random.default_rng(0)
pilots = generate_pilots(cfg.num_ms, cfg.mux_order, cfg.tau_p, rng)
est = uplink_train(H, L, pilots, cfg.p_ul_w, noise, rng)
true = effective_channels(H, L)
nmse = np.sum(np.abs(est.S - true.S) ** 2) / np.sum(np.abs(true.S) ** 2)
# unit-norm pilots carry only p_ul = 1 mW of total energy, so at a -85 dBm
# noise floor even the strongest links are estimated near 0 dB SNR
print(f"channel estimate NMSE: {10 * np.log10(nmse):.1f} dB")

# each AP keeps its two strongest users
assoc = associate(est.S, "uc", cfg.uc_cluster_size)
for k in range(cfg.num_ms):
    print(f"  user {k} served by APs {list(assoc.servers(k))}")

pre = zf_precoders(est, assoc)
m = 0
Q = pre.Q[:, m]  # precoders of AP 0 for every user, zero if not served
print(f"\nAP {m} serves {list(assoc.served_by(m))}; "
      f"precoder norms {np.round(np.linalg.norm(Q, axis=(1, 2)), 12).tolist()}")

# the network-wide ZF solution nulls the other users; normalizing each AP share
# separately leaves some residual leakage (perfect CSI)
pre_true = zf_precoders(true, associate(true.S, "cf", 0))
leak = np.abs(np.einsum("kmap,lmaq->klpq", true.S.conj(), pre_true.Q))[..., 0, 0]
print("CF zero-forcing |effective gain| matrix (rows: users, cols: streams):")
print(np.array2string(leak / leak.max(), precision=4, suppress_small=True))
