"""Draw one network and look at its mmWave channels.

Run: python3 demos/01_channel.py
"""
import numpy as np

from mmwave_cellfree import ScenarioConfig, drop_realization, los_probability, synth_all_channels

cfg = ScenarioConfig(num_aps=20, num_ms=4, n_ap=8, n_ms=4)
geom = drop_realization(cfg, drop=0)
print(f"{cfg.num_aps} APs and {cfg.num_ms} users on a {cfg.area_side_m:g} m square")
print(f"AP-user distances: {geom.distances.min():.1f} to {geom.distances.max():.1f} m")
print(f"LOS links: {geom.los.sum()} of {geom.los.size}")

# LOS probability falls off quickly with distance
for d in (5, 18, 50, 100, 200):
    print(f"  P(LOS) at {d:>3} m = {los_probability(d):.3f}")

H = synth_all_channels(geom, cfg)  # (K, M, N_AP, N_MS)
power_db = 10 * np.log10(np.sum(np.abs(H) ** 2, axis=(-2, -1)))
k = 0
order = np.argsort(power_db[k])[::-1]
print(f"\nuser {k}: strongest APs {order[:3].tolist()} at "
      + ", ".join(f"{p:.1f} dB" for p in power_db[k, order[:3]]))

# a handful of clusters means a low-rank channel: few singular values matter
s = np.linalg.svd(H[k, order[0]], compute_uv=False)
print("normalized singular values:", np.round(s / s[0], 3))
