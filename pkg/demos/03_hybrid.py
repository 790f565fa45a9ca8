"""Factor a fully digital precoder into analog phase shifters and a small digital stage.

Run: python3 demos/03_hybrid.py
"""
import numpy as np

from mmwave_cellfree import hybrid_factorize

rng = np.random.default_rng(3)
n_ap, n_streams = 16, 3
F = rng.standard_normal((n_ap, n_streams)) + 1j * rng.standard_normal((n_ap, n_streams))
F /= np.linalg.norm(F)

for n_rf in (3, 4, 8, 16):
    W_rf, W_bb, hist = hybrid_factorize(F, n_rf, sweeps=30, rng=np.random.default_rng(0))
    assert np.allclose(np.abs(W_rf), 1 / np.sqrt(n_ap))  # phase shifters only
    print(f"n_rf={n_rf:>2}: residual {hist[0]:.3e} -> {hist[-1]:.3e} after {len(hist)} sweeps")

# the residual never goes up from one sweep to the next
print("monotone:", all(b <= a + 1e-12 for a, b in zip(hist, hist[1:])))
