"""
Stopping the iteration from amplifying noise
============================================

Cutting off modes whose factor is above ``1 - 1/n`` (or damping all modes by
``mu - mu^n``) trades approximation error for noise stability. A scan over
``n`` picks the balance.
"""

# %%
import numpy as np

from cauchy_kmf.regularization import RegularizationConfig, optimal_n, tradeoff_rows
from cauchy_kmf.spectral import SpectralModel

model = SpectralModel.annulus(0.5, 64)
rng = np.random.default_rng(1)
w = rng.standard_normal(64)
w /= np.linalg.norm(w)
phi_bar = w * model.mu_gaps
noise = 1e-3 * rng.standard_normal(64) / 8

# %%
for strategy in ("cutoff", "power"):
    cfg = RegularizationConfig(strategy, 2, M=1.0, epsilon=1e-3)
    rows = tradeoff_rows(model, cfg, phi_bar, noise, range(2, 201))
    n_opt, _ = optimal_n(model, cfg, float(np.linalg.norm(phi_bar)), 200)
    print(f"{strategy}: suggested n={n_opt}")
    for n, approx, nz, total, err, _ in rows[:: 40]:
        print(f"  n={n:3d} approx={approx:.2e} noise={nz:.2e} bound={total:.2e} true={err:.2e}")
