"""
Why the iteration is slow: the diagonal model
=============================================

On the square and the annulus one sweep multiplies each Fourier mode by a
known factor. Mode ``j`` on the square shrinks by ``tanh(2 j pi)^2``: the
first mode is already within ``1e-5`` of 1 and the rest round to 1.
"""

# %%
import numpy as np

from cauchy_kmf.spectral import SpectralModel, first_mode_power_check, hadamard_table

for m in (SpectralModel.square(5), SpectralModel.annulus(0.5, 5), SpectralModel.annulus(0.1, 5)):
    print(f"{m.kind:8s} r0={m.r0}  log10(1-lambda_j) = {np.round(m.log_gaps / np.log(10), 2)}")

# %%
# After 100000 sweeps the first square mode has only shrunk to about a quarter.
print(first_mode_power_check())

# %%
# Hadamard's example: data shrink like ``1/k`` while the solution grows.
for k, data, _, u, _, ratio in hadamard_table(range(1, 8)):
    print(f"k={k}  sup data={data:.3e}  sup u={u:.3e}  ratio={ratio:.3e}")
