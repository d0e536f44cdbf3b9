"""
The linear part of one sweep
============================

With zero data a sweep is a linear map on boundary fluxes. Its matrix is
self-adjoint in the energy ("star") inner product and its eigenvalues lie in
``(0, 1]``. Refining the mesh pushes more of them toward 1, which is why the
iteration slows down for rough errors.
"""

# %%
import numpy as np

from cauchy_kmf.experiments import square_problem
from cauchy_kmf.kmf import assemble_Tl
from cauchy_kmf.spectral import rect_step_eigenvalue

for nx, ny in ((8, 6), (16, 12), (32, 24)):
    audit = assemble_Tl(square_problem(nx, ny))
    gaps = 1 - audit.eigenvalues
    print(
        f"{nx:3d}x{ny:<3d} smallest={audit.min_eigenvalue:.5f} "
        f"largest-1={audit.max_eigenvalue - 1:+.1e} modes with 1-mu<1e-12: {np.sum(gaps < 1e-12)} "
        f"symmetry defect={audit.relative_symmetry_defect:.1e}"
    )

# %%
# The lowest eigenvalues approach ``tanh(j pi 3/4)^2`` from below.
print("continuum:", np.round(rect_step_eigenvalue(np.arange(1, 4), 0.75), 5))
print("fem 32x24:", np.round(audit.eigenvalues[:3], 5))
