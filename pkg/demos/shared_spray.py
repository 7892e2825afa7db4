"""Two metrics with the same geodesic spray but different covariant coefficients.

With a = (0, 0.5), A = <a, y>, B = 1 + <a, x> and z = (B y - A x)/A,
  F    = A sqrt(|z|^2) / B^2,
  Fbar = A sqrt(1 + |z|^2) / B^2
share every spray coefficient G^i, yet H_i = g_ir G^r differ because the
metric tensors differ.

Run: python3 demos/shared_spray.py
"""

import numpy as np

from finslerh import builtin, geometry, sample_arrays
from finslerh.identities import scaled_residual

entry = builtin("ex33_pair")
X, Y = sample_arrays(entry, 42, 10)
F = geometry(builtin("ex33_pair").metric(), (X, Y))
Fbar = geometry(builtin("ex33_bar").metric(), (X, Y))

print("site   |G - Gbar| scaled   |H - Hbar| scaled")
for a, (dg, dh) in enumerate(zip(scaled_residual(F.G, Fbar.G), scaled_residual(F.H, Fbar.H))):
    print(f"{a:4d}   {dg:17.2e}   {dh:17.3e}")
print("largest component difference in H:", f"{np.abs(F.H - Fbar.H).max():.4f}")
