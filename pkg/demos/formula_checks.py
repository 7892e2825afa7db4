"""Stated closed forms checked against the pipeline, and their corrected versions.

Three stated relations do not survive a numeric check:
  1. For the H-Berwald family F^2 = (a1 y1^4 + ...)/(b1 y1^2 + ...) + f1 y1^2 + f2 y2^2,
     the stated H_1 = 2 y1 y3 f1' (and its companions) is four times H_i.
  2. For projectively flat metrics y^k H^i_jk equals P_j y^i + P delta^i_j,
     not 2 P delta^i_j (the full contraction y^j y^k H^i_jk = 2 P y^i does hold).
  3. y^j H_ijkh vanishes identically, so it equals y^j d_j C_ikh only where the
     Cartan tensor is transported trivially; the H-Landsberg tensor is
     -2 y^i d_i C_jkh.

Run: python3 demos/formula_checks.py
"""

import numpy as np

from finslerh import builtin, geometry, sample_arrays
from finslerh.identities import core_identities, investigation_identities, projective_identities, scaled_residual


def geo_of(name, sites=25):
    entry = builtin(name)
    return geometry(entry.metric(), sample_arrays(entry, 42, sites))


geo = geo_of("ex52", 50)
X, Y = geo.x, geo.y
f1p, f2p = 2 * X[:, 2], 3 * X[:, 2] ** 2
stated = np.stack([2 * Y[:, 0] * Y[:, 2] * f1p, 2 * Y[:, 1] * Y[:, 2] * f2p, -Y[:, 0] ** 2 * f1p - Y[:, 1] ** 2 * f2p], 1)
print("1. H-Berwald family")
print(f"   stated H_i vs pipeline:       {scaled_residual(geo.H, stated).max():.3e}")
print(f"   stated H_i / 4 vs pipeline:   {scaled_residual(geo.H, stated / 4).max():.3e}")

print("2. projective contraction (ex51, najafi)")
for name in ("ex51", "najafi"):
    r = {i.name: i.worst for i in projective_identities(geo_of(name))}
    print(f"   {name:8s} stated {r['projective_H_up_y']:.3e}   rederived {r['projective_H_up_y_rederived']:.3e}"
          f"   full contraction {r['projective_H_up_yy']:.3e}")

print("3. contractions of H_ijkh (generic spherical metric)")
g = geo_of("spherical_generic")
core = {i.name: i.worst for i in core_identities(g)}
inv = {i.name: i.worst for i in investigation_identities(g)}
print(f"   stated y^j H_ijkh = y^j d_j C_ikh:   {core['H_ijkh_c_first']:.3e}")
print(f"   y^j H_ijkh = 0:                      {inv['H_ijkh_yj_vanishes']:.3e}")
print(f"   stated L = -y^i d_i C_jkh:           {core['H_ijkh_c_second']:.3e}")
print(f"   L = -2 y^i d_i C_jkh:                {inv['landsberg_transport_rederived']:.3e}")
