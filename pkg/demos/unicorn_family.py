"""A spherically symmetric family that is H-Landsberg but not H-Berwald.

F = |y| phi(|x|, <x,y>/|y|) with
phi = (sqrt(k^2 - c^2 r^2 + c^2 s^2) + c s) / (k^2 - c^2 r^2)
is both projectively and dually flat.  Dual flatness gives an S-scalar, which
forces the H-Landsberg tensor to vanish, while H_i stays non-quadratic in y.

Run: python3 demos/unicorn_family.py
"""

import numpy as np

from finslerh import builtin, classify_metric, geometry, sample_arrays
from finslerh.identities import scaled_residual
from finslerh.spherical import najafi_covariant, najafi_s_scalar

for name in ("najafi", "najafi_3d"):
    entry = builtin(name)
    k, c = entry.params["k"], entry.params["c"]
    report = classify_metric(entry)
    print(f"{name}: k={k:g}, c={c:g}, n={entry.definition.dimension}")
    for pred in ("dually_flat", "projectively_flat", "s_scalar_exists", "h_landsberg", "h_berwald"):
        p = report.predicate(pred)
        print(f"  {pred:18s} {p.verdict:6s} max scaled residual {p.max_residual:.2e}")

    # the closed forms against the general pipeline
    X, Y = sample_arrays(entry, 42, 25)
    geo = geometry(entry.metric(), (X, Y))
    s_res = scaled_residual(geo.H_scalar_candidate, najafi_s_scalar(k, c, X, Y)).max()
    h_res = scaled_residual(geo.H, najafi_covariant(k, c, X, Y)).max()
    print(f"  S-scalar closed form vs pipeline: {s_res:.2e}; H_j closed form: {h_res:.2e}")
    print(f"  largest |H_ijkh| over sites: {np.abs(geo.H4).max():.3f} (nonzero, so H_i is not quadratic)")

x, y = np.zeros((1, 2)), np.array([[1.0, 0.0]])
print("S-scalar at x = 0, y = (1, 0):", najafi_s_scalar(1.0, 0.3, x, y)[0])
