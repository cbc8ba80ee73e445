"""Simulate the three process families and look at their sample dependence.

AR(3) is parameterised through partial autocorrelations, so any triple in
(-1, 1)^3 gives a causal process. GARCH(1,1) returns are nearly uncorrelated
but their squares are not. SETAR switches coefficient on the sign of the
previous value, which the quantile autocorrelations pick up.
"""
import numpy as np

from amortclust import (ARSpec, GARCHSpec, PACFSpec, SETARSpec, acf, durbin_levinson, qaf,
                        simulate_ar, simulate_garch, simulate_setar)

rng = np.random.default_rng(0)
T = 5000

phi = durbin_levinson(PACFSpec((0.6, -0.3, 0.2)))
print("AR coefficients from PACF (0.6, -0.3, 0.2):", np.round(phi, 4))
x = simulate_ar(ARSpec(tuple(phi), 1.0), T, rng)
print("  ACF lags 1-3:", np.round(acf(x, [1, 2, 3]), 3))

g = simulate_garch(GARCHSpec(1e-5, 0.15, 0.8, nu=6), T, rng)
print("GARCH returns")
print("  ACF of r   lags 1-3:", np.round(acf(g, [1, 2, 3]), 3))
print("  ACF of r^2 lags 1-3:", np.round(acf(g**2, [1, 2, 3]), 3))

s = simulate_setar(SETARSpec(0.8, -0.5, 0.0), T, rng)
levels = (0.1, 0.5, 0.9)
print("SETAR(0.8 | -0.5) quantile autocorrelations at lag 1")
for (t1, t2), v in zip([(a, b) for a in levels for b in levels], qaf(s, levels, [1])):
    print(f"  tau={t1}, tau'={t2}: {v:+.3f}")
