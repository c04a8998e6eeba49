"""Classical kicked coupled tops: Lyapunov exponents and a coarse phase portrait.

Run with ``python demos/classical_chaos.py``; takes about a minute.
"""
import numpy as np

from kct.classical import (
    MapParameters,
    benettin_lyapunov,
    finite_time_lyapunov,
    fit_log_law,
    lyapunov_vs_fz,
    sample_fixed_fz,
    spins_from_labels,
)

beta = np.pi / 2

# Lyapunov exponent on the fz = 0 manifold as the coupling grows
alphas = [2.0, 3.0, 4.0, 6.0, 8.0]
ic = sample_fixed_fz(0.0, 200, seed=0)
lams = [benettin_lyapunov(ic, MapParameters(a, beta), 2000).lam for a in alphas]
for a, lam in zip(alphas, lams):
    print(f"alpha = {a:4.1f}   lambda = {lam:.3f}")
a0, b0, r2 = fit_log_law(alphas, lams)
print(f"lambda ~ {a0:.3f} + {b0:.3f} log(alpha)   (R^2 = {r2:.3f})\n")

# at fixed coupling the exponent drops as |fz| grows (smaller manifolds)
fzs = [0.0, 0.5, 1.0, 1.5]
for fz, est in zip(fzs, lyapunov_vs_fz(MapParameters(6.0, beta), fzs, 200, n_steps=2000)):
    print(f"fz = {fz:3.1f}   lambda = {est.lam:.3f} +- {est.stderr:.3f}")

# Phase portrait at alpha = 3/2: '#' marks chaotic labels, '.' regular ones.
# dphi runs over [0, 4 pi), the period of the coherent-state labels.
nt, nphi = 16, 48
th = -np.pi + (np.arange(nt) + 0.5) * 2 * np.pi / nt
ph = (np.arange(nphi) + 0.5) * 4 * np.pi / nphi
T, P = np.meshgrid(th, ph, indexing="ij")
ftle = finite_time_lyapunov(spins_from_labels(T.ravel(), P.ravel()), MapParameters(1.5, beta), 300)
print("\nalpha = 1.5, rows: dtheta from -pi to pi, columns: dphi from 0 to 4 pi")
for row in ftle.reshape(nt, nphi):
    print("".join("#" if v > 0.05 else "." for v in row))
