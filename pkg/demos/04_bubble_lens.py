"""
Looking inside the concentration
================================

At small lambda the conformal volume concentrates in a ball of radius r
holding mass 1/8.  Zooming in by r reveals the standard spherical bubble
log(2s / (s^2 + |z - z0|^2)) + (1/2) log(1 / (4 pi)).
"""
import numpy as np

from qcrv.analytic import ProfileSpec, make_profile, standard_bubble
from qcrv.bubble import fit_standard_bubble, rescale, select_radius
from qcrv.continuation import LambdaSchedule, sweep
from qcrv.spectral import TorusGrid

# a fine grid keeps the bubble resolved down to lambda = 1e-3
grid = TorusGrid(2, 1024)
profile = make_profile(ProfileSpec(n=2, l=2), grid)
trace = sweep(profile.values, LambdaSchedule(0.1, 1e-3, 5).scaled(profile.lambda_max), grid)

for rec, u in zip(trace.records, trace.fields):
    sel = select_radius(u, grid)
    prof = rescale(u, grid, sel, R=min(10.0, 0.25 / sel.radius), m=128)
    fit = fit_standard_bubble(prof, R_fit=5.0)
    print(f"lambda {rec.lam:.2e}: r = {sel.radius:.4f} ({sel.radius / grid.h:.1f} cells), "
          f"s = {fit.s:.4f}, z0 = {np.round(fit.z0, 4)}, Linf residual on |z|<=5 = {fit.linf_residual:.4f}")

# a slice through the rescaled profile next to the fitted bubble
m = prof.m
line = prof.values[:, m // 2]
z = prof.z[:, m // 2]
model = standard_bubble(fit.s, fit.z0, z)
for j in range(m // 2, m, 8):
    print(f"z1 = {z[j, 0]:6.3f}   u_hat = {line[j]:9.5f}   bubble = {model[j]:9.5f}")
