"""
Growth rates, angle decay and an adapted metric
===============================================

Fit the four growth rates of the perturbed map, watch two center-stable
directions merge at the rate their ratio predicts, and build a metric in
which the rates hold after a single step.
"""

import math

import numpy as np

from endolab.presets import theorem_d_design
from endolab.rates import adapted_metric, angle_decay_series, estimate_constants
from endolab.splitting import split_orbits

special, report = theorem_d_design()
rng = np.random.default_rng(7)

# %%
# Rates are least-squares slopes of log growth along sampled orbits; the
# constant absorbs the worst transient.
consts = estimate_constants(special, rng.random((64, 3)))
print("rates (s, c lower, c upper, u) and constant:", np.round(consts.as_tuple(), 4))
print("linear moduli:", np.round(special.linear.moduli, 4))

# %%
# Two center directions, from two designed branches, pushed forward.
codes = np.array([b.word for b in report.branches[::2]])
centers = split_orbits(special, report.point, codes).frame("c", 0)
series = angle_decay_series(special, report.point, centers[0], centers[1])
for n in range(0, 41, 8):
    print(f"n = {n:2d}  angle = {series.angle[n]:.3e}")
print("fitted slope %.4f, predicted %.4f" % (series.slope, math.log(consts.nu / consts.gamma1)))

# %%
# The adapted metric sums the first N pullback Gram matrices.
metric = adapted_metric(special, report.point, consts, sample_points=rng.random((64, 3)))
print("N =", metric.N, " one-step margins:", {k: round(v, 4) for k, v in metric.margins.items()})
