"""
Where partial hyperbolicity breaks
==================================

Sweep the rotation angle of the construction and run the sampled cone test
for each map. Small angles keep invariant cone families; large ones break
the center-unstable cone first.
"""

from endolab.cones import verify_cone_conditions
from endolab.construction import build_theorem_d_map
from endolab.presets import COMPANION

# %%
for angle in (0.0, 0.1, 0.2, 0.3, 0.4, 0.6, 1.2):
    candidate, _ = build_theorem_d_map(COMPANION, angle, verify=False)
    cert = verify_cone_conditions(candidate, grid_resolution=16)
    worst = min(cert.margins, key=cert.margins.get)
    print(f"angle {angle:.1f}: {'pass' if cert.passed else 'fail'}  weakest {worst} = {cert.margins[worst]:+.4f}")
