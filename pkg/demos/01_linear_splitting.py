"""
Invariant splittings of a linear torus map
==========================================

A hyperbolic integer matrix acts on the torus with its eigenspaces as the
invariant bundles. The splitting engine does not know that: it recovers the
stable side from forward data alone and the unstable side from one backward
branch at a time. On a linear map every branch must give the same answer.
"""

import numpy as np

from endolab import preset
from endolab.branch import BranchCode, backward_orbit, preimages
from endolab.splitting import compute_splitting
from endolab.subspaces import subspace_distance

# %%
# The degree-two map [[3, 1], [1, 1]] has two preimages per point, one per
# coset of the integer lattice modulo the matrix image.
cat = preset("linear-t2-deg2")
point = np.array([0.31, 0.58])
print("degree:", cat.degree)
print("preimages of", point, "->\n", preimages(cat, point))

# %%
# A branch code picks one preimage at each step back in time.
code = BranchCode((0, 1, 1, 0) * 10, cat.degree)
orbit = backward_orbit(cat, point, code)
print("depth-3 point on branch", str(code)[:8], "->", orbit.points[3])

# %%
# Compute the splitting along a few different branches and compare it with
# the eigenvectors of the matrix.
eigen = cat.linear.bundles()
rng = np.random.default_rng(1)
for _ in range(4):
    branch = BranchCode(tuple(rng.integers(0, 2, 40)), 2)
    est = compute_splitting(cat, point, branch)
    print(
        str(branch)[:10],
        "stable error %.1e" % subspace_distance(est.frames["s"], eigen["s"]),
        "unstable error %.1e" % subspace_distance(est.frames["u"], eigen["u"]),
    )
