"""Numerical laboratory for partially hyperbolic endomorphisms of T^2 and T^3."""

__version__ = "0.1.0"

from .maps import Endomorphism, LinearPart, MapError, RotationBump, TrigTerm  # noqa: E402
from .torus import TorusPoint, LiftPoint, project, torus_distance, orbit_distance  # noqa: E402
from .branch import BranchCode, BackwardOrbit, preimages, backward_orbit, enumerate_codes  # noqa: E402
from .subspaces import SubspaceFrame, principal_angles  # noqa: E402
from .splitting import compute_splitting, stable_and_cs_frames, unstable_and_cu_frames, center_frame  # noqa: E402
from .presets import preset  # noqa: E402
