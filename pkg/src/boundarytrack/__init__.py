"""Boundary-aware point tracking on stable level lines.

Corners are detected as high-curvature points of stable iso-intensity
boundaries, and tracked frame to frame in two phases: hierarchical chamfer
matching shortlists candidate boundaries, then one-sided (part) SSD over the
corner's split support region verifies the match.  An inverse-compositional
KLT tracker is included as the comparison baseline, together with a
synthetic-sequence generator and a stratified evaluation protocol.
"""

__version__ = "0.1.0"

from . import chamfer, corners, config, evalproto, imgcore, kltbase, mser, partssd, tracker
from . import cli

__all__ = [
    "__version__",
    "chamfer",
    "cli",
    "corners",
    "config",
    "evalproto",
    "imgcore",
    "kltbase",
    "mser",
    "partssd",
    "tracker",
]
