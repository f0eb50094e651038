"""Optimizable generalized barycentric coordinates for cage-based deformation.

Submodules are imported explicitly (``from baryfield import geometry``);
nothing heavy is pulled in at package import time so the CLI can configure
threading before numpy loads.
"""

__version__ = "0.1.0"
