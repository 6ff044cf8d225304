"""Monte Carlo lab for Brownian motion on negatively curved model spaces.

Brownian motion here is generated by the Laplace-Beltrami operator itself
(no factor 1/2), so radial diffusion has coefficient sqrt(2).
"""

__version__ = "0.1.0"

from .geometry import BoundaryPoint, HPoint, HTangent  # noqa: E402,F401
from .models import ConstantCurvature, RotSym  # noqa: E402,F401
from .rng import RngPolicy  # noqa: E402,F401
