"""Model-free control toolkit for a three-tendon continuum robot.

Generates pose/tendon datasets from a perturbed synthetic plant, fits eight
regression families, distills them into explicit polynomial transfer
functions and validates the resulting controllers in closed loop.
"""

__version__ = "0.1.0"
