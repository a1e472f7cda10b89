"""Averaging for slow-fast ODEs driven by Z-extensions of chaotic maps.

Modules:

* ``zext``       skew products ``T(omega, m) = (Tbar omega, m + phi(omega))``
* ``shift``      the doubling-map toy base system with exact cylinder oracles
* ``billiard``   the periodic Sinai billiard (Lorentz gas) base system
* ``slowfast``   perturbed and averaged ODEs, error process, Birkhoff sums
* ``greenkubo``  the variance matrix ``a(x)`` and the step variance ``Sigma``
* ``limitproc``  Brownian local time, time-changed Brownian motion and ``y_t``
* ``stats``      moments, KS distances, bootstrap intervals, scaling fits
* ``acceptance`` the eleven numerical acceptance checks
* ``cli``        the ``zextavg`` command
"""

from .billiard import BilliardConfig, BilliardSystem, default_config
from .fields import FIELDS
from .shift import BitStreamPoint, ShiftToy, toy_phi
from .slowfast import DrivenVectorField, TrajectoryGrid, product_field
from .zext import ZExtensionPoint, lift, step_z

__version__ = "0.1.0"

__all__ = ["BilliardConfig", "BilliardSystem", "default_config", "FIELDS", "BitStreamPoint",
           "ShiftToy", "toy_phi", "DrivenVectorField", "TrajectoryGrid", "product_field",
           "ZExtensionPoint", "lift", "step_z"]
