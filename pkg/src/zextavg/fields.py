"""Ready-made test fields of the product form ``g(x) h(omega_bar) psi(a)``.

Every field here is centred, bounded, smooth in ``x`` and supported on at
most two levels, so all regularity and decay requirements hold trivially.
"""

from __future__ import annotations

import numpy as np

from .shift import Observable, cylinder_mean, toy_phi
from .slowfast import DrivenVectorField, product_field, zero_field

# correlation sum of h = phi + phi o T / 2 with psi = 1_{0} - 1_{1}
GK_TOY_KAPPA = 1.5


def _neg_sin(x):
    return -np.sin(x)


def _neg_cos_jac(x):
    return (-np.cos(x))[..., None]


def _toy_h(obs: Observable):
    return lambda base: obs(base.window)


def toy_error_field() -> DrivenVectorField:
    """``F = cos(x) phi(omega_bar) 1_{a=0}``, ``Fbar = -sin x``; ``a(x) = cos(x)^2``."""
    return product_field(np.cos, _toy_h(toy_phi), {0: 1.0}, _neg_sin, dfbar=_neg_cos_jac,
                         g_sup=1.0, g_lip=1.0, h_sup=1.0, h_mean=0.0, fbar_sup=1.0,
                         name="toy_error", a_exact=lambda x: np.cos(x)[..., None] ** 2,
                         meta={"obs": toy_phi})


def constant_a_field() -> DrivenVectorField:
    """``F = phi(omega_bar) 1_{a=1}`` and no drift; ``a = 1`` for every ``x``."""
    return product_field(lambda x: np.ones_like(x), _toy_h(toy_phi), {1: 1.0},
                         lambda x: np.zeros_like(x), dfbar=lambda x: np.zeros(np.shape(x) + (1,)),
                         g_sup=1.0, g_lip=0.0, h_sup=1.0, h_mean=0.0, fbar_sup=0.0,
                         name="constant_a", a_exact=lambda x: np.ones(np.shape(x) + (1,)),
                         meta={"obs": toy_phi})


gk_toy_observable = toy_phi + 0.5 * toy_phi.shifted(1)


def gk_toy_field() -> DrivenVectorField:
    """Field with a nontrivial lag-1 correlation: ``h = phi + phi o T / 2``, ``psi = 1_{0} - 1_{1}``."""
    h = gk_toy_observable
    return product_field(np.cos, _toy_h(h), {0: 1.0, 1: -1.0}, _neg_sin, dfbar=_neg_cos_jac,
                         g_sup=1.0, g_lip=1.0, h_sup=1.5,
                         h_mean=cylinder_mean(lambda w: h(w), h.depth), fbar_sup=1.0,
                         name="gk_toy",
                         a_exact=lambda x: GK_TOY_KAPPA * np.cos(x)[..., None] ** 2,
                         meta={"obs": h})


def billiard_field() -> DrivenVectorField:
    """``F = cos(x) cos(theta) (1_{a=0} - 1_{a=1})`` with ``theta`` the outgoing angle."""
    h = lambda base: np.cos(base.outgoing_angle().astype(float))
    return product_field(np.cos, h, {0: 1.0, 1: -1.0}, _neg_sin, dfbar=_neg_cos_jac,
                         g_sup=1.0, g_lip=1.0, h_sup=1.0, h_mean=np.pi / 4, fbar_sup=1.0,
                         name="billiard")


FIELDS = {
    "toy_error": toy_error_field,
    "constant_a": constant_a_field,
    "gk_toy": gk_toy_field,
    "billiard": billiard_field,
    "zero": lambda: zero_field(1, _neg_sin, _neg_cos_jac, 1.0),
}
