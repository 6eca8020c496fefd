"""Geometry of the round unit sphere S^{L-1} embedded in R^L.

Closed forms: nearest-point projection y/|y|, tangential projector
P(y)v = v - <v,y>y, second fundamental form A(y)(X,Y) = -<X,Y> y, and the
directional derivative dP(y)[z]v = -<v,z>y - <v,y>z used by the flow
module. All functions accept a single vector or an array of vectors with
the component axis last.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ON_SPHERE_TOL = 1e-8
CONE_TOL = 1e-8


class SphereDepartureError(RuntimeError):
    """The field left the tubular neighborhood where projection is valid."""


@dataclass(frozen=True)
class SphereTarget:
    """Unit sphere S^{L-1} in R^L; all shape-operator norms are 1."""

    L: int

    def __post_init__(self):
        if self.L < 2:
            raise ValueError(f"ambient dimension must be >= 2, got {self.L}")


def _dot(a, b):
    return np.sum(a * b, axis=-1)


def project_point(y):
    """Nearest-point projection y -> y/|y|."""
    y = np.asarray(y, dtype=float)
    norm = np.sqrt(_dot(y, y))
    if np.min(norm) < CONE_TOL:
        raise SphereDepartureError(
            f"point with |y| = {np.min(norm):.3e} is too close to the origin"
        )
    return y / norm[..., None]


def _check_on_sphere(y, tol=ON_SPHERE_TOL):
    norm = np.sqrt(_dot(y, y))
    err = np.max(np.abs(norm - 1.0))
    if err > tol:
        raise ValueError(f"point is off the sphere by {err:.3e} (tol {tol:.0e})")


def tangential(y, v):
    """Orthogonal projection of v onto the tangent space at y."""
    y = np.asarray(y, dtype=float)
    v = np.asarray(v, dtype=float)
    _check_on_sphere(y)
    return v - _dot(v, y)[..., None] * y


def second_fundamental_form(y, X, Y):
    """A(y)(X,Y) = -<X,Y> y for tangent vectors X, Y at y."""
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    _check_on_sphere(y)
    for V, name in ((X, "X"), (Y, "Y")):
        vn = np.sqrt(np.max(_dot(V, V)))
        defect = np.max(np.abs(_dot(V, y)))
        if defect > ON_SPHERE_TOL * max(vn, 1.0):
            raise ValueError(f"{name} is not tangent (defect {defect:.3e})")
    return -_dot(X, Y)[..., None] * y


def d_tangential(y, z, v):
    """Directional derivative of the projector: dP(y)[z]v = -<v,z>y - <v,y>z."""
    return -_dot(v, z)[..., None] * y - _dot(v, y)[..., None] * z


def tangency_defect(f, w) -> float:
    """Max over the grid of |<w(x), f(x)>|; zero for tangent fields."""
    return float(np.max(np.abs(_dot(np.asarray(w, float), np.asarray(f, float)))))
