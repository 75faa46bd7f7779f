"""Ellipsoid-ellipsoid barrier: tangent plane, signed distance, gradients.

A virtual unit-sphere state p_s picks a point p_b on the end-effector
ellipsoid surface; the plane tangent there separates the bodies whenever the
obstacle lies strictly on its far side.  The barrier value is the signed
distance from the obstacle ellipsoid to that plane (positive = separated),
evaluated in coordinates relative to the end-effector ellipsoid center:

    n = W p_s,  W = S_ef^-1 (inverse world shape matrix)
    h = ( -||S_ob n|| + (p_ob - p_ep).n - 1 ) / ||n||

Maximizing h over the sphere recovers the true inter-body distance, so the
per-step value is always an under-approximation of the physical gap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

from .errors import UnsafeStart
from .geometry import Ellipsoid

_UNIT_TOL = 1e-9


def _frozen_vec(values, shape):
    arr = np.array(values, dtype=np.float64).reshape(shape)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class EEGeometry:
    """End-effector ellipsoid: semi-axes plus a rigid center offset.

    ``offset`` is expressed in the nominal (body) frame; the world-frame
    ellipsoid center is p_ef + r_ef @ offset.
    """

    semi_axes: np.ndarray
    offset: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "semi_axes", _frozen_vec(self.semi_axes, (3,)))
        object.__setattr__(self, "offset", _frozen_vec(self.offset, (3,)))
        if not np.all(self.semi_axes > 0.0):
            raise ValueError("end-effector semi-axes must be strictly positive")


@dataclass(frozen=True)
class AugmentedState:
    """Physical ellipsoid pose plus the virtual unit-sphere state."""

    p_ep: np.ndarray
    r_ef: np.ndarray
    p_s: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "p_ep", _frozen_vec(self.p_ep, (3,)))
        object.__setattr__(self, "r_ef", _frozen_vec(self.r_ef, (3, 3)))
        object.__setattr__(self, "p_s", _frozen_vec(self.p_s, (3,)))
        if abs(float(np.linalg.norm(self.p_s)) - 1.0) > _UNIT_TOL:
            raise ValueError("p_s must lie on the unit sphere")
        r = self.r_ef
        if not np.allclose(r.T @ r, np.eye(3), atol=_UNIT_TOL, rtol=0.0):
            raise ValueError("r_ef must be orthonormal")
        if abs(float(np.linalg.det(r)) - 1.0) > _UNIT_TOL * 10:
            raise ValueError("r_ef must have determinant +1")


@dataclass(frozen=True)
class Plane:
    """Half-space boundary {q : normal . q = offset}."""

    normal: np.ndarray
    offset: float

    def __post_init__(self):
        object.__setattr__(self, "normal", _frozen_vec(self.normal, (3,)))
        if float(np.linalg.norm(self.normal)) <= 0.0:
            raise ValueError("plane normal must be nonzero")

    def signed_distance(self, x) -> float:
        n = self.normal
        return float((np.asarray(x, dtype=np.float64) @ n - self.offset) / np.linalg.norm(n))


def ee_center(p_ef, r_ef, geom: EEGeometry) -> np.ndarray:
    """World-frame ellipsoid center p_ep = p_ef + r_ef @ offset."""
    return np.asarray(p_ef, dtype=np.float64) + np.asarray(r_ef, dtype=np.float64) @ geom.offset


def _world_shape(r: np.ndarray, semi_axes: np.ndarray) -> np.ndarray:
    return r @ (semi_axes[:, None] * r.T)


def _world_shape_inv(r: np.ndarray, semi_axes: np.ndarray) -> np.ndarray:
    return r @ ((1.0 / semi_axes)[:, None] * r.T)


def surface_point(state: AugmentedState, geom: EEGeometry) -> np.ndarray:
    """Map the virtual state onto the ellipsoid surface: p_b = S_ef p_s + p_ep."""
    s_ef = _world_shape(state.r_ef, geom.semi_axes)
    return s_ef @ state.p_s + state.p_ep


def tangent_plane(state: AugmentedState, geom: EEGeometry) -> Plane:
    """Plane tangent to the end-effector ellipsoid at surface_point(state).

    Normal n = S_ef^-1 p_s points outward; the whole ellipsoid satisfies
    n . q <= offset.
    """
    w = _world_shape_inv(state.r_ef, geom.semi_axes)
    n = w @ state.p_s
    p_b = surface_point(state, geom)
    return Plane(n, float(n @ p_b))


def _barrier_terms(
    w: np.ndarray,
    s_ob: np.ndarray,
    p_ob: np.ndarray,
    p_ep: np.ndarray,
    p_s: np.ndarray,
):
    """Shared evaluation core: returns (h, n, norm_n, support, reach)."""
    n = w @ p_s
    norm_n = math.sqrt(float(n @ n))
    sn = s_ob @ n
    support = math.sqrt(float(sn @ sn))  # obstacle extent along n
    reach = float((p_ob - p_ep) @ n)
    h = (-support + reach - 1.0) / norm_n
    return h, n, norm_n, support, reach


def barrier_value(state: AugmentedState, geom: EEGeometry, obstacle: Ellipsoid) -> float:
    """Signed distance from the obstacle ellipsoid to the tangent plane."""
    w = _world_shape_inv(state.r_ef, geom.semi_axes)
    s_ob = _world_shape(obstacle.rotation, obstacle.semi_axes)
    h, *_ = _barrier_terms(w, s_ob, obstacle.center, state.p_ep, state.p_s)
    return h


def barrier_gradient(
    state: AugmentedState, geom: EEGeometry, obstacle: Ellipsoid
) -> Tuple[np.ndarray, np.ndarray]:
    """(dh/dp_ep, dh/dp_s), the ambient gradients of the barrier value.

    dh/dp_ep is the negated unit plane normal; dh/dp_s follows from the
    quotient rule applied to the three p_s-dependent terms.
    """
    w = _world_shape_inv(state.r_ef, geom.semi_axes)
    s_ob = _world_shape(obstacle.rotation, obstacle.semi_axes)
    return _gradients(w, s_ob, obstacle.center, state.p_ep, state.p_s)[1:]


def _gradients(w, s_ob, p_ob, p_ep, p_s):
    """Returns (h, grad_p, grad_s) in one pass."""
    h, n, norm_n, support, reach = _barrier_terms(w, s_ob, p_ob, p_ep, p_s)
    grad_p = -n / norm_n
    # d(support)/dp_s = W S_ob (S_ob n) / support ; support > 0 since S_ob is SPD
    d_support = w @ (s_ob @ (s_ob @ n)) / support
    d_reach = w @ (p_ob - p_ep)
    # d(norm_n)/dp_s = W n / norm_n
    grad_s = (-d_support + d_reach) / norm_n - (h / norm_n**2) * (w @ n)
    return h, grad_p, grad_s


def tangential(v: np.ndarray, p_s: np.ndarray) -> np.ndarray:
    """Project v onto the tangent space of the unit sphere at p_s."""
    return v - float(v @ p_s) * p_s


def max_barrier_over_sphere(
    p_ep,
    r_ef,
    geom: EEGeometry,
    obstacle: Ellipsoid,
    *,
    grad_tol: float = 1e-8,
    max_iter: int = 500,
) -> Tuple[np.ndarray, float]:
    """Maximize the barrier value over the virtual sphere state.

    Projected gradient ascent with backtracking, restarted from the six axis
    directions plus the center-difference direction; returns the best
    (p_s_star, h_star).  The maximum equals the inter-body distance when the
    bodies are separated.
    """
    p_ep = np.asarray(p_ep, dtype=np.float64).reshape(3)
    r_ef = np.asarray(r_ef, dtype=np.float64).reshape(3, 3)
    axes = np.asarray(geom.semi_axes, dtype=np.float64)
    w = _world_shape_inv(r_ef, axes)
    s_ob = _world_shape(obstacle.rotation, obstacle.semi_axes)
    p_ob = obstacle.center

    starts = [np.array(e, dtype=np.float64) for e in
              [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)]]
    diff = p_ob - p_ep
    dn = float(np.linalg.norm(diff))
    if dn > 1e-12:
        starts.append(diff / dn)

    def value(p):
        return _barrier_terms(w, s_ob, p_ob, p_ep, p)[0]

    best_p, best_h = None, -math.inf
    for p in starts:
        h, _, gs = _gradients(w, s_ob, p_ob, p_ep, p)
        step = 1.0
        for _ in range(max_iter):
            gt = gs - float(gs @ p) * p
            gn = math.sqrt(float(gt @ gt))
            if gn < grad_tol:
                break
            improved = False
            t = step
            while t > 1e-14:
                cand = p + t * gt
                cand /= math.sqrt(float(cand @ cand))
                h_cand = value(cand)
                if h_cand > h + 1e-4 * t * gn * gn:
                    improved = True
                    break
                t *= 0.5
            if not improved:
                break
            p = cand
            step = min(2.0 * t, 1.0)
            h, _, gs = _gradients(w, s_ob, p_ob, p_ep, p)
        if h > best_h:
            best_h, best_p = h, p
    return best_p, best_h


def init_virtual_state(p_ef, r_ef, geom: EEGeometry, obstacle: Ellipsoid) -> np.ndarray:
    """Optimal initial virtual state; raises UnsafeStart if no h > 0 exists."""
    p_ep = ee_center(p_ef, r_ef, geom)
    p_star, h_star = max_barrier_over_sphere(p_ep, r_ef, geom, obstacle)
    if h_star <= 0.0:
        raise UnsafeStart(
            f"bodies touch or overlap at start (best achievable h = {h_star:.3g})"
        )
    return p_star
