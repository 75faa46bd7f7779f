"""Per-step safety filtering of nominal actions.

The filter solves, in closed form, the minimal-deviation problem

    min  ||u_v - u_vla||^2 + w ||u_ps - u_ps_ref||^2
    s.t. 0.2 grad_p . u_v + grad_s . u_ps >= -gamma h     (one row per obstacle)
         p_s . u_ps = 0                                   (tangential virtual input)

where 0.2 is the plant gain of the translational kinematics and
u_ps_ref = k * (tangential ascent direction of h).  When the reference pair
already satisfies every constraint it is returned untouched, so far from
obstacles the nominal action passes through bit-identically.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Tuple, Union

import numpy as np

from .barrier import (
    AugmentedState,
    EEGeometry,
    _gradients,
    _world_shape,
    _world_shape_inv,
    ee_center,
    init_virtual_state,
    max_barrier_over_sphere,
    tangential,
)
from .errors import DegenerateConstraint, UnsafeStart
from .geometry import Ellipsoid

__all__ = [
    "Action",
    "FilterParams",
    "FilterState",
    "PLANT_GAIN",
    "alpha",
    "filter_step",
    "init_filter_state",
    "init_virtual_state",
    "nominal_virtual_control",
    "solve_safety_qp",
]

PLANT_GAIN = 0.2  # dp/dt = 0.2 u

_UNIT_TOL = 1e-9


def _frozen(values, shape=None):
    arr = np.array(values, dtype=np.float64)
    if shape is not None:
        arr = arr.reshape(shape)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Action:
    """Velocity-level command: translational v, rotational omega, gripper g."""

    v: np.ndarray
    omega: np.ndarray = field(default_factory=lambda: np.zeros(3))
    gripper: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "v", _frozen(self.v, (3,)))
        object.__setattr__(self, "omega", _frozen(self.omega, (3,)))
        object.__setattr__(self, "gripper", float(self.gripper))
        if not (np.all(np.isfinite(self.v)) and np.all(np.isfinite(self.omega))
                and np.isfinite(self.gripper)):
            raise ValueError("action components must be finite")

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.v, self.omega, [self.gripper]])

    @staticmethod
    def from_array(a) -> "Action":
        a = np.asarray(a, dtype=np.float64).reshape(7)
        return Action(a[:3], a[3:6], float(a[6]))


@dataclass(frozen=True)
class FilterParams:
    """Safety-layer gains.

    alpha_gain       gamma in alpha(h) = gamma * h
    virtual_gain     k scaling the virtual-state reference ascent
    virtual_weight   QP weight on the virtual-input deviation
    activation_distance  skip constraint enforcement while h exceeds this
    """

    alpha_gain: float = 10.0
    virtual_gain: float = 10.0
    virtual_weight: float = 1.0
    activation_distance: float = float("inf")

    def __post_init__(self):
        if self.alpha_gain <= 0 or self.virtual_gain <= 0 or self.virtual_weight <= 0:
            raise ValueError("filter gains must be strictly positive")


@dataclass(frozen=True)
class FilterState:
    """Virtual sphere state plus bookkeeping from the last step.

    p_s is (3,) for a single obstacle or (m, 3) with one unit row per
    obstacle when several constraints are stacked.
    """

    p_s: np.ndarray
    last_h: float = float("inf")
    intervened: bool = False

    def __post_init__(self):
        arr = np.array(self.p_s, dtype=np.float64)
        if arr.ndim == 1 and arr.size == 3:
            arr = arr.reshape(3)
        else:
            arr = arr.reshape(-1, 3)
        arr.setflags(write=False)
        object.__setattr__(self, "p_s", arr)
        norms = np.linalg.norm(np.atleast_2d(arr), axis=1)
        if arr.size and np.any(np.abs(norms - 1.0) > _UNIT_TOL):
            raise ValueError("every virtual state must lie on the unit sphere")

    def sphere_states(self) -> np.ndarray:
        return np.atleast_2d(self.p_s)


def alpha(h: float, params: FilterParams) -> float:
    """Linear extended class-K function alpha(h) = gamma * h."""
    return params.alpha_gain * h


def init_filter_state(
    p_ef, r_ef, geom: EEGeometry, obstacles: Union[Ellipsoid, Sequence[Ellipsoid]]
) -> FilterState:
    """Initialize one virtual state per obstacle (empty list allowed)."""
    obs = _as_obstacle_list(obstacles)
    if not obs:
        return FilterState(np.zeros((0, 3)), float("inf"), False)
    p_ep = ee_center(p_ef, r_ef, geom)
    r = np.asarray(r_ef, dtype=np.float64).reshape(3, 3)
    states, h0 = [], float("inf")
    for ob in obs:
        p_star, h_star = max_barrier_over_sphere(p_ep, r, geom, ob)
        if h_star <= 0.0:
            raise UnsafeStart(
                f"bodies touch or overlap at start (best achievable h = {h_star:.3g})"
            )
        states.append(p_star)
        h0 = min(h0, h_star)
    p_s = states[0] if len(states) == 1 else np.vstack(states)
    return FilterState(p_s, h0, False)


def nominal_virtual_control(
    state: AugmentedState, geom: EEGeometry, obstacle: Ellipsoid, params: FilterParams
) -> np.ndarray:
    """Reference virtual input: k times the tangential ascent direction of h."""
    w = _world_shape_inv(state.r_ef, geom.semi_axes)
    s_ob = _world_shape(obstacle.rotation, obstacle.semi_axes)
    _, _, grad_s = _gradients(w, s_ob, obstacle.center, state.p_ep, state.p_s)
    return params.virtual_gain * tangential(grad_s, state.p_s)


def _as_obstacle_list(obstacles) -> list:
    if obstacles is None:
        return []
    if isinstance(obstacles, Ellipsoid):
        return [obstacles]
    return list(obstacles)


def _project_onto_constraints(
    z_ref: np.ndarray, rows: np.ndarray, rhs: np.ndarray, w_inv: np.ndarray
) -> Tuple[np.ndarray, bool]:
    """Weighted projection of z_ref onto {z : rows @ z >= rhs}.

    Small primal active-set loop; the single-constraint case reduces to one
    closed-form least-squares projection.  ``w_inv`` is the inverse of the
    diagonal cost weights.
    """
    vals = rows @ z_ref - rhs
    if np.all(vals >= 0.0):
        return z_ref, False
    m = rows.shape[0]
    row_norms = np.linalg.norm(rows, axis=1)
    if np.any((row_norms < 1e-12) & (vals < 0.0)):
        raise DegenerateConstraint(
            "violated safety constraint has numerically zero coefficients"
        )
    active = [int(np.argmin(vals))]
    for _ in range(4 * m + 8):
        a = rows[active]
        r = rhs[active] - a @ z_ref
        gram = a @ (w_inv[:, None] * a.T)
        try:
            lam = np.linalg.solve(gram, r)
        except np.linalg.LinAlgError:
            lam = np.linalg.lstsq(gram, r, rcond=None)[0]
        if len(active) > 1 and np.any(lam < -1e-12):
            del active[int(np.argmin(lam))]
            continue
        z = z_ref + w_inv * (a.T @ lam)
        vals = rows @ z - rhs
        vals[active] = 0.0  # active rows hold with equality by construction
        worst = int(np.argmin(vals))
        if vals[worst] >= -1e-12:
            return z, True
        active.append(worst)
    raise DegenerateConstraint("active-set iteration cap exceeded")


def solve_safety_qp(
    u_vla_v,
    state: AugmentedState,
    geom: EEGeometry,
    obstacle: Ellipsoid,
    params: FilterParams,
) -> Tuple[np.ndarray, np.ndarray, bool]:
    """Single-obstacle QP: returns (u_safe_v, u_ps, active)."""
    u_safe, u_ps_rows, active, _ = _solve_multi(
        np.asarray(u_vla_v, dtype=np.float64).reshape(3),
        state.p_ep,
        state.r_ef,
        geom,
        [obstacle],
        np.atleast_2d(state.p_s),
        params,
    )
    return u_safe, u_ps_rows[0], active


def _solve_multi(
    u_vla_v: np.ndarray,
    p_ep: np.ndarray,
    r_ef: np.ndarray,
    geom: EEGeometry,
    obstacles: list,
    sphere_states: np.ndarray,
    params: FilterParams,
):
    """Stacked QP over all obstacles.

    Decision variable z = (u_v, u_ps_1, ..., u_ps_m); each obstacle adds one
    inequality row touching u_v and its own virtual-input block.  Tangential
    equalities are enforced by projecting the virtual blocks of both the
    reference and the constraint rows, which keeps the problem unconstrained
    in the remaining directions.

    Returns (u_safe_v, u_ps rows, active, h values).
    """
    m = len(obstacles)
    w_inv_ef = _world_shape_inv(r_ef, geom.semi_axes)
    dim = 3 + 3 * m
    z_ref = np.zeros(dim)
    z_ref[:3] = u_vla_v
    rows = np.zeros((m, dim))
    rhs = np.zeros(m)
    h_all = np.zeros(m)
    enforce = False
    for i, ob in enumerate(obstacles):
        p_s = sphere_states[i]
        s_ob = _world_shape(ob.rotation, ob.semi_axes)
        h, grad_p, grad_s = _gradients(w_inv_ef, s_ob, ob.center, p_ep, p_s)
        h_all[i] = h
        u_ps_ref = params.virtual_gain * tangential(grad_s, p_s)
        z_ref[3 + 3 * i : 6 + 3 * i] = u_ps_ref
        rows[i, :3] = PLANT_GAIN * grad_p
        rows[i, 3 + 3 * i : 6 + 3 * i] = tangential(grad_s, p_s)
        rhs[i] = -alpha(h, params)
        if h < params.activation_distance:
            enforce = True
    if not enforce:
        u_ps_rows = z_ref[3:].reshape(m, 3)
        return u_vla_v, u_ps_rows, False, h_all

    weights = np.ones(dim)
    weights[3:] = params.virtual_weight
    z, active = _project_onto_constraints(z_ref, rows, rhs, 1.0 / weights)
    if not active:
        # Bitwise passthrough of the nominal translational command.
        return u_vla_v, z_ref[3:].reshape(m, 3), False, h_all
    return z[:3], z[3:].reshape(m, 3), True, h_all


def filter_step(
    action: Action,
    p_ef,
    r_ef,
    geom: EEGeometry,
    obstacle: Union[Ellipsoid, Sequence[Ellipsoid], None],
    fstate: FilterState,
    dt: float,
    params: FilterParams,
) -> Tuple[Action, FilterState]:
    """One safety-layer step: filter the action and advance the virtual state.

    Rotational velocity and the gripper command always pass through; only the
    translational command is modified, and only when the barrier constraint
    is active.  The virtual state integrates u_ps with explicit Euler and is
    renormalized back onto the sphere.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    obstacles = _as_obstacle_list(obstacle)
    if not obstacles:
        return action, FilterState(fstate.p_s, float("inf"), False)
    p_ef = np.asarray(p_ef, dtype=np.float64).reshape(3)
    r_ef = np.asarray(r_ef, dtype=np.float64).reshape(3, 3)
    p_ep = ee_center(p_ef, r_ef, geom)
    sphere_states = fstate.sphere_states()
    if sphere_states.shape[0] != len(obstacles):
        raise ValueError(
            f"filter state carries {sphere_states.shape[0]} virtual states "
            f"for {len(obstacles)} obstacles"
        )
    u_safe_v, u_ps_rows, active, h_all = _solve_multi(
        action.v, p_ep, r_ef, geom, obstacles, sphere_states, params
    )
    new_sphere = sphere_states + dt * u_ps_rows
    new_sphere /= np.linalg.norm(new_sphere, axis=1, keepdims=True)
    p_s_next = new_sphere[0] if len(obstacles) == 1 else new_sphere
    new_state = FilterState(p_s_next, float(np.min(h_all)), bool(active))
    if not active:
        return Action(action.v, action.omega, action.gripper), new_state
    return Action(u_safe_v, action.omega, action.gripper), new_state
