"""Kinematic benchmark harness: scenarios, episodes, traces, metrics.

The plant is the reduced translational kinematics dp/dt = 0.2 u integrated
with explicit Euler at the scenario's control period.  A proportional
waypoint follower stands in for the nominal policy; collision ground truth
is exact ellipsoid-ellipsoid intersection, a strictly more conservative
detector than physics-engine contact.
"""

from __future__ import annotations

import math
import struct
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .barrier import EEGeometry, ee_center
from .errors import EmptyResults, ScenarioInvalid, TraceFormatError
from .filter import (
    Action,
    FilterParams,
    FilterState,
    PLANT_GAIN,
    filter_step,
    init_filter_state,
)
from .geometry import Ellipsoid, ellipsoids_intersect
from .perception import (
    BBox,
    CameraModel,
    DepthView,
    PipelineConfig,
    WorkspaceBounds,
    load_depth_view,
    obstacle_pipeline,
)

SUCCESS_TOLERANCE = 0.01  # meters to goal for task completion


# ---------------------------------------------------------------------------
# Plant and policy
# ---------------------------------------------------------------------------

def step_plant(p, u_v, dt: float) -> np.ndarray:
    """Explicit Euler step of dp/dt = 0.2 u."""
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    return np.asarray(p, dtype=np.float64) + PLANT_GAIN * np.asarray(u_v, dtype=np.float64) * dt


@dataclass(frozen=True)
class PolicySpec:
    """Proportional waypoint follower standing in for the nominal policy.

    ``waypoints`` must end at the scenario goal; ``grip`` maps a waypoint
    index to the gripper value commanded once that waypoint is captured.
    """

    waypoints: Tuple[np.ndarray, ...]
    k_p: float = 8.0
    v_max: float = 1.0
    capture_radius: float = 0.01
    grip: Dict[int, float] = field(default_factory=dict)

    def __post_init__(self):
        wps = tuple(np.asarray(w, dtype=np.float64).reshape(3) for w in self.waypoints)
        if not wps:
            raise ValueError("policy needs at least one waypoint")
        object.__setattr__(self, "waypoints", wps)
        object.__setattr__(self, "grip", dict(self.grip))
        if self.k_p <= 0 or self.v_max <= 0 or self.capture_radius <= 0:
            raise ValueError("policy gains must be positive")


def scripted_policy(spec: PolicySpec, p, t: int, waypoint_index: int = 0,
                    gripper: float = 0.0) -> Action:
    """Velocity command toward the indexed waypoint, clamped componentwise."""
    idx = min(waypoint_index, len(spec.waypoints) - 1)
    target = spec.waypoints[idx]
    err = target - np.asarray(p, dtype=np.float64)
    v = np.clip(spec.k_p * err, -spec.v_max, spec.v_max)
    return Action(v, np.zeros(3), gripper)


class ScriptedPolicy:
    """Stateful wrapper advancing through the waypoint list."""

    def __init__(self, spec: PolicySpec):
        self.spec = spec
        self.index = 0
        self.gripper = 0.0
        self.done = False

    def observe(self, p) -> None:
        """Capture waypoints reached by ``p`` and fire gripper events."""
        p = np.asarray(p, dtype=np.float64)
        while self.index < len(self.spec.waypoints):
            if float(np.linalg.norm(p - self.spec.waypoints[self.index])) \
                    >= self.spec.capture_radius:
                break
            if self.index in self.spec.grip:
                self.gripper = float(self.spec.grip[self.index])
            self.index += 1
        self.done = self.index >= len(self.spec.waypoints)

    def action(self, p, t: int) -> Action:
        if self.done:
            return Action(np.zeros(3), np.zeros(3), self.gripper)
        return scripted_policy(self.spec, p, t, self.index, self.gripper)


# ---------------------------------------------------------------------------
# Collision ground truth
# ---------------------------------------------------------------------------

def check_collision(p_ef, r_ef, geom: EEGeometry, obstacles_true: Sequence[Ellipsoid]) -> bool:
    """True iff the true end-effector ellipsoid intersects any obstacle."""
    p_ep = ee_center(p_ef, r_ef, geom)
    ee_max = float(np.max(geom.semi_axes))
    ee = None
    for ob in obstacles_true:
        gap = float(np.linalg.norm(ob.center - p_ep))
        if gap > ee_max + float(np.max(ob.semi_axes)):
            continue  # bounding spheres already disjoint
        if gap <= float(np.min(geom.semi_axes)) + float(np.min(ob.semi_axes)):
            return True  # bounding spheres already overlapping
        if ee is None:
            ee = Ellipsoid(p_ep, geom.semi_axes, r_ef)
        if ellipsoids_intersect(ee, ob):
            return True
    return False


# ---------------------------------------------------------------------------
# Scenario definition
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScenarioPerception:
    """Depth fixtures grounding the obstacle through the vision pipeline."""

    view_bases: Tuple[str, ...]
    bboxes: Tuple[BBox, ...]
    config: PipelineConfig = PipelineConfig()


@dataclass(frozen=True)
class Scenario:
    name: str
    workspace: WorkspaceBounds
    obstacles_true: Tuple[Ellipsoid, ...]
    ee_start: np.ndarray
    goal: np.ndarray
    ee_geom: EEGeometry
    policy: PolicySpec
    hazard_name: str = ""
    suite: str = "default"
    waypoints: Tuple[np.ndarray, ...] = ()
    horizon: int = 300
    dt: float = 0.05
    filter_params: FilterParams = FilterParams()
    seed: int = 0
    jitter: float = 0.0
    margin: float = 0.0
    perception: Optional[ScenarioPerception] = None
    ee_rotation: np.ndarray = field(default_factory=lambda: np.eye(3))

    def __post_init__(self):
        object.__setattr__(self, "ee_start", np.asarray(self.ee_start, dtype=np.float64).reshape(3))
        object.__setattr__(self, "goal", np.asarray(self.goal, dtype=np.float64).reshape(3))
        object.__setattr__(self, "obstacles_true", tuple(self.obstacles_true))
        object.__setattr__(self, "ee_rotation",
                           np.asarray(self.ee_rotation, dtype=np.float64).reshape(3, 3))
        if self.horizon <= 0:
            raise ScenarioInvalid("horizon must be positive")
        if self.dt <= 0:
            raise ScenarioInvalid("dt must be positive")
        if not self.workspace.contains(self.ee_start):
            raise ScenarioInvalid("ee_start must lie inside the workspace")
        if not self.workspace.contains(self.goal):
            raise ScenarioInvalid("goal must lie inside the workspace")
        if self.jitter < 0 or self.margin < 0:
            raise ScenarioInvalid("jitter and margin must be nonnegative")


# ---------------------------------------------------------------------------
# Traces and metrics
# ---------------------------------------------------------------------------

TRACE_COLUMNS = (
    "t,px,py,pz,h,"
    "vvx,vvy,vvz,wvx,wvy,wvz,gvla,"
    "vsx,vsy,vsz,wsx,wsy,wsz,gsafe,"
    "active,collided"
)
_TRACE_MAGIC = b"AEGTRC01"


@dataclass
class Trace:
    """Per-step log of one episode.

    ``latency_ms`` carries wall-clock filter timings; it is never serialized
    with the trace (timing is non-deterministic and lives in the sidecar).
    """

    t: np.ndarray
    p: np.ndarray
    h: np.ndarray
    u_vla: np.ndarray
    u_safe: np.ndarray
    active: np.ndarray
    collided: np.ndarray
    header: Dict[str, str] = field(default_factory=dict)
    latency_ms: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return int(self.t.shape[0])

    def matrix(self) -> np.ndarray:
        return np.column_stack([
            self.t.astype(np.float64),
            self.p,
            self.h,
            self.u_vla,
            self.u_safe,
            self.active.astype(np.float64),
            self.collided.astype(np.float64),
        ])


@dataclass(frozen=True)
class EpisodeResult:
    collided: bool
    succeeded: bool
    steps: int


@dataclass(frozen=True)
class Metrics:
    car: float
    tsr: float
    ets: float

    def __post_init__(self):
        if not (0.0 <= self.car <= 1.0 and 0.0 <= self.tsr <= 1.0):
            raise ValueError("rates must lie in [0, 1]")


def compute_metrics(results: Sequence[EpisodeResult]) -> Metrics:
    """CAR/TSR/ETS over a batch; timeouts keep their full step count."""
    if not results:
        raise EmptyResults("cannot aggregate an empty result list")
    n = len(results)
    car = sum(1 for r in results if not r.collided) / n
    tsr = sum(1 for r in results if r.succeeded) / n
    ets = sum(r.steps for r in results) / n
    return Metrics(car, tsr, ets)


def save_trace_csv(path: Union[str, Path], trace: Trace) -> None:
    with open(path, "w") as fh:
        for key in sorted(trace.header):
            fh.write(f"# {key}={trace.header[key]}\n")
        fh.write(TRACE_COLUMNS + "\n")
        m = trace.matrix()
        for row in m:
            ints = f"{int(row[0])}"
            floats = ",".join(repr(float(v)) for v in row[1:19])
            flags = f"{int(row[19])},{int(row[20])}"
            fh.write(f"{ints},{floats},{flags}\n")


def load_trace_csv(path: Union[str, Path]) -> Trace:
    header: Dict[str, str] = {}
    rows: List[List[float]] = []
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise TraceFormatError(f"cannot read trace: {exc}") from exc
    saw_columns = False
    for line in lines:
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if "=" in body:
                key, value = body.split("=", 1)
                header[key.strip()] = value.strip()
            continue
        if not saw_columns:
            if line != TRACE_COLUMNS:
                raise TraceFormatError(f"unexpected trace columns: {line!r}")
            saw_columns = True
            continue
        parts = line.split(",")
        if len(parts) != 21:
            raise TraceFormatError(f"malformed trace row: {line!r}")
        rows.append([float(v) for v in parts])
    if not saw_columns:
        raise TraceFormatError("trace file has no column header")
    m = np.array(rows, dtype=np.float64).reshape(-1, 21)
    return _trace_from_matrix(m, header)


def _trace_from_matrix(m: np.ndarray, header: Dict[str, str]) -> Trace:
    return Trace(
        t=m[:, 0].astype(np.int64),
        p=m[:, 1:4],
        h=m[:, 4],
        u_vla=m[:, 5:12],
        u_safe=m[:, 12:19],
        active=m[:, 19].astype(bool),
        collided=m[:, 20].astype(bool),
        header=header,
    )


def save_trace_binary(path: Union[str, Path], trace: Trace) -> None:
    """Little-endian binary log: magic, header block, float64 row matrix."""
    import json

    header_bytes = json.dumps(trace.header, sort_keys=True).encode()
    m = trace.matrix()
    with open(path, "wb") as fh:
        fh.write(_TRACE_MAGIC)
        fh.write(struct.pack("<II", len(header_bytes), m.shape[0]))
        fh.write(header_bytes)
        fh.write(m.astype("<f8").tobytes())


def load_trace_binary(path: Union[str, Path]) -> Trace:
    import json

    raw = Path(path).read_bytes()
    if raw[:8] != _TRACE_MAGIC:
        raise TraceFormatError("bad magic in binary trace")
    hlen, nrows = struct.unpack("<II", raw[8:16])
    header = json.loads(raw[16 : 16 + hlen].decode())
    body = raw[16 + hlen :]
    m = np.frombuffer(body, dtype="<f8").reshape(nrows, 21)
    return _trace_from_matrix(m.copy(), header)


# ---------------------------------------------------------------------------
# Episode execution
# ---------------------------------------------------------------------------

def _resolve_filter_obstacles(scenario: Scenario, obstacles_true: List[Ellipsoid],
                              base_dir: Optional[Path]) -> List[Ellipsoid]:
    if scenario.perception is not None:
        spec = scenario.perception
        views = []
        for base in spec.view_bases:
            p = Path(base)
            if not p.is_absolute() and base_dir is not None:
                p = base_dir / p
            views.append(load_depth_view(p))
        return [obstacle_pipeline(views, list(spec.bboxes), scenario.workspace, spec.config)]
    return [ob.inflated(scenario.margin) for ob in obstacles_true]


def run_episode(
    scenario: Scenario,
    filter_on: bool,
    rng_seed: Optional[int] = None,
    *,
    scenario_dir: Optional[Union[str, Path]] = None,
) -> Tuple[Trace, EpisodeResult]:
    """Run one episode; collisions are recorded but never terminate it.

    Obstacle and goal centers receive uniform cube jitter drawn from the
    seed.  When depth fixtures are attached, the filter's obstacle comes from
    the perception pipeline (jitter then applies to the goal only, so the
    rendered scene stays truthful); otherwise the declared ellipsoids are
    used directly, inflated by the scenario margin.
    """
    seed = scenario.seed if rng_seed is None else int(rng_seed)
    rng = np.random.default_rng(seed)
    r = scenario.jitter
    obstacles_true: List[Ellipsoid] = []
    for ob in scenario.obstacles_true:
        if scenario.perception is None:
            shift = rng.uniform(-r, r, 3)
            obstacles_true.append(Ellipsoid(ob.center + shift, ob.semi_axes, ob.rotation))
        else:
            obstacles_true.append(ob)
    goal = scenario.goal + rng.uniform(-r, r, 3)

    base_dir = Path(scenario_dir) if scenario_dir is not None else None
    filter_obstacles = _resolve_filter_obstacles(scenario, obstacles_true, base_dir)

    waypoints = [np.asarray(w, dtype=np.float64) for w in scenario.waypoints]
    if waypoints:
        waypoints[-1] = goal
    else:
        waypoints = [goal]
    policy = ScriptedPolicy(replace(scenario.policy, waypoints=tuple(waypoints)))

    r_ef = scenario.ee_rotation
    geom = scenario.ee_geom
    p = scenario.ee_start.copy()
    fstate: Optional[FilterState] = None
    if filter_on and filter_obstacles:
        fstate = init_filter_state(p, r_ef, geom, filter_obstacles)

    horizon = scenario.horizon
    t_arr = np.zeros(horizon, dtype=np.int64)
    p_arr = np.zeros((horizon, 3))
    h_arr = np.zeros(horizon)
    uv_arr = np.zeros((horizon, 7))
    us_arr = np.zeros((horizon, 7))
    act_arr = np.zeros(horizon, dtype=bool)
    col_arr = np.zeros(horizon, dtype=bool)
    lat_arr = np.zeros(horizon)

    ee_max = float(np.max(geom.semi_axes))
    ob_max = [float(np.max(ob.semi_axes)) for ob in obstacles_true]

    collided = False
    succeeded = False
    steps = horizon
    policy.observe(p)
    for t in range(horizon):
        u_vla = policy.action(p, t)
        if filter_on and filter_obstacles:
            t0 = time.perf_counter()
            safe, fstate = filter_step(
                u_vla, p, r_ef, geom, filter_obstacles, fstate, scenario.dt,
                scenario.filter_params,
            )
            lat_arr[t] = (time.perf_counter() - t0) * 1e3
            h_val = fstate.last_h
            active = fstate.intervened
        else:
            safe = u_vla
            h_val = float("inf") if filter_on else float("nan")
            active = False
        p_next = step_plant(p, safe.v, scenario.dt)

        col = False
        p_ep = ee_center(p_next, r_ef, geom)
        for ob, radius in zip(obstacles_true, ob_max):
            if float(np.linalg.norm(ob.center - p_ep)) <= ee_max + radius:
                if ellipsoids_intersect(Ellipsoid(p_ep, geom.semi_axes, r_ef), ob):
                    col = True
                    break
        collided = collided or col

        t_arr[t] = t
        p_arr[t] = p
        h_arr[t] = h_val
        uv_arr[t] = u_vla.as_array()
        us_arr[t] = safe.as_array()
        act_arr[t] = active
        col_arr[t] = col

        p = p_next
        policy.observe(p)
        if policy.done and float(np.linalg.norm(p - goal)) < SUCCESS_TOLERANCE:
            succeeded = True
            steps = t + 1
            break
    else:
        steps = horizon

    n = steps
    header = {
        "scenario": scenario.name,
        "suite": scenario.suite,
        "seed": str(seed),
        "filter": "on" if filter_on else "off",
        "margin": repr(float(scenario.margin)),
        "dt": repr(float(scenario.dt)),
    }
    trace = Trace(
        t=t_arr[:n], p=p_arr[:n], h=h_arr[:n], u_vla=uv_arr[:n], u_safe=us_arr[:n],
        active=act_arr[:n], collided=col_arr[:n], header=header,
        latency_ms=lat_arr[:n] if filter_on else None,
    )
    return trace, EpisodeResult(collided, succeeded, steps)


# ---------------------------------------------------------------------------
# Depth rasterizer (fixture synthesis only)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BoxPrimitive:
    min_corner: np.ndarray
    max_corner: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "min_corner", np.asarray(self.min_corner, dtype=np.float64))
        object.__setattr__(self, "max_corner", np.asarray(self.max_corner, dtype=np.float64))

    def ray_hits(self, origin: np.ndarray, dirs: np.ndarray) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            t1 = (self.min_corner - origin) / dirs
            t2 = (self.max_corner - origin) / dirs
        t_near = np.nanmax(np.minimum(t1, t2), axis=1)
        t_far = np.nanmin(np.maximum(t1, t2), axis=1)
        s = np.where((t_near <= t_far) & (t_far > 1e-9) & (t_near > 1e-9), t_near, np.inf)
        return s


@dataclass(frozen=True)
class EllipsoidPrimitive:
    body: Ellipsoid

    def ray_hits(self, origin: np.ndarray, dirs: np.ndarray) -> np.ndarray:
        from .geometry import quadratic_matrix

        m = quadratic_matrix(self.body)
        oc = origin - self.body.center
        a = np.einsum("ij,jk,ik->i", dirs, m, dirs)
        b = 2.0 * dirs @ (m @ oc)
        c = float(oc @ m @ oc) - 1.0
        disc = b * b - 4.0 * a * c
        valid = disc >= 0.0
        sqrt_disc = np.sqrt(np.where(valid, disc, 0.0))
        s = (-b - sqrt_disc) / (2.0 * a)
        return np.where(valid & (s > 1e-9), s, np.inf)


def render_depth(camera: CameraModel, width: int, height: int,
                 primitives: Sequence) -> DepthView:
    """Ray-cast primitives into a depth grid matching the pinhole model.

    Depth is the camera-frame z coordinate, so backprojecting the rendered
    view reproduces the surface points exactly.
    """
    k_inv = np.linalg.inv(camera.intrinsics)
    us, vs = np.meshgrid(np.arange(width, dtype=np.float64),
                         np.arange(height, dtype=np.float64))
    pix = np.column_stack([us.reshape(-1), vs.reshape(-1), np.ones(width * height)])
    dirs_cam = pix @ k_inv.T  # z component is exactly 1
    rot = camera.extrinsic[:3, :3]
    origin = camera.extrinsic[:3, 3]
    dirs = dirs_cam @ rot.T
    depth = np.full(width * height, np.inf)
    for prim in primitives:
        depth = np.minimum(depth, prim.ray_hits(origin, dirs))
    depth = np.where(np.isfinite(depth), depth, 0.0)
    return DepthView(width, height, depth.reshape(height, width), camera)


def look_at_camera(eye, target, up=(0.0, 0.0, 1.0), *, fx=120.0, fy=120.0,
                   cx=63.5, cy=63.5) -> CameraModel:
    """Convenience extrinsic: camera at ``eye`` looking toward ``target``.

    Camera convention: +z forward, +x right, +y down.
    """
    eye = np.asarray(eye, dtype=np.float64)
    fwd = np.asarray(target, dtype=np.float64) - eye
    fwd = fwd / np.linalg.norm(fwd)
    upv = np.asarray(up, dtype=np.float64)
    right = np.cross(fwd, upv)
    if np.linalg.norm(right) < 1e-9:
        upv = np.array([0.0, 1.0, 0.0])
        right = np.cross(fwd, upv)
    right /= np.linalg.norm(right)
    down = np.cross(fwd, right)
    rot = np.column_stack([right, down, fwd])  # camera axes in world coords
    t = np.eye(4)
    t[:3, :3] = rot
    t[:3, 3] = eye
    k = np.array([[fx, 0.0, cx], [0.0, fy, cy], [0.0, 0.0, 1.0]])
    return CameraModel(k, t)


# ---------------------------------------------------------------------------
# Scenario files (TOML)
# ---------------------------------------------------------------------------

def scenario_from_dict(data: dict, name_fallback: str = "scenario") -> Scenario:
    try:
        ws = WorkspaceBounds(data["workspace"]["min"], data["workspace"]["max"])
        obstacles = []
        for entry in data.get("obstacle", []):
            rot = np.array(entry.get("rotation", np.eye(3).reshape(-1).tolist()),
                           dtype=np.float64).reshape(3, 3)
            obstacles.append(Ellipsoid(entry["center"], entry["semi_axes"], rot))
        ee = data["ee"]
        geom = EEGeometry(ee["semi_axes"], ee.get("offset", (0.0, 0.0, 0.0)))
        pol = data.get("policy", {})
        grip = {int(k): float(v) for k, v in pol.get("grip", {}).items()}
        waypoints = [np.asarray(w, dtype=np.float64) for w in data.get("waypoints", [])]
        policy = PolicySpec(
            waypoints=tuple(waypoints) or (np.asarray(ee["goal"], dtype=np.float64),),
            k_p=float(pol.get("k_p", 8.0)),
            v_max=float(pol.get("v_max", 1.0)),
            capture_radius=float(pol.get("capture_radius", 0.01)),
            grip=grip,
        )
        flt = data.get("filter", {})
        params = FilterParams(
            alpha_gain=float(flt.get("alpha_gain", 10.0)),
            virtual_gain=float(flt.get("virtual_gain", 10.0)),
            virtual_weight=float(flt.get("virtual_weight", 1.0)),
            activation_distance=float(flt.get("activation_distance", float("inf"))),
        )
        perception = None
        if "perception" in data:
            per = data["perception"]
            cfg_src = per.get("config", {})
            cfg = PipelineConfig(
                trim_fraction=float(cfg_src.get("trim_fraction", 0.2)),
                cluster_radius=float(cfg_src.get("cluster_radius", 0.02)),
                cluster_min_neighbors=int(cfg_src.get("cluster_min_neighbors", 5)),
                mvee_tolerance=float(cfg_src.get("mvee_tolerance", 1e-7)),
                inflate=bool(cfg_src.get("inflate", True)),
                inflate_floor=float(cfg_src.get("inflate_floor", 0.005)),
            )
            perception = ScenarioPerception(
                view_bases=tuple(per["views"]),
                bboxes=tuple(BBox(*b) for b in per["bboxes"]),
                config=cfg,
            )
        rand = data.get("randomization", {})
        return Scenario(
            name=str(data.get("name", name_fallback)),
            suite=str(data.get("suite", "default")),
            workspace=ws,
            obstacles_true=tuple(obstacles),
            hazard_name=str(data.get("hazard", "")),
            ee_start=ee["start"],
            goal=ee["goal"],
            waypoints=tuple(waypoints),
            ee_geom=geom,
            policy=policy,
            horizon=int(data.get("horizon", 300)),
            dt=float(data.get("dt", 0.05)),
            filter_params=params,
            seed=int(data.get("seed", 0)),
            jitter=float(rand.get("jitter", 0.0)),
            margin=float(data.get("margin", 0.0)),
            perception=perception,
        )
    except ScenarioInvalid:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioInvalid(f"malformed scenario: {exc}") from exc


def load_scenario(path: Union[str, Path]) -> Scenario:
    import tomli

    path = Path(path)
    if not path.exists():
        raise ScenarioInvalid(f"scenario file not found: {path}")
    try:
        data = tomli.loads(path.read_text())
    except tomli.TOMLDecodeError as exc:
        raise ScenarioInvalid(f"scenario file {path} is not valid TOML: {exc}") from exc
    return scenario_from_dict(data, name_fallback=path.stem)


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int,)):
        return str(v)
    if isinstance(v, float):
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_toml_value(x) for x in np.asarray(v).tolist()) + "]"
    raise TypeError(f"cannot serialize {type(v)} to TOML")


def save_scenario(path: Union[str, Path], s: Scenario) -> None:
    """Write the scenario in the key-value format load_scenario reads."""
    lines = [
        f"name = {_toml_value(s.name)}",
        f"suite = {_toml_value(s.suite)}",
        f"hazard = {_toml_value(s.hazard_name)}",
        f"horizon = {s.horizon}",
        f"dt = {_toml_value(s.dt)}",
        f"seed = {s.seed}",
        f"margin = {_toml_value(s.margin)}",
    ]
    if s.waypoints:
        lines.append(f"waypoints = {_toml_value([w.tolist() for w in s.waypoints])}")
    lines += [
        "",
        "[workspace]",
        f"min = {_toml_value(s.workspace.min_corner)}",
        f"max = {_toml_value(s.workspace.max_corner)}",
        "",
        "[ee]",
        f"start = {_toml_value(s.ee_start)}",
        f"goal = {_toml_value(s.goal)}",
        f"semi_axes = {_toml_value(s.ee_geom.semi_axes)}",
        f"offset = {_toml_value(s.ee_geom.offset)}",
        "",
        "[policy]",
        f"k_p = {_toml_value(s.policy.k_p)}",
        f"v_max = {_toml_value(s.policy.v_max)}",
        f"capture_radius = {_toml_value(s.policy.capture_radius)}",
    ]
    if s.policy.grip:
        grip_items = ", ".join(f'"{k}" = {_toml_value(v)}' for k, v in sorted(s.policy.grip.items()))
        lines.append(f"grip = {{ {grip_items} }}")
    lines += [
        "",
        "[filter]",
        f"alpha_gain = {_toml_value(s.filter_params.alpha_gain)}",
        f"virtual_gain = {_toml_value(s.filter_params.virtual_gain)}",
        f"virtual_weight = {_toml_value(s.filter_params.virtual_weight)}",
        f"activation_distance = {_toml_value(s.filter_params.activation_distance)}",
        "",
        "[randomization]",
        f"jitter = {_toml_value(s.jitter)}",
    ]
    for ob in s.obstacles_true:
        lines += [
            "",
            "[[obstacle]]",
            f"center = {_toml_value(ob.center)}",
            f"semi_axes = {_toml_value(ob.semi_axes)}",
            f"rotation = {_toml_value(ob.rotation.reshape(-1))}",
        ]
    if s.perception is not None:
        per = s.perception
        lines += [
            "",
            "[perception]",
            f"views = {_toml_value(list(per.view_bases))}",
            "bboxes = [" + ", ".join(
                _toml_value([b.u_min, b.v_min, b.u_max, b.v_max]) for b in per.bboxes
            ) + "]",
        ]
    Path(path).write_text("\n".join(lines) + "\n")
