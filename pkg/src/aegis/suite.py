"""Bundled collision-prone benchmark: 8 base layouts x 2 intervention levels.

Level 1 places the obstacle in close proximity to the goal; level 2 places
it farther along the path where it blocks the straight-line approach.  Every
layout is built so the unfiltered proportional policy drives the end-effector
ellipsoid through the obstacle, while the goal pose itself stays safely
reachable under jitter.  Obstacles clip the swept corridor off its axis so
the filtered trajectory picks up a decisive sideways slide instead of
creeping around a head-on contact.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Dict, List, Tuple, Union

import numpy as np

from .barrier import EEGeometry
from .filter import FilterParams
from .geometry import Ellipsoid
from .perception import WorkspaceBounds
from .sim import PolicySpec, Scenario, save_scenario

EE_AXES = (0.06, 0.12, 0.11)
_WS = WorkspaceBounds((-0.30, -0.60, 0.00), (1.10, 0.60, 0.90))
_JITTER = 0.008


def _rot_z(deg: float) -> np.ndarray:
    a = math.radians(deg)
    return np.array([
        [math.cos(a), -math.sin(a), 0.0],
        [math.sin(a), math.cos(a), 0.0],
        [0.0, 0.0, 1.0],
    ])


def _scenario(
    name: str,
    level: int,
    start,
    goal,
    obstacles: List[Ellipsoid],
    *,
    waypoints: Tuple = (),
    horizon: int = 300,
    grip: Dict[int, float] = None,
    seed: int = 0,
) -> Scenario:
    return Scenario(
        name=f"{name}_l{level}",
        suite=f"level_{level}",
        workspace=_WS,
        obstacles_true=tuple(obstacles),
        hazard_name="obstacle",
        ee_start=start,
        goal=goal,
        waypoints=tuple(np.asarray(w, dtype=np.float64) for w in waypoints),
        ee_geom=EEGeometry(EE_AXES),
        policy=PolicySpec(
            waypoints=tuple(np.asarray(w, dtype=np.float64) for w in waypoints)
            or (np.asarray(goal, dtype=np.float64),),
            k_p=8.0,
            v_max=1.0,
            capture_radius=0.01,
            grip=grip or {},
        ),
        horizon=horizon,
        dt=0.05,
        filter_params=FilterParams(),
        seed=seed,
        jitter=_JITTER,
        margin=0.0,
    )


def builtin_suite() -> List[Scenario]:
    """The 16 bundled scenarios (8 layouts x levels 1 and 2)."""
    z = 0.25
    scenarios: List[Scenario] = []
    sphere = lambda c, r: Ellipsoid(c, (r, r, r))

    # 1. sphere_block: spherical obstacle clipping a straight +x lane
    start, goal = (0.00, 0.00, z), (0.80, 0.00, z)
    scenarios.append(_scenario(
        "sphere_block", 1, start, goal,
        [sphere((0.66, 0.12, z - 0.03), 0.05)],
    ))
    scenarios.append(_scenario(
        "sphere_block", 2, start, goal,
        [sphere((0.40, 0.11, z - 0.04), 0.05)],
    ))

    # 2. tall_bottle: thin, tall obstacle (wine-bottle proportions)
    bottle = lambda c: Ellipsoid(c, (0.035, 0.035, 0.13))
    scenarios.append(_scenario(
        "tall_bottle", 1, start, goal,
        [bottle((0.64, -0.09, z))],
    ))
    scenarios.append(_scenario(
        "tall_bottle", 2, start, goal,
        [bottle((0.42, -0.08, z))],
    ))

    # 3. flat_box: wide, low obstacle that rewards climbing over
    flat = lambda c: Ellipsoid(c, (0.09, 0.10, 0.035))
    scenarios.append(_scenario(
        "flat_box", 1, start, goal,
        [flat((0.60, 0.06, z - 0.10))],
    ))
    scenarios.append(_scenario(
        "flat_box", 2, start, goal,
        [flat((0.40, -0.05, z - 0.10))],
    ))

    # 4. tilted_box: rotated ellipsoid across the lane
    tilted = lambda c, deg: Ellipsoid(c, (0.085, 0.045, 0.06), _rot_z(deg))
    scenarios.append(_scenario(
        "tilted_box", 1, start, goal,
        [tilted((0.62, 0.12, z - 0.03), 30.0)],
    ))
    scenarios.append(_scenario(
        "tilted_box", 2, start, goal,
        [tilted((0.42, 0.10, z - 0.04), -25.0)],
    ))

    # 5. twin_guards: staggered slalom, two stacked QP constraints; the x
    # separation keeps the contacts sequential so the lane never pinches
    scenarios.append(_scenario(
        "twin_guards", 1, start, goal,
        [sphere((0.44, -0.13, z - 0.02), 0.045), sphere((0.68, 0.12, z - 0.03), 0.05)],
    ))
    scenarios.append(_scenario(
        "twin_guards", 2, start, goal,
        [sphere((0.34, 0.11, z - 0.03), 0.045), sphere((0.64, -0.13, z - 0.02), 0.045)],
    ))

    # 6. side_swipe: lane along +y with an elongated obstacle
    start_y, goal_y = (0.40, -0.45, z), (0.40, 0.45, z)
    lobe = lambda c: Ellipsoid(c, (0.10, 0.05, 0.06))
    scenarios.append(_scenario(
        "side_swipe", 1, start_y, goal_y,
        [lobe((0.51, 0.28, z - 0.04))],
    ))
    scenarios.append(_scenario(
        "side_swipe", 2, start_y, goal_y,
        [lobe((0.29, 0.00, z - 0.03))],
    ))

    # 7. carry_long: pick waypoint then carry to the goal, gripper scripted
    pick = (0.30, -0.25, z)
    place = (0.75, 0.25, z)
    start7 = (0.05, -0.25, z)
    scenarios.append(_scenario(
        "carry_long", 1, start7, place,
        [sphere((0.60, 0.08, z - 0.05), 0.05)],
        waypoints=(pick, place), horizon=550, grip={0: 1.0, 1: 0.0},
    ))
    scenarios.append(_scenario(
        "carry_long", 2, start7, place,
        [sphere((0.52, -0.02, z - 0.05), 0.05)],
        waypoints=(pick, place), horizon=550, grip={0: 1.0, 1: 0.0},
    ))

    # 8. high_shelf_long: climb to an elevated goal past a mid-height ledge
    start8 = (0.10, 0.10, 0.18)
    lift = (0.45, 0.10, 0.45)
    goal8 = (0.85, 0.10, 0.45)
    ledge = lambda c: Ellipsoid(c, (0.06, 0.12, 0.05))
    scenarios.append(_scenario(
        "high_shelf_long", 1, start8, goal8,
        [ledge((0.67, 0.21, 0.41))],
        waypoints=(lift, goal8), horizon=550,
    ))
    scenarios.append(_scenario(
        "high_shelf_long", 2, start8, goal8,
        [ledge((0.29, 0.17, 0.29))],
        waypoints=(lift, goal8), horizon=550,
    ))

    return scenarios


def write_suite(directory: Union[str, Path]) -> List[Path]:
    """Materialize the bundled suite as scenario files."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for scenario in builtin_suite():
        path = directory / f"{scenario.name}.toml"
        save_scenario(path, scenario)
        paths.append(path)
    return paths
