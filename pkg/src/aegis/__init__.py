"""Ellipsoid barrier safety layer for end-effector control.

Modules:
    geometry     ellipsoid types, MVEE fitting, exact intersection oracle
    perception   depth back-projection and obstacle cloud preprocessing
    assessment   hazard identification / grounding backends
    barrier      tangent-plane barrier value and gradients
    filter       minimal-deviation QP safety layer
    sim          kinematic episodes, traces, metrics
    suite        bundled collision-prone benchmark
    cli          command-line entry point
    bridge       versioned wire protocol for host-language bindings
"""

from .barrier import (
    AugmentedState,
    EEGeometry,
    Plane,
    barrier_gradient,
    barrier_value,
    ee_center,
    max_barrier_over_sphere,
    surface_point,
    tangent_plane,
)
from .errors import (
    AegisError,
    DegenerateConstraint,
    DegenerateInput,
    EmptyCloud,
    EmptyRegion,
    EmptyResults,
    MalformedReply,
    NoCluster,
    NonConvergence,
    NotFound,
    PipelineEmpty,
    RemoteUnavailable,
    ScenarioInvalid,
    TraceFormatError,
    UnsafeStart,
)
from .filter import (
    Action,
    FilterParams,
    FilterState,
    alpha,
    filter_step,
    init_filter_state,
    init_virtual_state,
    nominal_virtual_control,
    solve_safety_qp,
)
from .geometry import (
    Ellipsoid,
    ellipsoids_intersect,
    fit_mvee,
    quadratic_matrix,
    shape_matrix,
)
from .perception import (
    BBox,
    CameraModel,
    DepthView,
    PipelineConfig,
    WorkspaceBounds,
    backproject,
    crop_workspace,
    fuse_clouds,
    largest_cluster,
    obstacle_pipeline,
    trim_farthest,
)
from .sim import (
    EpisodeResult,
    Metrics,
    PolicySpec,
    Scenario,
    Trace,
    check_collision,
    compute_metrics,
    run_episode,
    scripted_policy,
    step_plant,
)

__version__ = "0.1.0"
