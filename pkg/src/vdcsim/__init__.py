"""Simulation and verification toolkit for observer-based decomposed control
of planar open-chain manipulators."""

__version__ = "0.1.0"

from .spatial import (  # noqa: F401
    FrameMismatchError,
    KindMismatchError,
    LinkModel,
    SpatialVector,
    TransformMatrix,
)
from .chain import (  # noqa: F401
    ChainModel,
    FrictionModel,
    JointModel,
    forward_dynamics,
    inverse_dynamics,
    tanh_friction,
    zero_friction,
)
from .observer import (  # noqa: F401
    JointObserverState,
    LinkObserverState,
    ObserverGains,
)
from .controller import (  # noqa: F401
    ControlGains,
    DesiredTrajectory,
    offset_cosine_trajectory,
)
from .stability import (  # noqa: F401
    ErrorStateVector,
    GainCertificate,
    StabilityBounds,
    attraction_radius,
    check_joint_gains,
    check_link_gains,
    compute_bounds,
    decay_audit,
    gain_certificate,
    lyapunov_total,
    virtual_power_flow,
)
from .sim import (  # noqa: F401
    ClosedLoopState,
    ScenarioConfig,
    TrajectoryRecord,
    closed_loop_rates,
    integrate_rk4,
    lagrangian_oracle,
    simulate,
    two_dof_scenario,
)
