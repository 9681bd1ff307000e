"""Control law driven by observed velocities.

The controller turns desired joint trajectories into required velocities
(feedforward plus observed-position feedback), propagates them through the
chain, builds required link forces with observed-velocity feedback, and
finally forms the joint torque commands.  True joint velocities never enter:
wherever a velocity-like signal is needed the observer estimates are used.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .chain import ChainModel, FrameSet, JointModel, _check_dim
from .spatial import coriolis_matrix, gravity_vector


@dataclass(frozen=True)
class DesiredTrajectory:
    """Per-joint desired motion with analytic first and second derivatives.

    ``position(t)``, ``velocity(t)`` and ``acceleration(t)`` return length-n
    arrays.  ``position_bound`` and ``velocity_bound`` are per-joint sup
    bounds over time.
    """

    position: Callable[[float], np.ndarray]
    velocity: Callable[[float], np.ndarray]
    acceleration: Callable[[float], np.ndarray]
    position_bound: np.ndarray
    velocity_bound: np.ndarray
    # set for closed-form families so compiled integrators can inline them
    family: tuple | None = None


def offset_cosine_trajectory(offset, amplitude, period) -> DesiredTrajectory:
    """Desired motion family ``q_d = offset + amplitude * cos(2 pi t / period)``."""
    offset = np.asarray(offset, dtype=float)
    amplitude = np.asarray(amplitude, dtype=float)
    period = np.asarray(period, dtype=float)
    if np.any(period <= 0.0):
        raise ValueError("trajectory periods must be positive")
    w = 2.0 * np.pi / period
    return DesiredTrajectory(
        position=lambda t: offset + amplitude * np.cos(w * t),
        velocity=lambda t: -amplitude * w * np.sin(w * t),
        acceleration=lambda t: -amplitude * w * w * np.cos(w * t),
        position_bound=np.abs(offset) + np.abs(amplitude),
        velocity_bound=np.abs(amplitude) * w,
        family=("offset_cosine", offset, amplitude, period),
    )


def constant_trajectory(setpoint) -> DesiredTrajectory:
    setpoint = np.asarray(setpoint, dtype=float)
    zero = np.zeros_like(setpoint)
    return DesiredTrajectory(
        position=lambda t: setpoint.copy(),
        velocity=lambda t: zero.copy(),
        acceleration=lambda t: zero.copy(),
        position_bound=np.abs(setpoint),
        velocity_bound=zero.copy(),
    )


@dataclass(frozen=True)
class ControlGains:
    """Required-velocity gains, joint velocity-feedback gains and per-link
    force-feedback gains (scalar, times identity)."""

    lam: tuple
    k: tuple
    link_gain: tuple

    def __post_init__(self):
        object.__setattr__(self, "lam", tuple(float(g) for g in self.lam))
        object.__setattr__(self, "k", tuple(float(g) for g in self.k))
        object.__setattr__(self, "link_gain", tuple(float(g) for g in self.link_gain))
        for name in ("lam", "k", "link_gain"):
            if any(g <= 0.0 for g in getattr(self, name)):
                raise ValueError(f"control gains {name} must be positive")


def required_joint_motion(traj: DesiredTrajectory, q_hat, q_hat_rate,
                          lam, t: float):
    """Required joint velocities and accelerations at time ``t``.

    The realized observer rate stands in for the unmeasured joint velocity,
    which keeps the required acceleration implementable.
    """
    q_hat = np.asarray(q_hat, dtype=float)
    q_hat_rate = np.asarray(q_hat_rate, dtype=float)
    lam = np.asarray(lam, dtype=float)
    qdot_r = traj.velocity(t) + lam * (traj.position(t) - q_hat)
    qddot_r = traj.acceleration(t) + lam * (traj.velocity(t) - q_hat_rate)
    return qdot_r, qddot_r


def required_velocity_recursion(chain: ChainModel, q, qdot_r, qddot_r,
                                qdot_for_udot):
    """Propagate required velocities and their rates along the chain.

    ``qdot_for_udot`` parameterizes the transform derivatives; the caller
    passes the observed joint rates.
    """
    q = _check_dim(chain, q, "q")
    qdot_r = _check_dim(chain, qdot_r, "qdot_r")
    qddot_r = _check_dim(chain, qddot_r, "qddot_r")
    udot_rates = _check_dim(chain, qdot_for_udot, "qdot_for_udot")
    vels = {"B0": np.zeros(3)}
    accs = {"B0": np.zeros(3)}
    v_prev, a_prev = vels["B0"], accs["B0"]
    for i in range(chain.n):
        u = chain.joint_transform(i + 1, q[i])
        udot = chain.joint_transform_rate(i + 1, q[i], udot_rates[i])
        v = u.T @ v_prev
        v[2] += qdot_r[i]
        a = udot.T @ v_prev + u.T @ a_prev
        a[2] += qddot_r[i]
        vels[f"B{i + 1}"], accs[f"B{i + 1}"] = v, a
        ut = chain.links[i].tip_transform
        v_prev, a_prev = ut.T @ v, ut.T @ a
        vels[f"T{i + 1}"], accs[f"T{i + 1}"] = v_prev, a_prev
    return FrameSet("velocity", vels), FrameSet("velocity", accs)


def required_forces(chain: ChainModel, q, v_r: FrameSet, vdot_r: FrameSet,
                    v_hat, link_gain):
    """Required net and resultant forces plus required actuation torques.

    ``v_hat`` holds the per-link observed velocities; the Coriolis matrix and
    the velocity feedback both consume observations, never measurements.
    Returns ``(F*_r frame set, F_r frame set incl. B0, tau_ar)``.
    """
    q = _check_dim(chain, q, "q")
    link_gain = np.asarray(link_gain, dtype=float)
    phis = chain.absolute_orientations(q)
    fstar_r = {}
    for i in range(chain.n):
        name = f"B{i + 1}"
        if name not in v_r or name not in vdot_r:
            raise KeyError(f"required velocities are missing frame {name}")
        vh = np.asarray(v_hat[i], dtype=float)
        link = chain.links[i]
        fstar_r[name] = (link.mass_matrix @ vdot_r[name]
                         + coriolis_matrix(link, vh[2]) @ v_r[name]
                         + gravity_vector(link, phis[i])
                         + link_gain[i] * (v_r[name] - vh))
    forces = {}
    tau_ar = np.zeros(chain.n)
    f_tip = np.zeros(3)
    for i in range(chain.n, 0, -1):
        forces[f"T{i}"] = f_tip
        f = fstar_r[f"B{i}"] + chain.links[i - 1].tip_transform @ f_tip
        forces[f"B{i}"] = f
        tau_ar[i - 1] = f[2]
        f_tip = chain.joint_transform(i, q[i - 1]) @ f
    forces["B0"] = f_tip
    return FrameSet("force", fstar_r), FrameSet("force", forces), tau_ar


def joint_torque_command(qddot_r: float, qdot_r: float, qdot_hat: float,
                         tau_ar: float, joint: JointModel, k: float) -> float:
    """Torque command of one joint from its required motion and force."""
    return (joint.rotor_inertia * qddot_r + float(joint.friction(qdot_r))
            + tau_ar + k * (qdot_r - qdot_hat))
