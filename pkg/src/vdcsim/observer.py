"""Decentralized velocity observers for links and joints.

Each link carries a pose/velocity observer driven by the measured link pose
and net force; each joint carries a position/velocity observer driven by the
input torque and the actuation torque.  Both are local: no observer couples
to any other subsystem.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .chain import JointModel
from .spatial import LinkModel, coriolis_matrix, gravity_vector


@dataclass
class LinkObserverState:
    """Pose estimate and auxiliary velocity state of one link observer."""

    p_hat: np.ndarray
    z: np.ndarray

    def __post_init__(self):
        self.p_hat = np.asarray(self.p_hat, dtype=float)
        self.z = np.asarray(self.z, dtype=float)
        if not (np.all(np.isfinite(self.p_hat)) and np.all(np.isfinite(self.z))):
            raise ValueError("non-finite link observer state")


@dataclass
class JointObserverState:
    """Position estimate and auxiliary state of one joint observer."""

    q_hat: float
    z: float

    def __post_init__(self):
        if not (np.isfinite(self.q_hat) and np.isfinite(self.z)):
            raise ValueError("non-finite joint observer state")


@dataclass(frozen=True)
class ObserverGains:
    """Per-link gain ``L_B`` (scalar, times identity) and per-joint ``ell``.

    The joint velocity gain is fixed by construction as
    ``L = ell + 1 / rotor_inertia``.
    """

    link_gain: tuple
    joint_ell: tuple

    def __post_init__(self):
        object.__setattr__(self, "link_gain", tuple(float(g) for g in self.link_gain))
        object.__setattr__(self, "joint_ell", tuple(float(g) for g in self.joint_ell))
        if any(g <= 0.0 for g in self.link_gain):
            raise ValueError("link observer gains must be positive")
        if any(g <= 0.0 for g in self.joint_ell):
            raise ValueError("joint observer gains must be positive")

    def joint_velocity_gain(self, i: int, joint: JointModel) -> float:
        return self.joint_ell[i] + 1.0 / joint.rotor_inertia


def link_observer_rates(state: LinkObserverState, f_star, p_meas,
                        link: LinkModel, link_gain: float):
    """State rates of one link observer plus the realized velocity estimate.

    The pose estimate is corrected toward the measurement; the auxiliary
    state copies the link dynamics evaluated at the estimated velocity.
    """
    f_star = np.asarray(f_star, dtype=float)
    p_meas = np.asarray(p_meas, dtype=float)
    m = link.mass_matrix
    correction = link_gain * np.linalg.solve(m, state.p_hat - p_meas)
    v_hat = state.z - correction
    p_hat_dot = v_hat
    # gravity is evaluated at the measured orientation
    gravity = gravity_vector(link, float(p_meas[2]))
    z_dot = np.linalg.solve(
        m, f_star - coriolis_matrix(link, v_hat[2]) @ v_hat - gravity)
    return (p_hat_dot, z_dot), v_hat


def joint_observer_rates(state: JointObserverState, tau: float, tau_a: float,
                         q_meas: float, joint: JointModel, ell: float,
                         velocity_gain: float | None = None):
    """State rates of one joint observer plus the realized velocity estimate."""
    big_l = (ell + 1.0 / joint.rotor_inertia
             if velocity_gain is None else velocity_gain)
    err = state.q_hat - q_meas
    qdot_hat = state.z - big_l * err
    z_dot = (tau - tau_a - float(joint.friction(qdot_hat)) - ell * err) \
        / joint.rotor_inertia
    return (qdot_hat, z_dot), qdot_hat


def joint_composite_error(qdot_hat: float, qdot: float, q_hat: float, q: float,
                          ell: float) -> float:
    """Filtered joint observer error ``s = (qdot_hat - qdot) + ell (q_hat - q)``."""
    return (qdot_hat - qdot) + ell * (q_hat - q)


def observer_error_functionals(chain, gains: ObserverGains,
                               v_hat_errors, joint_states, q, qdot, qdot_hat):
    """Quadratic observer functionals, evaluated against the true state.

    ``v_hat_errors`` holds per-link ``v_hat - v`` vectors; ``joint_states``
    the joint observer states.  Returns per-link and per-joint functional
    values and the composite errors ``s_i``.
    """
    q = np.asarray(q, dtype=float)
    qdot = np.asarray(qdot, dtype=float)
    qdot_hat = np.asarray(qdot_hat, dtype=float)
    nu_link = np.zeros(chain.n)
    nu_joint = np.zeros(chain.n)
    s = np.zeros(chain.n)
    for i in range(chain.n):
        e = np.asarray(v_hat_errors[i], dtype=float)
        nu_link[i] = 0.5 * float(e @ chain.links[i].mass_matrix @ e)
        im = chain.joints[i].rotor_inertia
        ell = gains.joint_ell[i]
        eq = joint_states[i].q_hat - q[i]
        ev = qdot_hat[i] - qdot[i]
        s[i] = joint_composite_error(qdot_hat[i], qdot[i], joint_states[i].q_hat,
                                     q[i], ell)
        nu_joint[i] = 0.5 * (im * ev ** 2 + ell * eq ** 2 + im * s[i] ** 2)
    return {"nu_link_obs": nu_link, "nu_joint_obs": nu_joint, "s": s}
