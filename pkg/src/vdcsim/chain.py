"""Open-chain bookkeeping: frames, velocity/force recursions and dynamics.

The chain alternates joints and links.  Frame ``B_i`` sits at joint ``i``
(fixed to link ``i``), frame ``T_i`` at the tip of link ``i``; ``B_0`` is the
stationary base.  Velocities propagate outward from the base, forces
propagate back from the free tip ``T_n``, and the actuation torque of joint
``i`` is the angular component of the resultant force at ``B_i``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .spatial import (
    LinkModel,
    coriolis_matrix,
    gravity_vector,
    net_force,
    planar_transform_matrix,
    planar_transform_matrix_rate,
)


@dataclass(frozen=True)
class FrictionModel:
    """Monotone, antisymmetric, globally Lipschitz joint friction.

    ``kind`` names a primitive family (``tanh``: a*tanh(b*x); ``viscous``:
    a*x; ``custom``: arbitrary callable).  ``lipschitz`` is the stored global
    Lipschitz constant m_c.
    """

    kind: str
    a: float = 1.0
    b: float = 1.0
    func: Callable[[float], float] | None = None
    lipschitz: float = field(default=0.0)

    def __post_init__(self):
        if self.kind not in ("tanh", "viscous", "custom"):
            raise ValueError(f"unknown friction kind {self.kind!r}")
        if self.kind == "custom" and self.func is None:
            raise ValueError("custom friction requires a callable")
        if self.lipschitz <= 0.0:
            if self.kind == "tanh":
                object.__setattr__(self, "lipschitz", abs(self.a * self.b))
            elif self.kind == "viscous":
                object.__setattr__(self, "lipschitz", abs(self.a))
            else:
                raise ValueError("custom friction requires an explicit lipschitz bound")

    def __call__(self, x):
        if self.kind == "tanh":
            return self.a * np.tanh(self.b * np.asarray(x, dtype=float))
        if self.kind == "viscous":
            return self.a * np.asarray(x, dtype=float)
        return self.func(x)


def tanh_friction(a: float = 1.0, b: float = 1.0) -> FrictionModel:
    return FrictionModel("tanh", a=a, b=b)


def zero_friction() -> FrictionModel:
    return FrictionModel("viscous", a=0.0, lipschitz=1e-12)


@dataclass(frozen=True)
class JointModel:
    """Rotor inertia and friction model of one revolute joint."""

    rotor_inertia: float
    friction: FrictionModel = field(default_factory=tanh_friction)

    def __post_init__(self):
        if self.rotor_inertia <= 0.0:
            raise ValueError("rotor inertia must be positive")


@dataclass(frozen=True)
class ChainModel:
    """Ordered alternating joint/link sequence rooted at a fixed base."""

    links: tuple
    joints: tuple
    base_rotation: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "links", tuple(self.links))
        object.__setattr__(self, "joints", tuple(self.joints))
        if len(self.links) != len(self.joints):
            raise ValueError("need one joint per link")
        if len(self.links) < 1:
            raise ValueError("chain needs at least one link")

    @property
    def n(self) -> int:
        return len(self.links)

    def frame_names(self) -> list[str]:
        names = ["B0"]
        for i in range(1, self.n + 1):
            names += [f"B{i}", f"T{i}"]
        return names

    def joint_transform(self, i: int, q_i: float) -> np.ndarray:
        """Raw transform from ``T_{i-1}`` (or ``B_0``) into ``B_i``."""
        return planar_transform_matrix(q_i, (0.0, 0.0))

    def joint_transform_rate(self, i: int, q_i: float, rate: float) -> np.ndarray:
        return planar_transform_matrix_rate(q_i, (0.0, 0.0), rate)

    def absolute_orientations(self, q) -> np.ndarray:
        return self.base_rotation + np.cumsum(np.asarray(q, dtype=float))


@dataclass
class FrameSet:
    """Per-frame vectors of one kind, indexed by chain frame name."""

    kind: str
    values: dict

    def __getitem__(self, frame: str) -> np.ndarray:
        return self.values[frame]

    def __contains__(self, frame: str) -> bool:
        return frame in self.values


def _check_dim(chain: ChainModel, vec, name: str):
    vec = np.asarray(vec, dtype=float)
    if vec.shape != (chain.n,):
        raise ValueError(f"{name} must have length {chain.n}, got shape {vec.shape}")
    return vec


def forward_poses(chain: ChainModel, q) -> FrameSet:
    """World pose (x, y, phi) of every chain frame at configuration ``q``."""
    q = _check_dim(chain, q, "q")
    phis = chain.absolute_orientations(q)
    poses = {"B0": np.array([0.0, 0.0, chain.base_rotation])}
    pos = np.zeros(2)
    for i in range(chain.n):
        phi = phis[i]
        poses[f"B{i + 1}"] = np.array([pos[0], pos[1], phi])
        pos = pos + chain.links[i].length * np.array([np.cos(phi), np.sin(phi)])
        poses[f"T{i + 1}"] = np.array([pos[0], pos[1], phi])
    return FrameSet("pose", poses)


def forward_velocities(chain: ChainModel, q, qdot) -> FrameSet:
    """Propagate frame velocities outward from the zero-velocity base."""
    q = _check_dim(chain, q, "q")
    qdot = _check_dim(chain, qdot, "qdot")
    vels = {"B0": np.zeros(3)}
    prev = vels["B0"]
    for i in range(chain.n):
        u = chain.joint_transform(i + 1, q[i])
        v = u.T @ prev
        v[2] += qdot[i]
        vels[f"B{i + 1}"] = v
        prev = chain.links[i].tip_transform.T @ v
        vels[f"T{i + 1}"] = prev
    return FrameSet("velocity", vels)


def forward_accelerations(chain: ChainModel, q, qdot, qddot,
                          qdot_for_udot=None) -> tuple[FrameSet, FrameSet]:
    """Velocities and their analytic time derivatives along the chain.

    ``qdot_for_udot`` selects the rates used to differentiate the joint
    transforms; it defaults to ``qdot`` (the plant side).
    """
    q = _check_dim(chain, q, "q")
    qdot = _check_dim(chain, qdot, "qdot")
    qddot = _check_dim(chain, qddot, "qddot")
    udot_rates = qdot if qdot_for_udot is None else _check_dim(
        chain, qdot_for_udot, "qdot_for_udot")
    vels = {"B0": np.zeros(3)}
    accs = {"B0": np.zeros(3)}
    v_prev, a_prev = vels["B0"], accs["B0"]
    for i in range(chain.n):
        u = chain.joint_transform(i + 1, q[i])
        udot = chain.joint_transform_rate(i + 1, q[i], udot_rates[i])
        v = u.T @ v_prev
        v[2] += qdot[i]
        a = udot.T @ v_prev + u.T @ a_prev
        a[2] += qddot[i]
        vels[f"B{i + 1}"], accs[f"B{i + 1}"] = v, a
        ut = chain.links[i].tip_transform
        v_prev, a_prev = ut.T @ v, ut.T @ a
        vels[f"T{i + 1}"], accs[f"T{i + 1}"] = v_prev, a_prev
    return FrameSet("velocity", vels), FrameSet("velocity", accs)


def backward_forces(chain: ChainModel, q, netforces: FrameSet):
    """Propagate resultant forces from the free tip back to the base.

    Returns the resultant-force frame set (including ``B0``) and the
    actuation torques ``tau_a``.
    """
    q = _check_dim(chain, q, "q")
    for i in range(1, chain.n + 1):
        if f"B{i}" not in netforces:
            raise KeyError(f"netforces is missing frame B{i}")
    forces = {}
    tau_a = np.zeros(chain.n)
    f_tip = np.zeros(3)
    for i in range(chain.n, 0, -1):
        forces[f"T{i}"] = f_tip
        f = netforces[f"B{i}"] + chain.links[i - 1].tip_transform @ f_tip
        forces[f"B{i}"] = f
        tau_a[i - 1] = f[2]
        f_tip = chain.joint_transform(i, q[i - 1]) @ f
    forces["B0"] = f_tip
    return FrameSet("force", forces), tau_a


def link_net_forces(chain: ChainModel, q, qdot, qddot,
                    qdot_for_udot=None) -> FrameSet:
    """Net force/moment of every link for the given joint-space motion."""
    q = _check_dim(chain, q, "q")
    vels, accs = forward_accelerations(chain, q, qdot, qddot, qdot_for_udot)
    phis = chain.absolute_orientations(q)
    values = {}
    for i in range(chain.n):
        name = f"B{i + 1}"
        values[name] = net_force(chain.links[i], vels[name], accs[name], phis[i])
    return FrameSet("force", values)


def inverse_dynamics(chain: ChainModel, q, qdot, qddot) -> np.ndarray:
    """Joint torques realizing ``qddot`` at state ``(q, qdot)``."""
    qdot = _check_dim(chain, qdot, "qdot")
    qddot = _check_dim(chain, qddot, "qddot")
    netforces = link_net_forces(chain, q, qdot, qddot)
    _, tau_a = backward_forces(chain, q, netforces)
    tau = np.zeros(chain.n)
    for i, joint in enumerate(chain.joints):
        tau[i] = joint.rotor_inertia * qddot[i] + joint.friction(qdot[i]) + tau_a[i]
    return tau


def joint_space_inertia(chain: ChainModel, q) -> np.ndarray:
    """Joint-space inertia matrix assembled from unit-acceleration sweeps."""
    q = _check_dim(chain, q, "q")
    n = chain.n
    zero = np.zeros(n)
    bias0 = inverse_dynamics(chain, q, zero, zero)
    h = np.zeros((n, n))
    for j in range(n):
        ej = np.zeros(n)
        ej[j] = 1.0
        h[:, j] = inverse_dynamics(chain, q, zero, ej) - bias0
    return h


def forward_dynamics(chain: ChainModel, q, qdot, tau) -> np.ndarray:
    """Joint accelerations produced by ``tau`` at state ``(q, qdot)``."""
    tau = _check_dim(chain, tau, "tau")
    h = joint_space_inertia(chain, q)
    bias = inverse_dynamics(chain, q, qdot, np.zeros(chain.n))
    return np.linalg.solve(h, tau - bias)


def kinetic_energy(chain: ChainModel, q, qdot) -> float:
    vels = forward_velocities(chain, q, qdot)
    qdot = np.asarray(qdot, dtype=float)
    e = 0.0
    for i in range(chain.n):
        v = vels[f"B{i + 1}"]
        e += 0.5 * float(v @ chain.links[i].mass_matrix @ v)
        e += 0.5 * chain.joints[i].rotor_inertia * qdot[i] ** 2
    return e


def potential_energy(chain: ChainModel, q) -> float:
    poses = forward_poses(chain, q)
    e = 0.0
    for i in range(chain.n):
        base = poses[f"B{i + 1}"]
        y_com = base[1] + chain.links[i].com_offset * np.sin(base[2])
        e += chain.links[i].mass * chain.links[i].gravity * y_com
    return e
