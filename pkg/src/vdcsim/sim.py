"""Closed-loop assembly, fixed-step integration and the reference scenario.

The full closed loop couples the plant (joint positions, velocities and the
per-link pose quasi-coordinates whose rates are the body-frame velocities),
the joint observers and the link observers into one state vector integrated
jointly by classic fourth-order Runge-Kutta.  A compiled kernel handles long
runs; the plain implementation in :func:`closed_loop_rates` is the readable
reference and the two must agree (tested).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .chain import ChainModel, JointModel, backward_forces, \
    forward_accelerations, forward_dynamics, forward_poses, \
    link_net_forces, tanh_friction
from .controller import ControlGains, DesiredTrajectory, \
    offset_cosine_trajectory, required_forces, required_joint_motion, \
    required_velocity_recursion
from .observer import JointObserverState, LinkObserverState, ObserverGains
from .spatial import LinkModel, coriolis_matrix, gravity_vector


@dataclass
class ClosedLoopState:
    """Plant and observer states of the whole loop.

    ``link_pose`` holds the measured per-link pose quasi-coordinates (rates
    equal the body-frame velocities); its angular slot is the absolute link
    orientation.
    """

    q: np.ndarray
    qdot: np.ndarray
    link_pose: np.ndarray  # (n, 3)
    joint_obs: list  # n JointObserverState
    link_obs: list  # n LinkObserverState

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float)
        self.qdot = np.asarray(self.qdot, dtype=float)
        self.link_pose = np.asarray(self.link_pose, dtype=float)
        n = self.q.shape[0]
        if (self.qdot.shape != (n,) or self.link_pose.shape != (n, 3)
                or len(self.joint_obs) != n or len(self.link_obs) != n):
            raise ValueError("inconsistent closed-loop state dimensions")

    def to_vector(self) -> np.ndarray:
        n = self.q.shape[0]
        return np.concatenate([
            self.q, self.qdot, self.link_pose.ravel(),
            [s.q_hat for s in self.joint_obs],
            [s.z for s in self.joint_obs],
            np.concatenate([s.p_hat for s in self.link_obs]),
            np.concatenate([s.z for s in self.link_obs]),
        ])

    @classmethod
    def from_vector(cls, y: np.ndarray, n: int) -> "ClosedLoopState":
        y = np.asarray(y, dtype=float)
        if y.shape != (13 * n,):
            raise ValueError(f"state vector must have length {13 * n}")
        q, qdot = y[:n], y[n:2 * n]
        pose = y[2 * n:5 * n].reshape(n, 3)
        qh, zj = y[5 * n:6 * n], y[6 * n:7 * n]
        ph = y[7 * n:10 * n].reshape(n, 3)
        zl = y[10 * n:13 * n].reshape(n, 3)
        return cls(q, qdot, pose,
                   [JointObserverState(qh[i], zj[i]) for i in range(n)],
                   [LinkObserverState(ph[i], zl[i]) for i in range(n)])


@dataclass
class ScenarioConfig:
    """Everything needed to run one closed-loop simulation."""

    chain: ChainModel
    obs_gains: ObserverGains
    ctl_gains: ControlGains
    trajectory: DesiredTrajectory
    initial: ClosedLoopState
    t_end: float
    dt: float
    stride: int = 1

    def __post_init__(self):
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")
        if self.t_end < self.dt:
            raise ValueError("t_end must cover at least one step")
        if self.stride < 1:
            raise ValueError("stride must be at least 1")


def _loop_eval(y, t, config: ScenarioConfig, want_diag: bool):
    """One evaluation of the closed loop: state rates, optionally diagnostics.

    Evaluation order: observer velocity estimates (algebraic), required
    motion and forces, torque command, plant accelerations, then the observer
    state rates driven by plant-derived quantities.
    """
    chain = config.chain
    n = chain.n
    st = ClosedLoopState.from_vector(y, n)
    og, cg, traj = config.obs_gains, config.ctl_gains, config.trajectory

    qdot_hat = np.array([
        st.joint_obs[i].z - og.joint_velocity_gain(i, chain.joints[i])
        * (st.joint_obs[i].q_hat - st.q[i]) for i in range(n)])
    v_hat = []
    for i in range(n):
        m = chain.links[i].mass_matrix
        corr = og.link_gain[i] * np.linalg.solve(
            m, st.link_obs[i].p_hat - st.link_pose[i])
        v_hat.append(st.link_obs[i].z - corr)

    q_hat = np.array([s.q_hat for s in st.joint_obs])
    qdot_r, qddot_r = required_joint_motion(traj, q_hat, qdot_hat,
                                            cg.lam, t)
    v_r, vdot_r = required_velocity_recursion(chain, st.q, qdot_r, qddot_r,
                                              qdot_hat)
    fstar_r, f_r, tau_ar = required_forces(chain, st.q, v_r, vdot_r, v_hat,
                                           cg.link_gain)
    tau = np.array([
        chain.joints[i].rotor_inertia * qddot_r[i]
        + float(chain.joints[i].friction(qdot_r[i]))
        + tau_ar[i] + cg.k[i] * (qdot_r[i] - qdot_hat[i]) for i in range(n)])

    qddot = forward_dynamics(chain, st.q, st.qdot, tau)
    vels, _ = forward_accelerations(chain, st.q, st.qdot, qddot)
    fstar = link_net_forces(chain, st.q, st.qdot, qddot)
    forces, tau_a = backward_forces(chain, st.q, fstar)

    dy = np.empty_like(y)
    dy[:n] = st.qdot
    dy[n:2 * n] = qddot
    for i in range(n):
        dy[2 * n + 3 * i:2 * n + 3 * i + 3] = vels[f"B{i + 1}"]
    dy[5 * n:6 * n] = qdot_hat
    for i in range(n):
        j = chain.joints[i]
        dy[6 * n + i] = (tau[i] - tau_a[i] - float(j.friction(qdot_hat[i]))
                         - og.joint_ell[i] * (st.joint_obs[i].q_hat - st.q[i])
                         ) / j.rotor_inertia
    for i in range(n):
        dy[7 * n + 3 * i:7 * n + 3 * i + 3] = v_hat[i]
        link = chain.links[i]
        rhs = (fstar[f"B{i + 1}"]
               - coriolis_matrix(link, v_hat[i][2]) @ v_hat[i]
               - gravity_vector(link, float(st.link_pose[i][2])))
        dy[10 * n + 3 * i:10 * n + 3 * i + 3] = \
            np.linalg.solve(link.mass_matrix, rhs)
    if not np.all(np.isfinite(dy)):
        raise FloatingPointError(
            f"non-finite closed-loop rates at t={t}: tau={tau}, qddot={qddot}")
    if not want_diag:
        return dy, None

    s = (qdot_hat - st.qdot) + np.asarray(og.joint_ell) * (q_hat - st.q)
    nu_link = np.zeros(n)
    nu_joint = np.zeros(n)
    xsq_link = np.zeros(n)
    xsq_joint = np.zeros(n)
    p_link_in = np.zeros(n)
    p_link_out = np.zeros(n)
    p_joint_in = np.zeros(n)
    v_max = 0.0
    for i in range(n):
        name, tip = f"B{i + 1}", f"T{i + 1}"
        m = chain.links[i].mass_matrix
        verr = v_r[name] - vels[name]
        oerr = v_hat[i] - vels[name]
        nu_link[i] = 0.5 * float(verr @ m @ verr) + 0.5 * float(oerr @ m @ oerr)
        xsq_link[i] = float(verr @ verr + oerr @ oerr)
        er = qdot_r[i] - st.qdot[i]
        eo = qdot_hat[i] - st.qdot[i]
        im, ell = chain.joints[i].rotor_inertia, og.joint_ell[i]
        nu_joint[i] = 0.5 * (im * er ** 2 + im * eo ** 2
                             + ell * (q_hat[i] - st.q[i]) ** 2
                             + im * s[i] ** 2)
        xsq_joint[i] = er ** 2 + eo ** 2 + s[i] ** 2
        ferr_b = f_r[name] - forces[name]
        p_link_in[i] = float(verr @ ferr_b)
        verr_t = v_r[tip] - vels[tip]
        p_link_out[i] = float(verr_t @ (f_r[tip] - forces[tip]))
        if i > 0:
            prev_tip = f"T{i}"
            transmitted = chain.joint_transform(i + 1, st.q[i]) @ ferr_b
            p_joint_in[i] = float((v_r[prev_tip] - vels[prev_tip])
                                  @ transmitted)
        v_max = max(v_max, float(np.linalg.norm(vels[name])))
    residual = float(np.sum(p_link_in - p_link_out)
                     + np.sum(p_joint_in - p_link_in))
    diag = {
        "e": st.q - traj.position(t),
        "q_hat": q_hat, "qdot_hat": qdot_hat, "qdot_r": qdot_r, "s": s,
        "tau": tau, "tau_a": tau_a, "tau_ar": tau_ar,
        "nu_link": nu_link, "nu_joint": nu_joint,
        "xsq_link": xsq_link, "xsq_joint": xsq_joint,
        "p_link_in": p_link_in, "p_link_out": p_link_out,
        "p_joint_in": p_joint_in,
        "vpf_residual": residual, "v_max": v_max,
    }
    return dy, diag


def closed_loop_rates(state, t: float, config: ScenarioConfig):
    """State rates of the full loop; accepts a state object or flat vector."""
    if isinstance(state, ClosedLoopState):
        y = state.to_vector()
    else:
        y = np.asarray(state, dtype=float)
    dy, _ = _loop_eval(y, t, config, want_diag=False)
    return dy


def integrate_rk4(rates, y0, t_end: float, dt: float):
    """Classic fixed-step fourth-order integration of ``dy/dt = rates(y, t)``.

    Returns ``(t, Y)`` including the initial sample.  If a step produces a
    non-finite state the trajectory is truncated at the last good sample.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    nsteps = int(round(t_end / dt))
    y = np.asarray(y0, dtype=float).copy()
    ts = np.empty(nsteps + 1)
    ys = np.empty((nsteps + 1, y.size))
    ts[0], ys[0] = 0.0, y
    for k in range(nsteps):
        t = k * dt
        try:
            k1 = rates(y, t)
            k2 = rates(y + 0.5 * dt * k1, t + 0.5 * dt)
            k3 = rates(y + 0.5 * dt * k2, t + 0.5 * dt)
            k4 = rates(y + dt * k3, t + dt)
        except FloatingPointError:
            return ts[:k + 1], ys[:k + 1]
        y = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(y)):
            return ts[:k + 1], ys[:k + 1]
        ts[k + 1], ys[k + 1] = (k + 1) * dt, y
    return ts, ys


@dataclass
class TrajectoryRecord:
    """Uniformly sampled closed-loop trajectory with audit diagnostics.

    Per-sample arrays; two-dimensional ones have one column per subsystem.
    ``xsq`` is the squared norm of the stacked error coordinates; the ``p_*``
    columns are the virtual power flows at the subsystem cuts and
    ``vpf_residual`` their telescoped sum, which cancels to rounding.
    """

    t: np.ndarray
    states: np.ndarray
    q: np.ndarray
    qdot: np.ndarray
    q_d: np.ndarray
    e: np.ndarray
    q_hat: np.ndarray
    qdot_hat: np.ndarray
    qdot_r: np.ndarray
    s: np.ndarray
    tau: np.ndarray
    tau_a: np.ndarray
    tau_ar: np.ndarray
    nu_link: np.ndarray
    nu_joint: np.ndarray
    xsq_link: np.ndarray
    xsq_joint: np.ndarray
    p_link_in: np.ndarray
    p_link_out: np.ndarray
    p_joint_in: np.ndarray
    vpf_residual: np.ndarray
    v_max: np.ndarray

    @property
    def nu(self) -> np.ndarray:
        return self.nu_link.sum(axis=1) + self.nu_joint.sum(axis=1)

    @property
    def xsq(self) -> np.ndarray:
        return self.xsq_link.sum(axis=1) + self.xsq_joint.sum(axis=1)

    def realized_velocity_bound(self) -> float:
        """Largest link-frame velocity norm seen along the run."""
        return float(self.v_max.max())


def _record_from_samples(config, ts, ys, diags):
    n = config.chain.n
    get = lambda key: np.array([d[key] for d in diags])
    return TrajectoryRecord(
        t=ts, states=ys,
        q=ys[:, :n], qdot=ys[:, n:2 * n],
        q_d=np.array([config.trajectory.position(t) for t in ts]),
        e=get("e"), q_hat=get("q_hat"), qdot_hat=get("qdot_hat"),
        qdot_r=get("qdot_r"), s=get("s"),
        tau=get("tau"), tau_a=get("tau_a"), tau_ar=get("tau_ar"),
        nu_link=get("nu_link"), nu_joint=get("nu_joint"),
        xsq_link=get("xsq_link"), xsq_joint=get("xsq_joint"),
        p_link_in=get("p_link_in"), p_link_out=get("p_link_out"),
        p_joint_in=get("p_joint_in"),
        vpf_residual=get("vpf_residual"), v_max=get("v_max"),
    )


def _fast_encodable(config: ScenarioConfig) -> bool:
    if config.trajectory.family is None:
        return False
    if config.trajectory.family[0] != "offset_cosine":
        return False
    return all(j.friction.kind in ("tanh", "viscous")
               for j in config.chain.joints)


def simulate(config: ScenarioConfig, method: str = "auto") -> TrajectoryRecord:
    """Run the closed loop and collect full diagnostics at every sample.

    ``method``: ``"auto"`` uses the compiled kernel when the friction and
    trajectory models have closed forms it knows, ``"fast"`` forces it,
    ``"reference"`` forces the plain implementation.
    """
    if method not in ("auto", "fast", "reference"):
        raise ValueError(f"unknown method {method!r}")
    encodable = _fast_encodable(config)
    if method == "fast" and not encodable:
        raise ValueError("compiled kernel does not support this friction or "
                         "trajectory model")
    if method != "reference" and encodable:
        from . import _fast
        return _fast.simulate_fast(config)

    y = config.initial.to_vector()
    nsteps = int(round(config.t_end / config.dt))
    nrec = nsteps // config.stride + 1
    ts = np.empty(nrec)
    ys = np.empty((nrec, y.size))
    diags = []
    dt = config.dt
    rec = 0
    for k in range(nsteps + 1):
        t = k * dt
        if k % config.stride == 0:
            _, diag = _loop_eval(y, t, config, want_diag=True)
            ts[rec], ys[rec] = t, y
            diags.append(diag)
            rec += 1
        if k == nsteps:
            break
        k1, _ = _loop_eval(y, t, config, False)
        k2, _ = _loop_eval(y + 0.5 * dt * k1, t + 0.5 * dt, config, False)
        k3, _ = _loop_eval(y + 0.5 * dt * k2, t + 0.5 * dt, config, False)
        k4, _ = _loop_eval(y + dt * k3, t + dt, config, False)
        y = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return _record_from_samples(config, ts[:rec], ys[:rec], diags)


def two_dof_scenario(t_end: float = 20.0, dt: float = 1e-4,
                     stride: int = 1) -> ScenarioConfig:
    """Reference scenario: a two-link arm starting 0.2 rad off its target.

    Both links have unit mass, length and central inertia with the center of
    mass at the distal end; rotors have inertia 0.1 with unit tanh friction.
    """
    link = LinkModel(mass=1.0, com_offset=1.0, inertia_com=1.0, length=1.0)
    joint = JointModel(rotor_inertia=0.1, friction=tanh_friction())
    chain = ChainModel((link, link), (joint, joint))
    obs = ObserverGains(link_gain=(200.0, 200.0), joint_ell=(200.0, 200.0))
    ctl = ControlGains(lam=(10.0, 10.0), k=(10.0, 10.0),
                       link_gain=(100.0, 100.0))
    traj = offset_cosine_trajectory(offset=(0.8, 0.8),
                                    amplitude=(-1.0, -1.0),
                                    period=(8.0, 10.0))
    q0 = np.zeros(2)
    poses = forward_poses(chain, q0)
    link_pose = np.array([poses["B1"], poses["B2"]])
    initial = ClosedLoopState(
        q=q0, qdot=np.zeros(2), link_pose=link_pose,
        joint_obs=[JointObserverState(-0.2, 0.0) for _ in range(2)],
        link_obs=[LinkObserverState(link_pose[i].copy(), np.zeros(3))
                  for i in range(2)],
    )
    return ScenarioConfig(chain, obs, ctl, traj, initial, t_end, dt, stride)


def lagrangian_oracle(chain: ChainModel, q, qdot, tau,
                      mass_scale: float = 1.0) -> np.ndarray:
    """Joint accelerations of a two-link arm from closed-form equations.

    Independent of the recursive machinery: the inertia matrix, velocity
    terms and gravity vector come from textbook two-link expressions in the
    link parameters.  ``mass_scale`` multiplies the second link's mass (used
    for fault-injection checks of the comparison harness).
    """
    if chain.n != 2:
        raise ValueError("closed-form model covers exactly two links")
    q = np.asarray(q, dtype=float)
    qdot = np.asarray(qdot, dtype=float)
    tau = np.asarray(tau, dtype=float)
    l1, l2 = chain.links
    m1, a1, i1 = l1.mass, l1.com_offset, l1.inertia_com
    m2, a2, i2 = l2.mass * mass_scale, l2.com_offset, l2.inertia_com
    length1 = l1.length
    g = l1.gravity
    im1 = chain.joints[0].rotor_inertia
    im2 = chain.joints[1].rotor_inertia
    c2, s2 = np.cos(q[1]), np.sin(q[1])
    h = np.array([
        [i1 + i2 + m1 * a1 ** 2
         + m2 * (length1 ** 2 + a2 ** 2 + 2.0 * length1 * a2 * c2) + im1,
         i2 + m2 * (a2 ** 2 + length1 * a2 * c2)],
        [i2 + m2 * (a2 ** 2 + length1 * a2 * c2),
         i2 + m2 * a2 ** 2 + im2],
    ])
    vel = np.array([
        -m2 * length1 * a2 * s2 * (2.0 * qdot[0] * qdot[1] + qdot[1] ** 2),
        m2 * length1 * a2 * s2 * qdot[0] ** 2,
    ])
    phi1 = chain.base_rotation + q[0]
    phi12 = phi1 + q[1]
    grav = np.array([
        (m1 * a1 + m2 * length1) * g * np.cos(phi1)
        + m2 * a2 * g * np.cos(phi12),
        m2 * a2 * g * np.cos(phi12),
    ])
    fric = np.array([float(chain.joints[i].friction(qdot[i]))
                     for i in range(2)])
    return np.linalg.solve(h, tau - vel - grav - fric)
