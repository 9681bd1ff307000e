"""Executable stability theory for the observer-based controller.

Everything here is a numerical counterpart of the convergence analysis:
virtual power flows between adjacent subsystems, per-link and per-joint gain
certificates, the guaranteed region-of-attraction radius, the total quadratic
functional over the error state, and a trajectory decay audit that checks the
claimed inequalities sample by sample.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .chain import ChainModel
from .spatial import FrameMismatchError, SpatialVector


@dataclass(frozen=True)
class StabilityBounds:
    """Model and gain derived constants entering the convergence analysis.

    Per link: ``coriolis_bound`` (M_c) and ``velocity_bound`` (M_v, a sup
    bound on the link frame velocity norm).  Per joint: ``friction_lipschitz``
    (m_c).  Chain-level: ``transform_bound`` M_U (max transform gain between
    consecutive subsystem frames, at least 1), ``alpha_m``/``alpha_M`` (global
    eigenvalue bracket of the quadratic functional) and ``alpha_p`` (decay
    rate).
    """

    coriolis_bound: tuple
    velocity_bound: tuple
    friction_lipschitz: tuple
    transform_bound: float
    alpha_m: float
    alpha_M: float
    alpha_p: float

    def __post_init__(self):
        for name in ("coriolis_bound", "velocity_bound", "friction_lipschitz"):
            object.__setattr__(self, name,
                               tuple(float(v) for v in getattr(self, name)))
            if any(v <= 0.0 for v in getattr(self, name)):
                raise ValueError(f"{name} entries must be positive")
        if self.transform_bound < 1.0:
            raise ValueError("transform bound is at least 1 by definition")
        if not 0.0 < self.alpha_m <= self.alpha_M:
            raise ValueError("need 0 < alpha_m <= alpha_M")


def certified_velocity_bound(link_obs_gain: float, link_ctl_gain: float,
                             coriolis_bound: float) -> float:
    """Largest velocity norm for which the link gain condition still holds.

    Inverts the link gain inequality: at this value the link certificate
    margin is exactly zero.
    """
    inner = 1.0 + 2.0 * link_obs_gain - link_ctl_gain
    if inner < 0.0:
        raise ValueError("link gains out of range: observer gain too small "
                         "relative to control gain")
    return (np.sqrt(inner) - 1.0) / coriolis_bound


def check_link_gains(link_ctl_gain: float, link_obs_gain: float,
                     coriolis_bound: float, velocity_bound: float):
    """Certificate for one link: control gain above 1 and observer gain
    dominating the worst-case Coriolis coupling.

    Returns ``(passed, margin)`` where ``margin`` is the smallest signed
    distance to the two strict inequalities.
    """
    if link_ctl_gain <= 0.0 or link_obs_gain <= 0.0 or coriolis_bound <= 0.0:
        raise ValueError("gains and the Coriolis bound must be positive")
    if velocity_bound < 0.0:
        raise ValueError("velocity bound must be nonnegative")
    mcv = coriolis_bound * velocity_bound
    required = mcv * (1.0 + 0.5 * mcv) + 0.5 * link_ctl_gain
    margin = min(link_ctl_gain - 1.0, link_obs_gain - required)
    return margin > 0.0, margin


def check_joint_gains(k: float, ell: float, rotor_inertia: float,
                      friction_lipschitz: float):
    """Certificate for one joint: the rotor/velocity-gain product must beat
    both the friction Lipschitz constant and the velocity feedback gain.

    Returns ``(passed, margin)``.
    """
    if k <= 0.0:
        raise ValueError("velocity feedback gain k must be positive")
    if rotor_inertia <= 0.0:
        raise ValueError("rotor inertia must be positive")
    big_l = ell + 1.0 / rotor_inertia
    margin = min(2.0 * rotor_inertia * big_l
                 - max(2.0, friction_lipschitz ** 2 + k), ell)
    return margin > 0.0, margin


def compute_bounds(chain: ChainModel, obs_gains, ctl_gains,
                   velocity_bound=None) -> StabilityBounds:
    """Assemble :class:`StabilityBounds` for a chain and gain set.

    ``velocity_bound`` may be a per-link array of realized sup velocity norms
    (e.g. measured from a simulation); by default the certified bound is
    used, which makes the link decay margin zero by construction, so audits
    should pass the realized value.
    """
    n = chain.n
    m_c = tuple(link.coriolis_bound for link in chain.links)
    if velocity_bound is None:
        m_v = tuple(
            certified_velocity_bound(obs_gains.link_gain[i],
                                     ctl_gains.link_gain[i], m_c[i])
            for i in range(n))
    else:
        m_v = tuple(np.broadcast_to(np.asarray(velocity_bound, float), (n,)))
    lip = tuple(j.friction.lipschitz for j in chain.joints)

    eigs = np.concatenate([np.linalg.eigvalsh(l.mass_matrix)
                           for l in chain.links])
    rotor = np.array([j.rotor_inertia for j in chain.joints])
    ell = np.asarray(obs_gains.joint_ell, dtype=float)
    alpha_m = float(min(eigs.min(), rotor.min()))
    alpha_M = float(max(eigs.max(), (rotor + 1.0 / ell).max()))

    m_u = 1.0
    for i, link in enumerate(chain.links):
        stage = chain.joint_transform(i + 1, 0.0) @ link.tip_transform
        m_u = max(m_u, float(np.linalg.norm(stage, 2)))

    margins = [0.5]
    for i in range(n):
        margins.append(0.5 * (ctl_gains.link_gain[i] - 1.0))
        mcv = m_c[i] * m_v[i]
        margins.append(obs_gains.link_gain[i]
                       - mcv * (1.0 + 0.5 * mcv)
                       - 0.5 * ctl_gains.link_gain[i])
        margins.append(ctl_gains.k[i])
        big_l = ell[i] + 1.0 / rotor[i]
        margins.append(rotor[i] * big_l
                       - 0.5 * (lip[i] ** 2 + ctl_gains.k[i]))
    alpha_p = float(min(margins))

    return StabilityBounds(m_c, m_v, lip, m_u, alpha_m, alpha_M, alpha_p)


def virtual_power_flow(v_r: SpatialVector, v: SpatialVector,
                       f_r: SpatialVector, f: SpatialVector) -> float:
    """Virtual power absorbed at a cut: (V_r - V) . (F_r - F)."""
    frames = {v_r.frame, v.frame, f_r.frame, f.frame}
    if len(frames) != 1:
        raise FrameMismatchError(
            f"virtual power flow mixes frames {sorted(frames)}")
    return float((v_r.data - v.data) @ (f_r.data - f.data))


def attraction_radius(chain: ChainModel, obs_gains, ctl_gains,
                      bounds: StabilityBounds, traj_velocity_bound,
                      lam) -> float:
    """Guaranteed radius of the exponential convergence region.

    ``traj_velocity_bound`` holds per-joint sup bounds on the desired joint
    velocities, ``lam`` the required-velocity gains.  A nonpositive return
    value means the certified region is empty; increasing the link observer
    gains enlarges it.
    """
    n = chain.n
    md = np.broadcast_to(np.asarray(traj_velocity_bound, float), (n,))
    lam = np.broadcast_to(np.asarray(lam, float), (n,))
    inv_am = 1.0 / bounds.alpha_M
    if np.any(4.0 * lam <= inv_am):
        raise ValueError("required-velocity gains too small for the chosen "
                         "functional bracket (need 4*lambda > 1/alpha_M)")
    mu_pow = bounds.transform_bound ** np.arange(1, n + 1)
    r = np.inf
    for i in range(n):
        kernel = certified_velocity_bound(obs_gains.link_gain[i],
                                          ctl_gains.link_gain[i],
                                          bounds.coriolis_bound[i])
        num = kernel - float(np.sum(mu_pow[:i + 1] * md[:i + 1]))
        den = 1.0 + float(np.sum(
            mu_pow[:i + 1] * 16.0 * lam[:i + 1]
            / (4.0 * lam[:i + 1] - inv_am)))
        r = min(r, np.sqrt(bounds.alpha_m / bounds.alpha_M) * num / den)
    return float(r)


@dataclass
class ErrorStateVector:
    """Stacked closed-loop error coordinates.

    Per link: required-velocity error ``V_r - V`` and observer error
    ``V_hat - V`` (d components each); per joint: ``qdot_r - qdot``,
    ``qdot_hat - qdot`` and the filtered observer error ``s``.
    """

    vel_required_err: np.ndarray  # (n, d)
    vel_observer_err: np.ndarray  # (n, d)
    qdot_required_err: np.ndarray  # (n,)
    qdot_observer_err: np.ndarray  # (n,)
    s: np.ndarray  # (n,)

    def __post_init__(self):
        self.vel_required_err = np.atleast_2d(
            np.asarray(self.vel_required_err, dtype=float))
        self.vel_observer_err = np.atleast_2d(
            np.asarray(self.vel_observer_err, dtype=float))
        for name in ("qdot_required_err", "qdot_observer_err", "s"):
            setattr(self, name, np.atleast_1d(
                np.asarray(getattr(self, name), dtype=float)))
        n, d = self.vel_required_err.shape
        if (self.vel_observer_err.shape != (n, d)
                or self.qdot_required_err.shape != (n,)
                or self.qdot_observer_err.shape != (n,)
                or self.s.shape != (n,)):
            raise ValueError("inconsistent error state dimensions")

    @property
    def n(self) -> int:
        return self.vel_required_err.shape[0]

    def concatenate(self) -> np.ndarray:
        """Flat error vector of dimension n*(2d + 3)."""
        return np.concatenate([
            self.vel_required_err.ravel(),
            self.vel_observer_err.ravel(),
            self.qdot_required_err,
            self.qdot_observer_err,
            self.s,
        ])

    def norm_sq(self) -> float:
        x = self.concatenate()
        return float(x @ x)


def lyapunov_total(chain: ChainModel, obs_gains, x: ErrorStateVector):
    """Total quadratic functional and its per-subsystem pieces.

    The joint position estimation error is recovered from the filtered error
    as ``(s - (qdot_hat - qdot)) / ell``.  Returns ``(nu, parts)`` with
    ``parts['nu_link']`` and ``parts['nu_joint']`` arrays.
    """
    nu_link = np.zeros(chain.n)
    nu_joint = np.zeros(chain.n)
    for i in range(chain.n):
        m = chain.links[i].mass_matrix
        er = x.vel_required_err[i]
        eo = x.vel_observer_err[i]
        nu_link[i] = 0.5 * float(er @ m @ er) + 0.5 * float(eo @ m @ eo)
        im = chain.joints[i].rotor_inertia
        ell = obs_gains.joint_ell[i]
        eq = (x.s[i] - x.qdot_observer_err[i]) / ell
        nu_joint[i] = 0.5 * (im * x.qdot_required_err[i] ** 2
                             + im * x.qdot_observer_err[i] ** 2
                             + ell * eq ** 2
                             + im * x.s[i] ** 2)
    nu = float(nu_link.sum() + nu_joint.sum())
    return nu, {"nu_link": nu_link, "nu_joint": nu_joint}


@dataclass(frozen=True)
class GainCertificate:
    """Aggregated verdicts for a chain and gain set."""

    link_margins: tuple
    joint_margins: tuple
    radius: float
    passed: bool
    message: str

    def __str__(self):
        lines = [f"overall: {'PASS' if self.passed else 'FAIL'}",
                 f"attraction radius: {self.radius:.6g}"]
        for i, m in enumerate(self.link_margins):
            lines.append(f"link {i + 1}: margin {m:+.6g} "
                         f"({'ok' if m > 0 else 'violated'})")
        for i, m in enumerate(self.joint_margins):
            lines.append(f"joint {i + 1}: margin {m:+.6g} "
                         f"({'ok' if m > 0 else 'violated'})")
        if self.message:
            lines.append(self.message)
        return "\n".join(lines)


def gain_certificate(chain: ChainModel, obs_gains, ctl_gains,
                     traj_velocity_bound, velocity_bound=None) -> GainCertificate:
    """Run all per-subsystem certificates plus the radius computation."""
    bounds = compute_bounds(chain, obs_gains, ctl_gains, velocity_bound)
    link_margins = []
    joint_margins = []
    for i in range(chain.n):
        m_v = bounds.velocity_bound[i]
        if velocity_bound is None:
            # certified bound puts the margin exactly on the boundary;
            # certify strictly inside it
            m_v *= 1.0 - 1e-9
        _, m = check_link_gains(ctl_gains.link_gain[i], obs_gains.link_gain[i],
                                bounds.coriolis_bound[i], m_v)
        link_margins.append(m)
        _, m = check_joint_gains(ctl_gains.k[i], obs_gains.joint_ell[i],
                                 chain.joints[i].rotor_inertia,
                                 bounds.friction_lipschitz[i])
        joint_margins.append(m)
    try:
        radius = attraction_radius(chain, obs_gains, ctl_gains, bounds,
                                   traj_velocity_bound, ctl_gains.lam)
    except ValueError as exc:
        return GainCertificate(tuple(link_margins), tuple(joint_margins),
                               float("nan"), False, f"radius: {exc}")
    passed = (all(m > 0 for m in link_margins)
              and all(m > 0 for m in joint_margins)
              and radius > 0.0)
    msg = "" if radius > 0.0 else \
        "certified region is empty; increase the link observer gains"
    return GainCertificate(tuple(link_margins), tuple(joint_margins),
                           radius, passed, msg)


def _third_difference_scale(nu: np.ndarray, dt: float) -> np.ndarray:
    """Per-sample estimate of |d^3 nu / dt^3| from third differences."""
    d3 = np.zeros_like(nu)
    if nu.size >= 4:
        core = np.abs(np.diff(nu, n=3)) / dt ** 3
        d3[:core.size] = core
        d3[core.size:] = core[-1]
        # widen over neighbors so single-sample dips cannot collapse the
        # tolerance right where the curvature peaks
        padded = np.pad(d3, 2, mode="edge")
        d3 = np.max([padded[k:k + d3.size] for k in range(5)], axis=0)
    return d3


def decay_audit(record, chain: ChainModel, bounds: StabilityBounds,
                fd_tol_scale: float = 10.0):
    """Sample-by-sample audit of the claimed decay inequalities.

    ``record`` must expose uniformly sampled arrays ``t``, ``nu``,
    ``nu_link``/``nu_joint`` (N, n), ``xsq`` and ``xsq_link``/``xsq_joint``,
    the per-cut virtual power flows ``p_joint_in`` (flow entering joint i),
    ``p_link_in`` (flow entering link i) and ``p_link_out`` (flow leaving
    link i), and the telescoping residual ``vpf_residual``.

    The total decay test is ``nudot <= -alpha_p * xsq + tol`` with the
    derivative taken by central differences and a tolerance scaled by the
    local third difference of ``nu``.  Subsystem tests apply the virtual
    stability inequality with the corresponding boundary flows.
    """
    t = np.asarray(record.t, dtype=float)
    if t.size < 3:
        raise ValueError("audit needs at least three samples")
    dts = np.diff(t)
    dt = float(dts[0])
    if not np.allclose(dts, dt, rtol=1e-9, atol=1e-12):
        raise ValueError("audit requires a uniformly sampled trajectory")

    nu = np.asarray(record.nu, dtype=float)
    xsq = np.asarray(record.xsq, dtype=float)
    nudot = np.gradient(nu, dt, edge_order=2)
    floor = 1e-12 * max(nu.max(), 1.0) / dt
    tol = fd_tol_scale * dt ** 2 * _third_difference_scale(nu, dt) + floor

    lhs = nudot + bounds.alpha_p * xsq
    total_violations = int(np.count_nonzero(lhs > tol))

    # virtual stability of each subsystem against its boundary flows
    sub_violations = 0
    p_joint_in = np.asarray(record.p_joint_in, dtype=float)
    p_link_in = np.asarray(record.p_link_in, dtype=float)
    p_link_out = np.asarray(record.p_link_out, dtype=float)
    for i in range(chain.n):
        for nu_i, xsq_i, p_in, p_out in (
                (record.nu_joint[:, i], record.xsq_joint[:, i],
                 p_joint_in[:, i], p_link_in[:, i]),
                (record.nu_link[:, i], record.xsq_link[:, i],
                 p_link_in[:, i], p_link_out[:, i])):
            nu_i = np.asarray(nu_i, dtype=float)
            nudot_i = np.gradient(nu_i, dt, edge_order=2)
            tol_i = (fd_tol_scale * dt ** 2 * _third_difference_scale(nu_i, dt)
                     + floor)
            lhs_i = nudot_i + bounds.alpha_p * np.asarray(xsq_i, float) \
                - (p_in - p_out)
            sub_violations += int(np.count_nonzero(lhs_i > tol_i))

    vpf_residual = np.asarray(record.vpf_residual, dtype=float)

    # exponential decay rate of nu, fitted where nu is safely positive
    pos = nu > 1e-300
    rate = float("nan")
    if np.count_nonzero(pos) > 2:
        slope = np.polyfit(t[pos], np.log(nu[pos]), 1)[0]
        rate = float(slope)

    mono_tol = 1e-12 * max(nu.max(), 1.0)
    increases = int(np.count_nonzero(np.diff(nu) > mono_tol))

    return {
        "nu": nu,
        "nudot": nudot,
        "tol": tol,
        "violations": total_violations,
        "subsystem_violations": sub_violations,
        "vpf_residual_max": float(np.abs(vpf_residual).max()),
        "decay_rate": rate,
        "monotonicity_increases": increases,
        "alpha_p": bounds.alpha_p,
    }
