import numpy as np
import pytest

from vdcsim.chain import (
    ChainModel,
    FrictionModel,
    JointModel,
    backward_forces,
    forward_dynamics,
    forward_poses,
    forward_velocities,
    inverse_dynamics,
    joint_space_inertia,
    kinetic_energy,
    link_net_forces,
    potential_energy,
    tanh_friction,
    zero_friction,
)
from vdcsim.sim import integrate_rk4, lagrangian_oracle
from vdcsim.spatial import LinkModel


def two_link():
    link = LinkModel(mass=1.0, com_offset=1.0, inertia_com=1.0, length=1.0)
    joint = JointModel(rotor_inertia=0.1, friction=tanh_friction())
    return ChainModel((link, link), (joint, joint))


def test_friction_models():
    fr = tanh_friction(2.0, 3.0)
    assert fr.lipschitz == 6.0
    assert fr(0.0) == 0.0
    assert fr(-1.0) == -fr(1.0)
    # monotone and Lipschitz on random pairs
    rng = np.random.default_rng(2)
    x = rng.uniform(-4, 4, 100)
    y = rng.uniform(-4, 4, 100)
    assert np.all(-(x - y) * (fr(x) - fr(y)) <= 1e-15)
    assert np.all(np.abs(fr(x) - fr(y)) <= fr.lipschitz * np.abs(x - y) + 1e-15)
    with pytest.raises(ValueError):
        FrictionModel("coulomb")
    with pytest.raises(ValueError):
        FrictionModel("custom", func=lambda x: x)  # no lipschitz bound


def test_chain_validation():
    link = LinkModel(mass=1.0, com_offset=0.5, inertia_com=1.0, length=1.0)
    with pytest.raises(ValueError):
        ChainModel((link,), ())
    with pytest.raises(ValueError):
        ChainModel((), ())
    with pytest.raises(ValueError):
        JointModel(rotor_inertia=0.0)


def test_frame_names():
    ch = two_link()
    assert ch.frame_names() == ["B0", "B1", "T1", "B2", "T2"]


def test_forward_poses_geometry():
    ch = two_link()
    poses = forward_poses(ch, [0.0, np.pi / 2])
    assert np.allclose(poses["B1"], [0, 0, 0])
    assert np.allclose(poses["T1"], [1, 0, 0])
    assert np.allclose(poses["B2"], [1, 0, np.pi / 2])
    assert np.allclose(poses["T2"], [1, 1, np.pi / 2])


def test_forward_velocity_against_pose_differentiation():
    # world-frame rate of each frame origin must match the rotated linear
    # part of the body velocity
    ch = two_link()
    rng = np.random.default_rng(5)
    q = rng.uniform(-1, 1, 2)
    qd = rng.uniform(-1, 1, 2)
    h = 1e-6
    p_plus = forward_poses(ch, q + h * qd)
    p_minus = forward_poses(ch, q - h * qd)
    vels = forward_velocities(ch, q, qd)
    for i in (1, 2):
        name = f"B{i}"
        world_rate = (p_plus[name] - p_minus[name]) / (2 * h)
        phi = forward_poses(ch, q)[name][2]
        c, s = np.cos(phi), np.sin(phi)
        rot = np.array([[c, -s], [s, c]])
        body = vels[name]
        assert np.allclose(world_rate[:2], rot @ body[:2], atol=1e-8)
        assert abs(world_rate[2] - body[2]) < 1e-8


def test_gravity_torques_at_rest():
    ch = two_link()
    z = np.zeros(2)
    tau = inverse_dynamics(ch, z, z, z)
    assert np.allclose(tau, [29.43, 9.81], atol=1e-12)
    # both links vertical: gravity passes through every joint axis
    tau_up = inverse_dynamics(ch, np.array([np.pi / 2, 0.0]), z, z)
    assert np.max(np.abs(tau_up)) < 1e-12


def test_joint_space_inertia_reference_value():
    ch = two_link()
    h = joint_space_inertia(ch, np.zeros(2))
    assert np.allclose(h, [[7.1, 3.0], [3.0, 2.1]], atol=1e-12)
    assert np.allclose(h, h.T)
    # positive definite at random configurations
    rng = np.random.default_rng(9)
    for _ in range(20):
        hq = joint_space_inertia(ch, rng.uniform(-np.pi, np.pi, 2))
        assert np.linalg.eigvalsh(hq).min() > 0


def test_forward_dynamics_free_fall():
    ch = two_link()
    z = np.zeros(2)
    qdd = forward_dynamics(ch, z, z, z)
    # solve([[7.1, 3], [3, 2.1]], -[29.43, 9.81]) by hand
    assert np.allclose(qdd, [-32.373 / 5.91, 18.639 / 5.91], atol=1e-12)


def test_forward_inverse_roundtrip():
    ch = two_link()
    rng = np.random.default_rng(1)
    for _ in range(50):
        q = rng.uniform(-np.pi, np.pi, 2)
        qd = rng.uniform(-3, 3, 2)
        qdd = rng.uniform(-5, 5, 2)
        tau = inverse_dynamics(ch, q, qd, qdd)
        back = forward_dynamics(ch, q, qd, tau)
        assert np.allclose(back, qdd, atol=1e-10)


def test_mass_scaling_of_gravity_torque():
    link = LinkModel(mass=2.0, com_offset=1.0, inertia_com=2.0, length=1.0)
    joint = JointModel(rotor_inertia=0.1, friction=tanh_friction())
    heavy = ChainModel((link, link), (joint, joint))
    z = np.zeros(2)
    tau1 = inverse_dynamics(two_link(), z, z, z)
    tau2 = inverse_dynamics(heavy, z, z, z)
    assert np.allclose(tau2, 2.0 * tau1)


def test_backward_forces_requires_all_frames():
    ch = two_link()
    nf = link_net_forces(ch, np.zeros(2), np.zeros(2), np.zeros(2))
    del nf.values["B2"]
    with pytest.raises(KeyError):
        backward_forces(ch, np.zeros(2), nf)


def test_dimension_checks():
    ch = two_link()
    with pytest.raises(ValueError):
        inverse_dynamics(ch, [0.0], [0.0, 0.0], [0.0, 0.0])
    with pytest.raises(ValueError):
        forward_dynamics(ch, np.zeros(2), np.zeros(2), np.zeros(3))


def test_energy_conservation_free_swing():
    # undriven, frictionless double pendulum: total energy is an invariant
    link = LinkModel(mass=1.0, com_offset=0.8, inertia_com=0.5, length=1.0)
    joint = JointModel(rotor_inertia=0.05, friction=zero_friction())
    ch = ChainModel((link, link), (joint, joint))
    zero_tau = np.zeros(2)

    def rates(y, t):
        return np.concatenate([y[2:], forward_dynamics(ch, y[:2], y[2:],
                                                       zero_tau)])

    y0 = np.array([0.3, -0.4, 0.0, 0.0])
    ts, ys = integrate_rk4(rates, y0, 1.0, 1e-3)
    e0 = kinetic_energy(ch, y0[:2], y0[2:]) + potential_energy(ch, y0[:2])
    drift = 0.0
    for row in ys[::100]:
        e = kinetic_energy(ch, row[:2], row[2:]) + potential_energy(ch, row[:2])
        drift = max(drift, abs(e - e0))
    assert drift < 1e-8


def test_closed_form_oracle_matches_recursions():
    ch = two_link()
    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(300):
        q = rng.uniform(-np.pi, np.pi, 2)
        qd = rng.uniform(-5, 5, 2)
        tau = rng.uniform(-50, 50, 2)
        dev = np.abs(forward_dynamics(ch, q, qd, tau)
                     - lagrangian_oracle(ch, q, qd, tau))
        worst = max(worst, dev.max())
    assert worst <= 1e-9


def test_oracle_against_symbolic_derivation():
    """Derive the two-link equations of motion symbolically and evaluate the
    closed-form model against them at a few states (slow, so few samples)."""
    sympy = pytest.importorskip("sympy")
    t = sympy.symbols("t")
    m1, m2, a1, a2, l1, i1, i2, g = sympy.symbols(
        "m1 m2 a1 a2 l1 i1 i2 g", positive=True)
    q1 = sympy.Function("q1")(t)
    q2 = sympy.Function("q2")(t)
    x1 = a1 * sympy.cos(q1)
    y1 = a1 * sympy.sin(q1)
    x2 = l1 * sympy.cos(q1) + a2 * sympy.cos(q1 + q2)
    y2 = l1 * sympy.sin(q1) + a2 * sympy.sin(q1 + q2)
    ke = (m1 * (x1.diff(t) ** 2 + y1.diff(t) ** 2) / 2
          + m2 * (x2.diff(t) ** 2 + y2.diff(t) ** 2) / 2
          + i1 * q1.diff(t) ** 2 / 2
          + i2 * (q1.diff(t) + q2.diff(t)) ** 2 / 2)
    pe = m1 * g * y1 + m2 * g * y2
    lag = ke - pe
    eqs = [sympy.simplify(lag.diff(q.diff(t)).diff(t) - lag.diff(q))
           for q in (q1, q2)]
    subs = {m1: 1, m2: 1, a1: 1, a2: 1, l1: 1, i1: 1, i2: 1, g: 9.81}
    ch = two_link()
    rng = np.random.default_rng(6)
    for _ in range(3):
        qv = rng.uniform(-2, 2, 2)
        qdv = rng.uniform(-2, 2, 2)
        qddv = rng.uniform(-2, 2, 2)
        num = {q1.diff(t, 2): qddv[0], q2.diff(t, 2): qddv[1],
               q1.diff(t): qdv[0], q2.diff(t): qdv[1],
               q1: qv[0], q2: qv[1], **subs}
        tau_sym = np.array([float(e.subs(num)) for e in eqs])
        # add the rotor and friction terms the rigid-body Lagrangian omits
        tau_full = tau_sym + 0.1 * qddv + np.tanh(qdv)
        got = lagrangian_oracle(ch, qv, qdv, tau_full)
        assert np.allclose(got, qddv, atol=1e-9)
