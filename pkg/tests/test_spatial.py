import numpy as np
import pytest

from vdcsim.spatial import (
    FrameMismatchError,
    KindMismatchError,
    LinkModel,
    SpatialVector,
    TransformMatrix,
    coriolis_matrix,
    gravity_vector,
    net_force,
    planar_rigid_transform,
    planar_transform_matrix,
    planar_transform_matrix_rate,
    spatial_rigid_transform,
    transform_force,
    transform_velocity,
)


def test_vector_validation():
    v = SpatialVector("A", "velocity", [1.0, 2.0, 3.0])
    assert v.dim == 3
    with pytest.raises(KindMismatchError):
        SpatialVector("A", "wrench", [1, 2, 3])
    with pytest.raises(ValueError):
        SpatialVector("A", "velocity", [1, 2])
    with pytest.raises(ValueError):
        SpatialVector("A", "velocity", [1, 2, np.nan])
    # immutable payload
    with pytest.raises(ValueError):
        v.data[0] = 5.0


def test_dot_requires_common_frame():
    v = SpatialVector("A", "velocity", [1, 0, 0])
    f = SpatialVector("A", "force", [2, 0, 0])
    assert v.dot(f) == 2.0
    f2 = SpatialVector("B", "force", [2, 0, 0])
    with pytest.raises(FrameMismatchError):
        v.dot(f2)


def test_planar_power_invariance():
    # V . (U F) == (U^T V) . F for arbitrary rigid transforms
    rng = np.random.default_rng(7)
    for _ in range(200):
        u = planar_transform_matrix(rng.uniform(-np.pi, np.pi),
                                    rng.uniform(-2, 2, 2))
        v = rng.standard_normal(3)
        f = rng.standard_normal(3)
        assert abs(v @ (u @ f) - (u.T @ v) @ f) < 1e-12


def test_spatial_power_invariance():
    rng = np.random.default_rng(8)
    for _ in range(100):
        # random rotation via QR
        qmat, _ = np.linalg.qr(rng.standard_normal((3, 3)))
        if np.linalg.det(qmat) < 0:
            qmat[:, 0] *= -1
        u = spatial_rigid_transform(qmat, rng.uniform(-1, 1, 3))
        v = rng.standard_normal(6)
        f = rng.standard_normal(6)
        assert abs(v @ (u.data @ f) - (u.data.T @ v) @ f) < 1e-12


def test_transform_frame_and_kind_checks():
    u = planar_rigid_transform(0.3, (1.0, 0.0), "A", "B")
    v = SpatialVector("A", "velocity", [1, 2, 3])
    out = transform_velocity(u, v)
    assert out.frame == "B"
    with pytest.raises(FrameMismatchError):
        transform_velocity(u, SpatialVector("B", "velocity", [1, 2, 3]))
    with pytest.raises(KindMismatchError):
        transform_velocity(u, SpatialVector("A", "force", [1, 2, 3]))
    f = SpatialVector("B", "force", [0, 1, 0])
    out = transform_force(u, f)
    assert out.frame == "A"
    with pytest.raises(FrameMismatchError):
        transform_force(u, SpatialVector("A", "force", [0, 1, 0]))


def test_translation_moment_arm():
    # pure translation along x: a unit transverse force at the far frame
    # shows up as a moment equal to the lever arm
    u = planar_transform_matrix(0.0, (2.0, 0.0))
    f = u @ np.array([0.0, 1.0, 0.0])
    assert np.allclose(f, [0.0, 1.0, 2.0])


def test_transform_rate_matches_finite_difference():
    rng = np.random.default_rng(3)
    for _ in range(20):
        th = rng.uniform(-np.pi, np.pi)
        rate = rng.uniform(-2, 2)
        off = rng.uniform(-1, 1, 2)
        h = 1e-6
        fd = (planar_transform_matrix(th + h * rate, off)
              - planar_transform_matrix(th - h * rate, off)) / (2 * h)
        du = planar_transform_matrix_rate(th, off, rate)
        assert np.max(np.abs(du - fd)) < 1e-8


def test_singular_transform_rejected():
    with pytest.raises(ValueError):
        TransformMatrix("A", "B", np.zeros((3, 3)))


def test_mass_matrix_spd():
    link = LinkModel(mass=1.0, com_offset=1.0, inertia_com=1.0, length=1.0)
    eig = np.linalg.eigvalsh(link.mass_matrix)
    assert eig.min() > 0
    # degenerate rotational inertia is rejected
    with pytest.raises(ValueError):
        LinkModel(mass=1.0, com_offset=1.0, inertia_com=0.0, length=1.0)
    with pytest.raises(ValueError):
        LinkModel(mass=-1.0, com_offset=0.5, inertia_com=1.0, length=1.0)


def test_coriolis_skew_linear_bounded():
    link = LinkModel(mass=1.3, com_offset=0.7, inertia_com=0.9, length=1.1)
    rng = np.random.default_rng(11)
    for _ in range(50):
        w = rng.uniform(-5, 5)
        c = coriolis_matrix(link, w)
        assert np.max(np.abs(c + c.T)) < 1e-12
        assert np.allclose(coriolis_matrix(link, 2.0 * w), 2.0 * c)
        assert np.linalg.norm(c, 2) <= link.coriolis_bound * abs(w) + 1e-12
    # the stored bound is tight: attained at unit angular rate
    c1 = coriolis_matrix(link, 1.0)
    assert abs(np.linalg.norm(c1, 2) - link.coriolis_bound) < 1e-12


def test_gravity_vector_orientations():
    link = LinkModel(mass=2.0, com_offset=0.5, inertia_com=1.0, length=1.0)
    g = link.gravity
    horizontal = gravity_vector(link, 0.0)
    assert np.allclose(horizontal, [0.0, 2.0 * g, 2.0 * g * 0.5])
    vertical = gravity_vector(link, np.pi / 2)
    assert np.allclose(vertical, [2.0 * g, 0.0, 0.0], atol=1e-12)


def test_net_force_composition():
    link = LinkModel(mass=1.0, com_offset=1.0, inertia_com=1.0, length=1.0)
    v = np.array([0.1, -0.2, 0.3])
    vdot = np.array([1.0, 0.5, -0.4])
    f = net_force(link, v, vdot, 0.2)
    expected = (link.mass_matrix @ vdot + coriolis_matrix(link, v[2]) @ v
                + gravity_vector(link, 0.2))
    assert np.allclose(f, expected)
