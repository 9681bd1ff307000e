"""Frame-attached vector algebra and single rigid-body dynamics.

Velocities, forces and poses are carried as plain vectors tagged with a frame
label and a kind.  The planar case uses d = 3 with ordering
``[v_x, v_y, omega]`` (or ``[f_x, f_y, m]``, ``[p_x, p_y, phi]``); the spatial
case uses d = 6 with the linear block first.  Transform matrices map force
vectors forward (``F_A = U @ F_B``) and velocity vectors backward
(``V_B = U.T @ V_A``), which makes every transform power-invariant by
construction: ``V . (U @ F) == (U.T @ V) . F``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

VALID_KINDS = ("velocity", "force", "pose")

# Unit vector selecting the joint rotation axis (planar: angular slot last).
Z_TAU_PLANAR = np.array([0.0, 0.0, 1.0])
Z_TAU_SPATIAL = np.array([0.0, 0.0, 0.0, 0.0, 0.0, 1.0])


class FrameMismatchError(ValueError):
    """An operation mixed vectors attached to different frames."""


class KindMismatchError(ValueError):
    """An operation received a vector of the wrong kind."""


@dataclass(frozen=True)
class SpatialVector:
    """A d-dimensional velocity, force or pose value attached to a frame."""

    frame: str
    kind: str
    data: np.ndarray

    def __post_init__(self):
        if self.kind not in VALID_KINDS:
            raise KindMismatchError(f"unknown kind {self.kind!r}")
        arr = np.asarray(self.data, dtype=float)
        if arr.shape not in ((3,), (6,)):
            raise ValueError(f"dimension must be 3 or 6, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("non-finite entries in spatial vector")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def dim(self) -> int:
        return self.data.shape[0]

    def dot(self, other: "SpatialVector") -> float:
        if other.frame != self.frame:
            raise FrameMismatchError(
                f"dot product mixes frames {self.frame!r} and {other.frame!r}"
            )
        return float(self.data @ other.data)


@dataclass(frozen=True)
class TransformMatrix:
    """Force/moment transformation matrix from one frame to another.

    ``data`` maps forces expressed in ``to_frame`` to forces expressed in
    ``from_frame``; its transpose maps velocities the other way.
    """

    from_frame: str
    to_frame: str
    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=float)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] not in (3, 6):
            raise ValueError(f"transform must be 3x3 or 6x6, got {arr.shape}")
        if abs(np.linalg.det(arr)) < 1e-12:
            raise ValueError("transform matrix is singular")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def dim(self) -> int:
        return self.data.shape[0]


def planar_transform_matrix(rotation: float, offset) -> np.ndarray:
    """Raw 3x3 force transform for a frame rotated by ``rotation`` and
    translated by ``offset`` (expressed in the source frame)."""
    c, s = np.cos(rotation), np.sin(rotation)
    px, py = float(offset[0]), float(offset[1])
    rot = np.array([[c, -s], [s, c]])
    u = np.eye(3)
    u[:2, :2] = rot
    # moment row: m_A = m_B + p x (R f_B)
    u[2, :2] = np.array([-py, px]) @ rot
    return u


def planar_transform_matrix_rate(rotation: float, offset, rotation_rate: float) -> np.ndarray:
    """Time derivative of :func:`planar_transform_matrix` for a fixed offset."""
    c, s = np.cos(rotation), np.sin(rotation)
    px, py = float(offset[0]), float(offset[1])
    drot = np.array([[-s, -c], [c, -s]])
    du = np.zeros((3, 3))
    du[:2, :2] = drot
    du[2, :2] = np.array([-py, px]) @ drot
    return du * rotation_rate


def planar_rigid_transform(rotation: float, offset,
                           from_frame: str = "A", to_frame: str = "B") -> TransformMatrix:
    """Planar rigid transform: target frame at ``offset`` from the source
    origin, rotated by ``rotation`` (radians)."""
    return TransformMatrix(from_frame, to_frame,
                           planar_transform_matrix(rotation, offset))


def spatial_rigid_transform(rotation_matrix, offset,
                            from_frame: str = "A", to_frame: str = "B") -> TransformMatrix:
    """6x6 rigid transform from a 3x3 rotation matrix and a 3-vector offset."""
    r = np.asarray(rotation_matrix, dtype=float)
    p = np.asarray(offset, dtype=float)
    px = np.array([[0.0, -p[2], p[1]],
                   [p[2], 0.0, -p[0]],
                   [-p[1], p[0], 0.0]])
    u = np.zeros((6, 6))
    u[:3, :3] = r
    u[3:, 3:] = r
    u[3:, :3] = px @ r
    return TransformMatrix(from_frame, to_frame, u)


def transform_velocity(u: TransformMatrix, v: SpatialVector) -> SpatialVector:
    """Map a velocity from ``u.from_frame`` into ``u.to_frame``."""
    if v.kind != "velocity":
        raise KindMismatchError(f"expected a velocity, got {v.kind!r}")
    if v.frame != u.from_frame:
        raise FrameMismatchError(
            f"velocity is in frame {v.frame!r}, transform starts at {u.from_frame!r}"
        )
    return SpatialVector(u.to_frame, "velocity", u.data.T @ v.data)


def transform_force(u: TransformMatrix, f: SpatialVector) -> SpatialVector:
    """Map a force from ``u.to_frame`` back into ``u.from_frame``."""
    if f.kind != "force":
        raise KindMismatchError(f"expected a force, got {f.kind!r}")
    if f.frame != u.to_frame:
        raise FrameMismatchError(
            f"force is in frame {f.frame!r}, transform ends at {u.to_frame!r}"
        )
    return SpatialVector(u.from_frame, "force", u.data @ f.data)


@dataclass(frozen=True)
class LinkModel:
    """Physical parameters of one planar rigid link.

    The link frame sits at the proximal joint with the x axis along the link.
    ``com_offset`` is the distance from the frame origin to the center of
    mass, ``inertia_com`` the rotational inertia about the center of mass and
    ``length`` the distance to the distal (tip) frame.
    """

    mass: float
    com_offset: float
    inertia_com: float
    length: float
    gravity: float = 9.81
    coriolis_bound: float = field(default=0.0)

    def __post_init__(self):
        if self.mass <= 0.0:
            raise ValueError("link mass must be positive")
        if self.length < 0.0:
            raise ValueError("link length must be nonnegative")
        m = self.mass_matrix
        if np.min(np.linalg.eigvalsh(m)) <= 0.0:
            raise ValueError(
                "mass matrix is not positive definite (inertia_com must be > 0)"
            )
        if self.coriolis_bound <= 0.0:
            # exact operator norm of the Coriolis factor at unit angular rate
            object.__setattr__(
                self, "coriolis_bound",
                self.mass * float(np.hypot(1.0, self.com_offset)))

    @property
    def mass_matrix(self) -> np.ndarray:
        m, c = self.mass, self.com_offset
        return np.array([
            [m, 0.0, 0.0],
            [0.0, m, m * c],
            [0.0, m * c, self.inertia_com + m * c * c],
        ])

    @property
    def tip_transform(self) -> np.ndarray:
        """Raw force transform from the link frame to its tip frame."""
        return planar_transform_matrix(0.0, (self.length, 0.0))


def coriolis_matrix(link: LinkModel, omega: float) -> np.ndarray:
    """Coriolis/centrifugal matrix of the link at angular rate ``omega``.

    Skew-symmetric and linear in ``omega``; its norm is bounded by
    ``link.coriolis_bound * |omega|``.
    """
    m, c = link.mass, link.com_offset
    return float(omega) * np.array([
        [0.0, -m, -m * c],
        [m, 0.0, 0.0],
        [m * c, 0.0, 0.0],
    ])


def gravity_vector(link: LinkModel, orientation: float) -> np.ndarray:
    """Gravity term of the link dynamics, resolved in the link frame.

    ``orientation`` is the absolute (world) angle of the link frame.  The
    world gravity wrench on the center of mass is rotated into the link frame
    and negated, so the angular component reduces to
    ``m * g * com_offset * cos(orientation)``.
    """
    m, g, c = link.mass, link.gravity, link.com_offset
    sph, cph = np.sin(orientation), np.cos(orientation)
    return np.array([m * g * sph, m * g * cph, m * g * c * cph])


def net_force(link: LinkModel, v, vdot, orientation: float) -> np.ndarray:
    """Net force/moment on the link: ``M vdot + C(omega) v + G``."""
    v = np.asarray(v, dtype=float)
    vdot = np.asarray(vdot, dtype=float)
    return (link.mass_matrix @ vdot
            + coriolis_matrix(link, v[2]) @ v
            + gravity_vector(link, orientation))
