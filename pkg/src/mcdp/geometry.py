"""Pinhole cameras, rigid transforms and cross-camera pixel warping.

Conventions: camera frame x right, y down, z forward. Pixel ``(u, v)`` is
(column, row) with the origin at the centre of the top-left pixel. Lens
distortion is not modelled.

Functions take array-likes and broadcast over leading dimensions: pixels are
``(..., 2)``, points ``(..., 3)``, depths ``(...)``.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import BehindCamera, BehindTarget, NonPositiveDepth, ValidationError

ORTHO_TOL = 1e-9


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValidationError(f"focal lengths must be positive, got {self.fx}, {self.fy}")
        if int(self.width) != self.width or int(self.height) != self.height:
            raise ValidationError("image size must be integral")
        if self.width < 1 or self.height < 1:
            raise ValidationError(f"image size must be positive, got {self.width}x{self.height}")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValidationError(
                f"principal point ({self.cx}, {self.cy}) outside {self.width}x{self.height} image"
            )

    @property
    def shape(self):
        return (self.height, self.width)

    @property
    def matrix(self):
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )

    @classmethod
    def from_fov(cls, width, height, hfov_deg):
        """Square-pixel camera with the principal point at the image centre."""
        f = (width / 2.0) / np.tan(np.radians(hfov_deg) / 2.0)
        return cls(f, f, (width - 1) / 2.0, (height - 1) / 2.0, width, height)


@dataclass(frozen=True, eq=False)
class CameraExtrinsics:
    """Rigid transform ``X_j = R @ X_i + t`` from camera i's frame to camera j's."""

    rotation: np.ndarray
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        R = np.array(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.array(self.translation, dtype=np.float64).reshape(3)
        if not (np.all(np.isfinite(R)) and np.all(np.isfinite(t))):
            raise ValidationError("extrinsics must be finite")
        check_rotation(R)
        R.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    def __eq__(self, other):
        if not isinstance(other, CameraExtrinsics):
            return NotImplemented
        return np.array_equal(self.rotation, other.rotation) and np.array_equal(
            self.translation, other.translation
        )

    @classmethod
    def identity(cls):
        return cls(np.eye(3), np.zeros(3))

    def inverse(self):
        Rt = self.rotation.T
        return CameraExtrinsics(Rt, -Rt @ self.translation)

    def compose(self, other):
        """Return ``other`` applied after ``self`` (i->j then j->k gives i->k)."""
        return CameraExtrinsics(
            other.rotation @ self.rotation,
            other.rotation @ self.translation + other.translation,
        )

    def apply(self, points):
        points = np.asarray(points, dtype=np.float64)
        return points @ self.rotation.T + self.translation

    def as_matrix(self):
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.translation
        return T


def check_rotation(R, tol=ORTHO_TOL):
    err = np.max(np.abs(R.T @ R - np.eye(3)))
    if err >= tol:
        raise ValidationError(f"rotation is not orthonormal (max |R^T R - I| = {err:.3g})")
    if np.linalg.det(R) <= 0:
        raise ValidationError("rotation has negative determinant")


def axis_angle(axis, angle):
    """Rotation matrix for ``angle`` radians about ``axis`` (Rodrigues)."""
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    K = np.array(
        [[0.0, -axis[2], axis[1]], [axis[2], 0.0, -axis[0]], [-axis[1], axis[0], 0.0]]
    )
    return np.eye(3) + np.sin(angle) * K + (1.0 - np.cos(angle)) * (K @ K)


def relative_extrinsics(pose_i, pose_j):
    """i->j transform from two camera-to-world poses."""
    return pose_i.compose(pose_j.inverse())


def unproject(p, d, K):
    p = np.asarray(p, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64)
    if np.any(~(d > 0)):
        raise NonPositiveDepth("depth must be positive")
    x = (p[..., 0] - K.cx) * d / K.fx
    y = (p[..., 1] - K.cy) * d / K.fy
    return np.stack([x, y, np.broadcast_to(d, x.shape)], axis=-1)


def project(P, K):
    P = np.asarray(P, dtype=np.float64)
    z = P[..., 2]
    if np.any(~(z > 0)):
        raise BehindCamera("point is not in front of the camera")
    return np.stack([K.fx * P[..., 0] / z + K.cx, K.fy * P[..., 1] / z + K.cy], axis=-1)


def warp_points(p, d, Ki, Kj, E_ij):
    """Warp pixels of camera i with depths ``d`` into camera j.

    No validity checks: returns ``(uv_j, z_j)`` where entries with
    ``z_j <= 0`` are meaningless and must be masked by the caller.
    """
    p = np.asarray(p, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64)
    ray_x = (p[..., 0] - Ki.cx) / Ki.fx
    ray_y = (p[..., 1] - Ki.cy) / Ki.fy
    R, t = E_ij.rotation, E_ij.translation
    X = (R[0, 0] * ray_x + R[0, 1] * ray_y + R[0, 2]) * d + t[0]
    Y = (R[1, 0] * ray_x + R[1, 1] * ray_y + R[1, 2]) * d + t[1]
    Z = (R[2, 0] * ray_x + R[2, 1] * ray_y + R[2, 2]) * d + t[2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = Kj.fx * X / Z + Kj.cx
        v = Kj.fy * Y / Z + Kj.cy
    return np.stack([u, v], axis=-1), Z


def warp_pixel(p, d, Ki, Kj, E_ij):
    """Map pixel(s) ``p`` with depth ``d`` in camera i to camera j.

    Returns:
        (pixel in j, depth of the point in j's frame). The pixel may fall
        outside j's image.

    Raises:
        NonPositiveDepth: if ``d <= 0``.
        BehindTarget: if the transformed point is not in front of camera j.
    """
    P_i = unproject(p, d, Ki)
    P_j = E_ij.apply(P_i)
    z = P_j[..., 2]
    if np.any(~(z > 0)):
        raise BehindTarget("warped point lies behind the target camera")
    return project(P_j, Kj), z


def pixel_grid(height, width):
    """(H, W, 2) array of (u, v) pixel-centre coordinates."""
    v, u = np.mgrid[0:height, 0:width].astype(np.float64)
    return np.stack([u, v], axis=-1)


def in_bounds(uv, height, width):
    """Continuous bounds usable by bilinear sampling: [0, W-1] x [0, H-1]."""
    u = uv[..., 0]
    v = uv[..., 1]
    return (u >= 0) & (u <= width - 1) & (v >= 0) & (v <= height - 1)
