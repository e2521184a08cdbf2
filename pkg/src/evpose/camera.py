"""Polynomial fisheye camera: equidistant-style projection and its Jacobian.

A 3D point in the camera frame (+z along the optical axis) maps to pixels by
the angle it makes with the axis: theta = atan2(sqrt(x^2 + y^2), z), radius
r(theta) = k1*theta + k3*theta^3 + k5*theta^5, pixel = principal point +
r * (x, y) / sqrt(x^2 + y^2). The model is differentiable away from the
optical center; on the axis the projection is the principal point and the
tangential derivative is zero by symmetry.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DegeneratePoint, OutOfFieldOfView

_AXIS_EPS = 1e-9  # below this radial distance a point sits on the axis


@dataclass(frozen=True)
class CameraModel:
    cx: float
    cy: float
    k1: float
    k3: float = 0.0
    k5: float = 0.0
    fov_max: float = np.deg2rad(100.0)  # radians

    def __post_init__(self):
        if self.k1 <= 0:
            raise ConfigError("camera k1 must be positive")
        if not 0 < self.fov_max <= np.pi:
            raise ConfigError("camera fov_max must be in (0, pi]")
        # r(theta) must be strictly increasing on [0, fov_max] so the
        # projection is invertible within the field of view.
        theta = np.linspace(0.0, self.fov_max, 256)
        if np.any(self._dr(theta) <= 0):
            raise ConfigError(
                "r(theta) is not strictly increasing on [0, fov_max]")

    @classmethod
    def from_config(cls, cfg) -> "CameraModel":
        w, h = cfg["img.width"], cfg["img.height"]
        cx = cfg["cam.cx"] if cfg["cam.cx"] >= 0 else w / 2.0
        cy = cfg["cam.cy"] if cfg["cam.cy"] >= 0 else h / 2.0
        k1 = cfg["cam.k1"] if cfg["cam.k1"] > 0 else min(w, h) / np.pi
        return cls(cx=cx, cy=cy, k1=k1, k3=cfg["cam.k3"], k5=cfg["cam.k5"],
                   fov_max=float(np.deg2rad(cfg["cam.fov_deg"])))

    def _r(self, theta):
        t2 = theta * theta
        return theta * (self.k1 + t2 * (self.k3 + t2 * self.k5))

    def _dr(self, theta):
        t2 = theta * theta
        return self.k1 + t2 * (3.0 * self.k3 + 5.0 * t2 * self.k5)


def _split(points):
    pts = np.asarray(points, dtype=np.float64)
    if pts.shape[-1] != 3:
        raise ValueError("points must have a trailing dimension of 3")
    return pts[..., 0], pts[..., 1], pts[..., 2]


def theta_of(points) -> np.ndarray:
    """Angle of each point to the optical axis, in radians."""
    x, y, z = _split(points)
    return np.arctan2(np.hypot(x, y), z)


def in_fov(points, cam: CameraModel) -> np.ndarray:
    """Boolean mask: non-degenerate points within the field of view."""
    x, y, z = _split(points)
    norm = np.sqrt(x * x + y * y + z * z)
    return (norm > _AXIS_EPS) & (theta_of(points) <= cam.fov_max)


def project(points, cam: CameraModel, validate: bool = True) -> np.ndarray:
    """Project (..., 3) camera-frame points to (..., 2) pixel coordinates.

    With validate=True, points beyond fov_max raise OutOfFieldOfView and
    points at the optical center raise DegeneratePoint. With validate=False
    the polynomial is evaluated for any direction (used by losses and by the
    renderer, where off-image results are harmless); only exact zeros are
    degenerate then.
    """
    x, y, z = _split(points)
    rho = np.hypot(x, y)
    norm = np.sqrt(rho * rho + z * z)
    if np.any(norm <= _AXIS_EPS):
        raise DegeneratePoint("cannot project a point at the optical center")
    theta = np.arctan2(rho, z)
    if validate and np.any(theta > cam.fov_max):
        raise OutOfFieldOfView(
            f"point at {float(np.max(theta)):.3f} rad exceeds fov_max "
            f"{cam.fov_max:.3f} rad")
    r = cam._r(theta)
    on_axis = rho <= _AXIS_EPS
    safe_rho = np.where(on_axis, 1.0, rho)
    u = cam.cx + np.where(on_axis, 0.0, r * x / safe_rho)
    v = cam.cy + np.where(on_axis, 0.0, r * y / safe_rho)
    return np.stack([u, v], axis=-1)


def project_jacobian(points, cam: CameraModel
                     ) -> tuple[np.ndarray, np.ndarray]:
    """Lenient projection plus its Jacobian w.r.t. the 3D point.

    Returns (pixels (..., 2), jac (..., 2, 3)). On the optical axis the
    limit Jacobian is isotropic radial (k1/z on the diagonal) with zero
    tangential coupling.
    """
    x, y, z = _split(points)
    rho = np.hypot(x, y)
    norm2 = rho * rho + z * z
    if np.any(norm2 <= _AXIS_EPS * _AXIS_EPS):
        raise DegeneratePoint("cannot project a point at the optical center")
    theta = np.arctan2(rho, z)
    r = cam._r(theta)
    dr = cam._dr(theta)

    on_axis = rho <= _AXIS_EPS
    safe_rho = np.where(on_axis, 1.0, rho)
    g = np.where(on_axis, 0.0, r / safe_rho)          # tangential scale
    u = cam.cx + g * x
    v = cam.cy + g * y

    # dg/drho collected as (dr * z / norm2 - g) / rho; on the axis the
    # projection tends to (k1/z) * (x, y), an isotropic linear map.
    q = np.where(on_axis, 0.0, (dr * z / norm2 - g) / (safe_rho * safe_rho))
    dgdz = -dr / norm2
    axis_scale = dr / np.where(np.abs(z) > _AXIS_EPS, z, _AXIS_EPS)

    jac = np.empty(x.shape + (2, 3), dtype=np.float64)
    jac[..., 0, 0] = np.where(on_axis, axis_scale, g + x * x * q)
    jac[..., 0, 1] = np.where(on_axis, 0.0, x * y * q)
    jac[..., 0, 2] = np.where(on_axis, 0.0, x * dgdz)
    jac[..., 1, 0] = jac[..., 0, 1]
    jac[..., 1, 1] = np.where(on_axis, axis_scale, g + y * y * q)
    jac[..., 1, 2] = np.where(on_axis, 0.0, y * dgdz)
    return np.stack([u, v], axis=-1), jac
