"""Fisheye projection against closed forms and finite differences."""

import numpy as np
import pytest

from evpose.camera import (CameraModel, in_fov, project, project_jacobian,
                           theta_of)
from evpose.errors import ConfigError, DegeneratePoint, OutOfFieldOfView

from conftest import make_cfg


def std_cam(**kw):
    base = dict(cx=32.0, cy=24.0, k1=48 / np.pi, fov_max=np.deg2rad(100.0))
    base.update(kw)
    return CameraModel(**base)


def test_linear_model_closed_form():
    cam = CameraModel(cx=100.0, cy=80.0, k1=50.0, fov_max=np.pi / 2)
    px = project(np.array([1.0, 0.0, 1.0]), cam)  # theta = pi/4, along +x
    assert np.allclose(px, [100.0 + 50.0 * np.pi / 4, 80.0], atol=1e-12)


def test_polynomial_terms_closed_form():
    cam = CameraModel(cx=0.0, cy=0.0, k1=2.0, k3=0.1, k5=0.01, fov_max=2.0)
    theta = 0.5
    z = np.cos(theta)
    pt = np.array([np.sin(theta), 0.0, z])
    r_expect = 2.0 * theta + 0.1 * theta**3 + 0.01 * theta**5
    px = project(pt, cam)
    assert np.allclose(px, [r_expect, 0.0], atol=1e-12)


def test_on_axis_projects_to_principal_point():
    cam = std_cam()
    assert np.allclose(project(np.array([0.0, 0.0, 500.0]), cam),
                       [cam.cx, cam.cy])


def test_rotation_about_axis_rotates_pixels():
    cam = std_cam(cx=0.0, cy=0.0)
    pt = np.array([30.0, -12.0, 90.0])
    phi = 0.7
    rot = np.array([[np.cos(phi), -np.sin(phi)], [np.sin(phi), np.cos(phi)]])
    rotated = pt.copy()
    rotated[:2] = rot @ pt[:2]
    assert np.allclose(project(rotated, cam), rot @ project(pt, cam),
                       atol=1e-10)


def test_out_of_fov_raises_unless_lenient():
    cam = std_cam()
    behind = np.array([0.0, 10.0, -100.0])
    with pytest.raises(OutOfFieldOfView):
        project(behind, cam)
    px = project(behind, cam, validate=False)
    assert np.isfinite(px).all()


def test_origin_is_degenerate():
    with pytest.raises(DegeneratePoint):
        project(np.zeros(3), std_cam())


def test_in_fov_boundary():
    cam = std_cam(fov_max=np.deg2rad(100.0))
    half = np.deg2rad(100.0)
    inside = np.array([np.sin(half - 1e-6), 0.0, np.cos(half - 1e-6)])
    outside = np.array([np.sin(half + 1e-6), 0.0, np.cos(half + 1e-6)])
    assert in_fov(inside * 100, cam)
    assert not in_fov(outside * 100, cam)
    assert not in_fov(np.zeros(3), cam)


def test_theta_of_quadrants():
    assert np.isclose(theta_of(np.array([0.0, 1.0, 1.0])), np.pi / 4)
    assert np.isclose(theta_of(np.array([0.0, 1.0, -1.0])), 3 * np.pi / 4)


def test_jacobian_matches_finite_differences(rng):
    cam = std_cam(k3=0.05, k5=-0.001, fov_max=np.deg2rad(140.0))
    pts = rng.normal(scale=200.0, size=(64, 3))
    pts[:, 2] = np.abs(pts[:, 2]) + 150.0  # keep comfortably inside the fov
    _, jac = project_jacobian(pts, cam)
    eps = 1e-4
    for axis in range(3):
        d = np.zeros(3)
        d[axis] = eps
        fd = (project(pts + d, cam, validate=False)
              - project(pts - d, cam, validate=False)) / (2 * eps)
        num = np.abs(jac[:, :, axis] - fd)
        den = np.maximum(np.abs(fd), 1.0)
        assert np.max(num / den) < 1e-6


def test_jacobian_on_axis_is_isotropic():
    cam = std_cam()
    _, jac = project_jacobian(np.array([[0.0, 0.0, 250.0]]), cam)
    expect = np.zeros((2, 3))
    expect[0, 0] = cam.k1 / 250.0
    expect[1, 1] = cam.k1 / 250.0
    assert np.allclose(jac[0], expect, atol=1e-12)


def test_from_config_defaults():
    cam = CameraModel.from_config(make_cfg())
    assert (cam.cx, cam.cy) == (32.0, 24.0)
    assert np.isclose(cam.k1, 48 / np.pi)
    assert np.isclose(cam.fov_max, np.deg2rad(100.0))


def test_non_monotone_radius_rejected():
    with pytest.raises(ConfigError):
        CameraModel(cx=0, cy=0, k1=1.0, k3=-10.0, fov_max=np.pi / 2)
    with pytest.raises(ConfigError):
        CameraModel(cx=0, cy=0, k1=-1.0)
