import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from vslam.camera import (
    CameraError,
    EquirectangularCamera,
    FisheyeCamera,
    PerspectiveCamera,
    camera_from_dict,
    normalize,
    pixel_grid,
)
from conftest import in_fov_mask
from vslam.eval.synthetic import default_camera

CAMERAS = {
    "perspective": default_camera("perspective"),
    "distorted": PerspectiveCamera(640, 480, fx=420.0, fy=410.0, cx=315.0, cy=245.0, k1=-0.12, k2=0.03, p1=1e-3, p2=-5e-4),
    "fisheye": default_camera("fisheye"),
    "equirectangular": default_camera("equirectangular"),
}


def test_principal_point_projects_forward():
    cam = PerspectiveCamera(100, 100, fx=100.0, fy=100.0, cx=50.0, cy=50.0)
    np.testing.assert_allclose(cam.project([0, 0, 1]), [50, 50], atol=1e-12)
    np.testing.assert_allclose(cam.unproject([60, 50]), normalize([0.1, 0, 1]), atol=1e-12)


def test_equirectangular_reference_pixels():
    cam = EquirectangularCamera(1000, 500)
    np.testing.assert_allclose(cam.project([1, 0, 0]), [750, 250], atol=1e-9)
    np.testing.assert_allclose(cam.unproject([500, 250]), [0, 0, 1], atol=1e-12)


def test_fisheye_equidistant_radius():
    cam = FisheyeCamera(400, 400, fx=100.0, fy=100.0, cx=200.0, cy=200.0)
    b = [np.sin(np.pi / 4), 0, np.cos(np.pi / 4)]
    np.testing.assert_allclose(cam.project(b), [200 + 100 * np.pi / 4, 200], atol=1e-9)


def test_behind_pinhole_is_absent():
    assert CAMERAS["perspective"].project([0, 0, -1]) is None


@pytest.mark.parametrize("name", sorted(CAMERAS))
def test_round_trip_on_pixel_grid(name):
    cam = CAMERAS[name]
    uv = pixel_grid(cam, 10_000)
    uv = uv[in_fov_mask(cam, uv)]
    assert len(uv) > 5000
    back, ok = cam.project_points(cam.unproject_pixels(uv))
    assert ok.all()
    assert np.abs(back - uv).max() < 1e-8


@pytest.mark.parametrize("name", sorted(CAMERAS))
@given(u=st.floats(0.05, 0.95), v=st.floats(0.05, 0.95), depth=st.floats(0.5, 50.0))
def test_unproject_gives_unit_rays_through_the_pixel(name, u, v, depth):
    cam = CAMERAS[name]
    px = np.array([u * cam.width, v * cam.height])
    assume(in_fov_mask(cam, px[None])[0])
    b = cam.unproject(px)
    assert abs(np.linalg.norm(b) - 1) < 1e-12
    np.testing.assert_allclose(cam.project(depth * b), px, atol=1e-7)


def test_pinhole_jacobian_on_axis():
    cam = PerspectiveCamera(10, 10, fx=1.0, fy=1.0, cx=0.0, cy=0.0)
    np.testing.assert_allclose(cam.projection_jacobian([0, 0, 1]), [[1, 0, 0], [0, 1, 0]], atol=1e-15)


def test_equirectangular_jacobian_at_center():
    J = EquirectangularCamera(1000, 500).projection_jacobian([0, 0, 1])
    assert J[0, 0] == pytest.approx(1000 / (2 * np.pi))
    assert abs(J[1, 1]) == pytest.approx(500 / np.pi)


def test_jacobian_outside_fov_raises():
    with pytest.raises(CameraError):
        CAMERAS["perspective"].projection_jacobian([0, 0, -2])


def test_from_dict_round_trip_and_errors():
    for cam in CAMERAS.values():
        assert camera_from_dict(cam.to_dict()) == cam
    with pytest.raises(CameraError):
        PerspectiveCamera(100, 100, fx=-1.0, fy=1.0, cx=50.0, cy=50.0)
    with pytest.raises(ValueError):
        camera_from_dict({"kind": "orthographic", "width": 10, "height": 10})
