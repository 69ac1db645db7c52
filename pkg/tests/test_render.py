import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from geoexplore.render import (
    PanoStore,
    ProjectionError,
    bilinear_sample,
    decode_bearing,
    render_heading,
    render_view,
    synthetic_panorama,
    to_png_bytes,
    view_hash,
    view_sample_grid,
)


def rotation_oracle(pano_w, pano_h, yaw, pitch, fov, out_w, out_h):
    """Source coordinates via an explicit 3-D rotation (x right, y up, z forward)."""
    half = math.tan(math.radians(fov) / 2)
    xs = (2 * (np.arange(out_w) + 0.5) / out_w - 1) * half
    ys = (1 - 2 * (np.arange(out_h) + 0.5) / out_h) * half * out_h / out_w
    px, py = np.meshgrid(xs, ys)
    rays = np.stack([px, py, np.ones_like(px)], axis=-1).reshape(-1, 3)
    rot = Rotation.from_euler("y", yaw, degrees=True) * Rotation.from_euler("x", -pitch, degrees=True)
    w = rot.apply(rays)
    theta = np.arctan2(w[:, 0], w[:, 2])
    phi = np.arcsin(w[:, 1] / np.linalg.norm(w, axis=1))
    u = (theta / (2 * np.pi) + 0.5) * pano_w
    v = (0.5 - phi / np.pi) * pano_h
    return u.reshape(out_h, out_w), v.reshape(out_h, out_w)


def wrap_diff(a, b, period):
    d = np.mod(a - b, period)
    return np.minimum(d, period - d)


@settings(max_examples=50, deadline=None)
@given(
    st.floats(-720, 720),
    st.floats(-80, 80),
    st.floats(5, 120),
    st.integers(1, 40),
    st.integers(1, 40),
)
def test_sample_grid_matches_rotation_oracle(yaw, pitch, fov, w, h):
    u, v = view_sample_grid(1024, 512, yaw, pitch, fov, w, h)
    uo, vo = rotation_oracle(1024, 512, yaw, pitch, fov, w, h)
    assert np.max(wrap_diff(u, uo, 1024)) < 1e-6
    assert np.max(np.abs(v - vo)) < 1e-6


def test_centre_pixel_geometry():
    u, v = view_sample_grid(360, 180, yaw=0, pitch=0, fov=90, out_w=3, out_h=3)
    # centre ray looks at the pano centre column and the horizon
    assert u[1, 1] == pytest.approx(180.0)
    assert v[1, 1] == pytest.approx(90.0)
    # the right edge pixel looks right of centre
    assert u[1, 2] > u[1, 1] > u[1, 0]
    u, v = view_sample_grid(360, 180, yaw=0, pitch=30, fov=60, out_w=3, out_h=3)
    assert v[1, 1] == pytest.approx(90.0 - 30.0)


def test_centre_bearing_on_synthetic_pano():
    rng = random.Random(11)
    for _ in range(100):
        heading_ref = rng.uniform(0, 360)
        yaw = rng.uniform(-360, 360)
        pano = synthetic_panorama(heading_ref, 720)
        view = render_view(pano, yaw, 0.0, 90.0, 33, 33)
        got = decode_bearing(view[16, 16])
        want = (heading_ref + yaw) % 360
        assert min(abs(got - want), 360 - abs(got - want)) < 0.5


def test_render_heading_points_where_asked():
    pano = synthetic_panorama(123.0, 512)
    for heading in (0, 45, 179.5, 300):
        view = render_heading(pano, 123.0, heading, fov=60, out_w=21, out_h=21)
        got = decode_bearing(view[10, 10])
        assert min(abs(got - heading), 360 - abs(got - heading)) < 0.5


def test_synthetic_pano_shape_and_readonly():
    p = synthetic_panorama(0.0, 64)
    assert p.shape == (32, 64, 3)
    assert p.dtype == np.float32
    with pytest.raises(ValueError):
        p[0, 0, 0] = 5
    # column centres encode bearings
    assert decode_bearing(p[0, 32]) == pytest.approx(360 / 64 / 2, abs=1e-4)


def test_bilinear_exact_at_pixel_centres_and_wraps():
    pano = np.arange(8 * 16, dtype=np.float64).reshape(8, 16)
    u = np.array([0.5, 15.5, 16.5, 8.0])
    v = np.array([0.5, 3.5, 0.5, 2.5])
    out = bilinear_sample(pano, u, v)
    assert out[0] == pano[0, 0]
    assert out[1] == pano[3, 15]
    assert out[2] == pano[0, 0]  # wraps horizontally
    assert out[3] == pytest.approx((pano[2, 7] + pano[2, 8]) / 2)
    # halfway across the seam blends the last and first columns
    seam = bilinear_sample(pano, np.array([16.0]), np.array([0.5]))
    assert seam[0] == pytest.approx((pano[0, 15] + pano[0, 0]) / 2)


def test_constant_pano_renders_constant():
    pano = np.full((50, 100, 3), 0.25, dtype=np.float32)
    view = render_view(pano, 37.0, 12.0, 75.0, 40, 30)
    assert view.shape == (30, 40, 3)
    assert np.allclose(view, 0.25)


@pytest.mark.parametrize(
    "kw",
    [dict(fov=0), dict(fov=121), dict(pitch=90), dict(pitch=-95), dict(out_w=0)],
)
def test_projection_errors(kw):
    args = dict(yaw=0.0, pitch=0.0, fov=90.0, out_w=8, out_h=8)
    args.update(kw)
    with pytest.raises(ProjectionError):
        view_sample_grid(64, 32, **args)


def test_non_2to1_rejected():
    with pytest.raises(ProjectionError):
        render_view(np.zeros((10, 10)), 0)


def test_view_hash_sensitive_and_stable():
    pano = synthetic_panorama(0.0, 256)
    a = render_view(pano, 10, 0, 90, 32, 32)
    b = render_view(pano, 10, 0, 90, 32, 32)
    c = render_view(pano, 11, 0, 90, 32, 32)
    assert view_hash(a) == view_hash(b)
    assert view_hash(a) != view_hash(c)
    assert view_hash(a) != view_hash(a.astype(np.float64))


def test_png_encoding_and_store(tmp_path):
    from PIL import Image

    pano = synthetic_panorama(0.0, 64)
    png = to_png_bytes(render_view(pano, 0, 0, 90, 16, 16))
    assert png[:8] == b"\x89PNG\r\n\x1a\n"

    arr = (np.random.default_rng(0).random((16, 32, 3)) * 255).astype(np.uint8)
    Image.fromarray(arr).save(tmp_path / "a.png")
    store = PanoStore(tmp_path)
    loaded = store.get("a.png")
    assert loaded.shape == (16, 32, 3)
    assert np.allclose(loaded * 255, arr, atol=0.5)
    assert store.get("a.png") is loaded
    assert store.get(None, 10.0).shape[1] == 512

    Image.fromarray(np.zeros((10, 10, 3), np.uint8)).save(tmp_path / "sq.png")
    with pytest.raises(ProjectionError):
        store.get("sq.png")
