"""Equirectangular panorama to rectilinear (gnomonic) view rendering."""

from __future__ import annotations

import hashlib
from functools import lru_cache
from pathlib import Path
from typing import Optional

import numpy as np

MAX_FOV = 120.0
MAX_PITCH = 89.0


class ProjectionError(ValueError):
    pass


def view_sample_grid(
    pano_w: int,
    pano_h: int,
    yaw: float,
    pitch: float = 0.0,
    fov: float = 90.0,
    out_w: int = 512,
    out_h: int = 512,
) -> tuple[np.ndarray, np.ndarray]:
    """Continuous source coordinates (u, v) hit by each output pixel's ray.

    ``yaw`` is measured clockwise from the panorama's centre column, ``fov``
    is horizontal. Source pixel k spans [k, k+1), so its centre sits at
    k + 0.5.
    """
    if not 0.0 < fov <= MAX_FOV:
        raise ProjectionError(f"fov {fov} outside (0, {MAX_FOV}]")
    if not -MAX_PITCH <= pitch <= MAX_PITCH:
        raise ProjectionError(f"pitch {pitch} outside [-{MAX_PITCH}, {MAX_PITCH}]")
    if out_w < 1 or out_h < 1:
        raise ProjectionError("output size must be positive")

    half = np.tan(np.radians(fov) / 2.0)
    xs = (2.0 * (np.arange(out_w) + 0.5) / out_w - 1.0) * half
    ys = (1.0 - 2.0 * (np.arange(out_h) + 0.5) / out_h) * half * out_h / out_w
    px, py = np.meshgrid(xs, ys)
    pz = np.ones_like(px)

    p = np.radians(pitch)
    ry = py * np.cos(p) + pz * np.sin(p)
    rz = -py * np.sin(p) + pz * np.cos(p)
    rx = px

    theta = np.arctan2(rx, rz) + np.radians(yaw)
    phi = np.arctan2(ry, np.hypot(rx, rz))
    u = (theta / (2.0 * np.pi) + 0.5) * pano_w
    v = (0.5 - phi / np.pi) * pano_h
    return u, v


def bilinear_sample(pano: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Sample with horizontal wraparound and vertical clamping."""
    h, w = pano.shape[:2]
    x = u - 0.5
    y = np.clip(v - 0.5, 0.0, h - 1.0)
    x0 = np.floor(x)
    y0 = np.floor(y)
    fx = x - x0
    fy = y - y0
    x0 = x0.astype(np.int64) % w
    x1 = (x0 + 1) % w
    y0 = y0.astype(np.int64)
    y1 = np.minimum(y0 + 1, h - 1)
    if pano.ndim == 3:
        fx = fx[..., None]
        fy = fy[..., None]
    src = pano.astype(np.float64, copy=False)
    top = src[y0, x0] * (1 - fx) + src[y0, x1] * fx
    bot = src[y1, x0] * (1 - fx) + src[y1, x1] * fx
    return top * (1 - fy) + bot * fy


def check_panorama(pano: np.ndarray):
    if pano.ndim not in (2, 3):
        raise ProjectionError(f"panorama must be HxW or HxWxC, got shape {pano.shape}")
    h, w = pano.shape[:2]
    if w != 2 * h:
        raise ProjectionError(f"panorama must be 2:1, got {w}x{h}")


def render_view(
    pano: np.ndarray,
    yaw: float,
    pitch: float = 0.0,
    fov: float = 90.0,
    out_w: int = 512,
    out_h: int = 512,
) -> np.ndarray:
    """Render a perspective crop looking ``yaw`` degrees right of the pano centre."""
    check_panorama(pano)
    h, w = pano.shape[:2]
    u, v = view_sample_grid(w, h, yaw, pitch, fov, out_w, out_h)
    out = bilinear_sample(pano, u, v)
    return out.astype(np.float32)


def render_heading(
    pano: np.ndarray,
    heading_ref: float,
    heading: float,
    pitch: float = 0.0,
    fov: float = 90.0,
    out_w: int = 512,
    out_h: int = 512,
) -> np.ndarray:
    """Render the view at compass ``heading`` from a pano whose centre faces ``heading_ref``."""
    return render_view(pano, (heading - heading_ref) % 360.0, pitch, fov, out_w, out_h)


@lru_cache(maxsize=64)
def _synthetic(heading_ref: float, width: int, height: int) -> np.ndarray:
    cols = heading_ref + ((np.arange(width) + 0.5) / width - 0.5) * 360.0
    rows = 90.0 - (np.arange(height) + 0.5) / height * 180.0
    b = np.radians(cols)
    pano = np.empty((height, width, 3), dtype=np.float32)
    pano[..., 0] = np.cos(b)[None, :]
    pano[..., 1] = np.sin(b)[None, :]
    pano[..., 2] = (rows / 90.0)[:, None]
    pano.setflags(write=False)
    return pano


def synthetic_panorama(heading_ref: float = 0.0, width: int = 512, height: Optional[int] = None) -> np.ndarray:
    """A panorama whose pixels encode their own compass bearing and elevation.

    Channels are (cos bearing, sin bearing, elevation / 90). Read back a
    bearing with :func:`decode_bearing`. The array is read-only and cached.
    """
    height = width // 2 if height is None else height
    return _synthetic(float(heading_ref) % 360.0, int(width), int(height))


def decode_bearing(pixel) -> float:
    pixel = np.asarray(pixel, dtype=np.float64)
    return float(np.degrees(np.arctan2(pixel[..., 1], pixel[..., 0])) % 360.0)


def view_hash(view: np.ndarray) -> str:
    arr = np.ascontiguousarray(view)
    h = hashlib.sha256()
    h.update(f"{arr.dtype.str}{arr.shape}".encode())
    h.update(arr.tobytes())
    return h.hexdigest()


class PanoStore:
    """Panorama lookup by a node's ``image_ref``.

    Nodes without an image (or a store without a root) get the synthetic
    bearing-encoding panorama, so everything works without image files.
    """

    def __init__(self, root: Optional[str | Path] = None, synthetic_width: int = 512):
        self.root = Path(root) if root is not None else None
        self.synthetic_width = synthetic_width
        self._cache: dict[str, np.ndarray] = {}

    def get(self, image_ref: Optional[str], heading_ref: float = 0.0) -> np.ndarray:
        if image_ref is None or self.root is None:
            return synthetic_panorama(heading_ref, self.synthetic_width)
        if image_ref not in self._cache:
            self._cache[image_ref] = self._load(image_ref)
        return self._cache[image_ref]

    def _load(self, image_ref: str) -> np.ndarray:
        from PIL import Image

        path = self.root / image_ref
        with Image.open(path) as img:
            arr = np.asarray(img.convert("RGB"), dtype=np.float32) / 255.0
        check_panorama(arr)
        arr.setflags(write=False)
        return arr


def to_png_bytes(view: np.ndarray) -> bytes:
    """Encode a float view as 8-bit PNG. Values are clipped to [0, 1] after
    mapping the synthetic [-1, 1] range when negatives are present."""
    import io

    from PIL import Image

    arr = np.asarray(view, dtype=np.float64)
    if arr.min() < 0:
        arr = (arr + 1.0) / 2.0
    img = (np.clip(arr, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(img).save(buf, format="PNG")
    return buf.getvalue()
