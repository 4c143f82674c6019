"""Manifold-valued images, colour codecs, DT voxel repair and file formats.

MVI layout (little-endian)::

    "MVI1" | u32 tag | u32 height | u32 width | u32 values-per-pixel
    | height*width*vpp float64 (row-major) | vpp float64 anchor

Tags: 0 = HSV, 1 = sphere (chromaticity), 2 = SPD(3); vpp is 3, 3, 9.
"""

from __future__ import annotations

import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import geometry as geo
from .geometry import GeometryTag

MVI_MAGIC = b"MVI1"
_MVI_HEADER = struct.Struct("<4sIIII")
REPAIR_EPS = 1e-6


class FormatError(ValueError):
    """Malformed or truncated image file."""


class DataError(ValueError):
    """Image content that cannot be processed (non-finite values, bad dims)."""


@dataclass
class ManifoldImage:
    """H x W grid of points on one geometry, sharing one anchor."""

    tag: GeometryTag
    pixels: np.ndarray
    anchor: np.ndarray | None = None

    def __post_init__(self):
        self.tag = GeometryTag.parse(self.tag)
        self.pixels = np.asarray(self.pixels, dtype=np.float64)
        if self.pixels.ndim != 2 + len(self.tag.point_shape) or self.pixels.shape[2:] != self.tag.point_shape:
            raise DataError(f"{self.tag.label} image needs shape (H, W, *{self.tag.point_shape}), "
                            f"got {self.pixels.shape}")
        if self.anchor is None:
            self.anchor = geo.default_anchor(self.tag)
        self.anchor = np.asarray(self.anchor, dtype=np.float64).reshape(self.tag.point_shape)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    def validate(self) -> "ManifoldImage":
        geo.validate_points(self.tag, self.pixels, what="pixel")
        geo.validate_points(self.tag, self.anchor, what="anchor")
        return self


@dataclass
class RgbImage:
    pixels: np.ndarray  # (H, W, 3) in [0, 1]

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.float64)
        if self.pixels.ndim != 3 or self.pixels.shape[2] != 3:
            raise DataError(f"RGB image needs shape (H, W, 3), got {self.pixels.shape}")
        if not np.all(np.isfinite(self.pixels)) or np.any((self.pixels < 0) | (self.pixels > 1)):
            raise DataError("RGB channels must lie in [0, 1]")

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


# ---------------------------------------------------------------------------
# HSV codec


def rgb_to_hsv(img: RgbImage) -> ManifoldImage:
    """Hexcone HSV with hue in radians on [-pi, pi); grey pixels get hue 0."""
    rgb = img.pixels
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    mx = rgb.max(axis=-1)
    mn = rgb.min(axis=-1)
    delta = mx - mn
    chroma = delta > 0
    safe = np.where(chroma, delta, 1.0)
    sector = np.where(
        mx == r, np.mod((g - b) / safe, 6.0),
        np.where(mx == g, (b - r) / safe + 2.0, (r - g) / safe + 4.0),
    )
    hue = np.where(chroma, geo.wrap_angle(sector * (np.pi / 3.0)), 0.0)
    sat = np.where(mx > 0, delta / np.where(mx > 0, mx, 1.0), 0.0)
    return ManifoldImage(GeometryTag.HSV, np.stack([hue, sat, mx], axis=-1))


def hsv_pixels_to_rgb(hsv: np.ndarray) -> np.ndarray:
    hsv = np.asarray(hsv, dtype=np.float64)
    s = np.clip(hsv[..., 1], 0.0, 1.0)
    v = np.clip(hsv[..., 2], 0.0, 1.0)
    h6 = np.mod(hsv[..., 0], geo.TWO_PI) / (np.pi / 3.0)
    i = np.floor(h6)
    f = h6 - i
    i = np.mod(i, 6).astype(int)
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))
    table = np.stack([
        np.stack([v, t, p], -1), np.stack([q, v, p], -1), np.stack([p, v, t], -1),
        np.stack([p, q, v], -1), np.stack([t, p, v], -1), np.stack([v, p, q], -1),
    ])
    out = np.take_along_axis(table, i[None, ..., None], axis=0)[0]
    return np.clip(out, 0.0, 1.0)


def hsv_to_rgb(img: ManifoldImage) -> RgbImage:
    """Inverse hexcone transform after clamping saturation/value to [0, 1]."""
    if img.tag is not GeometryTag.HSV:
        raise DataError(f"hsv_to_rgb needs an HSV image, got {img.tag.label}")
    return RgbImage(hsv_pixels_to_rgb(img.pixels))


# ---------------------------------------------------------------------------
# chromaticity / brightness codec


@dataclass
class BrightnessChannel:
    values: np.ndarray  # (H, W), >= 0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or np.any(self.values < 0):
            raise DataError("brightness must be a nonnegative (H, W) array")


def rgb_to_cb(img: RgbImage) -> tuple[ManifoldImage, BrightnessChannel]:
    """Split into unit chromaticity on S^2 and Euclidean brightness.

    Black pixels map to the sphere anchor with brightness 0.
    """
    rgb = img.pixels
    norm = np.linalg.norm(rgb, axis=-1)
    black = norm == 0
    anchor = geo.default_anchor(GeometryTag.SPHERE)
    chroma = np.where(black[..., None], anchor, rgb / np.where(black, 1.0, norm)[..., None])
    return ManifoldImage(GeometryTag.SPHERE, chroma, anchor), BrightnessChannel(norm)


def cb_pixels_to_rgb(chroma: np.ndarray, brightness) -> np.ndarray:
    """Unclamped ``brightness * max(chroma, 0)``."""
    return np.asarray(brightness, dtype=np.float64)[..., None] * np.clip(chroma, 0.0, None)


def cb_to_rgb(chroma: ManifoldImage, brightness: BrightnessChannel | float) -> RgbImage:
    """``brightness * chroma`` with negative chroma and out-of-range channels clamped."""
    if chroma.tag is not GeometryTag.SPHERE:
        raise DataError(f"cb_to_rgb needs a sphere image, got {chroma.tag.label}")
    if isinstance(brightness, BrightnessChannel):
        if brightness.values.shape != chroma.pixels.shape[:2]:
            raise DataError(f"brightness {brightness.values.shape} does not match chroma "
                            f"{chroma.pixels.shape[:2]}")
        b = brightness.values
    else:
        b = np.full(chroma.pixels.shape[:2], float(brightness))
    return RgbImage(np.clip(cb_pixels_to_rgb(chroma.pixels, b), 0.0, 1.0))


# ---------------------------------------------------------------------------
# diffusion tensors


@dataclass
class RepairReport:
    repaired: int
    total: int
    indices: np.ndarray  # (k, 2) row/col of repaired voxels
    min_eigenvalue_before: float

    @property
    def fraction(self) -> float:
        return self.repaired / self.total if self.total else 0.0


def repair_spd_image(raw, eps: float = REPAIR_EPS, anchor=None) -> tuple[ManifoldImage, RepairReport]:
    """Project invalid voxels onto SPD: symmetrize, then clamp eigenvalues to >= ``eps``.

    Voxels that are already symmetric positive definite are returned
    bit-for-bit, so repairing twice changes nothing.
    """
    if eps <= 0:
        raise DataError("eps must be positive")
    raw = np.asarray(raw, dtype=np.float64)
    if raw.ndim != 4 or raw.shape[2:] != (3, 3):
        raise DataError(f"DT slice needs shape (H, W, 3, 3), got {raw.shape}")
    if not np.all(np.isfinite(raw)):
        bad = np.argwhere(~np.all(np.isfinite(raw), axis=(-2, -1)))
        raise DataError(f"non-finite tensor entries at voxel {tuple(int(i) for i in bad[0])}")
    asym = np.linalg.norm(raw - np.swapaxes(raw, -1, -2), axis=(-2, -1))
    sym = geo._sym(raw)
    lam, q = np.linalg.eigh(sym)
    bad = (asym > geo.SYMMETRY_TOL) | (lam[..., 0] <= 0.0)
    out = raw.copy()
    if np.any(bad):
        fixed = geo._reassemble(np.maximum(lam[bad], eps), q[bad])
        out[bad] = fixed
    report = RepairReport(int(bad.sum()), int(bad.size), np.argwhere(bad), float(lam[..., 0].min()))
    return ManifoldImage(GeometryTag.SPD, out, anchor).validate(), report


def fractional_anisotropy(tensors) -> np.ndarray:
    """FA in [0, 1] per tensor: ``sqrt(3/2) ||lam - mean|| / ||lam||``."""
    lam = np.linalg.eigvalsh(geo._sym(np.asarray(tensors, dtype=np.float64)))
    dev = lam - lam.mean(axis=-1, keepdims=True)
    norm = np.linalg.norm(lam, axis=-1)
    return np.sqrt(1.5) * np.linalg.norm(dev, axis=-1) / np.where(norm > 0, norm, 1.0)


def synthetic_dt_slice(height: int, width: int, corrupt_fraction: float = 0.006,
                       seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Smooth synthetic DT slice with a fraction of voxels made non-SPD.

    Returns the raw ``(H, W, 3, 3)`` array and the boolean corruption mask.
    Corrupted voxels get one eigenvalue flipped negative, as happens when
    tensor fitting meets noisy signal; half of them also get an asymmetric
    perturbation.
    """
    rng = np.random.default_rng(seed)
    yy, xx = np.meshgrid(np.linspace(0, np.pi, height), np.linspace(0, np.pi, width), indexing="ij")
    angle = 0.5 * (xx + yy)
    e1 = np.stack([np.cos(angle), np.sin(angle), np.zeros_like(angle)], -1)
    e2 = np.stack([-np.sin(angle), np.cos(angle), np.zeros_like(angle)], -1)
    e3 = np.broadcast_to([0.0, 0.0, 1.0], e1.shape)
    q = np.stack([e1, e2, e3], -1)
    lam = np.stack([1.7 + 0.3 * np.sin(xx), 0.4 + 0.1 * np.cos(yy), np.full_like(xx, 0.3)], -1) * 1e-3
    lam = lam * np.exp(0.05 * rng.standard_normal(lam.shape))
    raw = geo._reassemble(lam, q)
    n_bad = max(1, int(round(corrupt_fraction * height * width)))
    flat = rng.choice(height * width, size=n_bad, replace=False)
    mask = np.zeros(height * width, dtype=bool)
    mask[flat] = True
    mask = mask.reshape(height, width)
    bad_lam = lam[mask].copy()
    bad_lam[:, 2] = -np.abs(bad_lam[:, 2]) * rng.uniform(0.5, 2.0, len(bad_lam))
    raw[mask] = geo._reassemble(bad_lam, q[mask])
    idx = np.argwhere(mask)[: n_bad // 2]
    for i, j in idx:
        raw[i, j, 0, 1] += 1e-5
    return raw, mask


def read_camino_dt(path, height: int, width: int) -> np.ndarray:
    """Read one slice of a Camino ``dt`` file into raw (H, W, 3, 3) tensors.

    Camino stores, per voxel and in voxel order, eight big-endian float64
    values: exit code, ln S0, Dxx, Dxy, Dxz, Dyy, Dyz, Dzz.  The tensors are
    returned unrepaired; pass them through :func:`repair_spd_image`.
    """
    data = np.fromfile(path, dtype=">f8")
    if data.size != height * width * 8:
        raise FormatError(f"expected {height * width * 8} doubles, found {data.size}")
    d = data.reshape(height, width, 8)[..., 2:].astype(np.float64)
    out = np.empty((height, width, 3, 3))
    for k, (i, j) in enumerate(((0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2))):
        out[..., i, j] = out[..., j, i] = d[..., k]
    return out


# ---------------------------------------------------------------------------
# tangent fields


def image_to_tangent_field(img: ManifoldImage, anchor=None) -> np.ndarray:
    """Flat vector of per-pixel ``log_anchor`` basis coordinates (row-major, length HW*k)."""
    frame = geo.TangentFrame(img.tag, img.anchor if anchor is None else anchor)
    return frame.log(img.pixels).reshape(-1)


def tangent_field_to_image(vec, tag, dims: tuple[int, int], anchor=None) -> ManifoldImage:
    tag = GeometryTag.parse(tag)
    frame = geo.TangentFrame(tag, geo.default_anchor(tag) if anchor is None else anchor)
    vec = np.asarray(vec, dtype=np.float64)
    h, w = dims
    if vec.size != h * w * frame.dim:
        raise DataError(f"tangent field length {vec.size} != {h}*{w}*{frame.dim}")
    return ManifoldImage(tag, frame.exp(vec.reshape(h, w, frame.dim)), frame.anchor)


# ---------------------------------------------------------------------------
# files


def atomic_write_bytes(path, payload: bytes) -> None:
    """Write via a temp file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def mvi_bytes(img: ManifoldImage) -> bytes:
    vpp = img.tag.values_per_point
    header = _MVI_HEADER.pack(MVI_MAGIC, int(img.tag), img.height, img.width, vpp)
    body = np.ascontiguousarray(img.pixels, dtype="<f8").tobytes()
    return header + body + np.ascontiguousarray(img.anchor, dtype="<f8").tobytes()


def save_mvi(img: ManifoldImage, path) -> None:
    atomic_write_bytes(path, mvi_bytes(img))


def parse_mvi(raw: bytes, *, validate: bool = True) -> ManifoldImage:
    if len(raw) < _MVI_HEADER.size:
        raise FormatError("truncated MVI header")
    magic, tag, h, w, vpp = _MVI_HEADER.unpack_from(raw)
    if magic != MVI_MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if tag not in (0, 1, 2):
        raise FormatError(f"unknown geometry tag {tag}")
    tag = GeometryTag(tag)
    if vpp != tag.values_per_point:
        raise FormatError(f"{tag.label} needs {tag.values_per_point} values per pixel, header says {vpp}")
    if h == 0 or w == 0:
        raise FormatError("empty image")
    expected = _MVI_HEADER.size + 8 * vpp * (h * w + 1)
    if len(raw) != expected:
        kind = "truncated" if len(raw) < expected else "oversized"
        raise FormatError(f"{kind} MVI payload: {len(raw)} bytes, expected {expected}")
    values = np.frombuffer(raw, dtype="<f8", offset=_MVI_HEADER.size).astype(np.float64)
    pixels = values[: h * w * vpp].reshape((h, w) + tag.point_shape)
    anchor = values[h * w * vpp:].reshape(tag.point_shape)
    img = ManifoldImage(tag, pixels, anchor)
    if validate:
        try:
            img.validate()
        except geo.GeometryError as exc:
            raise FormatError(f"invariant violation: {exc}") from exc
    return img


def load_mvi(path, *, validate: bool = True) -> ManifoldImage:
    return parse_mvi(Path(path).read_bytes(), validate=validate)


def load_mvi_stack(paths) -> tuple[GeometryTag, np.ndarray]:
    """Load several MVI files of one geometry as a ``(n, H*W, *point_shape)`` array."""
    imgs = [load_mvi(p) for p in paths]
    tags = {im.tag for im in imgs}
    if len(tags) != 1:
        raise FormatError("files mix geometry tags")
    shapes = {im.pixels.shape for im in imgs}
    if len(shapes) != 1:
        raise FormatError("files have different dimensions")
    tag = imgs[0].tag
    return tag, np.stack([im.pixels.reshape((-1,) + tag.point_shape) for im in imgs])


def ppm_bytes(img: RgbImage) -> bytes:
    """Binary P6, maxval 255, rounding half up."""
    q = np.floor(np.clip(img.pixels, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    return f"P6\n{img.width} {img.height}\n255\n".encode("ascii") + q.tobytes()


def save_ppm(img: RgbImage, path) -> None:
    atomic_write_bytes(path, ppm_bytes(img))


def parse_ppm(raw: bytes) -> RgbImage:
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(raw) and raw[pos:pos + 1].isspace():
            pos += 1
        if pos < len(raw) and raw[pos:pos + 1] == b"#":
            while pos < len(raw) and raw[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos:pos + 1].isspace() and raw[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise FormatError("truncated PPM header")
        tokens.append(raw[start:pos])
    if tokens[0] != b"P6":
        raise FormatError(f"not a binary PPM (magic {tokens[0]!r})")
    try:
        w, h, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise FormatError("non-numeric PPM header field") from None
    if w <= 0 or h <= 0 or not 0 < maxval < 256:
        raise FormatError(f"unsupported PPM dims/maxval {w}x{h}/{maxval}")
    pos += 1  # single whitespace byte after maxval
    body = raw[pos:]
    if len(body) < w * h * 3:
        raise FormatError(f"truncated PPM payload: {len(body)} of {w * h * 3} bytes")
    pixels = np.frombuffer(body[: w * h * 3], dtype=np.uint8).reshape(h, w, 3) / float(maxval)
    return RgbImage(pixels)


def load_ppm(path) -> RgbImage:
    return parse_ppm(Path(path).read_bytes())
