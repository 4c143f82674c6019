"""Exp/log maps, distances and tangent bases for the three image manifolds.

Points are plain float64 arrays; the geometry is carried separately by a
:class:`GeometryTag`.  Every function accepts leading batch dimensions and
broadcasts the base point against the batch.

========  ==============  ===========  ==============
tag       point shape     tangent dim  values / pixel
========  ==============  ===========  ==============
HSV       ``(..., 3)``    3            3
SPHERE    ``(..., 3)``    2            3
SPD       ``(..., 3, 3)`` 6            9
========  ==============  ===========  ==============

HSV points are ``(hue, saturation, value)`` with hue in radians on
``[-pi, pi)``; the saturation/value box is treated as flat.  SPD points use
the Log-Euclidean metric.
"""

from __future__ import annotations

import enum

import numpy as np

TWO_PI = 2.0 * np.pi
SPHERE_ANTIPODAL_TOL = 1e-9
SPHERE_SERIES_CUTOFF = 1e-8
SPHERE_NORM_TOL = 1e-12
SPHERE_TANGENT_TOL = 1e-10
SYMMETRY_TOL = 1e-12


class GeometryError(ValueError):
    """Invalid point, tangent vector or tag combination."""


class AntipodalError(GeometryError):
    """Sphere log requested between (numerically) antipodal points."""


class EigenvalueError(GeometryError):
    """A matrix expected to be SPD has a non-positive eigenvalue."""

    def __init__(self, min_eigenvalue: float, message: str | None = None):
        self.min_eigenvalue = float(min_eigenvalue)
        super().__init__(message or f"matrix is not SPD: min eigenvalue {self.min_eigenvalue:.6g}")


class GeometryTag(enum.IntEnum):
    """Which manifold a point lives on. Values match the MVI file codes."""

    HSV = 0
    SPHERE = 1
    SPD = 2

    @property
    def label(self) -> str:
        return {0: "HsvProduct", 1: "Sphere2", 2: "Spd3"}[int(self)]

    @property
    def point_shape(self) -> tuple[int, ...]:
        return (3, 3) if self is GeometryTag.SPD else (3,)

    @property
    def values_per_point(self) -> int:
        return 9 if self is GeometryTag.SPD else 3

    @property
    def tangent_dim(self) -> int:
        return (3, 2, 6)[int(self)]

    @classmethod
    def parse(cls, name: str | int | "GeometryTag") -> "GeometryTag":
        if isinstance(name, GeometryTag):
            return name
        if isinstance(name, (int, np.integer)):
            return cls(int(name))
        key = str(name).strip().lower()
        aliases = {
            "hsv": cls.HSV, "hsvproduct": cls.HSV, "s1": cls.HSV,
            "sphere": cls.SPHERE, "sphere2": cls.SPHERE, "s2": cls.SPHERE, "cb": cls.SPHERE,
            "spd": cls.SPD, "spd3": cls.SPD, "dt": cls.SPD,
        }
        try:
            return aliases[key]
        except KeyError:
            raise GeometryError(f"unknown geometry tag {name!r}") from None


def wrap_angle(a):
    """Wrap angles into ``[-pi, pi)``."""
    a = np.asarray(a, dtype=np.float64)
    w = np.mod(a + np.pi, TWO_PI) - np.pi
    # np.mod can round up to exactly 2*pi for tiny negative arguments
    return np.where(w >= np.pi, w - TWO_PI, w)


def default_anchor(tag: GeometryTag) -> np.ndarray:
    """Fixed base point used for tangent-space representations.

    The HSV anchor hue pi is stored in its canonical form -pi.
    """
    tag = GeometryTag.parse(tag)
    if tag is GeometryTag.HSV:
        return np.array([wrap_angle(np.pi), 0.0, 0.0])
    if tag is GeometryTag.SPHERE:
        return np.full(3, 1.0 / np.sqrt(3.0))
    return np.eye(3)


# ---------------------------------------------------------------------------
# validation


def validate_points(tag: GeometryTag, points, *, what: str = "point") -> np.ndarray:
    """Check point invariants, returning the points as a float64 array."""
    tag = GeometryTag.parse(tag)
    p = np.asarray(points, dtype=np.float64)
    shape = tag.point_shape
    if p.shape[p.ndim - len(shape):] != shape:
        raise GeometryError(f"{tag.label} {what} must have trailing shape {shape}, got {p.shape}")
    if not np.all(np.isfinite(p)):
        raise GeometryError(f"{tag.label} {what} contains non-finite values")
    if tag is GeometryTag.HSV:
        # s and v are not clamped by exp; rendering clamps them to [0, 1]
        h = p[..., 0]
        if np.any((h < -np.pi) | (h >= np.pi)):
            raise GeometryError(f"hue outside [-pi, pi) in {what}")
    elif tag is GeometryTag.SPHERE:
        err = np.abs(np.linalg.norm(p, axis=-1) - 1.0)
        if np.any(err > SPHERE_NORM_TOL):
            raise GeometryError(f"sphere {what} off unit norm by {err.max():.3g}")
    else:
        asym = np.linalg.norm(p - np.swapaxes(p, -1, -2), axis=(-2, -1))
        if np.any(asym > SYMMETRY_TOL):
            raise GeometryError(f"SPD {what} asymmetric by {asym.max():.3g}")
        lam = np.linalg.eigvalsh(p)
        if np.any(lam[..., 0] <= 0.0):
            raise EigenvalueError(lam[..., 0].min())
    return p


def points_valid(tag: GeometryTag, points) -> np.ndarray:
    """Boolean mask over the batch dims: which points satisfy their invariants."""
    tag = GeometryTag.parse(tag)
    p = np.asarray(points, dtype=np.float64)
    nd = len(tag.point_shape)
    finite = np.all(np.isfinite(p), axis=tuple(range(p.ndim - nd, p.ndim)))
    p = np.where(np.isfinite(p), p, 0.0)
    if tag is GeometryTag.HSV:
        h = p[..., 0]
        ok = (h >= -np.pi) & (h < np.pi)
    elif tag is GeometryTag.SPHERE:
        ok = np.abs(np.linalg.norm(p, axis=-1) - 1.0) <= SPHERE_NORM_TOL
    else:
        asym = np.linalg.norm(p - np.swapaxes(p, -1, -2), axis=(-2, -1))
        ok = (asym <= SYMMETRY_TOL) & (np.linalg.eigvalsh(_sym(p))[..., 0] > 0.0)
    return finite & ok


# ---------------------------------------------------------------------------
# HSV: S^1 x [0,1]^2


def hsv_log(y, x) -> np.ndarray:
    """Minimal tangent vector at ``y`` pointing to ``x`` (hue difference wrapped)."""
    y = np.asarray(y, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    dh = wrap_angle(x[..., 0] - y[..., 0])
    return np.concatenate([dh[..., None], x[..., 1:] - y[..., 1:]], axis=-1)


def hsv_exp(y, v) -> np.ndarray:
    """Hue advanced and wrapped; saturation and value added without clamping."""
    y = np.asarray(y, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    h = wrap_angle(v[..., 0] + y[..., 0])
    return np.concatenate([h[..., None], v[..., 1:] + y[..., 1:]], axis=-1)


def hsv_distance(x, y) -> np.ndarray:
    return np.linalg.norm(hsv_log(y, x), axis=-1)


# ---------------------------------------------------------------------------
# Sphere S^2


def sphere_project_tangent(y, h) -> np.ndarray:
    """``h - <y, h> y``: orthogonal projection onto the tangent plane at ``y``."""
    y = np.asarray(y, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    return h - np.sum(y * h, axis=-1, keepdims=True) * y


def _sphere_angle(x, y):
    # atan2 form keeps full relative accuracy near 0 and pi, unlike arccos
    cross = np.linalg.norm(np.cross(x, y), axis=-1)
    return np.arctan2(cross, np.sum(x * y, axis=-1))


def sphere_log(y, x) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    c = np.sum(x * y, axis=-1)
    if np.any(c <= -1.0 + SPHERE_ANTIPODAL_TOL):
        raise AntipodalError("sphere log undefined for antipodal points")
    p = sphere_project_tangent(y, x - y)
    pn = np.linalg.norm(p, axis=-1)
    theta = _sphere_angle(x, y)
    # ||p|| = sin(theta) exactly; theta / sin(theta) via series when tiny
    small = pn < SPHERE_SERIES_CUTOFF
    safe = np.where(small, 1.0, pn)
    t2 = theta * theta
    series = 1.0 + t2 / 6.0 + 7.0 * t2 * t2 / 360.0 + 31.0 * t2 ** 3 / 15120.0
    scale = np.where(small, series, theta / safe)
    return scale[..., None] * p


def sphere_exp(y, v, *, check_tangent: bool = True) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if check_tangent:
        off = np.abs(np.sum(v * y, axis=-1))
        if np.any(off > SPHERE_TANGENT_TOL * np.maximum(1.0, np.linalg.norm(v, axis=-1))):
            raise GeometryError(f"vector not tangent to the sphere (|<v,y>| = {off.max():.3g})")
    n = np.linalg.norm(v, axis=-1)
    small = n < SPHERE_SERIES_CUTOFF
    safe = np.where(small, 1.0, n)
    n2 = n * n
    series = 1.0 - n2 / 6.0 + n2 * n2 / 120.0 - n2 ** 3 / 5040.0
    sinc = np.where(small, series, np.sin(n) / safe)
    out = np.cos(n)[..., None] * y + sinc[..., None] * v
    return out / np.linalg.norm(out, axis=-1, keepdims=True)


def sphere_distance(x, y) -> np.ndarray:
    return _sphere_angle(np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64))


# ---------------------------------------------------------------------------
# SPD(3), Log-Euclidean


def _sym(a):
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def _eigh(a):
    return np.linalg.eigh(_sym(np.asarray(a, dtype=np.float64)))


def _reassemble(w, q):
    return _sym((q * w[..., None, :]) @ np.swapaxes(q, -1, -2))


def sym_matrix_log(x) -> np.ndarray:
    """Matrix logarithm of SPD matrices through the symmetric eigendecomposition."""
    w, q = _eigh(x)
    if np.any(w[..., 0] <= 0.0):
        raise EigenvalueError(w[..., 0].min())
    return _reassemble(np.log(w), q)


def sym_matrix_exp(v) -> np.ndarray:
    w, q = _eigh(v)
    return _reassemble(np.exp(w), q)


def _exp_divided_differences(lam):
    """``(e^a - e^b) / (a - b)`` for all eigenvalue pairs, ``e^a`` on ties.

    Written as ``exp((a+b)/2) * sinh(d)/d`` with ``d = (a-b)/2`` so nearly
    equal eigenvalues do not cancel.
    """
    a = lam[..., :, None]
    b = lam[..., None, :]
    d = 0.5 * (a - b)
    small = np.abs(d) < 1e-4
    safe = np.where(small, 1.0, d)
    d2 = d * d
    sinhc = np.where(small, 1.0 + d2 / 6.0 + d2 * d2 / 120.0, np.sinh(d) / safe)
    return np.exp(0.5 * (a + b)) * sinhc


def exp_differential(log_base, h) -> np.ndarray:
    """Differential of the matrix exponential at symmetric ``log_base`` applied to ``h``.

    Daleckii-Krein: ``Q (F * (Q^T H Q)) Q^T`` with ``F`` the divided
    differences of ``exp`` over the eigenvalues.
    """
    lam, q = _eigh(log_base)
    qt = np.swapaxes(q, -1, -2)
    return _sym(q @ (_exp_divided_differences(lam) * (qt @ h @ q)) @ qt)


def log_differential(base, v) -> np.ndarray:
    """Differential of the matrix logarithm at SPD ``base`` applied to ``v``.

    The inverse of :func:`exp_differential` at ``log(base)``.
    """
    w, q = _eigh(base)
    if np.any(w[..., 0] <= 0.0):
        raise EigenvalueError(w[..., 0].min())
    qt = np.swapaxes(q, -1, -2)
    return _sym(q @ ((qt @ v @ q) / _exp_divided_differences(np.log(w))) @ qt)


def spd_log(y, x) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    ly = sym_matrix_log(y)
    return exp_differential(ly, sym_matrix_log(x) - ly)


def spd_exp(y, v) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    return sym_matrix_exp(sym_matrix_log(y) + log_differential(y, _sym(np.asarray(v, dtype=np.float64))))


def spd_distance(x, y) -> np.ndarray:
    return np.linalg.norm(sym_matrix_log(x) - sym_matrix_log(y), axis=(-2, -1))


# ---------------------------------------------------------------------------
# tag dispatch


def log_map(tag: GeometryTag, y, x) -> np.ndarray:
    tag = GeometryTag.parse(tag)
    if tag is GeometryTag.HSV:
        return hsv_log(y, x)
    if tag is GeometryTag.SPHERE:
        return sphere_log(y, x)
    return spd_log(y, x)


def exp_map(tag: GeometryTag, y, v) -> np.ndarray:
    tag = GeometryTag.parse(tag)
    if tag is GeometryTag.HSV:
        return hsv_exp(y, v)
    if tag is GeometryTag.SPHERE:
        return sphere_exp(y, v)
    return spd_exp(y, v)


def distance(tag: GeometryTag, x, y) -> np.ndarray:
    """Geodesic distance; equals the norm of ``log_map(tag, y, x)``."""
    tag = GeometryTag.parse(tag)
    if tag is GeometryTag.HSV:
        return hsv_distance(x, y)
    if tag is GeometryTag.SPHERE:
        return sphere_distance(x, y)
    return spd_distance(x, y)


def tangent_norm(tag: GeometryTag, y, v) -> np.ndarray:
    """Riemannian norm of tangent vectors ``v`` at ``y``.

    Euclidean for HSV and the sphere.  For SPD the Log-Euclidean metric at
    ``y`` is ``||D_y log(v)||_F``, which is the Frobenius norm when ``y`` is
    the identity.
    """
    tag = GeometryTag.parse(tag)
    v = np.asarray(v, dtype=np.float64)
    if tag is GeometryTag.SPD:
        return np.linalg.norm(log_differential(y, v), axis=(-2, -1))
    return np.linalg.norm(v, axis=-1)


def canonicalize(tag: GeometryTag, y, v) -> np.ndarray:
    """``log_y(exp_y(v))``: wraps hue, folds long sphere vectors, symmetrizes SPD."""
    tag = GeometryTag.parse(tag)
    if tag is GeometryTag.SPHERE:
        v = sphere_project_tangent(y, v)
    return log_map(tag, y, exp_map(tag, y, v))


def interpolate(tag: GeometryTag, y, x_real, g_raw, t) -> np.ndarray:
    """Tangent-space straight line between a real point and a generated tangent.

    Returns ``(1 - t) log_y(x_real) + t log_y(exp_y(g_raw))``; ``t`` broadcasts
    over the batch dimensions.
    """
    tag = GeometryTag.parse(tag)
    real = log_map(tag, y, x_real)
    fake = canonicalize(tag, y, g_raw)
    t = np.asarray(t, dtype=np.float64)
    t = t.reshape(t.shape + (1,) * len(tag.point_shape))
    return (1.0 - t) * real + t * fake


# ---------------------------------------------------------------------------
# tangent bases

_SPD_INDEX = ((0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2))


def _canonical_sym_basis() -> np.ndarray:
    basis = np.zeros((6, 3, 3))
    for k, (i, j) in enumerate(_SPD_INDEX):
        if i == j:
            basis[k, i, i] = 1.0
        else:
            basis[k, i, j] = basis[k, j, i] = 1.0 / np.sqrt(2.0)
    return basis


def _sphere_frame(y) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    frame = []
    for seed in np.eye(3):
        r = seed - np.dot(seed, y) * y
        for b in frame:
            r = r - np.dot(r, b) * b
        n = np.linalg.norm(r)
        if n > 0.1:
            frame.append(r / n)
        if len(frame) == 2:
            break
    return np.array(frame)


def tangent_basis(tag: GeometryTag, anchor) -> np.ndarray:
    """Orthonormal basis of the tangent space at ``anchor``, shape ``(k, *point_shape)``.

    Sphere: Gram-Schmidt of the coordinate axes against the anchor.  SPD: the
    six canonical symmetric matrices pushed through ``D_{log anchor} exp`` so
    they are orthonormal in the Log-Euclidean metric at the anchor (they are
    the canonical matrices themselves at the identity).
    """
    tag = GeometryTag.parse(tag)
    if tag is GeometryTag.HSV:
        return np.eye(3)
    if tag is GeometryTag.SPHERE:
        return _sphere_frame(anchor)
    return exp_differential(sym_matrix_log(anchor), _canonical_sym_basis())


class TangentFrame:
    """Coordinates of tangent vectors at one fixed anchor.

    Precomputes whatever the basis change needs, so mapping large batches
    stays cheap.
    """

    def __init__(self, tag: GeometryTag, anchor):
        self.tag = GeometryTag.parse(tag)
        self.anchor = validate_points(self.tag, anchor, what="anchor")
        self.dim = self.tag.tangent_dim
        self.basis = tangent_basis(self.tag, self.anchor)
        if self.tag is GeometryTag.SPD:
            self._log_anchor = sym_matrix_log(self.anchor)
            self._canon = _canonical_sym_basis()

    def to_coords(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=np.float64)
        if self.tag is GeometryTag.HSV:
            return v.copy()
        if self.tag is GeometryTag.SPHERE:
            return v @ self.basis.T
        w = log_differential(self.anchor, v)
        return np.einsum("...ij,kij->...k", w, self._canon)

    def from_coords(self, c) -> np.ndarray:
        c = np.asarray(c, dtype=np.float64)
        if c.shape[-1] != self.dim:
            raise GeometryError(f"{self.tag.label} coordinates need last axis {self.dim}, got {c.shape}")
        if self.tag is GeometryTag.HSV:
            return c.copy()
        if self.tag is GeometryTag.SPHERE:
            return c @ self.basis
        w = np.einsum("...k,kij->...ij", c, self._canon)
        return exp_differential(self._log_anchor, w)

    def log(self, x) -> np.ndarray:
        """Basis coordinates of ``log_anchor(x)``."""
        if self.tag is GeometryTag.SPD:
            # log_anchor(x) in coordinates is just log(x) - log(anchor)
            w = sym_matrix_log(x) - self._log_anchor
            return np.einsum("...ij,kij->...k", w, self._canon)
        return self.to_coords(log_map(self.tag, self.anchor, x))

    def exp(self, c) -> np.ndarray:
        """``exp_anchor`` of basis coordinates."""
        c = np.asarray(c, dtype=np.float64)
        if self.tag is GeometryTag.SPD:
            return sym_matrix_exp(self._log_anchor + np.einsum("...k,kij->...ij", c, self._canon))
        v = self.from_coords(c)
        if self.tag is GeometryTag.SPHERE:
            return sphere_exp(self.anchor, v, check_tangent=False)
        return hsv_exp(self.anchor, v)

    def canonical_shift(self, c) -> np.ndarray:
        """Integer fold counts ``k`` such that ``log(exp(c))`` is ``c`` shifted by ``k`` turns.

        HSV: ``k`` turns of the hue coordinate.  Sphere: ``k`` turns of the
        radius ``||c||`` along its own direction.  SPD: always zero.
        """
        c = np.asarray(c, dtype=np.float64)
        if self.tag is GeometryTag.HSV:
            return np.round((c[..., 0] - wrap_angle(c[..., 0])) / TWO_PI)
        if self.tag is GeometryTag.SPHERE:
            r = np.linalg.norm(c, axis=-1)
            return np.round((r - wrap_angle(r)) / TWO_PI)
        return np.zeros(c.shape[:-1])
