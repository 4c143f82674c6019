"""Randomized invariant sweeps over the geometry maps."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import geometry as geo
from .geometry import GeometryTag

ROUND_TRIP_TOL = {GeometryTag.HSV: 1e-12, GeometryTag.SPHERE: 1e-12, GeometryTag.SPD: 1e-9}
NORM_DISTANCE_TOL = 1e-10
REFERENCE_SPD_PAIRS = 500


def random_points(tag: GeometryTag, n: int, rng: np.random.Generator) -> np.ndarray:
    tag = GeometryTag.parse(tag)
    if tag is GeometryTag.HSV:
        return np.stack([rng.uniform(-np.pi, np.pi, n), rng.uniform(0, 1, n), rng.uniform(0, 1, n)], -1)
    if tag is GeometryTag.SPHERE:
        x = rng.standard_normal((n, 3))
        return x / np.linalg.norm(x, axis=-1, keepdims=True)
    a = rng.standard_normal((n, 3, 3))
    return geo._sym(a @ np.swapaxes(a, -1, -2) / 3.0 + 0.05 * np.eye(3))


def random_pairs(tag: GeometryTag, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """``n`` (base, point) pairs; sphere pairs are kept away from the antipodal cut."""
    tag = GeometryTag.parse(tag)
    y = random_points(tag, n, rng)
    x = random_points(tag, n, rng)
    if tag is GeometryTag.SPHERE:
        bad = np.sum(x * y, axis=-1) <= -1.0 + 1e-6
        while np.any(bad):
            x[bad] = random_points(tag, int(bad.sum()), rng)
            bad = np.sum(x * y, axis=-1) <= -1.0 + 1e-6
    return y, x


def point_error(tag: GeometryTag, a, b) -> np.ndarray:
    """Ambient distance between two representations; hue compared modulo a full turn."""
    tag = GeometryTag.parse(tag)
    d = np.asarray(a) - np.asarray(b)
    if tag is GeometryTag.HSV:
        d = d.copy()
        d[..., 0] = geo.wrap_angle(d[..., 0])
        return np.linalg.norm(d, axis=-1)
    if tag is GeometryTag.SPHERE:
        return np.linalg.norm(d, axis=-1)
    return np.linalg.norm(d, axis=(-2, -1))


@dataclass
class SweepResult:
    tag: GeometryTag
    trials: int
    max_round_trip: float
    max_norm_distance: float
    max_reference_distance: float
    round_trip_tol: float
    norm_distance_tol: float

    @property
    def passed(self) -> bool:
        return (self.max_round_trip <= self.round_trip_tol
                and self.max_norm_distance <= self.norm_distance_tol
                and self.max_reference_distance <= self.norm_distance_tol)


def invariant_sweep(tag, trials: int = 1000, seed: int = 0, round_trip_tol: float | None = None,
                    norm_distance_tol: float | None = None) -> SweepResult:
    """Round trip ``exp_y(log_y(x)) = x`` and ``||log_y(x)||_y = d(x, y)`` on random pairs.

    The distance is also compared with an independent formula:
    ``arccos<x, y>`` on the sphere, ``||log X - log Y||_F`` through scipy's
    ``logm`` for SPD (first 500 pairs), and the wrapped-hue Euclidean formula for HSV.
    """
    tag = GeometryTag.parse(tag)
    rng = np.random.default_rng(seed)
    y, x = random_pairs(tag, trials, rng)
    v = geo.log_map(tag, y, x)
    back = geo.exp_map(tag, y, v)
    rt = point_error(tag, back, x)
    dist = geo.distance(tag, x, y)
    nd = np.abs(geo.tangent_norm(tag, y, v) - dist)
    # scipy's logm is slow; the SPD cross-check runs on a prefix of the sweep
    k = min(trials, REFERENCE_SPD_PAIRS) if tag is GeometryTag.SPD else trials
    ref = np.abs(dist[:k] - _reference_distance(tag, x[:k], y[:k]))
    return SweepResult(
        tag, trials, float(rt.max()), float(nd.max()), float(ref.max()),
        ROUND_TRIP_TOL[tag] if round_trip_tol is None else round_trip_tol,
        NORM_DISTANCE_TOL if norm_distance_tol is None else norm_distance_tol,
    )


def _reference_distance(tag: GeometryTag, x, y) -> np.ndarray:
    if tag is GeometryTag.HSV:
        dh = np.abs(x[..., 0] - y[..., 0]) % (2 * np.pi)
        dh = np.minimum(dh, 2 * np.pi - dh)
        return np.sqrt(dh**2 + np.sum((x[..., 1:] - y[..., 1:]) ** 2, axis=-1))
    if tag is GeometryTag.SPHERE:
        return np.arccos(np.clip(np.sum(x * y, axis=-1), -1.0, 1.0))
    from scipy.linalg import logm

    lx = np.array([np.real(logm(m)) for m in x])
    ly = np.array([np.real(logm(m)) for m in y])
    return np.linalg.norm(lx - ly, axis=(-2, -1))
