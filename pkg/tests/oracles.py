"""Reference implementations used only by the tests.

Each oracle avoids the package code it checks: brute force instead of the
assignment solver, an LP instead of the simplex, colorsys instead of the
hexcone codec, scipy's logm instead of the eigendecomposition, and a plain
numpy backprop of the MLP instead of the tape.
"""

from __future__ import annotations

import colorsys
import itertools

import numpy as np
from scipy.linalg import expm, logm
from scipy.optimize import linprog


# --- transport ---------------------------------------------------------------


def brute_force_w1(cost) -> float:
    """Min over permutations of the mean assignment cost (uniform, n = m)."""
    cost = np.asarray(cost, dtype=np.float64)
    n = cost.shape[0]
    rows = np.arange(n)
    return min(cost[rows, list(p)].sum() for p in itertools.permutations(range(n))) / n


def lp_w1(cost, wa, wb) -> float:
    """Transportation LP solved by HiGHS."""
    cost = np.asarray(cost, dtype=np.float64)
    n, m = cost.shape
    a_eq = np.zeros((n + m, n * m))
    for i in range(n):
        a_eq[i, i * m:(i + 1) * m] = 1.0
    for j in range(m):
        a_eq[n + j, j::m] = 1.0
    res = linprog(cost.ravel(), A_eq=a_eq, b_eq=np.concatenate([wa, wb]), bounds=(0, None), method="highs")
    assert res.status == 0, res.message
    return float(res.fun)


def euclidean_cost(a, b) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64).reshape(len(a), -1)
    b = np.asarray(b, dtype=np.float64).reshape(len(b), -1)
    return np.sqrt(((a[:, None, :] - b[None, :, :]) ** 2).sum(-1))


# --- geometry ----------------------------------------------------------------


def hue_gap(a, b):
    """Shortest arc between two hues, by enumeration of the three candidate turns."""
    d = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    return np.min(np.abs(np.stack([d - 2 * np.pi, d, d + 2 * np.pi])), axis=0)


def hsv_distance(x, y) -> float:
    x, y = np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)
    return float(np.sqrt(hue_gap(x[0], y[0]) ** 2 + (x[1] - y[1]) ** 2 + (x[2] - y[2]) ** 2))


def sphere_distance(x, y) -> float:
    return float(np.arccos(np.clip(np.dot(x, y), -1.0, 1.0)))


def spd_distance(x, y) -> float:
    return float(np.linalg.norm(np.real(logm(x)) - np.real(logm(y)), "fro"))


def spd_geodesic(y, x, t: float) -> np.ndarray:
    """Log-Euclidean geodesic ``exp((1 - t) log y + t log x)``."""
    return expm((1.0 - t) * np.real(logm(y)) + t * np.real(logm(x)))


def random_spd(rng, scale: float = 1.0) -> np.ndarray:
    a = rng.standard_normal((3, 3)) * scale
    return expm((a + a.T) / 2.0)


def random_unit(rng) -> np.ndarray:
    v = rng.standard_normal(3)
    return v / np.linalg.norm(v)


# --- colour ------------------------------------------------------------------


def rgb_to_hsv_radians(rgb) -> np.ndarray:
    """colorsys hexcone with hue turned into radians on [-pi, pi)."""
    out = np.empty(rgb.shape)
    for idx in np.ndindex(rgb.shape[:-1]):
        h, s, v = colorsys.rgb_to_hsv(*rgb[idx])
        hue = 2.0 * np.pi * h
        if hue >= np.pi:
            hue -= 2.0 * np.pi
        out[idx] = (hue, s, v)
    return out


def hsv_radians_to_rgb(hsv) -> np.ndarray:
    out = np.empty(hsv.shape)
    for idx in np.ndindex(hsv.shape[:-1]):
        h, s, v = hsv[idx]
        out[idx] = colorsys.hsv_to_rgb((h / (2.0 * np.pi)) % 1.0, s, v)
    return out


# --- networks ----------------------------------------------------------------


def mlp_params(flat, sizes):
    """Split a flat parameter vector into ``[(W, b), ...]``."""
    out, pos = [], 0
    for fi, fo in zip(sizes[:-1], sizes[1:]):
        w = flat[pos:pos + fi * fo].reshape(fi, fo)
        pos += fi * fo
        b = flat[pos:pos + fo]
        pos += fo
        out.append((w, b))
    return out


def mlp_forward(layers, x, slope: float = 0.2) -> np.ndarray:
    h = x
    for k, (w, b) in enumerate(layers):
        h = h @ w + b
        if k < len(layers) - 1:
            h = np.where(h > 0, h, slope * h)
    return h[:, 0]


def mlp_input_grad(layers, x, slope: float = 0.2) -> np.ndarray:
    """``dD/dx`` for a scalar-output leaky-ReLU MLP, one row per sample."""
    pre = []
    h = x
    for k, (w, b) in enumerate(layers):
        z = h @ w + b
        pre.append(z)
        h = np.where(z > 0, z, slope * z) if k < len(layers) - 1 else z
    g = np.ones((len(x), 1))
    for k in range(len(layers) - 1, -1, -1):
        w, _ = layers[k]
        if k < len(layers) - 1:
            g = g * np.where(pre[k] > 0, 1.0, slope)
        g = g @ w.T
    return g


def critic_loss_value(flat, sizes, real, fake, x_hat, lam: float, slope: float = 0.2) -> float:
    """WGAN-GP critic loss evaluated without any autodiff."""
    layers = mlp_params(flat, sizes)
    d_real = mlp_forward(layers, real, slope).mean()
    d_fake = mlp_forward(layers, fake, slope).mean()
    gnorm = np.linalg.norm(mlp_input_grad(layers, x_hat, slope), axis=1)
    return float(-(d_real - d_fake) + lam * np.mean((gnorm - 1.0) ** 2))


def central_difference(f, x, step: float = 1e-5) -> np.ndarray:
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e.flat[i] = step
        g.flat[i] = (f(x + e) - f(x - e)) / (2.0 * step)
    return g


def relative_error(a, n) -> float:
    a, n = np.asarray(a), np.asarray(n)
    return float(np.abs(a - n).max() / max(np.abs(a).max(), np.abs(n).max(), 1e-300))
