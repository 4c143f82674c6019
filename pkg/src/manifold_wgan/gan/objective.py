"""The manifold-aware WGAN-GP objective.

Networks never see manifold points directly.  Real samples enter the critic
as ``log_y(x)`` in tangent-basis coordinates at the fixed anchor ``y``;
generator outputs are tangent coordinates that go through
``log_y(exp_y(.))`` before the critic, and through ``exp_y`` to become
samples.
"""

from __future__ import annotations

import numpy as np

from .. import autograd as ag
from .. import geometry as geo
from ..autograd import Tensor
from ..geometry import GeometryTag
from .networks import MLP


class TangentSpace:
    """Batch encoder/decoder between images of ``pixels`` points and flat coordinates."""

    def __init__(self, tag: GeometryTag, anchor=None, pixels: int = 1):
        self.tag = GeometryTag.parse(tag)
        self.frame = geo.TangentFrame(self.tag, geo.default_anchor(self.tag) if anchor is None else anchor)
        self.pixels = int(pixels)
        self.k = self.frame.dim

    @property
    def anchor(self) -> np.ndarray:
        return self.frame.anchor

    @property
    def dim(self) -> int:
        return self.pixels * self.k

    def _points(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=np.float64)
        return p.reshape((-1, self.pixels) + self.tag.point_shape)

    def encode(self, points) -> np.ndarray:
        """``log_y`` coordinates, shape ``(batch, pixels * k)``."""
        p = self._points(points)
        return self.frame.log(p).reshape(len(p), self.dim)

    def decode(self, coords) -> np.ndarray:
        """``exp_y`` of coordinates, shape ``(batch, pixels, *point_shape)``."""
        c = np.asarray(coords, dtype=np.float64).reshape(-1, self.pixels, self.k)
        return self.frame.exp(c)

    def canonical(self, coords) -> np.ndarray:
        """``log_y(exp_y(c))`` computed through the maps themselves."""
        return self.encode(self.decode(coords))

    def canonicalize(self, g: Tensor) -> Tensor:
        """Differentiable ``log_y(exp_y(g))`` for a batch of raw coordinates.

        HSV hue folds by whole turns and SPD is the identity, so both are
        ``g`` plus a constant offset.  On the sphere a vector longer than pi
        folds back through the antipode: ``g * wrap(|g|) / |g|`` per pixel.
        """
        b = g.shape[0]
        if self.tag is GeometryTag.SPHERE:
            folds = self.frame.canonical_shift(g.data.reshape(b, self.pixels, self.k)).reshape(-1, 1)
            if np.any(folds != 0):
                gp = ag.reshape(g, (b * self.pixels, self.k))
                r = ag.l2_norm(gp, axis=1, keepdims=True)
                gp = gp - gp * Tensor(geo.TWO_PI * folds) / r
                return ag.reshape(gp, (b, self.dim))
            return g
        offset = self.canonical(g.data) - g.data
        return g + Tensor(offset)


def generator_forward(G: MLP, z, space: TangentSpace) -> tuple[Tensor, np.ndarray]:
    """Raw tangent output of ``G`` and the manifold samples ``exp_y`` of it."""
    z = ag.as_tensor(z)
    raw = G(z)
    if raw.shape[1] != space.dim:
        raise ag.ShapeError(f"generator emits {raw.shape[1]} coordinates, space needs {space.dim}")
    return raw, space.decode(raw.data)


def critic_forward(D: MLP, points, space: TangentSpace) -> Tensor:
    """``D(log_y(x))`` for a batch of manifold samples."""
    return D(Tensor(space.encode(points)))


def sample_interpolates(real_coords, fake_coords, rng: np.random.Generator | None = None, t=None):
    """``(1 - t) log_y(x) + t log_y(exp_y(G(z)))`` with one ``t ~ U[0, 1]`` per sample.

    Both inputs are already in tangent coordinates (the fake ones
    canonicalized).  Returns ``(x_hat, t)``.
    """
    real_coords = np.asarray(real_coords, dtype=np.float64)
    fake_coords = np.asarray(fake_coords, dtype=np.float64)
    if real_coords.shape != fake_coords.shape:
        raise ag.ShapeError(f"real {real_coords.shape} and fake {fake_coords.shape} batches differ")
    if t is None:
        t = rng.uniform(0.0, 1.0, size=(len(real_coords), 1))
    t = np.broadcast_to(np.asarray(t, dtype=np.float64).reshape(-1, 1), (len(real_coords), 1))
    return (1.0 - t) * real_coords + t * fake_coords, t


def gradient_penalty(D: MLP, x_hat) -> tuple[Tensor, Tensor]:
    """Mean of ``(||grad_x D(x_hat)||_2 - 1)^2`` over samples, plus the per-sample norms."""
    x_hat = Tensor(np.asarray(ag.as_tensor(x_hat).data), requires_grad=True)
    (g,) = ag.grad(D(x_hat).sum(), [x_hat], create_graph=True)
    norms = ag.l2_norm(g, axis=1)
    return ag.mean(ag.square(norms - 1.0)), norms


def critic_loss(D: MLP, real_coords, fake_coords, x_hat, lam: float) -> tuple[Tensor, dict]:
    """``-(E D(real) - E D(fake)) + lam * penalty``, minimized over the critic."""
    if lam < 0:
        raise ValueError("gradient penalty weight must be nonnegative")
    d_real = D(ag.as_tensor(real_coords)).mean()
    d_fake = D(ag.as_tensor(fake_coords)).mean()
    wdist = d_real - d_fake
    loss = -wdist
    penalty = Tensor(0.0)
    if lam > 0:
        penalty, _ = gradient_penalty(D, x_hat)
        loss = loss + ag.scale(penalty, lam)
    return loss, {"wasserstein": float(wdist.data), "gp_term": float(lam * penalty.data)}


def generator_loss(D: MLP, G: MLP, z, space: TangentSpace) -> Tensor:
    """``-mean D(log_y(exp_y(G(z))))``."""
    raw, _ = generator_forward(G, z, space)
    return -D(space.canonicalize(raw)).mean()
