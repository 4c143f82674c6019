"""Synthetic manifold-valued target distributions."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import geometry as geo
from ..geometry import GeometryTag
from ..transport import SampleSet


@dataclass
class SyntheticTarget:
    """Mixture distribution on one geometry.

    ``components`` are dicts whose keys depend on the tag:

    * HSV: ``hue``, ``hue_sigma``, ``sv`` (pair), ``sv_sigma`` (pair)
    * sphere: ``mean`` (3-vector), ``kappa``
    * SPD: ``mean`` (3x3 SPD), ``sigma``

    ``dims`` > (1, 1) produces images: each image draws one component and
    all its pixels sample from it independently.
    """

    tag: GeometryTag
    components: list[dict]
    weights: list[float] | None = None
    dims: tuple[int, int] = (1, 1)
    seed: int = 0
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.tag = GeometryTag.parse(self.tag)
        if not self.components:
            raise ValueError("mixture needs at least one component")
        if self.weights is None:
            self.weights = [1.0 / len(self.components)] * len(self.components)
        w = np.asarray(self.weights, dtype=np.float64)
        if w.shape != (len(self.components),) or np.any(w < 0) or not np.isclose(w.sum(), 1.0):
            raise ValueError("mixture weights must be nonnegative and sum to 1")
        self.dims = tuple(int(d) for d in self.dims)

    @property
    def pixels(self) -> int:
        return self.dims[0] * self.dims[1]

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """``(n, pixels, *point_shape)`` samples."""
        comp = rng.choice(len(self.components), size=n, p=np.asarray(self.weights))
        out = np.empty((n, self.pixels) + self.tag.point_shape)
        for k, spec in enumerate(self.components):
            idx = np.flatnonzero(comp == k)
            if idx.size:
                out[idx] = _sample_component(self.tag, spec, (idx.size, self.pixels), rng)
        return out


def _sample_component(tag: GeometryTag, spec: dict, shape, rng) -> np.ndarray:
    if tag is GeometryTag.HSV:
        hue = geo.wrap_angle(spec["hue"] + spec.get("hue_sigma", 0.0) * rng.standard_normal(shape))
        sv = np.asarray(spec.get("sv", (0.5, 0.5)), dtype=np.float64)
        sv_sigma = np.asarray(spec.get("sv_sigma", (0.0, 0.0)), dtype=np.float64)
        sv = np.clip(sv + sv_sigma * rng.standard_normal(shape + (2,)), 0.0, 1.0)
        return np.concatenate([hue[..., None], sv], axis=-1)
    if tag is GeometryTag.SPHERE:
        return sample_vmf(spec["mean"], spec["kappa"], shape, rng)
    return sample_log_normal_spd(spec["mean"], spec["sigma"], shape, rng)


def sample_vmf(mean, kappa: float, shape, rng: np.random.Generator) -> np.ndarray:
    """Von Mises-Fisher samples on S^2 (exact inverse-CDF for the polar cosine)."""
    mu = np.asarray(mean, dtype=np.float64)
    mu = mu / np.linalg.norm(mu)
    shape = tuple(np.atleast_1d(shape))
    u = rng.uniform(size=shape)
    phi = rng.uniform(0.0, geo.TWO_PI, size=shape)
    if np.isinf(kappa):
        w = np.ones(shape)
    elif kappa <= 0:
        w = 2.0 * u - 1.0
    else:
        # w = 1 + log(u + (1 - u) e^{-2 kappa}) / kappa, written to stay accurate for large kappa
        w = 1.0 + np.log(u + (1.0 - u) * np.exp(-2.0 * kappa)) / kappa
        w = np.where(u == 0.0, -1.0, w)
    w = np.clip(w, -1.0, 1.0)
    frame = geo.tangent_basis(GeometryTag.SPHERE, mu)
    side = np.sqrt(np.maximum(0.0, 1.0 - w * w))
    x = (w[..., None] * mu + side[..., None] * (np.cos(phi)[..., None] * frame[0]
                                                + np.sin(phi)[..., None] * frame[1]))
    return x / np.linalg.norm(x, axis=-1, keepdims=True)


def sample_log_normal_spd(mean, sigma: float, shape, rng: np.random.Generator) -> np.ndarray:
    """``exp(log(mean) + sigma * S)`` with ``S`` standard Gaussian in the orthonormal symmetric basis."""
    log_mean = geo.sym_matrix_log(np.asarray(mean, dtype=np.float64))
    basis = geo.tangent_basis(GeometryTag.SPD, np.eye(3))
    shape = tuple(np.atleast_1d(shape))
    coords = rng.standard_normal(shape + (6,))
    return geo.sym_matrix_exp(log_mean + sigma * np.einsum("...k,kij->...ij", coords, basis))


def synth_targets(tag, spec, n: int, seed: int = 0) -> SampleSet:
    """Draw ``n`` samples from a mixture spec (a :class:`SyntheticTarget` or its components list)."""
    target = spec if isinstance(spec, SyntheticTarget) else SyntheticTarget(tag, list(spec), seed=seed)
    pts = target.sample(n, np.random.default_rng(seed))
    return SampleSet(target.tag, pts)


# desk-scale targets used by the acceptance runs and the CLI presets


def circle_mixture(seed: int = 0) -> SyntheticTarget:
    """Two wrapped Gaussians on the hue circle, tight saturation/value."""
    return SyntheticTarget(GeometryTag.HSV, [
        {"hue": -np.pi / 2, "hue_sigma": 0.25, "sv": (0.7, 0.8), "sv_sigma": (0.05, 0.05)},
        {"hue": np.pi / 2, "hue_sigma": 0.25, "sv": (0.7, 0.8), "sv_sigma": (0.05, 0.05)},
    ], seed=seed)


def vmf_mixture(seed: int = 0) -> SyntheticTarget:
    """Two von Mises-Fisher clusters of chromaticities inside the first octant."""
    a = np.array([0.8, 0.5, 0.33])
    b = np.array([0.3, 0.4, 0.87])
    return SyntheticTarget(GeometryTag.SPHERE, [
        {"mean": (a / np.linalg.norm(a)).tolist(), "kappa": 200.0},
        {"mean": (b / np.linalg.norm(b)).tolist(), "kappa": 200.0},
    ], seed=seed)


def spd_mixture(seed: int = 0) -> SyntheticTarget:
    """Two log-normal clusters of diffusion-like tensors."""
    return SyntheticTarget(GeometryTag.SPD, [
        {"mean": np.diag([2.0, 0.5, 0.5]).tolist(), "sigma": 0.1},
        {"mean": np.diag([0.5, 0.5, 2.0]).tolist(), "sigma": 0.1},
    ], seed=seed)


PRESETS = {"circle": circle_mixture, "vmf": vmf_mixture, "spd": spd_mixture}
