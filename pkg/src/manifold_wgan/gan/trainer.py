"""Training loop: n_critic critic updates per generator update, Adam, linear LR decay."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .. import autograd as ag
from ..autograd import Tensor
from ..geometry import GeometryTag
from ..imaging import atomic_write_bytes
from ..transport import SampleSet, w1
from .networks import MLP, Adam, linear_decay, save_checkpoint
from .objective import TangentSpace, critic_loss, generator_loss, sample_interpolates
from .targets import SyntheticTarget

LOG_COLUMNS = ("iter", "critic_loss", "gen_loss", "gp_term", "w1_eval", "lr")


class TrainingDiverged(RuntimeError):
    def __init__(self, message: str, snapshot: dict):
        super().__init__(message)
        self.snapshot = snapshot


@dataclass
class TrainerConfig:
    lr: float = 2e-4
    batch_size: int = 64
    n_critic: int = 5
    gp_lambda: float = 10.0
    iterations: int = 2000
    seed: int = 0
    tag: str = "hsv"
    anchor: list | None = None
    latent_dim: int = 32
    hidden: tuple[int, ...] = (128, 128)
    eval_interval: int = 100
    eval_samples: int = 256
    eval_method: str = "exact"
    eval_cost: str = "geodesic"
    betas: tuple[float, float] = (0.9, 0.999)
    lr_decay: bool = True
    checkpoint_every_eval: bool = True

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        self.betas = tuple(float(b) for b in self.betas)
        GeometryTag.parse(self.tag)
        positive = {
            "lr": self.lr, "batch_size": self.batch_size, "n_critic": self.n_critic,
            "latent_dim": self.latent_dim, "eval_interval": self.eval_interval,
            "eval_samples": self.eval_samples,
        }
        for name, value in positive.items():
            if not value > 0:
                raise ValueError(f"{name} must be positive, got {value}")
        if self.iterations < 0:
            raise ValueError("iterations must be nonnegative")
        if self.gp_lambda < 0:
            raise ValueError("gp_lambda must be nonnegative")
        if not self.hidden or min(self.hidden) < 1:
            raise ValueError("hidden widths must be positive")

    @property
    def geometry(self) -> GeometryTag:
        return GeometryTag.parse(self.tag)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        d["betas"] = list(self.betas)
        return d


@dataclass
class TrainingLog:
    rows: list[dict] = field(default_factory=list)
    critic_updates: int = 0
    generator_updates: int = 0
    checkpoints: list[dict] = field(default_factory=list)

    def evaluations(self) -> tuple[np.ndarray, np.ndarray]:
        it = [r["iter"] for r in self.rows if r["w1_eval"] is not None]
        val = [r["w1_eval"] for r in self.rows if r["w1_eval"] is not None]
        return np.asarray(it), np.asarray(val, dtype=np.float64)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(LOG_COLUMNS)
        for r in self.rows:
            writer.writerow(["" if r[c] is None else (r[c] if c == "iter" else repr(float(r[c])))
                             for c in LOG_COLUMNS])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "TrainingLog":
        reader = csv.DictReader(io.StringIO(text))
        if tuple(reader.fieldnames or ()) != LOG_COLUMNS:
            raise ValueError(f"training log must have columns {','.join(LOG_COLUMNS)}")
        rows = []
        for rec in reader:
            row = {"iter": int(rec["iter"])}
            for c in LOG_COLUMNS[1:]:
                row[c] = float(rec[c]) if rec[c] != "" else None
            rows.append(row)
        return cls(rows)


class Trainer:
    """Holds networks, optimizers and random streams for one run."""

    def __init__(self, config: TrainerConfig, data: SampleSet | np.ndarray, held_out=None,
                 dims: tuple[int, int] | None = None):
        self.config = config
        tag = config.geometry
        points = data.points if isinstance(data, SampleSet) else np.asarray(data, dtype=np.float64)
        if isinstance(data, SampleSet) and data.tag is not tag:
            raise ValueError(f"data is {data.tag.label}, config says {tag.label}")
        self.data = points.reshape((len(points), -1) + tag.point_shape)
        self.space = TangentSpace(tag, config.anchor, pixels=self.data.shape[1])
        self.data_coords = self.space.encode(self.data)
        self.dims = tuple(dims) if dims is not None else (self.data.shape[1], 1)
        if self.dims[0] * self.dims[1] != self.space.pixels:
            raise ValueError(f"image dims {self.dims} do not match {self.space.pixels} pixels per sample")
        self.held_out = None
        if held_out is not None:
            ho = held_out.points if isinstance(held_out, SampleSet) else np.asarray(held_out)
            self.held_out = ho.reshape((len(ho), -1) + tag.point_shape)

        streams = np.random.SeedSequence(config.seed).spawn(5)
        init_rng, self.data_rng, self.z_rng, self.t_rng, self.eval_rng = (
            np.random.default_rng(s) for s in streams)
        dim = self.space.dim
        self.G = MLP([config.latent_dim, *config.hidden, dim], init_rng)
        self.D = MLP([dim, *config.hidden, 1], init_rng)
        self.opt_g = Adam(self.G.params, config.lr, config.betas)
        self.opt_d = Adam(self.D.params, config.lr, config.betas)
        self.log = TrainingLog()

    def latent(self, n: int, rng=None) -> np.ndarray:
        return (rng or self.z_rng).standard_normal((n, self.config.latent_dim))

    def generate(self, n: int, rng=None) -> np.ndarray:
        with ag.no_grad():
            raw = self.G(Tensor(self.latent(n, rng)))
        return self.space.decode(raw.data)

    def critic_step(self, lr: float) -> tuple[float, dict]:
        cfg = self.config
        idx = self.data_rng.integers(0, len(self.data_coords), size=cfg.batch_size)
        real = self.data_coords[idx]
        with ag.no_grad():
            raw = self.G(Tensor(self.latent(cfg.batch_size)))
        fake = self.space.canonical(raw.data)
        x_hat, _ = sample_interpolates(real, fake, self.t_rng)
        loss, parts = critic_loss(self.D, real, fake, x_hat, cfg.gp_lambda)
        grads = ag.grad(loss, self.D.params)
        self.opt_d.step(grads, lr)
        self.log.critic_updates += 1
        return float(loss.data), parts

    def generator_step(self, lr: float) -> float:
        z = Tensor(self.latent(self.config.batch_size))
        loss = generator_loss(self.D, self.G, z, self.space)
        grads = ag.grad(loss, self.G.params)
        self.opt_g.step(grads, lr)
        self.log.generator_updates += 1
        return float(loss.data)

    def evaluate(self) -> float | None:
        if self.held_out is None:
            return None
        cfg = self.config
        fake = self.generate(len(self.held_out), self.eval_rng)
        return w1(SampleSet(cfg.geometry, fake), SampleSet(cfg.geometry, self.held_out),
                  method=cfg.eval_method, cost=cfg.eval_cost, anchor=self.space.anchor)

    def _check_finite(self, it: int, values: dict):
        if all(math.isfinite(v) for v in values.values()):
            return
        snapshot = {
            "iter": it,
            "losses": {k: (v if math.isfinite(v) else str(v)) for k, v in values.items()},
            "generator_param_norms": [float(np.linalg.norm(p.data)) for p in self.G.params],
            "critic_param_norms": [float(np.linalg.norm(p.data)) for p in self.D.params],
            "critic_updates": self.log.critic_updates,
            "generator_updates": self.log.generator_updates,
        }
        raise TrainingDiverged(f"non-finite loss at generator iteration {it}", snapshot)

    def _checkpoint(self, out_dir, it: int):
        if out_dir is None:
            return
        path = Path(out_dir) / "checkpoints" / f"ckpt_{it:06d}.bin"
        save_checkpoint(path, self.G, self.D, {
            "iter": it, "config": self.config.to_dict(), "dims": list(self.dims),
            "anchor": self.space.anchor.tolist(),
        })
        self.log.checkpoints.append({"iter": it, "path": str(path)})

    def run(self, out_dir=None) -> TrainingLog:
        cfg = self.config
        if cfg.iterations == 0:
            return self.log
        self.log.rows.append({"iter": 0, "critic_loss": None, "gen_loss": None, "gp_term": None,
                              "w1_eval": self.evaluate(), "lr": cfg.lr})
        self._checkpoint(out_dir, 0)
        for it in range(1, cfg.iterations + 1):
            lr = linear_decay(cfg.lr, it - 1, cfg.iterations) if cfg.lr_decay else cfg.lr
            for _ in range(cfg.n_critic):
                d_loss, parts = self.critic_step(lr)
                self._check_finite(it, {"critic_loss": d_loss, "gp_term": parts["gp_term"]})
            g_loss = self.generator_step(lr)
            self._check_finite(it, {"gen_loss": g_loss})
            evaluate = it % cfg.eval_interval == 0 or it == cfg.iterations
            row = {"iter": it, "critic_loss": d_loss, "gen_loss": g_loss, "gp_term": parts["gp_term"],
                   "w1_eval": self.evaluate() if evaluate else None, "lr": lr}
            self.log.rows.append(row)
            if evaluate and cfg.checkpoint_every_eval:
                self._checkpoint(out_dir, it)
        return self.log


def train(config: TrainerConfig, target: SyntheticTarget | SampleSet, n_train: int = 2048,
          out_dir=None, held_out: SampleSet | None = None) -> TrainingLog:
    """Run the full loop on a synthetic target (or a fixed dataset).

    With a :class:`SyntheticTarget`, ``n_train`` training samples and
    ``config.eval_samples`` held-out samples are drawn from independent
    streams of the target seed.  When ``out_dir`` is given the CSV log,
    config and checkpoints are written there.
    """
    dims = None
    if isinstance(target, SyntheticTarget):
        dims = target.dims
        s_train, s_eval = np.random.SeedSequence(target.seed).spawn(2)
        data = SampleSet(target.tag, target.sample(n_train, np.random.default_rng(s_train)))
        if held_out is None:
            held_out = SampleSet(target.tag, target.sample(config.eval_samples, np.random.default_rng(s_eval)))
    else:
        data = target
    trainer = Trainer(config, data, held_out, dims)
    try:
        log = trainer.run(out_dir)
    except TrainingDiverged as exc:
        if out_dir is not None:
            atomic_write_bytes(Path(out_dir) / "diverged.json", json.dumps(exc.snapshot, indent=2).encode())
        raise
    if out_dir is not None:
        out = Path(out_dir)
        atomic_write_bytes(out / "train_log.csv", log.to_csv().encode())
        atomic_write_bytes(out / "config.json", json.dumps(config.to_dict(), indent=2).encode())
    return log
