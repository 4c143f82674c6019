"""Command-line entry point.

Exit codes: 0 success, 1 tolerance failure (geomcheck), 2 malformed input or
config, 3 I/O error, 4 training aborted on a non-finite loss.
"""

from __future__ import annotations

import argparse
import io
import json
import sys
from pathlib import Path

import numpy as np

from . import imaging as im
from .autograd import Tensor, no_grad
from .checks import invariant_sweep
from .config import ConfigError, load_experiment
from .gan.networks import MLP, load_checkpoint
from .gan.objective import TangentSpace
from .gan.trainer import TrainingDiverged, TrainingLog, train
from .geometry import GeometryError, GeometryTag
from .report import summarize, write_report
from .transport import SampleSet, TransportError, w1_plan

EXIT_OK, EXIT_TOLERANCE, EXIT_INPUT, EXIT_IO, EXIT_DIVERGED = 0, 1, 2, 3, 4

INPUT_ERRORS = (im.FormatError, im.DataError, GeometryError, TransportError, ConfigError)


class UsageError(Exception):
    pass


def _brightness_path(path) -> Path:
    return Path(path).with_suffix(".brightness.npy")


def _save_npy(path, arr) -> None:
    buf = io.BytesIO()
    np.save(buf, arr)
    im.atomic_write_bytes(path, buf.getvalue())


def _parse_brightness(spec: str):
    if spec == "stored":
        return "stored"
    if spec.startswith("const:"):
        try:
            return float(spec[len("const:"):])
        except ValueError:
            pass
    raise UsageError(f"--brightness must be 'stored' or 'const:<value>', got {spec!r}")


# ---------------------------------------------------------------------------


def cmd_convert(args) -> int:
    mode = args.mode
    if mode in ("rgb2hsv", "rgb2cb"):
        rgb = im.load_ppm(args.inp)
        if mode == "rgb2hsv":
            im.save_mvi(im.rgb_to_hsv(rgb), args.out)
        else:
            chroma, bright = im.rgb_to_cb(rgb)
            _save_npy(_brightness_path(args.out), bright.values)
            im.save_mvi(chroma, args.out)
        return EXIT_OK
    img = im.load_mvi(args.inp)
    if mode == "hsv2rgb":
        if img.tag is not GeometryTag.HSV:
            raise UsageError(f"hsv2rgb needs an HSV MVI, got {img.tag.label}")
        im.save_ppm(im.hsv_to_rgb(img), args.out)
        return EXIT_OK
    if img.tag is not GeometryTag.SPHERE:
        raise UsageError(f"cb2rgb needs a sphere MVI, got {img.tag.label}")
    b = _parse_brightness(args.brightness)
    if b == "stored":
        values = np.load(_brightness_path(args.inp))
        b = im.BrightnessChannel(values)
    im.save_ppm(im.cb_to_rgb(img, b), args.out)
    return EXIT_OK


def cmd_geomcheck(args) -> int:
    tags = [GeometryTag.parse(t) for t in (["hsv", "sphere", "spd"] if args.tag == "all" else [args.tag])]
    ok = True
    for tag in tags:
        r = invariant_sweep(tag, args.trials, args.seed, round_trip_tol=args.tol, norm_distance_tol=args.tol)
        status = "PASS" if r.passed else "FAIL"
        print(f"{tag.label}\ttrials={r.trials}\tmax_round_trip={r.max_round_trip:.3e}"
              f"\tmax_norm_distance={r.max_norm_distance:.3e}"
              f"\tmax_reference_distance={r.max_reference_distance:.3e}\t{status}")
        ok &= r.passed
    return EXIT_OK if ok else EXIT_TOLERANCE


def _load_samples(paths) -> SampleSet:
    if len(paths) == 1:
        img = im.load_mvi(paths[0])
        return SampleSet(img.tag, img.pixels.reshape((-1,) + img.tag.point_shape))
    tag, stack = im.load_mvi_stack(paths)
    return SampleSet(tag, stack)


def cmd_w1(args) -> int:
    a = _load_samples(args.a)
    b = _load_samples(args.b)
    if a.tag is not b.tag:
        raise UsageError(f"tag mismatch: {a.tag.label} vs {b.tag.label}")
    plan = w1_plan(a, b, method=args.method, cost=args.cost, eps=args.eps)
    print(repr(plan.cost))
    if args.method == "sinkhorn" and not plan.converged:
        print(f"warning: sinkhorn stopped after {plan.iterations} iterations with marginal error "
              f"{plan.marginal_error:.3e}", file=sys.stderr)
    if args.plan_out:
        buf = io.StringIO()
        np.savetxt(buf, plan.matrix, delimiter=",", fmt="%.17g")
        im.atomic_write_bytes(args.plan_out, buf.getvalue().encode())
    return EXIT_OK


def cmd_train(args) -> int:
    exp = load_experiment(args.config)
    out = Path(args.out) if args.out else exp.output_dir
    try:
        log = train(exp.trainer, exp.target, n_train=exp.n_train, out_dir=out)
    except TrainingDiverged as exc:
        print(f"error: {exc}; snapshot written to {out / 'diverged.json'}", file=sys.stderr)
        return EXIT_DIVERGED
    s = summarize(log)
    print(f"iterations={log.generator_updates}\tcritic_updates={log.critic_updates}"
          f"\tfirst_w1={s.first_w1}\tfinal_w1={s.final_w1}\tspearman={s.spearman}")
    print(f"log written to {out / 'train_log.csv'}")
    return EXIT_OK


def _preview(tag: GeometryTag, pixels: np.ndarray, brightness: float) -> np.ndarray:
    if tag is GeometryTag.HSV:
        return im.hsv_pixels_to_rgb(pixels)
    if tag is GeometryTag.SPHERE:
        return np.clip(im.cb_pixels_to_rgb(pixels, np.full(pixels.shape[:-1], brightness)), 0.0, 1.0)
    fa = im.fractional_anisotropy(pixels)
    return np.repeat(fa[..., None], 3, axis=-1)


def _grid(tiles: list[np.ndarray], scale: int = 8) -> np.ndarray:
    n = len(tiles)
    cols = int(np.ceil(np.sqrt(n)))
    rows = int(np.ceil(n / cols))
    h, w = tiles[0].shape[:2]
    up = [np.kron(t, np.ones((scale, scale, 1))) for t in tiles]
    grid = np.ones((rows * (h * scale + 1) + 1, cols * (w * scale + 1) + 1, 3))
    for k, t in enumerate(up):
        r, c = divmod(k, cols)
        y0, x0 = 1 + r * (h * scale + 1), 1 + c * (w * scale + 1)
        grid[y0:y0 + h * scale, x0:x0 + w * scale] = t
    return grid


def cmd_sample(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    meta = ckpt.meta
    cfg = meta["config"]
    tag = GeometryTag.parse(cfg["tag"])
    dims = tuple(meta.get("dims", (1, 1)))
    G = MLP(meta["generator_sizes"])
    G.set_flat(ckpt.generator)
    space = TangentSpace(tag, meta.get("anchor"), pixels=dims[0] * dims[1])
    rng = np.random.default_rng(args.seed)
    with no_grad():
        raw = G(Tensor(rng.standard_normal((args.n, cfg["latent_dim"]))))
    points = space.decode(raw.data)
    out = Path(args.out)
    tiles = []
    for i, p in enumerate(points):
        img = im.ManifoldImage(tag, p.reshape(dims + tag.point_shape), space.anchor).validate()
        im.save_mvi(img, out / f"sample_{i:04d}.mvi")
        tile = _preview(tag, img.pixels, args.brightness)
        tiles.append(tile)
        im.save_ppm(im.RgbImage(tile), out / f"sample_{i:04d}.ppm")
    im.save_ppm(im.RgbImage(_grid(tiles)), out / "grid.ppm")
    print(f"wrote {len(points)} {tag.label} samples to {out}")
    return EXIT_OK


def cmd_plot(args) -> int:
    try:
        log = TrainingLog.from_csv(Path(args.log).read_text())
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    paths = write_report(log, args.out, formats=tuple(args.format))
    s = summarize(log)
    ratio = "" if s.ratio is None else f"{s.ratio:.4f}"
    print(f"evaluations={s.evaluations}\tfirst_w1={s.first_w1}\tfinal_w1={s.final_w1}"
          f"\tratio={ratio}\tspearman={s.spearman}")
    for p in paths:
        print(p)
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="manifold-wgan", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convert", help="convert between PPM and MVI colour representations")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mode", required=True, choices=["rgb2hsv", "hsv2rgb", "rgb2cb", "cb2rgb"])
    p.add_argument("--brightness", default="stored", help="cb2rgb only: 'stored' or 'const:<v>'")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("geomcheck", help="randomized exp/log invariant sweep")
    p.add_argument("--tag", default="all", choices=["all", "hsv", "sphere", "spd"])
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=None, help="override both tolerances")
    p.set_defaults(func=cmd_geomcheck)

    p = sub.add_parser("w1", help="Wasserstein-1 between two MVI sample files")
    p.add_argument("--a", nargs="+", required=True)
    p.add_argument("--b", nargs="+", required=True)
    p.add_argument("--method", default="exact", choices=["exact", "sinkhorn", "auto"])
    p.add_argument("--cost", default="geodesic", choices=["geodesic", "anchored"])
    p.add_argument("--eps", type=float, default=None)
    p.add_argument("--plan-out", default=None)
    p.set_defaults(func=cmd_w1)

    p = sub.add_parser("train", help="run the training loop from a JSON experiment config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None, help="override output_dir")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sample", help="draw samples from a generator checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--n", type=int, default=16)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--brightness", type=float, default=1.0, help="constant brightness for CB previews")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("plot", help="training curves as CSV plus a figure")
    p.add_argument("--log", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--format", nargs="+", default=["svg"], choices=["svg", "png", "pdf"])
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, *INPUT_ERRORS) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (KeyError, ValueError) as exc:
        print(f"error: malformed input ({exc})", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
