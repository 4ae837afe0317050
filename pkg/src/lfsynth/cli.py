"""Command-line front end: ``lfsynth <subcommand> ...`` or ``python -m lfsynth``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .applications import lightfield_metrics, refocus
from .flownet import NetworkSpec, init_network, load_checkpoint
from .lightfield import (extract_epi, extract_epi_vertical, load_lightfield, read_png,
                         save_lightfield, write_png)
from .losses import lf_mean, lf_std
from .postprocess import DEFAULT_EPS, DEFAULT_RADIUS
from .training import TrainConfig, generate_synthetic_lf, train, two_plane_scene
from .warping import synthesize

log = logging.getLogger("lfsynth")


def _pair(text: str) -> tuple[int, int]:
    try:
        a, b = (int(t) for t in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected AxB with integers, got {text!r}")
    if a < 1 or b < 1:
        raise argparse.ArgumentTypeError(f"extents must be positive, got {text!r}")
    return a, b


def _load_params(checkpoint: str, angular, seed: int):
    spec = NetworkSpec(angular=tuple(angular))
    if checkpoint == "zero-init":
        return init_network(spec, seed)
    return load_checkpoint(checkpoint, spec)


def _write_json(doc, out):
    text = json.dumps(doc, indent=2)
    if out:
        Path(out).write_text(text + "\n")
    print(text)


# subcommands ---------------------------------------------------------------

def cmd_gen_scene(a):
    W, H = a.size
    lf = generate_synthetic_lf(two_plane_scene(a.seed, a.bg_disparity, a.fg_disparity), a.angular, (H, W),
                               eta=a.eta)
    save_lightfield(lf, a.out, a.bit_depth)
    if a.central:
        write_png(a.central, lf.central_view(), a.bit_depth)


def cmd_train(a):
    data = []
    for path in a.data:
        gt = load_lightfield(path)
        data.append((gt.central_view(), gt))
    gt0 = data[0][1]
    cfg = TrainConfig.from_json(a.config) if a.config else TrainConfig()
    overrides = {k: v for k, v in dict(eta=a.eta, lambda_g=a.lambda_g, lambda_e=a.lambda_e,
                                      lambda_tv=a.lambda_tv, iterations=a.iterations, seed=a.seed,
                                      checkpoint_every=a.checkpoint_every).items() if v is not None}
    cfg = TrainConfig(**{**cfg.__dict__, **overrides, "angular": gt0.angular, "spatial": gt0.spatial})
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg.to_json(out / "config.json")
    res = train(cfg, data, out_dir=out, log_every=a.log_every)
    log.info("final loss %.6f -> %s", res.log[-1]["total"] if res.log else float("nan"), out / "final.lfaf")


def _synthesize(a, post):
    img = read_png(a.image)
    if img.shape[2] != 3:
        raise ValueError(f"{a.image}: expected an RGB image, got {img.shape[2]} channel(s)")
    params = _load_params(a.checkpoint, a.angular, a.seed)
    rgb, _, flow = synthesize(img, params, eta=a.eta, postprocess=post)
    save_lightfield(rgb.replace(data=np.clip(rgb.data, 0, 1)), a.out, a.bit_depth)
    if a.flow_out:
        np.save(a.flow_out, flow)


def cmd_synthesize(a):
    _synthesize(a, None)


def cmd_postprocess(a):
    _synthesize(a, (a.radius, a.eps))


def cmd_evaluate(a):
    rep = lightfield_metrics(load_lightfield(a.pred), load_lightfield(a.gt))
    _write_json(rep, a.out)


def cmd_refocus(a):
    write_png(a.out, refocus(load_lightfield(a.lf), a.alpha), a.bit_depth)


def cmd_epi(a):
    lf = load_lightfield(a.lf)
    if a.vertical:
        x = lf.spatial[1] // 2 if a.x is None else a.x
        u = lf.center[0] if a.u is None else a.u
        epi = extract_epi_vertical(lf, x, u)
    else:
        y = lf.spatial[0] // 2 if a.y is None else a.y
        v = lf.center[1] if a.v is None else a.v
        epi = extract_epi(lf, y, v)
    write_png(a.out, epi, a.bit_depth)


def cmd_mean_var(a):
    lf = load_lightfield(a.lf)
    chans = [np.asarray(lf.data[..., c], np.float64) for c in range(lf.channels)]
    mean = np.stack([lf_mean(c).data for c in chans], axis=-1)
    std = np.stack([lf_std(c).data for c in chans], axis=-1)
    out = Path(a.out)
    write_png(out.with_name(out.stem + "_mean.png"), mean, a.bit_depth)
    write_png(out.with_name(out.stem + "_std.png"), std, a.bit_depth)


# parser --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lfsynth", description="Single-image light field synthesis toolkit")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        p = sub.add_parser(name, help=help_)
        p.set_defaults(fn=fn)
        return p

    def bits(p):
        p.add_argument("--bit-depth", type=int, choices=(8, 16), default=8)

    p = add("gen-scene", cmd_gen_scene, "render a procedural two-plane light field")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--angular", type=_pair, default=(8, 8), metavar="UxV")
    p.add_argument("--size", type=_pair, default=(64, 48), metavar="WxH")
    p.add_argument("--eta", type=float, default=0.8)
    p.add_argument("--bg-disparity", type=float, default=0.5)
    p.add_argument("--fg-disparity", type=float, default=1.1)
    p.add_argument("--central", default=None, help="also write the central view to this PNG")
    p.add_argument("--out", required=True)
    bits(p)

    p = add("train", cmd_train, "train the flow network on light field files")
    p.add_argument("--data", nargs="+", required=True)
    p.add_argument("--config", default=None, help="TrainConfig JSON; flags override it")
    p.add_argument("--eta", type=float, default=None)
    p.add_argument("--lambda-g", type=float, default=None)
    p.add_argument("--lambda-e", type=float, default=None)
    p.add_argument("--lambda-tv", type=float, default=None)
    p.add_argument("--iterations", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--checkpoint-every", type=int, default=None)
    p.add_argument("--log-every", type=int, default=100)
    p.add_argument("--out", required=True)

    for name, fn, help_ in (("synthesize", cmd_synthesize, "central image -> light field"),
                            ("postprocess", cmd_postprocess, "synthesize with guided-filter flow aggregation")):
        p = add(name, fn, help_)
        p.add_argument("--image", required=True)
        p.add_argument("--checkpoint", required=True, help="checkpoint path or 'zero-init'")
        p.add_argument("--angular", type=_pair, default=(8, 8), metavar="UxV")
        p.add_argument("--eta", type=float, default=0.8)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--flow-out", default=None, help="save the flow field as .npy")
        p.add_argument("--out", required=True)
        if name == "postprocess":
            p.add_argument("--radius", type=int, default=DEFAULT_RADIUS)
            p.add_argument("--eps", type=float, default=DEFAULT_EPS)
        bits(p)

    p = add("evaluate", cmd_evaluate, "PSNR/SSIM report of a predicted light field")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--out", default=None)

    p = add("refocus", cmd_refocus, "shift-and-add refocus image")
    p.add_argument("--lf", required=True)
    p.add_argument("--alpha", type=float, default=0.0)
    p.add_argument("--out", required=True)
    bits(p)

    p = add("epi", cmd_epi, "export an epipolar plane image")
    p.add_argument("--lf", required=True)
    p.add_argument("--vertical", action="store_true", help="slice along v at fixed x, u")
    p.add_argument("--y", type=int, default=None)
    p.add_argument("--v", type=int, default=None)
    p.add_argument("--x", type=int, default=None)
    p.add_argument("--u", type=int, default=None)
    p.add_argument("--out", required=True)
    bits(p)

    p = add("mean-var", cmd_mean_var, "per-pixel mean and standard deviation over views")
    p.add_argument("--lf", required=True)
    p.add_argument("--out", required=True, help="writes <stem>_mean.png and <stem>_std.png")
    bits(p)
    return ap


def run(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(message)s")
    try:
        args.fn(args)
    except (OSError, ValueError, IndexError) as e:
        print(f"lfsynth {args.command}: error: {e}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
