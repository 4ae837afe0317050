"""Procedural light fields, the end-to-end training loop and evaluation."""

from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from .applications import lightfield_metrics
from .flownet import NetworkParams, NetworkSpec, forward, init_network, save_checkpoint
from .lightfield import LightField, angular_offsets, default_center, to_luminance
from .losses import LossWeights, total_objective, tv_reg
from .numerics import AdamState, Tensor, adam_step, backward, zero_grad
from .shifting import shift_stack, translate
from .warping import synthesize, warp_stack

log = logging.getLogger(__name__)

LOG_COLUMNS = ("iteration", "total", "global", "local", "tv")


# synthetic scenes ----------------------------------------------------------

@dataclass(frozen=True)
class Layer:
    disparity: float  # px per angular step, content moves +disparity
    texture_seed: int
    shape: str = "full"  # full | ellipse | rect
    # center and half-extents as fractions of (W, H)
    box: tuple[float, float, float, float] = (0.5, 0.5, 0.25, 0.25)
    softness: float = 1.0  # edge ramp width in px
    color_lo: tuple[float, float, float] = (0.1, 0.1, 0.1)
    color_hi: tuple[float, float, float] = (0.5, 0.5, 0.5)
    texture_sigma: float = 2.0

    def __post_init__(self):
        if self.shape not in ("full", "ellipse", "rect"):
            raise ValueError(f"unknown layer shape {self.shape!r}")


@dataclass(frozen=True)
class SceneSpec:
    layers: tuple[Layer, ...]  # back to front; layers[0] is the background

    def __post_init__(self):
        if not self.layers or self.layers[0].shape != "full":
            raise ValueError("a scene needs a full-frame background layer first")
        for l in self.layers:
            if not np.isfinite(l.disparity):
                raise ValueError(f"layer disparity must be finite, got {l.disparity}")


def layer_texture(layer: Layer, h: int, w: int) -> np.ndarray:
    rng = np.random.default_rng(layer.texture_seed)
    noise = rng.standard_normal((h, w, 3))
    tex = np.stack([gaussian_filter(noise[..., c], layer.texture_sigma, mode="wrap") for c in range(3)], -1)
    lo, hi = tex.min(axis=(0, 1)), tex.max(axis=(0, 1))
    tex = (tex - lo) / np.where(hi > lo, hi - lo, 1)
    clo, chi = np.asarray(layer.color_lo), np.asarray(layer.color_hi)
    return clo + tex * (chi - clo)


def layer_mask(layer: Layer, h: int, w: int) -> np.ndarray:
    if layer.shape == "full":
        return np.ones((h, w))
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    cx, cy, rx, ry = layer.box
    cx, rx = cx * w, rx * w
    cy, ry = cy * h, ry * h
    if layer.shape == "ellipse":
        r = np.sqrt(((xs - cx) / rx) ** 2 + ((ys - cy) / ry) ** 2)
        dist = (1 - r) * min(rx, ry)  # approx signed px distance to the rim
    elif layer.shape == "rect":
        dist = np.minimum(rx - np.abs(xs - cx), ry - np.abs(ys - cy))
    else:
        raise ValueError(f"unknown layer shape {layer.shape!r}")
    return np.clip(dist / max(layer.softness, 1e-6) + 0.5, 0.0, 1.0)


def generate_synthetic_lf(scene: SceneSpec, angular=(8, 8), spatial=(48, 64), center=None,
                          eta: float = 0.8) -> LightField:
    """Render every view by translating each layer by disparity*(du, dv), back to front."""
    U, V = angular
    h, w = spatial
    center = default_center(U, V) if center is None else tuple(center)
    du, dv = angular_offsets((U, V), center)
    texs = [layer_texture(l, h, w) for l in scene.layers]
    masks = [layer_mask(l, h, w) for l in scene.layers]
    data = np.empty((V, U, h, w, 3))
    for v in range(V):
        for u in range(U):
            out = np.zeros((h, w, 3))
            for l, tex, m in zip(scene.layers, texs, masks):
                tx, ty = l.disparity * du[v, u], l.disparity * dv[v, u]
                a = translate(m, tx, ty)[..., None]
                out = out * (1 - a) + translate(tex, tx, ty) * a
            data[v, u] = out
    return LightField(np.clip(data, 0, 1).astype(np.float32), center, eta)


def two_plane_scene(seed: int = 0, bg_disparity: float = 0.5, fg_disparity: float = 1.1) -> SceneSpec:
    """Dark textured background plane plus a bright elliptical foreground plane."""
    rng = np.random.default_rng(seed)
    cx, cy = rng.uniform(0.4, 0.6, size=2)
    rx, ry = rng.uniform(0.2, 0.26), rng.uniform(0.24, 0.32)
    bg = Layer(bg_disparity, int(rng.integers(2**31)), color_lo=(0.05, 0.1, 0.15), color_hi=(0.45, 0.4, 0.5))
    fg = Layer(fg_disparity, int(rng.integers(2**31)), shape="ellipse", box=(cx, cy, rx, ry),
               color_lo=(0.55, 0.45, 0.3), color_hi=(0.95, 0.9, 0.7))
    return SceneSpec((bg, fg))


# training ---------------------------------------------------------------------

@dataclass
class TrainConfig:
    eta: float = 0.8
    lambda_g: float = 10.0
    lambda_e: float = 10.0
    lambda_tv: float = 1e-6
    lambda_l1: float = 0.0
    iterations: int = 2000
    batch_size: int = 1
    seed: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    checkpoint_every: int = 0
    angular: tuple[int, int] = (8, 8)
    spatial: tuple[int, int] = (48, 64)

    def __post_init__(self):
        self.angular = tuple(self.angular)
        self.spatial = tuple(self.spatial)
        if self.iterations < 0 or self.batch_size != 1:
            raise ValueError("iterations must be >= 0 and batch_size must be 1")
        if self.lr <= 0 or min(self.angular) < 1 or min(self.spatial) < 1:
            raise ValueError("lr, angular and spatial extents must be positive")
        self.weights  # validates lambdas

    @property
    def weights(self) -> LossWeights:
        return LossWeights(self.lambda_g, self.lambda_e, self.lambda_tv, self.lambda_l1)

    @classmethod
    def from_json(cls, path) -> "TrainConfig":
        doc = json.loads(Path(path).read_text())
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"{path}: unknown config keys {sorted(unknown)}")
        return cls(**doc)

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=2) + "\n")


class TrainingDiverged(RuntimeError):
    def __init__(self, msg, last_good: NetworkParams):
        super().__init__(msg)
        self.last_good = last_good


@dataclass
class Example:
    """Cached tensors for one (central image, ground truth) pair."""
    central_rgb: np.ndarray
    gt: LightField
    y_input: np.ndarray  # [1, H, W]
    y_stack: np.ndarray  # shifted luminance stack [V, U, H, W, 1]
    gt_y: np.ndarray  # [V, U, H, W]

    @classmethod
    def build(cls, central_rgb, gt: LightField, eta: float) -> "Example":
        y = to_luminance(np.asarray(central_rgb, dtype=np.float32))
        stack = shift_stack(y, gt.angular, gt.center, eta).data
        return cls(np.asarray(central_rgb, dtype=np.float32), gt, y.transpose(2, 0, 1),
                   stack, to_luminance(gt.data)[..., 0])


@dataclass
class TrainResult:
    params: NetworkParams
    log: list[dict] = field(default_factory=list)


def predict_y(params: NetworkParams, ex: Example):
    """Differentiable luminance prediction [V,U,H,W] and the flow Tensor."""
    flow = forward(params, ex.y_input)
    pred = warp_stack(ex.y_stack, flow)
    V, U, _, H, W = pred.shape
    return pred.reshape(V, U, H, W), flow


def objective(params: NetworkParams, ex: Example, weights: LossWeights, parts: dict | None = None):
    pred, flow = predict_y(params, ex)
    return total_objective(pred, ex.gt_y, flow, weights, parts)


def _as_examples(dataset, eta) -> list[Example]:
    out = []
    for item in dataset:
        if isinstance(item, Example):
            out.append(item)
        else:
            central, gt = item
            out.append(Example.build(central, gt, eta))
    if not out:
        raise ValueError("training dataset is empty")
    return out


def train(config: TrainConfig, dataset, out_dir=None, params: NetworkParams | None = None,
          log_every: int = 100) -> TrainResult:
    """Minimise the weighted light field objective with Adam, one example per step.

    ``dataset`` holds ``(central_rgb, gt LightField)`` pairs or ``Example``s.
    Writes ``loss.csv`` and checkpoints into ``out_dir`` when given.
    """
    examples = _as_examples(dataset, config.eta)
    U, V = config.angular
    for ex in examples:
        if ex.gt.angular != (U, V) or ex.gt.spatial != config.spatial:
            raise ValueError(f"example is {ex.gt.angular}/{ex.gt.spatial}, config wants {config.angular}/{config.spatial}")
    spec = NetworkSpec(angular=config.angular)
    params = init_network(spec, config.seed) if params is None else params
    tensors = params.tensors()
    state = AdamState(config.lr, config.beta1, config.beta2, config.epsilon)
    rng = np.random.default_rng(config.seed)
    weights = config.weights
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    last_good = params.copy()
    rows: list[dict] = []
    t0 = time.perf_counter()
    for it in range(config.iterations):
        ex = examples[int(rng.integers(len(examples)))]
        parts: dict = {}
        zero_grad(tensors)
        loss = objective(params, ex, weights, parts)
        total = float(loss.data)
        if not np.isfinite(total):
            _diverged(f"non-finite loss at iteration {it}", last_good, out)
        rows.append({"iteration": it, "total": total, "global": parts["global"],
                     "local": parts["local"], "tv": parts["tv"]})
        backward(loss, tensors)
        last_good = params.copy()
        try:
            adam_step(tensors, [t.grad for t in tensors], state)
        except FloatingPointError as exc:
            _diverged(f"iteration {it}: {exc}", last_good, out)
        if log_every and (it % log_every == 0 or it == config.iterations - 1):
            log.info("iter %d total %.6f global %.6f local %.6f tv %.4g (%.1fs)", it, total,
                     parts["global"], parts["local"], parts["tv"], time.perf_counter() - t0)
        if out is not None and config.checkpoint_every and (it + 1) % config.checkpoint_every == 0:
            save_checkpoint(params, out / f"step{it + 1:06d}.lfaf")
    if out is not None:
        save_checkpoint(params, out / "final.lfaf")
        write_loss_log(rows, out / "loss.csv")
    return TrainResult(params, rows)


def _diverged(msg, last_good, out):
    if out is not None:
        save_checkpoint(last_good, out / "last_good.lfaf")
    raise TrainingDiverged(msg, last_good)


def write_loss_log(rows, path) -> None:
    with open(path, "w", newline="") as f:
        wr = csv.writer(f, lineterminator="\n")
        wr.writerow(LOG_COLUMNS)
        for r in rows:
            wr.writerow([r["iteration"]] + [repr(float(r[k])) for k in LOG_COLUMNS[1:]])


def read_loss_log(path) -> list[dict]:
    with open(path, newline="") as f:
        return [{k: (int(v) if k == "iteration" else float(v)) for k, v in r.items()} for r in csv.DictReader(f)]


def evaluate(params: NetworkParams, dataset, eta: float = 0.8, postprocess=None) -> dict:
    """PSNR / SSIM of synthesized RGB light fields against ground truth."""
    per_example = []
    for item in dataset:
        central, gt = (item.central_rgb, item.gt) if isinstance(item, Example) else item
        rgb, _, _ = synthesize(central, params, gt.angular, gt.center, eta, postprocess)
        per_example.append(lightfield_metrics(rgb, gt))
    return {
        "per_example": per_example,
        "mean_psnr": float(np.mean([m["mean_psnr"] for m in per_example])),
        "mean_ssim": float(np.mean([m["mean_ssim"] for m in per_example])),
    }


def flow_gradient_energy(flow) -> float:
    """Mean squared spatial flow differences (the TV term value)."""
    return float(tv_reg(Tensor(np.asarray(flow, dtype=np.float64))).data)
