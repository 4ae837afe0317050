"""Shared setup for the desk-scale overfit experiments (scripts and acceptance)."""

from __future__ import annotations

import numpy as np
from scipy.ndimage import binary_erosion

from .applications import psnr
from .lightfield import LightField, estimate_epi_slope, to_luminance
from .training import (SceneSpec, TrainConfig, evaluate, flow_gradient_energy, generate_synthetic_lf,
                       layer_mask, train, two_plane_scene)
from .warping import synthesize

OVERFIT_SCENE_SEED = 3
OVERFIT_ANGULAR = (8, 8)
OVERFIT_SPATIAL = (48, 64)


def overfit_dataset(scene_seed: int = OVERFIT_SCENE_SEED, eta: float = 0.8):
    scene = two_plane_scene(scene_seed)
    gt = generate_synthetic_lf(scene, OVERFIT_ANGULAR, OVERFIT_SPATIAL, eta=eta)
    return scene, [(gt.central_view(), gt)]


def layer_regions(scene: SceneSpec, spatial, margin: int = 4, border: int = 6) -> list[np.ndarray]:
    """Central-view pixels that belong to exactly one layer in every view, per layer.

    Each layer's own support is eroded by ``margin`` px and the regions of
    nearer layers are removed with a ``margin`` px halo; ``border`` px along the
    image edge are dropped.
    """
    h, w = spatial
    masks = [layer_mask(l, h, w) > 0.5 for l in scene.layers]
    keep = np.zeros((h, w), bool)
    keep[border:h - border, border:w - border] = True
    st = np.ones((2 * margin + 1, 2 * margin + 1), bool)
    out = []
    for i, m in enumerate(masks):
        visible = m.copy()
        for nearer in masks[i + 1:]:
            halo = ~binary_erosion(~nearer, st, border_value=1)
            visible &= ~halo
        if i > 0:
            visible = binary_erosion(visible, st)
        out.append(visible & keep)
    return out


def measure_layer_slopes(lf: LightField, scene: SceneSpec) -> list[float]:
    """Horizontal EPI slope for each scene layer, through the central angular row."""
    y = to_luminance(lf.data)[..., 0] if lf.channels == 3 else lf.data[..., 0]
    uc, vc = lf.center
    regions = layer_regions(scene, lf.spatial)
    slopes = []
    for region in regions:
        rows = np.flatnonzero(region.any(axis=1))
        epis = y[vc][:, rows, :].transpose(1, 0, 2)  # [K, U, W]
        slopes.append(estimate_epi_slope(epis, uc, region[rows]))
    return slopes


# reference variants for the loss/shifting ablation; everything else stays at TrainConfig defaults
ABLATIONS = {
    "global+local": {},
    "local": {"lambda_g": 0.0},
    "global": {"lambda_e": 0.0},
    "pixel-l1": {"lambda_g": 0.0, "lambda_e": 0.0, "lambda_l1": 10.0},
    "no-shift": {"eta": 0.0},
    "no-tv": {"lambda_tv": 0.0},
}


def run_overfit(config: TrainConfig, scene_seed: int = OVERFIT_SCENE_SEED, out_dir=None,
                log_every: int = 200) -> dict:
    """Train on the overfit scene and collect the numbers the acceptance checks look at.

    The ground truth is always rendered with the default shift so that an
    ``eta=0`` run is judged against the same scene.
    """
    scene, data = overfit_dataset(scene_seed)
    res = train(config, data, out_dir=out_dir, log_every=log_every)
    central, gt = data[0]
    rgb, _, flow = synthesize(central, res.params, eta=config.eta)
    return {
        "params": res.params,
        "log": res.log,
        "flow": flow,
        "loss_first": res.log[0]["total"],
        "loss_last": res.log[-1]["total"],
        "psnr": psnr(rgb, gt),
        "mean_ssim": evaluate(res.params, data, eta=config.eta)["mean_ssim"],
        "flow_energy": flow_gradient_energy(flow),
        "slopes": measure_layer_slopes(rgb, scene),
        "gt_slopes": measure_layer_slopes(gt, scene),
    }
