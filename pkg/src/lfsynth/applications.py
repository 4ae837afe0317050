"""Refocusing and image quality metrics."""

from __future__ import annotations

import numpy as np

from .lightfield import LightField, angular_offsets, to_luminance
from .losses import view_mean
from .sampling import BilinearGather, pixel_grid

PSNR_CAP = 99.0


def refocus(lf: LightField, alpha: float) -> np.ndarray:
    """Shift-and-add: R(x,y) = mean over views of L(x + alpha*du, y + alpha*dv, u, v)."""
    data = np.asarray(lf.data)
    V, U, H, W, C = data.shape
    if alpha == 0:
        return view_mean(data)
    du, dv = angular_offsets((U, V), lf.center)
    gx, gy = pixel_grid(H, W)
    sx = gx[None] + alpha * du.reshape(-1, 1, 1)
    sy = gy[None] + alpha * dv.reshape(-1, 1, 1)
    imgs = data.reshape(V * U, H, W, C).transpose(0, 3, 1, 2)
    shifted = BilinearGather(imgs, sx, sy).values().transpose(0, 2, 3, 1)
    return view_mean(shifted.reshape(V, U, H, W, C))


def _arr(x) -> np.ndarray:
    return np.asarray(x.data if isinstance(x, LightField) else x, dtype=np.float64)


def psnr(a, b) -> float:
    a, b = _arr(a), _arr(b)
    if a.shape != b.shape:
        raise ValueError(f"psnr shape mismatch {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * np.log10(1.0 / mse))


def _gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2
    g = np.exp(-(x ** 2) / (2 * sigma ** 2))
    return g / g.sum()


def _filter_valid(x: np.ndarray, g: np.ndarray) -> np.ndarray:
    k = len(g)
    rows = np.lib.stride_tricks.sliding_window_view(x, k, axis=0) @ g
    return np.lib.stride_tricks.sliding_window_view(rows, k, axis=1) @ g


def ssim(a, b, win: int = 11, sigma: float = 1.5, k1: float = 0.01, k2: float = 0.03) -> float:
    """Gaussian-window SSIM of single-channel images, mean over fully valid windows."""
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if a.ndim == 3 and a.shape[2] == 3:
        a, b = to_luminance(a)[..., 0], to_luminance(b)[..., 0]
    elif a.ndim == 3 and a.shape[2] == 1:
        a, b = a[..., 0], b[..., 0]
    if a.shape != b.shape or a.ndim != 2:
        raise ValueError(f"ssim needs equal single-channel images, got {a.shape} and {b.shape}")
    if min(a.shape) < win:
        raise ValueError(f"image {a.shape} smaller than the {win}x{win} window")
    g = _gaussian_window(win, sigma)
    c1, c2 = (k1 * 1.0) ** 2, (k2 * 1.0) ** 2
    mu_a, mu_b = _filter_valid(a, g), _filter_valid(b, g)
    saa = _filter_valid(a * a, g) - mu_a ** 2
    sbb = _filter_valid(b * b, g) - mu_b ** 2
    sab = _filter_valid(a * b, g) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * sab + c2)
    den = (mu_a ** 2 + mu_b ** 2 + c1) * (saa + sbb + c2)
    return float(np.mean(num / den))


def lightfield_metrics(pred: LightField, gt: LightField) -> dict:
    """Per-view PSNR (on stored channels) and SSIM (on luminance), plus means."""
    if pred.data.shape != gt.data.shape:
        raise ValueError(f"light field shapes differ: {pred.data.shape} vs {gt.data.shape}")
    per_view = []
    for view in gt.views():
        p, g = pred.data[view.v, view.u], gt.data[view.v, view.u]
        per_view.append({"u": view.u, "v": view.v, "psnr": psnr(p, g), "ssim": ssim(p, g)})
    return {
        "per_view": per_view,
        "mean_psnr": float(np.mean([r["psnr"] for r in per_view])),
        "mean_ssim": float(np.mean([r["ssim"] for r in per_view])),
        "psnr_all": psnr(pred, gt),
    }
