"""Guided-filter aggregation of appearance flow."""

from __future__ import annotations

import numpy as np
from scipy.ndimage import uniform_filter

DEFAULT_RADIUS = 8
DEFAULT_EPS = 1e-3


def _box(x: np.ndarray, r: int) -> np.ndarray:
    # edge-replicated mean over a (2r+1)^2 window
    return uniform_filter(x, size=2 * r + 1, mode="nearest")


def guided_filter(guide: np.ndarray, src: np.ndarray, radius: int = DEFAULT_RADIUS,
                  eps: float = DEFAULT_EPS) -> np.ndarray:
    """Single-channel guided filter (He et al.) with box windows of side 2r+1."""
    I = np.asarray(guide, dtype=np.float64)
    p = np.asarray(src, dtype=np.float64)
    if I.shape != p.shape or I.ndim != 2:
        raise ValueError(f"guide {I.shape} and input {p.shape} must be equal 2D shapes")
    if radius < 1 or not eps > 0:
        raise ValueError("radius must be >= 1 and eps > 0")
    mean_I = _box(I, radius)
    mean_p = _box(p, radius)
    var_I = _box(I * I, radius) - mean_I * mean_I
    cov_Ip = _box(I * p, radius) - mean_I * mean_p
    a = cov_Ip / (var_I + eps)
    b = mean_p - a * mean_I
    return _box(a, radius) * I + _box(b, radius)


def aggregate_flow(flow: np.ndarray, guide: np.ndarray, radius: int = DEFAULT_RADIUS,
                   eps: float = DEFAULT_EPS) -> np.ndarray:
    """Filter every view's dx and dy channel independently, guided by the central Y."""
    flow = np.asarray(flow)
    guide = np.asarray(guide)
    if guide.ndim == 3:
        guide = guide[..., 0]
    if flow.shape[-2:] != guide.shape:
        raise ValueError(f"guide {guide.shape} does not match flow spatial size {flow.shape[-2:]}")
    out = np.empty_like(flow)
    lead = flow.shape[:-2]
    for idx in np.ndindex(*lead):
        out[idx] = guided_filter(guide, flow[idx], radius, eps)
    return out
