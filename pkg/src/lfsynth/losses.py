"""Spatio-angular light field losses on luminance stacks [V, U, H, W].

All pixel reductions are means, so the weights do not depend on resolution.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import Tensor, as_tensor


@dataclass(frozen=True)
class LossWeights:
    lambda_g: float = 10.0
    lambda_e: float = 10.0
    lambda_tv: float = 1e-6
    lambda_l1: float = 0.0  # pixel-wise L1, ablation only

    def __post_init__(self):
        for k in ("lambda_g", "lambda_e", "lambda_tv", "lambda_l1"):
            v = getattr(self, k)
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"{k} must be finite and >= 0, got {v}")


def view_mean(data: np.ndarray) -> np.ndarray:
    """Mean over the two leading (angular) axes, one fixed summation order."""
    V, U = data.shape[:2]
    flat = data.reshape((V * U,) + data.shape[2:])
    return flat.sum(axis=0) / (V * U)


def _lf(x) -> Tensor:
    x = as_tensor(x)
    if x.ndim == 5 and x.shape[-1] == 1:
        x = x.reshape(x.shape[:-1])
    if x.ndim != 4:
        raise ValueError(f"expected a luminance light field [V,U,H,W], got shape {x.shape}")
    return x


def _mean_over(x: Tensor, axes) -> Tensor:
    return x.mean(axis=axes)


def _std_over(x: Tensor, axes) -> Tensor:
    n = int(np.prod([x.shape[a] for a in axes]))
    if n < 2:
        raise ValueError("standard deviation needs at least two views")
    m = x.mean(axis=axes, keepdims=True)
    d = x - m
    return ((d * d).sum(axis=axes) / (n - 1)).sqrt()


def lf_mean(lf) -> Tensor:
    """Per-pixel mean image over all views."""
    x = _lf(lf)
    if not x.requires_grad:
        return Tensor(view_mean(x.data))
    return _mean_over(x, (0, 1))


def lf_std(lf) -> Tensor:
    """Per-pixel sqrt(sum((L - M)^2) / (N - 1)) over all N views."""
    return _std_over(_lf(lf), (0, 1))


def _stat_l1(p: Tensor, g: Tensor, axes, with_std: bool) -> Tensor:
    term = (_mean_over(p, axes) - _mean_over(g, axes)).abs()
    term = term.mean(axis=tuple(range(-2, 0)))
    if with_std:
        s = (_std_over(p, axes) - _std_over(g, axes)).abs().mean(axis=tuple(range(-2, 0)))
        term = term + s
    return term


def _check(pred, gt):
    p, g = _lf(pred), _lf(gt)
    if p.shape != g.shape:
        raise ValueError(f"pred shape {p.shape} != gt shape {g.shape}")
    if g.dtype != p.dtype:
        g = Tensor(g.data.astype(p.dtype))
    return p, g


def global_loss(pred, gt) -> Tensor:
    p, g = _check(pred, gt)
    return _stat_l1(p, g, (0, 1), True)


def slice_losses(pred, gt, axis: int) -> Tensor:
    """Per-slice mean/std L1 terms with statistics taken along angular ``axis``.

    axis=0 varies v (one term per fixed u); axis=1 varies u (one per fixed v).
    The std term is dropped when the slice has fewer than two views.
    """
    p, g = _check(pred, gt)
    return _stat_l1(p, g, (axis,), p.shape[axis] >= 2)


def local_loss(pred, gt) -> Tensor:
    """Row and column terms summed, divided by U + V."""
    p, g = _check(pred, gt)
    V, U = p.shape[:2]
    return (slice_losses(p, g, 0).sum() + slice_losses(p, g, 1).sum()) / (U + V)


def pixel_l1(pred, gt) -> Tensor:
    p, g = _check(pred, gt)
    return (p - g).abs().mean()


def tv_reg(flow) -> Tensor:
    """Mean squared forward differences of the flow along x plus along y."""
    f = as_tensor(flow)
    gx = f[..., :, 1:] - f[..., :, :-1]
    gy = f[..., 1:, :] - f[..., :-1, :]
    return (gx * gx).mean() + (gy * gy).mean()


def total_objective(pred_y, gt_y, flow, w: LossWeights = LossWeights(), parts: dict | None = None) -> Tensor:
    """lambda_g*global + lambda_e*local + lambda_tv*tv (+ lambda_l1*L1).

    If ``parts`` is given it receives the unweighted component values.
    """
    p, g = _check(pred_y, gt_y)
    terms = {"global": global_loss(p, g), "local": local_loss(p, g), "tv": tv_reg(flow)}
    total = terms["global"] * w.lambda_g + terms["local"] * w.lambda_e + terms["tv"] * w.lambda_tv
    if w.lambda_l1:
        terms["l1"] = pixel_l1(p, g)
        total = total + terms["l1"] * w.lambda_l1
    if parts is not None:
        parts.update({k: float(v.data) for k, v in terms.items()})
    return total
