"""Differentiable bilinear warping and the full single-image synthesis."""

from __future__ import annotations

import numpy as np

from .flownet import NetworkParams, forward
from .lightfield import LightField, default_center, to_luminance
from .numerics import Tensor, _make, as_tensor
from .sampling import BilinearGather, pixel_grid
from .shifting import shift_stack


def bilinear_sample(img, flow) -> Tensor:
    """out(x, y) = img(x + dx(x, y), y + dy(x, y)), clamp-to-edge.

    ``img`` is [C,H,W] with ``flow`` [2,H,W], or batched [N,C,H,W] / [N,2,H,W].
    Differentiable with respect to both arguments.
    """
    img = as_tensor(img)
    flow = as_tensor(flow, img.dtype)
    batched = img.ndim == 4
    im = img.data if batched else img.data[None]
    fl = flow.data if batched else flow.data[None]
    if fl.shape[0] != im.shape[0] or fl.shape[1] != 2 or fl.shape[2:] != im.shape[2:]:
        raise ValueError(f"flow shape {flow.shape} incompatible with image shape {img.shape}")
    h, w = im.shape[2:]
    gx, gy = pixel_grid(h, w, im.dtype)
    gather = BilinearGather(im, gx + fl[:, 0], gy + fl[:, 1])
    out = gather.values()

    def bw(g):
        g = g if batched else g[None]
        gi = gf = None
        if img.requires_grad:
            gi = gather.image_grad(g)
            gi = gi if batched else gi[0]
        if flow.requires_grad:
            dx, dy = gather.coord_grads(g)
            gf = np.stack([dx, dy], axis=1).astype(fl.dtype)
            gf = gf if batched else gf[0]
        return gi, gf

    return _make(out if batched else out[0], (img, flow), bw)


def warp_stack(stack: np.ndarray, flow) -> Tensor:
    """Warp every view of a stack [V,U,H,W,C] by flow [V,U,2,H,W] -> Tensor [V,U,C,H,W]."""
    flow = as_tensor(flow)
    V, U, H, W, C = stack.shape
    imgs = np.ascontiguousarray(stack.transpose(0, 1, 4, 2, 3).reshape(V * U, C, H, W), dtype=flow.dtype)
    out = bilinear_sample(Tensor(imgs), flow.reshape(V * U, 2, H, W))
    return out.reshape(V, U, C, H, W)


def synthesize(central_rgb: np.ndarray, params: NetworkParams, angular=None, center=None,
               eta: float = 0.8, postprocess=None):
    """Single RGB image [H,W,3] -> (RGB LightField, Y LightField, flow [V,U,2,H,W]).

    ``postprocess`` is None or ``(radius, eps)`` for guided-filter flow
    aggregation before warping. Outputs are not clamped.
    """
    from .postprocess import aggregate_flow

    img = np.asarray(central_rgb, dtype=np.float32)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"synthesize expects an RGB image [H,W,3], got {img.shape}")
    angular = tuple(params.spec.angular if angular is None else angular)
    if angular != tuple(params.spec.angular):
        raise ValueError(f"angular grid {angular} does not match network {params.spec.angular}")
    center = default_center(*angular) if center is None else tuple(center)
    y = to_luminance(img)
    flow = forward(params, y.transpose(2, 0, 1)).data.astype(np.float32)
    if postprocess is not None:
        radius, eps = postprocess
        flow = aggregate_flow(flow, y[..., 0], radius, eps)
    return render_views(img, flow, center, eta), render_views(y, flow, center, eta), flow


def render_views(img: np.ndarray, flow: np.ndarray, center=None, eta: float = 0.8) -> LightField:
    """Shift ``img`` [H,W,C] into every view of ``flow`` [V,U,2,H,W] and warp it."""
    flow = np.asarray(flow, dtype=np.float32)
    V, U = flow.shape[:2]
    center = default_center(U, V) if center is None else tuple(center)
    stack = shift_stack(img, (U, V), center, eta).data
    return LightField(warp_stack(stack, flow).data.transpose(0, 1, 3, 4, 2), center, eta)
