"""Angular image shifting: translate the central image toward every view.

    L_s(x, y, u, v) = L(x - eta*du, y - eta*dv, center)

so a scene plane at disparity ``eta`` (content moving ``+eta`` px per
angular step) is reproduced exactly by the shifted stack.
"""

from __future__ import annotations

import numpy as np

from .lightfield import LightField, angular_offsets, default_center
from .sampling import BilinearGather, pixel_grid


def _as_nchw(img: np.ndarray) -> tuple[np.ndarray, bool]:
    img = np.asarray(img)
    if img.ndim == 2:
        return img[None, None], True
    if img.ndim == 3:
        return img.transpose(2, 0, 1)[None], False
    raise ValueError(f"expected [H,W] or [H,W,C] image, got shape {img.shape}")


def _from_nchw(out: np.ndarray, plain: bool) -> np.ndarray:
    return out[0, 0] if plain else out[0].transpose(1, 2, 0)


def translate(img: np.ndarray, tx: float, ty: float) -> np.ndarray:
    """out(x, y) = img(x - tx, y - ty), bilinear, clamp-to-edge."""
    if tx == 0 and ty == 0:
        return np.array(img, copy=True)
    x, plain = _as_nchw(img)
    h, w = x.shape[2:]
    gx, gy = pixel_grid(h, w)
    out = BilinearGather(x, (gx - tx)[None], (gy - ty)[None]).values()
    return _from_nchw(out, plain).astype(np.asarray(img).dtype, copy=False)


def shift_image(img: np.ndarray, delta_u: int, delta_v: int, eta: float) -> np.ndarray:
    if not np.isfinite(eta):
        raise ValueError(f"eta must be finite, got {eta}")
    return translate(img, eta * delta_u, eta * delta_v)


def shift_stack(img: np.ndarray, angular=(8, 8), center=None, eta: float = 0.8) -> LightField:
    """Shifted stack as a LightField; ``img`` is [H,W,C]."""
    U, V = angular
    center = default_center(U, V) if center is None else tuple(center)
    img = np.asarray(img)
    if img.ndim == 2:
        img = img[..., None]
    du, dv = angular_offsets((U, V), center)
    data = np.empty((V, U) + img.shape, dtype=img.dtype)
    for v in range(V):
        for u in range(U):
            data[v, u] = shift_image(img, int(du[v, u]), int(dv[v, u]), eta)
    return LightField(data, center, eta)
