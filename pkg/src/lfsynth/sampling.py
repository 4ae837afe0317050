"""Clamp-to-edge bilinear gather shared by shifting, warping and refocusing."""

from __future__ import annotations

import numpy as np


class BilinearGather:
    """Bilinear lookup of ``img`` [N, C, H, W] at absolute coords ``sx, sy`` [N, H, W].

    Coordinates outside the image are clamped to the border; the derivative
    with respect to a clamped coordinate is zero.
    """

    def __init__(self, img: np.ndarray, sx: np.ndarray, sy: np.ndarray):
        N, C, H, W = img.shape
        self.shape = img.shape
        self.dtype = img.dtype
        cx = np.clip(sx, 0, W - 1)
        cy = np.clip(sy, 0, H - 1)
        self.inside_x = (sx >= 0) & (sx <= W - 1)
        self.inside_y = (sy >= 0) & (sy <= H - 1)
        x0 = np.floor(cx).astype(np.intp)
        y0 = np.floor(cy).astype(np.intp)
        x1 = np.minimum(x0 + 1, W - 1)
        y1 = np.minimum(y0 + 1, H - 1)
        self.fx = (cx - x0).astype(img.dtype)
        self.fy = (cy - y0).astype(img.dtype)
        base = (np.arange(N, dtype=np.intp) * (H * W)).reshape(N, 1, 1)
        self.idx = [base + y0 * W + x0, base + y0 * W + x1,
                    base + y1 * W + x0, base + y1 * W + x1]
        flat = img.transpose(0, 2, 3, 1).reshape(N * H * W, C)
        # corner values as [N, C, H, W]
        self.corners = [flat[i].transpose(0, 3, 1, 2) for i in self.idx]

    def values(self) -> np.ndarray:
        v00, v01, v10, v11 = self.corners
        fx = self.fx[:, None]
        fy = self.fy[:, None]
        top = v00 * (1 - fx) + v01 * fx
        bot = v10 * (1 - fx) + v11 * fx
        return top * (1 - fy) + bot * fy

    def coord_grads(self, g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """d(sum g*out)/d sx and d sy, each [N, H, W]."""
        v00, v01, v10, v11 = self.corners
        fx = self.fx[:, None]
        fy = self.fy[:, None]
        dx = ((v01 - v00) * (1 - fy) + (v11 - v10) * fy) * g
        dy = ((v10 - v00) * (1 - fx) + (v11 - v01) * fx) * g
        return dx.sum(axis=1) * self.inside_x, dy.sum(axis=1) * self.inside_y

    def image_grad(self, g: np.ndarray) -> np.ndarray:
        N, C, H, W = self.shape
        fx, fy = self.fx, self.fy
        weights = [(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy]
        out = np.zeros((C, N * H * W), dtype=np.float64)
        for i, w in zip(self.idx, weights):
            flat_i = i.ravel()
            for c in range(C):
                out[c] += np.bincount(flat_i, weights=(g[:, c] * w).ravel(), minlength=N * H * W)
        return out.reshape(C, N, H, W).transpose(1, 0, 2, 3).astype(self.dtype)


def pixel_grid(h: int, w: int, dtype=np.float64) -> tuple[np.ndarray, np.ndarray]:
    ys, xs = np.mgrid[0:h, 0:w]
    return xs.astype(dtype), ys.astype(dtype)
