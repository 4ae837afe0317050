"""4D light field container, luminance, EPI slicing, resizing and file I/O.

Array layout is ``[V][U][H][W][C]``: angular row ``v`` outermost, then
angular column ``u``, then the sub-aperture image (SAI) in row-major pixels.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import cv2
import numpy as np

BT601 = np.array([0.299, 0.587, 0.114])


class LightFieldFormatError(ValueError):
    pass


@dataclass(frozen=True)
class ViewIndex:
    u: int
    v: int
    center_u: int
    center_v: int

    @property
    def delta_u(self) -> int:
        return self.u - self.center_u

    @property
    def delta_v(self) -> int:
        return self.v - self.center_v


@dataclass(frozen=True, eq=False)
class LightField:
    data: np.ndarray  # [V, U, H, W, C]
    center: tuple[int, int]  # (u_c, v_c)
    eta: float = 0.8

    def __post_init__(self):
        d = np.asarray(self.data)
        if d.ndim != 5:
            raise ValueError(f"light field data must be [V,U,H,W,C], got shape {d.shape}")
        if d.shape[-1] not in (1, 3):
            raise ValueError(f"channel count must be 1 or 3, got {d.shape[-1]}")
        uc, vc = self.center
        if not (0 <= uc < d.shape[1] and 0 <= vc < d.shape[0]):
            raise ValueError(f"center {self.center} outside angular grid {d.shape[1]}x{d.shape[0]}")
        d = d.view()
        d.flags.writeable = False
        object.__setattr__(self, "data", d)
        object.__setattr__(self, "center", (int(uc), int(vc)))

    @property
    def angular(self) -> tuple[int, int]:
        return self.data.shape[1], self.data.shape[0]

    @property
    def spatial(self) -> tuple[int, int]:
        """(H, W)"""
        return self.data.shape[2], self.data.shape[3]

    @property
    def channels(self) -> int:
        return self.data.shape[4]

    def central_view(self) -> np.ndarray:
        uc, vc = self.center
        return self.data[vc, uc]

    def views(self):
        U, V = self.angular
        for v in range(V):
            for u in range(U):
                yield ViewIndex(u, v, *self.center)

    def replace(self, data=None, **kw) -> "LightField":
        return LightField(self.data if data is None else data,
                          kw.get("center", self.center), kw.get("eta", self.eta))


def default_center(U: int, V: int) -> tuple[int, int]:
    # U // 2 picks a real captured view on even grids
    return U // 2, V // 2


def angular_offsets(angular, center) -> tuple[np.ndarray, np.ndarray]:
    """Per-view (delta_u, delta_v) grids of shape [V, U]."""
    U, V = angular
    uc, vc = center
    du, dv = np.meshgrid(np.arange(U) - uc, np.arange(V) - vc)
    return du, dv


def to_luminance(rgb):
    """BT.601 luma of an RGB image [..., 3] or RGB LightField."""
    if isinstance(rgb, LightField):
        return rgb.replace(data=to_luminance(rgb.data))
    rgb = np.asarray(rgb)
    if rgb.shape[-1] != 3:
        raise ValueError(f"to_luminance expects 3 channels, got shape {rgb.shape}")
    y = rgb[..., 0] * 0.299 + rgb[..., 1] * 0.587 + rgb[..., 2] * 0.114
    return np.clip(y, 0.0, 1.0)[..., None].astype(rgb.dtype, copy=False)


# EPI ---------------------------------------------------------------------

def extract_epi(lf: LightField, fixed_y: int, fixed_v: int) -> np.ndarray:
    """Horizontal EPI E[u][x] = L(x, fixed_y, u, fixed_v), shape [U, W, C]."""
    V, U, H, W, _ = lf.data.shape
    if not (0 <= fixed_y < H and 0 <= fixed_v < V):
        raise IndexError(f"EPI index (y={fixed_y}, v={fixed_v}) outside ({H}, {V})")
    return lf.data[fixed_v, :, fixed_y]


def extract_epi_vertical(lf: LightField, fixed_x: int, fixed_u: int) -> np.ndarray:
    """Vertical EPI E[v][y] = L(fixed_x, y, fixed_u, v), shape [V, H, C]."""
    V, U, H, W, _ = lf.data.shape
    if not (0 <= fixed_x < W and 0 <= fixed_u < U):
        raise IndexError(f"EPI index (x={fixed_x}, u={fixed_u}) outside ({W}, {U})")
    return lf.data[:, fixed_u, :, fixed_x]


def estimate_epi_slope(epis, center: int, mask=None, candidates=None) -> float:
    """Slope (px per angular step) of EPI structures by shear search.

    ``epis`` is one EPI [A, X] or a stack [K, A, X], no channel axis. For each
    candidate slope s the row at angular offset k is compared against the
    central row displaced by s*k; the slope with the least squared error over
    masked central-row pixels wins. ``mask`` is [X] or [K, X] in central-row
    coordinates. Sign convention: a structure at x0 in the central row sits at
    x0 + s*k in row ``center + k``.
    """
    e = np.asarray(epis, dtype=np.float64)
    if e.ndim == 2:
        e = e[None]
    K, A, X = e.shape
    m = np.ones((K, X), bool) if mask is None else np.broadcast_to(np.asarray(mask, bool), (K, X))
    if candidates is None:
        candidates = np.arange(-4.0, 4.0 + 1e-9, 0.01)
    ks = np.arange(A) - center
    xs = np.arange(X, dtype=np.float64)
    ref = e[:, center, :]
    best, best_cost = 0.0, np.inf
    for s in candidates:
        cost, count = 0.0, 0
        for a, k in enumerate(ks):
            if k == 0:
                continue
            pos = xs + s * k
            ok = m & ((pos >= 0) & (pos <= X - 1))[None]
            vals = _interp_rows(e[:, a, :], pos)
            diff = (vals - ref)[ok]
            cost += float(diff @ diff)
            count += diff.size
        if count and cost / count < best_cost:
            best, best_cost = float(s), cost / count
    return best


def _interp_rows(rows: np.ndarray, pos: np.ndarray) -> np.ndarray:
    X = rows.shape[-1]
    p = np.clip(pos, 0, X - 1)
    i0 = np.floor(p).astype(int)
    i1 = np.minimum(i0 + 1, X - 1)
    f = p - i0
    return rows[:, i0] * (1 - f) + rows[:, i1] * f


# resizing ----------------------------------------------------------------

def _bilinear_axis(n_in: int, n_out: int):
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0, n_in - 1)
    i0 = np.floor(src).astype(int)
    i1 = np.minimum(i0 + 1, n_in - 1)
    return i0, i1, src - i0


def resize_bilinear(x, new_h: int, new_w: int):
    """Bilinear resize with half-pixel centers of an image [H,W,(C)] or LightField."""
    if isinstance(x, LightField):
        return x.replace(data=resize_bilinear(x.data, new_h, new_w))
    x = np.asarray(x)
    if new_h < 1 or new_w < 1:
        raise ValueError("target extents must be >= 1")
    # image axes sit at -3,-2 for [...,H,W,C] and at -2,-1 for a plain [H,W]
    lf_like = x.ndim >= 3
    ha, wa = (-3, -2) if lf_like else (-2, -1)
    h, w = x.shape[ha], x.shape[wa]
    if (h, w) == (new_h, new_w):
        return x.copy()
    y0, y1, fy = _bilinear_axis(h, new_h)
    x0, x1, fx = _bilinear_axis(w, new_w)
    fy_s = fy.reshape((-1, 1, 1) if lf_like else (-1, 1))
    fx_s = fx.reshape((-1, 1) if lf_like else (-1,))
    top = np.take(x, y0, axis=ha)
    bot = np.take(x, y1, axis=ha)
    rows = top * (1 - fy_s) + bot * fy_s
    left = np.take(rows, x0, axis=wa)
    right = np.take(rows, x1, axis=wa)
    return (left * (1 - fx_s) + right * fx_s).astype(x.dtype, copy=False)


# file I/O ----------------------------------------------------------------

def _paths(path) -> tuple[Path, Path]:
    p = Path(path)
    if p.suffix == ".json":
        return p.with_suffix(".png"), p
    return p.with_suffix(".png"), p.with_suffix(".json")


def quantize(x: np.ndarray, bit_depth: int) -> np.ndarray:
    maxval = (1 << bit_depth) - 1
    dt = np.uint8 if bit_depth == 8 else np.uint16
    return np.round(np.clip(x, 0.0, 1.0) * maxval).astype(dt)


def read_png(path) -> np.ndarray:
    """PNG -> float32 [H, W, C] in [0,1], RGB order."""
    img = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if img is None:
        raise FileNotFoundError(f"cannot read image {path}")
    maxval = 255.0 if img.dtype == np.uint8 else 65535.0
    if img.ndim == 2:
        img = img[..., None]
    elif img.shape[2] == 4:
        img = img[..., :3]
    if img.shape[2] == 3:
        img = img[..., ::-1]
    return (img.astype(np.float64) / maxval).astype(np.float32)


def write_png(path, img: np.ndarray, bit_depth: int = 8) -> None:
    if bit_depth not in (8, 16):
        raise ValueError(f"bit depth must be 8 or 16, got {bit_depth}")
    img = np.asarray(img)
    if img.ndim == 2:
        img = img[..., None]
    q = quantize(img, bit_depth)
    if q.shape[2] == 3:
        q = q[..., ::-1]
    if not cv2.imwrite(str(path), np.ascontiguousarray(q)):
        raise OSError(f"failed to write {path}")


def tile(data: np.ndarray) -> np.ndarray:
    V, U, H, W, C = data.shape
    return data.transpose(0, 2, 1, 3, 4).reshape(V * H, U * W, C)


def untile(img: np.ndarray, U: int, V: int) -> np.ndarray:
    h, w, c = img.shape
    return img.reshape(V, h // V, U, w // U, c).transpose(0, 2, 1, 3, 4)


def save_lightfield(lf: LightField, path, bit_depth: int = 8) -> None:
    """Write ``<stem>.png`` (row-major SAI tile grid) and ``<stem>.json``."""
    png, meta = _paths(path)
    V, U, H, W, _ = lf.data.shape
    write_png(png, tile(lf.data), bit_depth)
    doc = {"ang_u": U, "ang_v": V, "width": W, "height": H,
           "center_u": lf.center[0], "center_v": lf.center[1],
           "eta": lf.eta, "bit_depth": bit_depth}
    meta.write_text(json.dumps(doc, indent=2) + "\n")


def load_lightfield(path) -> LightField:
    png, meta = _paths(path)
    try:
        doc = json.loads(meta.read_text())
    except FileNotFoundError:
        raise
    except json.JSONDecodeError as e:
        raise LightFieldFormatError(f"{meta}: invalid JSON ({e})") from e
    required = ("ang_u", "ang_v", "width", "height", "center_u", "center_v", "eta", "bit_depth")
    missing = [k for k in required if k not in doc]
    if missing:
        raise LightFieldFormatError(f"{meta}: missing metadata keys {missing}")
    U, V, W, H = (int(doc[k]) for k in ("ang_u", "ang_v", "width", "height"))
    if min(U, V, W, H) < 1:
        raise LightFieldFormatError(f"{meta}: non-positive dimension in {doc}")
    if doc["bit_depth"] not in (8, 16):
        raise LightFieldFormatError(f"{meta}: bit_depth must be 8 or 16, got {doc['bit_depth']}")
    img = cv2.imread(str(png), cv2.IMREAD_UNCHANGED)
    if img is None:
        raise FileNotFoundError(f"cannot read tile grid {png}")
    expect_dt = np.uint8 if doc["bit_depth"] == 8 else np.uint16
    if img.dtype != expect_dt:
        raise LightFieldFormatError(f"{png}: pixel type {img.dtype} disagrees with bit_depth {doc['bit_depth']}")
    rows, cols = img.shape[:2]
    if cols != U * W:
        raise LightFieldFormatError(
            f"{png}: width {cols} px holds {cols / W:g} tile columns, metadata ang_u={U} x width={W}")
    if rows != V * H:
        raise LightFieldFormatError(
            f"{png}: height {rows} px holds {rows / H:g} tile rows, metadata ang_v={V} x height={H}")
    grid = read_png(png)
    return LightField(untile(grid, U, V), (int(doc["center_u"]), int(doc["center_v"])), float(doc["eta"]))
