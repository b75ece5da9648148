"""Cross-camera depth projection and the losses built on it.

Everything here works on single-channel float images in [0, 1] and
:class:`~mcdp.basis.DepthMap` grids. Masked means ignore excluded pixels
entirely, including inside SSIM windows, so the content of masked-out pixels
never leaks into a loss.

Functions with a leading underscore also return gradients with respect to
the target depth map; :mod:`mcdp.refine` chains those through the basis
combination.
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import kernels
from .basis import DepthMap
from .errors import ShapeMismatch
from .geometry import CameraIntrinsics, CameraExtrinsics, in_bounds, pixel_grid, warp_points

SSIM_C1 = 0.01**2
SSIM_C2 = 0.03**2
PHOTO_ALPHA = 0.85
DEFAULT_LAMBDA = 0.001
DEFAULT_MU = 0.001


class LossTerm(NamedTuple):
    value: float
    count: int


class SourceView(NamedTuple):
    """What a target camera needs to know about one source camera."""

    image: np.ndarray
    mask: np.ndarray
    K: CameraIntrinsics
    E: CameraExtrinsics  # target -> source


@dataclass(frozen=True)
class LossBreakdown:
    photometric: float
    consistency: float
    smoothness: float
    total: float
    valid_pixel_count: int
    lam: float = DEFAULT_LAMBDA
    mu: float = DEFAULT_MU

    @classmethod
    def from_parts(cls, photometric, consistency, smoothness, valid_pixel_count,
                   lam=DEFAULT_LAMBDA, mu=DEFAULT_MU):
        total = photometric + lam * consistency + mu * smoothness
        return cls(float(photometric), float(consistency), float(smoothness),
                   float(total), int(valid_pixel_count), lam, mu)

    def recompute(self):
        return self.photometric + self.lam * self.consistency + self.mu * self.smoothness


def _same_shape(*arrays):
    shapes = {np.shape(a) for a in arrays}
    if len(shapes) != 1:
        raise ShapeMismatch(f"shape mismatch: {sorted(shapes)}")


def _as_mask(mask, shape):
    if mask is None:
        return np.ones(shape, dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != tuple(shape):
        raise ShapeMismatch(f"mask {mask.shape} vs grid {tuple(shape)}")
    return mask


# ---------------------------------------------------------------------------
# depth projection
# ---------------------------------------------------------------------------


def project_depth(D_j, Kj, Ki, E_ji, zmin=False):
    """Splat camera j's depth map onto camera i's pixel grid.

    Each valid source pixel is warped into i and written to the nearest
    destination pixel. Sources are visited in row-major order and later
    writes overwrite earlier ones; ``zmin=True`` keeps the nearest depth
    instead. Unwritten pixels come back invalid with value 0.
    """
    if D_j.shape != Kj.shape:
        raise ShapeMismatch(f"depth {D_j.shape} vs camera {Kj.shape}")
    grid = pixel_grid(*D_j.shape)
    uv, z = warp_points(grid, D_j.values, Kj, Ki, E_ji)
    ok = D_j.valid & np.isfinite(z) & (z > 0)
    uv = np.where(ok[..., None], uv, -1.0)
    values, written = kernels.splat(uv[..., 0], uv[..., 1], np.where(ok, z, 0.0), ok,
                                    Ki.height, Ki.width, zmin=zmin)
    return DepthMap(values, written)


# ---------------------------------------------------------------------------
# depth consistency
# ---------------------------------------------------------------------------


def _consistency_mask(D_i, D_hat, mask):
    if D_i.shape != D_hat.shape:
        raise ShapeMismatch(f"{D_i.shape} vs {D_hat.shape}")
    return D_i.valid & D_hat.valid & _as_mask(mask, D_i.shape)


def depth_consistency_loss(D_i, D_hat, mask=None):
    """Mean |D_i - D_hat| over pixels valid in both maps and kept by ``mask``."""
    keep = _consistency_mask(D_i, D_hat, mask)
    count = int(keep.sum())
    if count == 0:
        return LossTerm(0.0, 0)
    return LossTerm(float(np.abs(D_i.values - D_hat.values)[keep].mean()), count)


def _consistency_with_grad(D_i, D_hat, mask=None):
    keep = _consistency_mask(D_i, D_hat, mask)
    count = int(keep.sum())
    grad = np.zeros(D_i.shape)
    if count == 0:
        return LossTerm(0.0, 0), grad
    diff = D_i.values - D_hat.values
    grad[keep] = np.sign(diff[keep]) / count
    return LossTerm(float(np.abs(diff)[keep].mean()), count), grad


# ---------------------------------------------------------------------------
# SSIM and photometric error
# ---------------------------------------------------------------------------


class _SSIMCache(NamedTuple):
    x: np.ndarray
    y: np.ndarray
    valid: np.ndarray
    n: np.ndarray
    mx: np.ndarray
    my: np.ndarray
    A1: np.ndarray
    A2: np.ndarray
    B1: np.ndarray
    B2: np.ndarray
    s: np.ndarray


def _ssim_forward(x, y, valid):
    box = kernels.box_sum3
    n = box(np.ones(x.shape), valid)
    n = np.where(valid, n, 1.0)
    mx = box(x, valid) / n
    my = box(y, valid) / n
    sxx = box(x * x, valid) / n - mx * mx
    syy = box(y * y, valid) / n - my * my
    sxy = box(x * y, valid) / n - mx * my
    A1 = 2 * mx * my + SSIM_C1
    A2 = 2 * sxy + SSIM_C2
    B1 = mx * mx + my * my + SSIM_C1
    B2 = sxx + syy + SSIM_C2
    s = (A1 * A2) / (B1 * B2)
    return _SSIMCache(x, y, valid, n, mx, my, A1, A2, B1, B2, s)


def _ssim_backward_y(c, g):
    """Pull dL/dSSIM (per pixel, ``g``) back to dL/dy."""
    g = np.where(c.valid, g, 0.0)
    denom = c.B1 * c.B2
    ds_dmy = 2 * c.mx * c.A2 / denom - c.s * 2 * c.my / c.B1
    ds_dsyy = -c.s / c.B2
    ds_dsxy = 2 * c.A1 / denom
    a = g * ds_dmy / c.n
    b = g * ds_dsyy / c.n
    e = g * ds_dsxy / c.n
    box = kernels.box_sum3
    out = (box(a - 2 * b * c.my - e * c.mx, c.valid)
           + 2 * c.y * box(b, c.valid)
           + c.x * box(e, c.valid))
    return np.where(c.valid, out, 0.0)


def ssim(Ia, Ib, valid=None):
    """Per-pixel SSIM over 3x3 box windows.

    Window statistics use only pixels inside the image and inside ``valid``
    (all pixels by default). Entries outside ``valid`` are 0.
    """
    Ia = np.asarray(Ia, dtype=np.float64)
    Ib = np.asarray(Ib, dtype=np.float64)
    _same_shape(Ia, Ib)
    valid = _as_mask(valid, Ia.shape)
    s = _ssim_forward(Ia, Ib, valid).s
    return np.where(valid, s, 0.0)


def _pe_map(Ia, Ib, valid):
    cache = _ssim_forward(Ia, Ib, valid)
    pe = PHOTO_ALPHA / 2 * (1 - cache.s) + (1 - PHOTO_ALPHA) * np.abs(Ia - Ib)
    return np.where(valid, pe, 0.0), cache


def _pe_backward_b(cache, weight):
    """dL/dIb for L = sum_p weight(p) * pe(p)."""
    grad = _ssim_backward_y(cache, -PHOTO_ALPHA / 2 * weight)
    grad += (1 - PHOTO_ALPHA) * weight * np.sign(cache.y - cache.x)
    return np.where(cache.valid, grad, 0.0)


def photometric_error(Ia, Ib, mask=None):
    """Masked mean of the SSIM + L1 photometric error (alpha = 0.85)."""
    Ia = np.asarray(Ia, dtype=np.float64)
    Ib = np.asarray(Ib, dtype=np.float64)
    _same_shape(Ia, Ib)
    keep = _as_mask(mask, Ia.shape)
    count = int(keep.sum())
    if count == 0:
        return LossTerm(0.0, 0)
    pe, _ = _pe_map(Ia, Ib, keep)
    return LossTerm(float(pe[keep].mean()), count)


def synthesize(I_i_shape, D_i, Ki, src, mask_i=None):
    """Resample a source image into the target view using the target depth.

    Returns:
        (image, valid, d_image/d_depth); pixels that are not valid hold 0.
    """
    h, w = I_i_shape
    grid = pixel_grid(h, w)
    uv, z = warp_points(grid, D_i.values, Ki, src.K, src.E)
    ok = D_i.valid & _as_mask(mask_i, (h, w)) & np.isfinite(z) & (z > 0)
    ok &= in_bounds(uv, src.K.height, src.K.width)
    u = np.where(ok, uv[..., 0], 0.0)
    v = np.where(ok, uv[..., 1], 0.0)
    ui = np.clip(np.floor(u + 0.5).astype(np.int64), 0, src.K.width - 1)
    vi = np.clip(np.floor(v + 0.5).astype(np.int64), 0, src.K.height - 1)
    ok &= np.asarray(src.mask, dtype=bool)[vi, ui]

    val, d_du, d_dv = kernels.bilinear(src.image, u, v)

    # d(u, v)/d(depth): point = a * d + t, so du/dd = fx (a_x t_z - t_x a_z) / Z^2
    R, t = src.E.rotation, src.E.translation
    rx = (grid[..., 0] - Ki.cx) / Ki.fx
    ry = (grid[..., 1] - Ki.cy) / Ki.fy
    a = [R[k, 0] * rx + R[k, 1] * ry + R[k, 2] for k in range(3)]
    z_safe = np.where(ok, z, 1.0)
    du_dd = src.K.fx * (a[0] * t[2] - t[0] * a[2]) / z_safe**2
    dv_dd = src.K.fy * (a[1] * t[2] - t[1] * a[2]) / z_safe**2
    d_img = d_du * du_dd + d_dv * dv_dd
    return np.where(ok, val, 0.0), ok, np.where(ok, d_img, 0.0)


def _spatial_photometric(I_i, D_i, Ki, sources, mask_i=None, need_grad=False):
    I_i = np.asarray(I_i, dtype=np.float64)
    if D_i.shape != I_i.shape:
        raise ShapeMismatch(f"depth {D_i.shape} vs image {I_i.shape}")
    grad = np.zeros(I_i.shape) if need_grad else None
    if not sources:
        return LossTerm(0.0, 0), grad

    pes, oks, caches, dimgs = [], [], [], []
    for src in sources:
        S, ok, d_img = synthesize(I_i.shape, D_i, Ki, src, mask_i)
        pe, cache = _pe_map(I_i, S, ok)
        pes.append(np.where(ok, pe, np.inf))
        oks.append(ok)
        caches.append(cache)
        dimgs.append(d_img)

    stack = np.stack(pes)
    any_ok = np.any(np.stack(oks), axis=0)
    count = int(any_ok.sum())
    if count == 0:
        return LossTerm(0.0, 0), grad
    best = np.argmin(stack, axis=0)
    best_pe = np.take_along_axis(stack, best[None], axis=0)[0]
    value = float(best_pe[any_ok].mean())

    if need_grad:
        for k in range(len(sources)):
            weight = np.where(any_ok & (best == k), 1.0 / count, 0.0)
            if not weight.any():
                continue
            dS = _pe_backward_b(caches[k], weight)
            grad += dS * dimgs[k]
    return LossTerm(value, count), grad


def spatial_photometric_loss(I_i, D_i, Ki, sources, mask_i=None):
    """Photometric error of the target image against source images warped in.

    A pixel counts when its warp lands inside a source image, in front of
    that camera, and passes both cameras' masks. With several sources the
    per-pixel minimum error is taken before averaging. Returns count 0 and
    loss 0 when nothing overlaps.
    """
    term, _ = _spatial_photometric(I_i, D_i, Ki, sources, mask_i)
    return term


# ---------------------------------------------------------------------------
# edge-aware smoothness
# ---------------------------------------------------------------------------


def _smoothness(D, I, mask=None, need_grad=False):
    I = np.asarray(I, dtype=np.float64)
    if D.shape != I.shape:
        raise ShapeMismatch(f"depth {D.shape} vs image {I.shape}")
    keep = D.valid & _as_mask(mask, D.shape)
    grad = np.zeros(D.shape) if need_grad else None
    N = int(keep.sum())
    if N == 0:
        return 0.0, grad
    inv = np.where(keep, 1.0 / np.where(keep, D.values, 1.0), 0.0)
    m = inv[keep].mean()
    ds = inv / m

    total = 0.0
    g_ds = np.zeros(D.shape)
    for axis in (1, 0):
        lo = [slice(None)] * 2
        hi = [slice(None)] * 2
        lo[axis] = slice(None, -1)
        hi[axis] = slice(1, None)
        lo, hi = tuple(lo), tuple(hi)
        pair = keep[lo] & keep[hi]
        npair = int(pair.sum())
        if npair == 0:
            continue
        diff = ds[hi] - ds[lo]
        wgt = np.exp(-np.abs(I[hi] - I[lo]))
        total += float((np.abs(diff) * wgt)[pair].sum() / npair)
        if need_grad:
            coef = np.where(pair, np.sign(diff) * wgt / npair, 0.0)
            g_ds[hi] += coef
            g_ds[lo] -= coef

    if need_grad:
        g_inv = g_ds / m - np.sum(g_ds * inv) / (m * m * N)
        grad = np.where(keep, -g_inv * inv * inv, 0.0)
    return total, grad


def smoothness_loss(D, I, mask=None):
    """Edge-aware smoothness of mean-normalised inverse depth.

    Mean of ``|dx d*| exp(-|dx I|)`` plus mean of ``|dy d*| exp(-|dy I|)``
    using forward differences, where ``d*`` is inverse depth over its mean.
    """
    value, _ = _smoothness(D, I, mask)
    return value


# ---------------------------------------------------------------------------
# stage aggregation
# ---------------------------------------------------------------------------


def full_loss(stages, lam=DEFAULT_LAMBDA, mu=DEFAULT_MU):
    """Sum per-stage breakdowns (initial + each refinement) with equal weight."""
    stages = list(stages)
    return LossBreakdown.from_parts(
        sum(s.photometric for s in stages),
        sum(s.consistency for s in stages),
        sum(s.smoothness for s in stages),
        sum(s.valid_pixel_count for s in stages),
        lam,
        mu,
    )
