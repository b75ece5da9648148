"""Depth evaluation: median scaling, standard error metrics and Dep Con."""

from dataclasses import asdict, dataclass

import numpy as np

from .errors import EmptyOverlap, ShapeMismatch, ZeroMedian

MIN_DEPTH = 0.1
MAX_DEPTH_PRESETS = {"ddad": 200.0, "nuscenes": 60.0}
MAX_DEPTH = MAX_DEPTH_PRESETS["ddad"]
DELTA_THRESHOLD = 1.25


@dataclass(frozen=True)
class DepthMetrics:
    abs_rel: float
    sq_rel: float
    rmse: float
    delta_125: float
    pixel_count: int

    def as_dict(self):
        return asdict(self)


def _joint(pred, gt, mask=None):
    if pred.shape != gt.shape:
        raise ShapeMismatch(f"pred {pred.shape} vs gt {gt.shape}")
    keep = pred.valid & gt.valid
    if mask is not None:
        keep &= np.asarray(mask, dtype=bool)
    return keep


def median_scale(pred, gt, mask=None):
    """Rescale ``pred`` so its median matches ``gt``'s over jointly valid pixels.

    Returns:
        (scaled prediction, scale factor)
    """
    keep = _joint(pred, gt, mask)
    if not keep.any():
        raise EmptyOverlap("no pixel is valid in both prediction and ground truth")
    med_pred = np.median(pred.values[keep])
    if med_pred == 0:
        raise ZeroMedian("median of the prediction is zero")
    scale = float(np.median(gt.values[keep]) / med_pred)
    return pred.scaled(scale), scale


def shared_median_scale(preds, gts, masks=None):
    """One scale factor pooled over all cameras."""
    masks = masks or [None] * len(preds)
    p, g = [], []
    for pred, gt, mask in zip(preds, gts, masks):
        keep = _joint(pred, gt, mask)
        p.append(pred.values[keep])
        g.append(gt.values[keep])
    p = np.concatenate(p) if p else np.zeros(0)
    g = np.concatenate(g) if g else np.zeros(0)
    if p.size == 0:
        raise EmptyOverlap("no pixel is valid in both prediction and ground truth")
    med_pred = np.median(p)
    if med_pred == 0:
        raise ZeroMedian("median of the prediction is zero")
    scale = float(np.median(g) / med_pred)
    return [pred.scaled(scale) for pred in preds], scale


def depth_metrics(pred, gt, min_depth=MIN_DEPTH, max_depth=MAX_DEPTH, mask=None):
    keep = _joint(pred, gt, mask)
    keep &= (gt.values >= min_depth) & (gt.values <= max_depth)
    if not keep.any():
        raise EmptyOverlap("no pixel qualifies for evaluation")
    p = pred.values[keep]
    g = gt.values[keep]
    err = p - g
    ratio = np.maximum(p / g, g / p)
    return DepthMetrics(
        abs_rel=float(np.mean(np.abs(err) / g)),
        sq_rel=float(np.mean(err**2 / g)),
        rmse=float(np.sqrt(np.mean(err**2))),
        delta_125=float(np.mean(ratio < DELTA_THRESHOLD)),
        pixel_count=int(keep.sum()),
    )


def dep_con(D_i, D_hat, gt, mask=None):
    """Mean of |D_i - D_hat| / gt over pixels valid in all three maps."""
    if not (D_i.shape == D_hat.shape == gt.shape):
        raise ShapeMismatch(f"{D_i.shape}, {D_hat.shape}, {gt.shape}")
    keep = D_i.valid & D_hat.valid & gt.valid & (gt.values > 0)
    if mask is not None:
        keep &= np.asarray(mask, dtype=bool)
    if not keep.any():
        raise EmptyOverlap("no pixel is valid in all three maps")
    return float(np.mean(np.abs(D_i.values[keep] - D_hat.values[keep]) / gt.values[keep]))


def mean_metrics(items):
    """Unweighted mean over cameras; pixel counts are summed."""
    items = list(items)
    return DepthMetrics(
        abs_rel=float(np.mean([m.abs_rel for m in items])),
        sq_rel=float(np.mean([m.sq_rel for m in items])),
        rmse=float(np.mean([m.rmse for m in items])),
        delta_125=float(np.mean([m.delta_125 for m in items])),
        pixel_count=sum(m.pixel_count for m in items),
    )
