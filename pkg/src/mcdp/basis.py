"""Depth bases and their weighted combination into depth maps."""

from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatch, ValidationError, ZeroBases

DEFAULT_DEPTH_FLOOR = 0.1


@dataclass(eq=False)
class DepthMap:
    """Dense depth grid in metres plus a validity mask.

    Invalid pixels are forced to 0 so the grid can be written straight to
    disk or compared without consulting the mask.
    """

    values: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        valid = np.array(self.valid, dtype=bool)
        if values.ndim != 2 or values.shape != valid.shape:
            raise ShapeMismatch(f"depth {values.shape} vs mask {valid.shape}")
        valid &= np.isfinite(values) & (values > 0)
        values[~valid] = 0.0
        self.values = values
        self.valid = valid

    @classmethod
    def from_values(cls, values):
        """Treat every finite positive entry as valid."""
        values = np.asarray(values, dtype=np.float64)
        return cls(values, np.isfinite(values) & (values > 0))

    @classmethod
    def empty(cls, height, width):
        return cls(np.zeros((height, width)), np.zeros((height, width), dtype=bool))

    @property
    def shape(self):
        return self.values.shape

    def scaled(self, factor):
        return DepthMap(self.values * factor, self.valid)

    def __eq__(self, other):
        if not isinstance(other, DepthMap):
            return NotImplemented
        return np.array_equal(self.values, other.values) and np.array_equal(
            self.valid, other.valid
        )


@dataclass(eq=False)
class DepthBasisSet:
    """``n`` depth-shaped grids for one view, stored as an (n, H, W) array."""

    bases: np.ndarray

    def __post_init__(self):
        bases = np.array(self.bases, dtype=np.float64)
        if bases.ndim == 2:
            bases = bases[None]
        if bases.ndim != 3:
            raise ShapeMismatch(f"bases must be (n, H, W), got {bases.shape}")
        if bases.shape[0] < 1:
            raise ZeroBases("a basis set needs at least one basis")
        if not np.all(np.isfinite(bases)):
            raise ValidationError("basis values must be finite")
        self.bases = bases

    @property
    def n(self):
        return self.bases.shape[0]

    @property
    def shape(self):
        return self.bases.shape[1:]

    def __eq__(self, other):
        if not isinstance(other, DepthBasisSet):
            return NotImplemented
        return np.array_equal(self.bases, other.bases)


def init_weights(n):
    """Uniform starting weights, ``1/n`` each."""
    if n < 1:
        raise ZeroBases("need at least one basis")
    return np.full(n, 1.0 / n)


def _check_weights(B, w):
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (B.n,):
        raise ShapeMismatch(f"{w.shape[0] if w.ndim == 1 else w.shape} weights for {B.n} bases")
    if not np.all(np.isfinite(w)):
        raise ValidationError("weights must be finite")
    return w


def raw_combination(B, w):
    """Unclamped weighted sum of the bases."""
    w = _check_weights(B, w)
    return np.tensordot(w, B.bases, axes=1)


def combine(B, w, floor=DEFAULT_DEPTH_FLOOR):
    """Weighted sum of the bases, clamped below at ``floor``. All pixels valid."""
    raw = raw_combination(B, w)
    values = np.maximum(raw, floor)
    return DepthMap(values, np.ones(values.shape, dtype=bool))


def combine_gradient(B, upstream, w=None, floor=DEFAULT_DEPTH_FLOOR):
    """Gradient of a scalar loss w.r.t. the weights, given dLoss/dDepth.

    Pixels where the combination sits at or below ``floor`` pass no gradient.
    Without ``w`` every pixel is treated as above the floor.
    """
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != B.shape:
        raise ShapeMismatch(f"upstream {upstream.shape} vs bases {B.shape}")
    if w is not None:
        upstream = np.where(raw_combination(B, w) > floor, upstream, 0.0)
    return np.tensordot(B.bases, upstream, axes=([1, 2], [0, 1]))
