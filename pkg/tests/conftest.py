import numpy as np
import pytest

from mcdp.basis import DepthBasisSet, DepthMap
from mcdp.geometry import CameraExtrinsics, CameraIntrinsics, axis_angle
from mcdp.scene import CameraModel, CameraView, RigScene


def smooth_image(rng, h, w, lo=0.1, hi=0.9):
    """Sum of a few random sinusoids rescaled to [lo, hi]."""
    v, u = np.mgrid[0:h, 0:w].astype(float)
    img = np.zeros((h, w))
    for _ in range(4):
        fu, fv = rng.uniform(0.2, 0.9, 2)
        ph = rng.uniform(0, 2 * np.pi)
        img += np.sin(fu * u + fv * v + ph)
    img = (img - img.min()) / (img.max() - img.min() + 1e-12)
    return lo + (hi - lo) * img


def random_pose(rng, angle=0.05, shift=0.2):
    axis = rng.normal(size=3)
    return CameraExtrinsics(axis_angle(axis, angle), rng.normal(scale=shift, size=3))


def random_scene(seed, size=8, n=None, cameras=2, mask_frac=0.9):
    """Small random rig with overlapping views, for gradient and oracle tests."""
    rng = np.random.default_rng(seed)
    K = CameraIntrinsics(8.0, 8.0, (size - 1) / 2, (size - 1) / 2, size, size)
    n = n or int(rng.integers(2, 9))
    views = []
    for k in range(cameras):
        pose = CameraExtrinsics.identity() if k == 0 else random_pose(rng)
        bases = 5.0 * (1.0 + 0.2 * rng.uniform(-1, 1, (n, size, size)))
        mask = rng.random((size, size)) < mask_frac
        views.append(
            CameraView(CameraModel(f"c{k}", K, pose), smooth_image(rng, size, size),
                       DepthBasisSet(bases), mask)
        )
    pairs = [(i, j) for i in range(cameras) for j in range(i + 1, cameras)]
    return RigScene.symmetric(views, pairs)


def random_depth(rng, shape, lo=1.0, hi=10.0, valid_frac=0.8):
    values = rng.uniform(lo, hi, shape)
    return DepthMap(values, rng.random(shape) < valid_frac)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def K_small():
    return CameraIntrinsics(100.0, 100.0, 320.0, 240.0, 640, 480)
