"""Multi-camera rig containers shared by synth, refine and the file layer."""

from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np

from .basis import DepthBasisSet, DepthMap
from .errors import ShapeMismatch, ValidationError
from .geometry import CameraExtrinsics, CameraIntrinsics, relative_extrinsics


@dataclass(frozen=True)
class CameraModel:
    """One rig camera: intrinsics plus its camera-to-world pose."""

    name: str
    intrinsics: CameraIntrinsics
    pose: CameraExtrinsics = field(default_factory=CameraExtrinsics.identity)


@dataclass(eq=False)
class CameraView:
    camera: CameraModel
    image: np.ndarray
    bases: DepthBasisSet
    mask: np.ndarray
    gt: Optional[DepthMap] = None
    pinned: bool = False

    def __post_init__(self):
        shape = self.camera.intrinsics.shape
        self.image = np.asarray(self.image, dtype=np.float64)
        self.mask = np.asarray(self.mask, dtype=bool)
        name = self.camera.name
        if self.image.shape != shape:
            raise ShapeMismatch(f"camera {name!r}: image {self.image.shape} vs intrinsics {shape}")
        if self.mask.shape != shape:
            raise ShapeMismatch(f"camera {name!r}: mask {self.mask.shape} vs intrinsics {shape}")
        if self.bases.shape != shape:
            raise ShapeMismatch(f"camera {name!r}: bases {self.bases.shape} vs intrinsics {shape}")
        if self.gt is not None and self.gt.shape != shape:
            raise ShapeMismatch(f"camera {name!r}: gt {self.gt.shape} vs intrinsics {shape}")
        if not np.all(np.isfinite(self.image)):
            raise ValidationError(f"camera {name!r}: image has non-finite values")
        if self.image.min(initial=0.0) < 0 or self.image.max(initial=0.0) > 1:
            raise ValidationError(f"camera {name!r}: image intensities outside [0, 1]")

    @property
    def name(self):
        return self.camera.name

    @property
    def K(self):
        return self.camera.intrinsics


@dataclass(eq=False)
class RigScene:
    """Cameras with their data plus ordered (target, source) adjacency pairs."""

    views: list
    adjacency: list = field(default_factory=list)

    def __post_init__(self):
        self.views = list(self.views)
        names = [v.name for v in self.views]
        if len(set(names)) != len(names):
            raise ValidationError(f"duplicate camera names: {names}")
        pairs = []
        for i, j in self.adjacency:
            if not (0 <= i < len(self.views) and 0 <= j < len(self.views)):
                raise ValidationError(f"adjacency pair ({i}, {j}) references a missing camera")
            if i == j:
                raise ValidationError(f"camera {names[i]!r} cannot be adjacent to itself")
            if (i, j) not in pairs:
                pairs.append((int(i), int(j)))
        self.adjacency = pairs

    @classmethod
    def symmetric(cls, views, pairs):
        """Build with each undirected pair expanded to both directions."""
        ordered = []
        for i, j in pairs:
            ordered += [(i, j), (j, i)]
        return cls(views, ordered)

    def index(self, name):
        for k, v in enumerate(self.views):
            if v.name == name:
                return k
        raise KeyError(name)

    @cached_property
    def _extrinsics(self):
        return {}

    def extrinsics(self, i, j):
        """Rigid transform from camera i's frame to camera j's frame."""
        key = (i, j)
        if key not in self._extrinsics:
            self._extrinsics[key] = relative_extrinsics(
                self.views[i].camera.pose, self.views[j].camera.pose
            )
        return self._extrinsics[key]

    def sources(self, i):
        return [j for (t, j) in self.adjacency if t == i]

    def __len__(self):
        return len(self.views)
