"""Synthetic multi-camera scenes with exact ground-truth depth.

Scenes are built from textured planes, spheres and vertical cylinders and
rendered by per-pixel ray casting. Rendering is fully vectorised over rays,
so the output depends only on the spec, never on evaluation order.
"""

from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .basis import DepthBasisSet, DepthMap
from .errors import DegenerateSpec, ValidationError
from .geometry import CameraExtrinsics, CameraIntrinsics, axis_angle, pixel_grid, warp_points
from .scene import CameraModel, CameraView, RigScene

_EPS = 1e-9
_LATTICE = 64


# ---------------------------------------------------------------------------
# procedural texture
# ---------------------------------------------------------------------------


def _smoothstep(t):
    return t * t * (3.0 - 2.0 * t)


def value_noise(s, t, seed, cell=0.5, octaves=3):
    """Multi-octave value noise in [0, 1] over surface coordinates (metres)."""
    rng = np.random.default_rng(seed)
    total = np.zeros(np.shape(s))
    norm = 0.0
    amp = 1.0
    for _ in range(octaves):
        lattice = rng.random((_LATTICE, _LATTICE))
        x = np.asarray(s) / cell
        y = np.asarray(t) / cell
        x0 = np.floor(x)
        y0 = np.floor(y)
        fx = _smoothstep(x - x0)
        fy = _smoothstep(y - y0)
        i0 = x0.astype(np.int64) % _LATTICE
        j0 = y0.astype(np.int64) % _LATTICE
        i1 = (i0 + 1) % _LATTICE
        j1 = (j0 + 1) % _LATTICE
        top = lattice[j0, i0] + fx * (lattice[j0, i1] - lattice[j0, i0])
        bot = lattice[j1, i0] + fx * (lattice[j1, i1] - lattice[j1, i0])
        total += amp * (top + fy * (bot - top))
        norm += amp
        amp *= 0.5
        cell *= 0.5
    return total / norm


# ---------------------------------------------------------------------------
# primitives
# ---------------------------------------------------------------------------


def _in_plane_axes(normal):
    helper = np.array([1.0, 0.0, 0.0]) if abs(normal[0]) < 0.9 else np.array([0.0, 0.0, 1.0])
    e1 = np.cross(normal, helper)
    e1 /= np.linalg.norm(e1)
    return e1, np.cross(normal, e1)


@dataclass(frozen=True)
class Plane:
    point: tuple
    normal: tuple
    half_size: Optional[tuple] = None  # (half width, half height) along the in-plane axes
    texture_seed: Optional[int] = None
    texture_scale: float = 0.5

    def intersect(self, origin, dirs):
        p0 = np.asarray(self.point, dtype=np.float64)
        n = np.asarray(self.normal, dtype=np.float64)
        n = n / np.linalg.norm(n)
        denom = dirs @ n
        with np.errstate(divide="ignore", invalid="ignore"):
            t = ((p0 - origin) @ n) / denom
        t = np.where(np.abs(denom) > _EPS, t, np.inf)
        t = np.where(t > _EPS, t, np.inf)
        if self.half_size is not None:
            hit = origin + t[..., None] * dirs
            e1, e2 = _in_plane_axes(n)
            rel = np.where(np.isfinite(hit), hit - p0, 0.0)
            inside = (np.abs(rel @ e1) <= self.half_size[0]) & (np.abs(rel @ e2) <= self.half_size[1])
            t = np.where(inside, t, np.inf)
        return t

    def surface(self, hit):
        n = np.asarray(self.normal, dtype=np.float64)
        n = n / np.linalg.norm(n)
        e1, e2 = _in_plane_axes(n)
        rel = hit - np.asarray(self.point, dtype=np.float64)
        return np.broadcast_to(n, hit.shape), rel @ e1, rel @ e2


@dataclass(frozen=True)
class Sphere:
    center: tuple
    radius: float
    texture_seed: Optional[int] = None
    texture_scale: float = 0.5

    def intersect(self, origin, dirs):
        oc = origin - np.asarray(self.center, dtype=np.float64)
        a = np.sum(dirs * dirs, axis=-1)
        b = 2.0 * (dirs @ oc)
        c = oc @ oc - self.radius**2
        return _nearest_root(a, b, c)

    def surface(self, hit):
        rel = hit - np.asarray(self.center, dtype=np.float64)
        n = rel / self.radius
        lon = np.arctan2(rel[..., 0], rel[..., 2])
        lat = np.arcsin(np.clip(n[..., 1], -1.0, 1.0))
        return n, self.radius * lon, self.radius * lat


@dataclass(frozen=True)
class Cylinder:
    """Vertical (world y axis) cylinder, optionally bounded in y."""

    radius: float
    center: tuple = (0.0, 0.0)  # (x, z) of the axis
    y_range: Optional[tuple] = None
    texture_seed: Optional[int] = None
    texture_scale: float = 0.5

    def intersect(self, origin, dirs):
        ox = origin[0] - self.center[0]
        oz = origin[2] - self.center[1]
        dx = dirs[..., 0]
        dz = dirs[..., 2]
        a = dx * dx + dz * dz
        b = 2.0 * (dx * ox + dz * oz)
        c = ox * ox + oz * oz - self.radius**2
        if self.y_range is None:
            return _nearest_root(a, b, c)
        lo, hi = self.y_range
        best = np.full(a.shape, np.inf)
        for t in _roots(a, b, c):
            y = origin[1] + t * dirs[..., 1]
            ok = (t > _EPS) & (y >= lo) & (y <= hi)
            best = np.where(ok & (t < best), t, best)
        return best

    def surface(self, hit):
        rx = hit[..., 0] - self.center[0]
        rz = hit[..., 2] - self.center[1]
        n = np.stack([rx, np.zeros_like(rx), rz], axis=-1) / self.radius
        return n, self.radius * np.arctan2(rz, rx), hit[..., 1]


def _roots(a, b, c):
    disc = b * b - 4 * a * c
    ok = (disc >= 0) & (a > _EPS)
    sq = np.sqrt(np.where(ok, disc, 0.0))
    a_safe = np.where(ok, a, 1.0)
    t0 = np.where(ok, (-b - sq) / (2 * a_safe), np.inf)
    t1 = np.where(ok, (-b + sq) / (2 * a_safe), np.inf)
    return t0, t1


def _nearest_root(a, b, c):
    t0, t1 = _roots(a, b, c)
    return np.where(t0 > _EPS, t0, np.where(t1 > _EPS, t1, np.inf))


PRIMITIVES = {"plane": Plane, "sphere": Sphere, "cylinder": Cylinder}


# ---------------------------------------------------------------------------
# scene spec
# ---------------------------------------------------------------------------


def yaw_rotation(yaw_deg):
    """Camera-to-world rotation for a camera yawed about the (down) y axis."""
    return axis_angle([0.0, 1.0, 0.0], np.radians(yaw_deg))


def ring_cameras(count, yaw_spacing_deg, width, height, hfov_deg=70.0, radius=0.5,
                 yaw_offset_deg=0.0, names=None):
    """Cameras on a horizontal ring, each looking outwards."""
    K = CameraIntrinsics.from_fov(width, height, hfov_deg)
    cams = []
    for k in range(count):
        yaw = yaw_offset_deg + k * yaw_spacing_deg
        R = yaw_rotation(yaw)
        centre = radius * R[:, 2]
        name = names[k] if names else f"cam{k}"
        cams.append(CameraModel(name, K, CameraExtrinsics(R, centre)))
    return cams


@dataclass(frozen=True)
class BasisSpec:
    kind: str = "scale-family"
    n: int = 4
    mis_scale: tuple = ()  # per camera; missing entries default to 1
    pinned: tuple = ()  # camera indices
    amplitude: float = 0.1
    adjacency: Optional[tuple] = None  # undirected index pairs; None = ring neighbours


@dataclass(frozen=True)
class SceneSpec:
    primitives: tuple
    cameras: tuple
    seed: int = 0
    light: tuple = (0.4, -0.8, 0.45)
    noise_std: float = 0.0
    ego_mask_fraction: float = 0.0
    basis: BasisSpec = field(default_factory=BasisSpec)

    def __post_init__(self):
        if not self.primitives:
            raise ValidationError("a scene needs at least one primitive")
        if not self.cameras:
            raise ValidationError("a scene needs at least one camera")
        if not 0 <= self.ego_mask_fraction < 1:
            raise ValidationError("ego_mask_fraction must be in [0, 1)")

    @classmethod
    def from_dict(cls, data, seed=None):
        """Build from the parsed TOML layout documented in the README."""
        data = dict(data)
        seed = int(data.get("seed", 0) if seed is None else seed)
        width = int(data.get("width", 128))
        height = int(data.get("height", 96))
        rig = dict(data.get("rig", {}))
        cams = ring_cameras(
            int(rig.get("count", 2)),
            float(rig.get("yaw_spacing_deg", 60.0)),
            width,
            height,
            float(rig.get("hfov_deg", 70.0)),
            float(rig.get("radius", 0.5)),
            float(rig.get("yaw_offset_deg", 0.0)),
            rig.get("names"),
        )
        prims = []
        for k, p in enumerate(data.get("primitives", [])):
            p = dict(p)
            kind = p.pop("type")
            if kind not in PRIMITIVES:
                raise ValidationError(f"unknown primitive type {kind!r}")
            for key in ("point", "normal", "center", "half_size", "y_range"):
                if key in p:
                    p[key] = tuple(p[key])
            p.setdefault("texture_seed", seed * 1000 + k)
            prims.append(PRIMITIVES[kind](**p))
        b = dict(data.get("basis", {}))
        basis = BasisSpec(
            kind=b.get("kind", "scale-family"),
            n=int(b.get("n", 4)),
            mis_scale=tuple(float(x) for x in b.get("mis_scale", ())),
            pinned=tuple(int(x) for x in b.get("pinned", ())),
            amplitude=float(b.get("amplitude", 0.1)),
            adjacency=tuple(tuple(p) for p in b["adjacency"]) if "adjacency" in b else None,
        )
        return cls(
            primitives=tuple(prims),
            cameras=tuple(cams),
            seed=seed,
            light=tuple(data.get("light", (0.4, -0.8, 0.45))),
            noise_std=float(data.get("noise_std", 0.0)),
            ego_mask_fraction=float(data.get("ego_mask_fraction", 0.0)),
            basis=basis,
        )


def canonical_spec(seed=0, width=128, height=96, mis_scale=1.5, n=4, yaw_spacing_deg=60.0,
                   hfov_deg=73.0):
    """Two cameras 60 degrees apart inside a textured cylinder wall over a ground plane.

    Camera 0 is pinned at ground truth; camera 1's bases are mis-scaled.
    """
    return SceneSpec(
        primitives=(
            Cylinder(radius=6.0, texture_seed=seed * 1000 + 1, texture_scale=0.8),
            Plane(point=(0.0, 1.5, 0.0), normal=(0.0, -1.0, 0.0),
                  texture_seed=seed * 1000 + 2, texture_scale=0.8),
        ),
        cameras=tuple(ring_cameras(2, yaw_spacing_deg, width, height, hfov_deg=hfov_deg, radius=0.5)),
        seed=seed,
        basis=BasisSpec(kind="scale-family", n=n, mis_scale=(1.0, mis_scale), pinned=(0,)),
    )


# ---------------------------------------------------------------------------
# rendering
# ---------------------------------------------------------------------------


class RenderedView(NamedTuple):
    image: np.ndarray
    depth: DepthMap
    mask: np.ndarray


def _camera_rays(cam):
    K = cam.intrinsics
    grid = pixel_grid(K.height, K.width)
    rays = np.stack(
        [(grid[..., 0] - K.cx) / K.fx, (grid[..., 1] - K.cy) / K.fy, np.ones(K.shape)], axis=-1
    )
    # unit z in camera frame, so ray parameter == camera-frame depth
    return rays @ cam.pose.rotation.T, cam.pose.translation


def render_camera(spec, cam, index=0):
    dirs, origin = _camera_rays(cam)
    shape = dirs.shape[:2]
    best_t = np.full(shape, np.inf)
    best_k = np.full(shape, -1)
    for k, prim in enumerate(spec.primitives):
        t = prim.intersect(origin, dirs)
        closer = t < best_t
        best_t = np.where(closer, t, best_t)
        best_k = np.where(closer, k, best_k)

    hit_any = np.isfinite(best_t)
    if not hit_any.any():
        raise DegenerateSpec(f"camera {cam.name!r} sees no primitive")

    light = np.asarray(spec.light, dtype=np.float64)
    light = -light / np.linalg.norm(light)  # direction towards the light
    image = np.zeros(shape)
    t_safe = np.where(hit_any, best_t, 0.0)
    hit = origin + t_safe[..., None] * dirs
    for k, prim in enumerate(spec.primitives):
        sel = best_k == k
        if not sel.any():
            continue
        n, s, t = prim.surface(hit[sel])
        n = np.where((np.sum(n * dirs[sel], axis=-1) > 0)[..., None], -n, n)
        seed = prim.texture_seed if prim.texture_seed is not None else spec.seed * 1000 + k
        albedo = 0.1 + 0.8 * value_noise(s, t, seed, cell=prim.texture_scale)
        shade = 0.45 + 0.55 * np.clip(n @ light, 0.0, None)
        image[sel] = albedo * shade

    if spec.noise_std > 0:
        rng = np.random.default_rng([spec.seed, index])
        image = image + rng.normal(0.0, spec.noise_std, shape)
    image = np.clip(image, 0.0, 1.0)

    mask = np.ones(shape, dtype=bool)
    rows = int(round(spec.ego_mask_fraction * shape[0]))
    if rows:
        mask[-rows:] = False
    return RenderedView(image, DepthMap(np.where(hit_any, best_t, 0.0), hit_any), mask)


def render(spec):
    """Ray-cast every camera. Returns one :class:`RenderedView` per camera."""
    return [render_camera(spec, cam, k) for k, cam in enumerate(spec.cameras)]


def overlap_fraction(spec, i, j, renders=None):
    """Share of camera i's valid pixels whose GT warp lands inside camera j."""
    renders = renders or render(spec)
    ci, cj = spec.cameras[i], spec.cameras[j]
    gt = renders[i].depth
    if not gt.valid.any():
        return 0.0
    E = ci.pose.compose(cj.pose.inverse())
    grid = pixel_grid(*gt.shape)
    uv, z = warp_points(grid[gt.valid], gt.values[gt.valid], ci.intrinsics, cj.intrinsics, E)
    Kj = cj.intrinsics
    ui = np.floor(uv[:, 0] + 0.5)
    vi = np.floor(uv[:, 1] + 0.5)
    inside = (z > 0) & (ui >= 0) & (ui < Kj.width) & (vi >= 0) & (vi < Kj.height)
    return float(inside.sum() / gt.valid.sum())


# ---------------------------------------------------------------------------
# basis fixtures
# ---------------------------------------------------------------------------


def scale_family(n):
    """Log-spaced scales over [0.5, 2]; a single basis gets scale 1."""
    if n == 1:
        return np.array([1.0])
    return np.geomspace(0.5, 2.0, n)


def _smooth_field(shape, rng, cells=4):
    """Bicubic-ish smooth random field in [-1, 1]."""
    h, w = shape
    coarse = rng.uniform(-1.0, 1.0, (cells + 1, cells + 1))
    y = np.linspace(0, cells, h)
    x = np.linspace(0, cells, w)
    y0 = np.minimum(np.floor(y).astype(int), cells - 1)
    x0 = np.minimum(np.floor(x).astype(int), cells - 1)
    fy = _smoothstep(y - y0)[:, None]
    fx = _smoothstep(x - x0)[None, :]
    c00 = coarse[y0][:, x0]
    c01 = coarse[y0][:, x0 + 1]
    c10 = coarse[y0 + 1][:, x0]
    c11 = coarse[y0 + 1][:, x0 + 1]
    top = c00 + fx * (c01 - c00)
    bot = c10 + fx * (c11 - c10)
    return top + fy * (bot - top)


def make_basis_fixture(gt, kind="scale-family", n=4, seed=0, amplitude=0.1):
    """Depth bases derived from a ground-truth map.

    ``scale-family`` gives ``s_k * gt``; ``noise-family`` gives
    ``gt * (1 + amplitude * field_k)`` with smooth fields in [-1, 1];
    ``mixed`` splits ``n`` between the two. Invalid GT pixels are filled with
    the median valid depth so every basis stays finite and positive.
    """
    if n < 1:
        raise ValidationError("n must be at least 1")
    base = gt.values.copy()
    if gt.valid.any():
        base[~gt.valid] = np.median(gt.values[gt.valid])
    else:
        base[:] = 1.0
    rng = np.random.default_rng(seed)
    if kind == "scale-family":
        return DepthBasisSet(scale_family(n)[:, None, None] * base)
    if kind == "noise-family":
        return DepthBasisSet(
            np.stack([base * (1.0 + amplitude * _smooth_field(base.shape, rng)) for _ in range(n)])
        )
    if kind == "mixed":
        n_scale = (n + 1) // 2
        scale = scale_family(n_scale)[:, None, None] * base
        if n - n_scale == 0:
            return DepthBasisSet(scale)
        noise = make_basis_fixture(gt, "noise-family", n - n_scale, seed, amplitude).bases
        return DepthBasisSet(np.concatenate([scale, noise]))
    raise ValidationError(f"unknown basis family {kind!r}")


def build_scene(spec, renders=None):
    """Turn a rendered spec into a :class:`RigScene` ready for refinement.

    Each camera's bases are rescaled so that uniform weights reproduce
    ``mis_scale * gt``. Pixels that miss every primitive are excluded via
    the camera mask.
    """
    renders = renders or render(spec)
    b = spec.basis
    views = []
    for k, (cam, r) in enumerate(zip(spec.cameras, renders)):
        B = make_basis_fixture(r.depth, b.kind, b.n, seed=spec.seed * 100 + k, amplitude=b.amplitude)
        s = b.mis_scale[k] if k < len(b.mis_scale) else 1.0
        if b.kind == "scale-family":
            factor = s / scale_family(b.n).mean()
        else:
            uniform = B.bases.mean(axis=0)
            factor = s * float(np.median(r.depth.values[r.depth.valid] / uniform[r.depth.valid]))
        B = DepthBasisSet(B.bases * factor)
        views.append(CameraView(cam, r.image, B, r.mask & r.depth.valid, r.depth, k in b.pinned))
    if b.adjacency is not None:
        pairs = b.adjacency
    elif len(views) == 2:
        pairs = [(0, 1)]
    elif len(views) > 2:
        pairs = [(k, (k + 1) % len(views)) for k in range(len(views))]
    else:
        pairs = []
    return RigScene.symmetric(views, pairs)


def canonical_scene(seed=0, **kwargs):
    spec = canonical_spec(seed, **kwargs)
    return build_scene(spec), spec
