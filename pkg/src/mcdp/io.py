"""On-disk formats: depth grids, PGM images/masks and the rig config.

Depth grid (``.mcdp``), little-endian::

    b"MCDP" | version u16 | width u32 | height u32 | H*W float32, row-major

Non-positive or non-finite samples mean "invalid".

The rig config is TOML. Relative file paths are resolved against the
config's directory. See README for the full layout.
"""

import re
import struct
from pathlib import Path

import numpy as np
import tomli_w

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib

from .basis import DepthBasisSet, DepthMap
from .errors import MissingFile, ParseError, ShapeMismatch, ValidationError
from .geometry import CameraExtrinsics, CameraIntrinsics
from .scene import CameraModel, CameraView, RigScene

DEPTH_MAGIC = b"MCDP"
DEPTH_VERSION = 1
_HEADER = struct.Struct("<4sHII")
RIG_VERSION = 1
CONVENTIONS = ("camera-to-world", "world-to-camera")


# ---------------------------------------------------------------------------
# depth grids
# ---------------------------------------------------------------------------


def encode_depth(depth):
    if isinstance(depth, DepthMap):
        values = np.where(depth.valid, depth.values, 0.0)
    else:
        values = np.asarray(depth, dtype=np.float64)
    if values.ndim != 2:
        raise ShapeMismatch(f"depth grid must be 2-D, got {values.shape}")
    h, w = values.shape
    payload = np.ascontiguousarray(values, dtype="<f4").tobytes()
    return _HEADER.pack(DEPTH_MAGIC, DEPTH_VERSION, w, h) + payload


def decode_grid(data):
    """Raw float grid, no validity interpretation (used for basis files)."""
    if len(data) < _HEADER.size:
        raise ParseError(f"depth grid truncated: {len(data)} bytes, header needs {_HEADER.size}")
    magic, version, w, h = _HEADER.unpack_from(data)
    if magic != DEPTH_MAGIC:
        raise ParseError(f"bad depth grid magic {magic!r}")
    if version != DEPTH_VERSION:
        raise ParseError(f"unsupported depth grid version {version}")
    expected = _HEADER.size + 4 * w * h
    if len(data) != expected:
        raise ParseError(f"depth grid payload is {len(data)} bytes, expected {expected}")
    return np.frombuffer(data, dtype="<f4", offset=_HEADER.size).reshape(h, w).astype(np.float64)


def decode_depth(data):
    return DepthMap.from_values(decode_grid(data))


def write_depth(path, depth):
    Path(path).write_bytes(encode_depth(depth))


def read_grid(path):
    path = Path(path)
    if not path.is_file():
        raise MissingFile(path)
    return decode_grid(path.read_bytes())


def read_depth(path):
    return DepthMap.from_values(read_grid(path))


# ---------------------------------------------------------------------------
# netpbm
# ---------------------------------------------------------------------------

_TOKEN = re.compile(rb"(#[^\n]*\n)|(\S+)")


def _pnm_header(data):
    tokens = []
    pos = 0
    while len(tokens) < 4:
        m = _TOKEN.search(data, pos)
        if m is None:
            raise ParseError("truncated netpbm header")
        pos = m.end()
        if m.group(2):
            tokens.append(m.group(2))
    # exactly one whitespace byte separates header from raster
    return tokens, pos + 1


def read_pnm(path):
    """Read binary PGM (P5) or PPM (P6). Returns (uint array, maxval)."""
    path = Path(path)
    if not path.is_file():
        raise MissingFile(path)
    data = path.read_bytes()
    tokens, offset = _pnm_header(data)
    kind = tokens[0]
    if kind not in (b"P5", b"P6"):
        raise ParseError(f"{path}: unsupported netpbm type {kind!r}")
    try:
        w, h, maxval = (int(t) for t in tokens[1:4])
    except ValueError:
        raise ParseError(f"{path}: malformed netpbm header") from None
    if not (0 < maxval < 65536):
        raise ParseError(f"{path}: maxval {maxval} out of range")
    channels = 3 if kind == b"P6" else 1
    dtype = ">u2" if maxval > 255 else "u1"
    count = w * h * channels
    raster = np.frombuffer(data, dtype=dtype, count=count, offset=offset) \
        if len(data) - offset >= count * np.dtype(dtype).itemsize else None
    if raster is None:
        raise ParseError(f"{path}: truncated raster")
    shape = (h, w, 3) if channels == 3 else (h, w)
    return raster.reshape(shape).astype(np.int64), maxval


def write_pgm(path, array, maxval):
    array = np.asarray(array)
    h, w = array.shape
    dtype = ">u2" if maxval > 255 else "u1"
    header = f"P5\n{w} {h}\n{maxval}\n".encode("ascii")
    Path(path).write_bytes(header + np.ascontiguousarray(array, dtype=dtype).tobytes())


def read_image(path):
    """Grayscale float image in [0, 1]; colour input is averaged over channels."""
    raster, maxval = read_pnm(path)
    img = raster.astype(np.float64) / maxval
    if img.ndim == 3:
        img = img.mean(axis=2)
    return img


def write_image(path, image, maxval=65535):
    image = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    write_pgm(path, np.round(image * maxval), maxval)


def read_mask(path):
    raster, maxval = read_pnm(path)
    if raster.ndim != 2 or maxval != 255:
        raise ValidationError(f"{path}: mask must be a P5 PGM with maxval 255")
    bad = (raster != 0) & (raster != 255)
    if bad.any():
        raise ValidationError(f"{path}: mask values must be 0 or 255")
    return raster == 255


def write_mask(path, mask):
    write_pgm(path, np.where(np.asarray(mask, dtype=bool), 255, 0), 255)


# ---------------------------------------------------------------------------
# rig config
# ---------------------------------------------------------------------------


def _table_lines(text, header="[[camera]]"):
    return [k + 1 for k, line in enumerate(text.splitlines()) if line.strip() == header]


def _require(table, key, line, kind=None):
    if key not in table:
        raise ParseError("missing key", line=line, field=key)
    value = table[key]
    if kind is not None and not isinstance(value, kind):
        raise ParseError(f"expected {getattr(kind, '__name__', kind)}", line=line, field=key)
    return value


def _number(table, key, line):
    value = _require(table, key, line)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ParseError("expected a number", line=line, field=key)
    return value


def _floats(table, key, n, line):
    value = _require(table, key, line, list)
    if len(value) != n or not all(isinstance(x, (int, float)) and not isinstance(x, bool)
                                  for x in value):
        raise ParseError(f"expected {n} numbers", line=line, field=key)
    return np.array(value, dtype=np.float64)


def _resolve(base, rel):
    path = Path(rel)
    path = path if path.is_absolute() else base / path
    if not path.is_file():
        raise MissingFile(path)
    return path


def _parse_camera(table, line, base, default_convention):
    name = _require(table, "name", line, str)
    try:
        K = CameraIntrinsics(
            float(_number(table, "fx", line)),
            float(_number(table, "fy", line)),
            float(_number(table, "cx", line)),
            float(_number(table, "cy", line)),
            int(_number(table, "width", line)),
            int(_number(table, "height", line)),
        )
    except ValidationError as exc:
        raise ValidationError(f"camera {name!r}: {exc}") from None
    R = _floats(table, "rotation", 9, line).reshape(3, 3)
    t = _floats(table, "translation", 3, line)
    convention = table.get("pose_convention", default_convention)
    if convention not in CONVENTIONS:
        raise ParseError(f"pose_convention must be one of {CONVENTIONS}", line=line,
                         field="pose_convention")
    try:
        pose = CameraExtrinsics(R, t)
    except ValidationError as exc:
        raise ValidationError(f"camera {name!r}: {exc}") from None
    if convention == "world-to-camera":
        pose = pose.inverse()

    image = read_image(_resolve(base, _require(table, "image", line, str)))
    if "mask" in table:
        mask = read_mask(_resolve(base, _require(table, "mask", line, str)))
    else:
        mask = np.ones(K.shape, dtype=bool)
    basis_paths = _require(table, "bases", line, list)
    if not basis_paths:
        raise ValidationError(f"camera {name!r}: no basis files")
    bases = [read_grid(_resolve(base, p)) for p in basis_paths]
    gt = read_depth(_resolve(base, table["gt"])) if "gt" in table else None
    pinned = bool(table.get("pinned", False))
    try:
        return CameraView(CameraModel(name, K, pose), image, DepthBasisSet(np.stack(bases)),
                          mask, gt, pinned)
    except (ShapeMismatch, ValidationError) as exc:
        raise ValidationError(str(exc)) from None


def parse_rig(text, base_dir):
    """Parse rig TOML text; file references resolve against ``base_dir``."""
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        line = getattr(exc, "lineno", None)
        if line is None:
            m = re.search(r"line (\d+)", str(exc))
            line = int(m.group(1)) if m else None
        raise ParseError(f"invalid TOML: {exc}", line=line) from None

    version = data.get("version")
    if version != RIG_VERSION:
        raise ParseError(f"unsupported rig version {version!r}", field="version")
    convention = data.get("pose_convention", "camera-to-world")
    cams = data.get("camera")
    if not isinstance(cams, list) or not cams:
        raise ParseError("no [[camera]] tables", field="camera")
    lines = _table_lines(text)
    base = Path(base_dir)
    views = []
    for k, table in enumerate(cams):
        line = lines[k] if k < len(lines) else None
        views.append(_parse_camera(table, line, base, convention))

    names = [v.name for v in views]
    if len(set(names)) != len(names):
        raise ValidationError(f"camera names are not unique: {names}")
    pairs = []
    for pair in data.get("adjacency", []):
        if not (isinstance(pair, list) and len(pair) == 2):
            raise ParseError("adjacency entries must be [name, name]", field="adjacency")
        try:
            pairs.append((names.index(pair[0]), names.index(pair[1])))
        except ValueError:
            raise ValidationError(f"adjacency pair {pair} names an unknown camera") from None
    return RigScene.symmetric(views, pairs)


def load_rig(path):
    path = Path(path)
    if not path.is_file():
        raise MissingFile(path)
    return parse_rig(path.read_text(), path.parent)


def save_rig(scene, out_dir, filename="rig.toml"):
    """Write the scene and every referenced grid under ``out_dir``.

    Undirected adjacency is written once per camera pair. Ground truth, when
    present, goes to ``gt/<name>.mcdp``.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cams = []
    for view in scene.views:
        name = view.name
        cam_dir = out / name
        cam_dir.mkdir(exist_ok=True)
        K = view.K
        pose = view.camera.pose
        entry = {
            "name": name,
            "fx": float(K.fx), "fy": float(K.fy), "cx": float(K.cx), "cy": float(K.cy),
            "width": int(K.width), "height": int(K.height),
            "rotation": [float(x) for x in pose.rotation.ravel()],
            "translation": [float(x) for x in pose.translation],
            "pose_convention": "camera-to-world",
            "image": f"{name}/image.pgm",
            "mask": f"{name}/mask.pgm",
            "bases": [],
            "pinned": bool(view.pinned),
        }
        write_image(cam_dir / "image.pgm", view.image)
        write_mask(cam_dir / "mask.pgm", view.mask)
        for k, basis in enumerate(view.bases.bases):
            rel = f"{name}/basis_{k:02d}.mcdp"
            write_depth(out / rel, basis)
            entry["bases"].append(rel)
        if view.gt is not None:
            (out / "gt").mkdir(exist_ok=True)
            write_depth(out / "gt" / f"{name}.mcdp", view.gt)
            entry["gt"] = f"gt/{name}.mcdp"
        cams.append(entry)

    seen = set()
    adjacency = []
    for i, j in scene.adjacency:
        key = frozenset((i, j))
        if key in seen:
            continue
        seen.add(key)
        adjacency.append([scene.views[i].name, scene.views[j].name])

    doc = {"version": RIG_VERSION, "adjacency": adjacency, "camera": cams}
    path = out / filename
    path.write_text(tomli_w.dumps(doc))
    return path
