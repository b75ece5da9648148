"""Hot inner loops, each in a numba and a pure-numpy flavour.

The public names (``splat``, ``box_sum3``, ``bilinear``) resolve to the numba
versions unless numba is missing or ``MCDP_DISABLE_NUMBA`` is set to a truthy
value before import. Both flavours are always importable under their
``_nb``/``_np`` suffixes so tests and the benchmark can compare them.

The numba kernels accumulate in the same order as the numpy ones, so the two
backends agree bit for bit.
"""

import os

import numpy as np

_FLAG = os.environ.get("MCDP_DISABLE_NUMBA", "").strip().lower()
_DISABLED = _FLAG not in ("", "0", "false", "no")

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and not _DISABLED


def _njit(fn):
    if not HAVE_NUMBA:  # pragma: no cover
        return fn
    return numba.njit(cache=True, nogil=True)(fn)


# ---------------------------------------------------------------------------
# forward depth splatting
# ---------------------------------------------------------------------------


def _splat_np(u, v, z, valid, height, width, zmin=False):
    """Nearest-pixel splat of points into a ``height x width`` grid.

    Points are visited in array order; with ``zmin`` off the last point to
    land on a pixel wins, otherwise the smallest ``z`` wins.

    Returns:
        (values, written): float64 grid (0 where unwritten) and bool mask.
    """
    u = np.ravel(u)
    v = np.ravel(v)
    z = np.ravel(z)
    valid = np.ravel(valid)
    out = np.zeros(height * width)
    written = np.zeros(height * width, dtype=bool)

    ui = np.floor(u + 0.5)
    vi = np.floor(v + 0.5)
    keep = valid & (z > 0) & (ui >= 0) & (ui < width) & (vi >= 0) & (vi < height)
    idx = (vi[keep] * width + ui[keep]).astype(np.int64)
    zk = z[keep]
    if idx.size == 0:
        return out.reshape(height, width), written.reshape(height, width)

    if zmin:
        best = np.full(height * width, np.inf)
        np.minimum.at(best, idx, zk)
        written[idx] = True
        out[written] = best[written]
    else:
        # first hit in the reversed sequence == last write in source order
        rev_idx = idx[::-1]
        uniq, first = np.unique(rev_idx, return_index=True)
        out[uniq] = zk[::-1][first]
        written[uniq] = True
    return out.reshape(height, width), written.reshape(height, width)


@_njit
def _splat_nb_impl(u, v, z, valid, height, width, zmin):
    out = np.zeros(height * width)
    written = np.zeros(height * width, dtype=np.bool_)
    for k in range(u.size):
        if not valid[k] or not z[k] > 0:
            continue
        uf = np.floor(u[k] + 0.5)
        vf = np.floor(v[k] + 0.5)
        if uf < 0 or uf >= width or vf < 0 or vf >= height:
            continue
        i = int(vf) * width + int(uf)
        if zmin and written[i] and out[i] <= z[k]:
            continue
        out[i] = z[k]
        written[i] = True
    return out, written


def _splat_nb(u, v, z, valid, height, width, zmin=False):
    out, written = _splat_nb_impl(
        np.ascontiguousarray(np.ravel(u), dtype=np.float64),
        np.ascontiguousarray(np.ravel(v), dtype=np.float64),
        np.ascontiguousarray(np.ravel(z), dtype=np.float64),
        np.ascontiguousarray(np.ravel(valid), dtype=np.bool_),
        int(height),
        int(width),
        bool(zmin),
    )
    return out.reshape(height, width), written.reshape(height, width)


# ---------------------------------------------------------------------------
# masked 3x3 window sums
# ---------------------------------------------------------------------------


def _box_sum3_np(x, valid):
    """Sum of ``x`` over each pixel's 3x3 window, counting only valid pixels.

    Windows are clipped at the image border. Every pixel gets a value; the
    caller decides which centres matter.
    """
    x = np.where(valid, x, 0.0)
    h, w = x.shape
    padded = np.zeros((h + 2, w + 2))
    padded[1:-1, 1:-1] = x
    acc = np.zeros((h, w))
    for dy in range(3):
        for dx in range(3):
            acc += padded[dy : dy + h, dx : dx + w]
    return acc


@_njit
def _box_sum3_nb_impl(x, valid):
    h, w = x.shape
    acc = np.zeros((h, w))
    for r in range(h):
        for c in range(w):
            s = 0.0
            for dy in range(-1, 2):
                rr = r + dy
                for dx in range(-1, 2):
                    cc = c + dx
                    if rr < 0 or rr >= h or cc < 0 or cc >= w:
                        s += 0.0
                    elif valid[rr, cc]:
                        s += x[rr, cc]
                    else:
                        s += 0.0
            acc[r, c] = s
    return acc


def _box_sum3_nb(x, valid):
    return _box_sum3_nb_impl(
        np.ascontiguousarray(x, dtype=np.float64),
        np.ascontiguousarray(valid, dtype=np.bool_),
    )


# ---------------------------------------------------------------------------
# bilinear sampling with coordinate gradients
# ---------------------------------------------------------------------------


def _bilinear_np(image, u, v):
    """Bilinearly sample ``image`` at continuous (column, row) coordinates.

    Pixel centres sit at integer coordinates. Coordinates must already lie in
    ``[0, W-1] x [0, H-1]``; out-of-range values are clamped, not rejected.

    Returns:
        (values, d_du, d_dv), each shaped like ``u``.
    """
    h, w = image.shape
    u = np.clip(u, 0.0, w - 1)
    v = np.clip(v, 0.0, h - 1)
    x0 = np.minimum(np.floor(u).astype(np.int64), max(w - 2, 0))
    y0 = np.minimum(np.floor(v).astype(np.int64), max(h - 2, 0))
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = u - x0
    fy = v - y0
    i00 = image[y0, x0]
    i01 = image[y0, x1]
    i10 = image[y1, x0]
    i11 = image[y1, x1]
    top = i00 + fx * (i01 - i00)
    bot = i10 + fx * (i11 - i10)
    val = top + fy * (bot - top)
    d_du = (1.0 - fy) * (i01 - i00) + fy * (i11 - i10)
    d_dv = bot - top
    return val, d_du, d_dv


@_njit
def _bilinear_nb_impl(image, u, v):
    h, w = image.shape
    n = u.size
    val = np.empty(n)
    d_du = np.empty(n)
    d_dv = np.empty(n)
    xmax = max(w - 2, 0)
    ymax = max(h - 2, 0)
    for k in range(n):
        uk = min(max(u[k], 0.0), w - 1.0)
        vk = min(max(v[k], 0.0), h - 1.0)
        x0 = min(int(np.floor(uk)), xmax)
        y0 = min(int(np.floor(vk)), ymax)
        x1 = min(x0 + 1, w - 1)
        y1 = min(y0 + 1, h - 1)
        fx = uk - x0
        fy = vk - y0
        i00 = image[y0, x0]
        i01 = image[y0, x1]
        i10 = image[y1, x0]
        i11 = image[y1, x1]
        top = i00 + fx * (i01 - i00)
        bot = i10 + fx * (i11 - i10)
        val[k] = top + fy * (bot - top)
        d_du[k] = (1.0 - fy) * (i01 - i00) + fy * (i11 - i10)
        d_dv[k] = bot - top
    return val, d_du, d_dv


def _bilinear_nb(image, u, v):
    u = np.asarray(u, dtype=np.float64)
    shape = u.shape
    val, d_du, d_dv = _bilinear_nb_impl(
        np.ascontiguousarray(image, dtype=np.float64),
        np.ascontiguousarray(u.ravel()),
        np.ascontiguousarray(np.asarray(v, dtype=np.float64).ravel()),
    )
    return val.reshape(shape), d_du.reshape(shape), d_dv.reshape(shape)


if USE_NUMBA:
    splat = _splat_nb
    box_sum3 = _box_sum3_nb
    bilinear = _bilinear_nb
else:
    splat = _splat_np
    box_sum3 = _box_sum3_np
    bilinear = _bilinear_np

BACKEND = "numba" if USE_NUMBA else "numpy"
