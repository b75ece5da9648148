"""Independent scalar-loop reference implementations.

Deliberately naive: explicit matrices, per-pixel Python loops, two-pass
statistics. Nothing here imports from mcdp except plain data containers.
"""

import math

import numpy as np


def K_matrix(K):
    return np.array([[K.fx, 0.0, K.cx], [0.0, K.fy, K.cy], [0.0, 0.0, 1.0]])


def warp_oracle(u, v, d, Ki, Kj, R, t):
    """Step-by-step: K^-1 p d, then R P + t, then K P / z."""
    P = np.linalg.inv(K_matrix(Ki)) @ np.array([u, v, 1.0]) * d
    Q = np.asarray(R) @ P + np.asarray(t)
    q = K_matrix(Kj) @ Q
    return q[0] / q[2], q[1] / q[2], Q[2]


def splat_oracle(values, valid, Kj, Ki, R, t, zmin=False):
    h, w = values.shape
    out = [[0.0] * Ki.width for _ in range(Ki.height)]
    hit = [[False] * Ki.width for _ in range(Ki.height)]
    for r in range(h):
        for c in range(w):
            if not valid[r][c]:
                continue
            u, v, z = warp_oracle(c, r, values[r][c], Kj, Ki, R, t)
            if not z > 0:
                continue
            ui = math.floor(u + 0.5)
            vi = math.floor(v + 0.5)
            if not (0 <= ui < Ki.width and 0 <= vi < Ki.height):
                continue
            if zmin and hit[vi][ui] and out[vi][ui] <= z:
                continue
            out[vi][ui] = z
            hit[vi][ui] = True
    return np.array(out), np.array(hit)


def masked_l1_oracle(a, va, b, vb, mask):
    total, n = 0.0, 0
    for r in range(a.shape[0]):
        for c in range(a.shape[1]):
            if va[r, c] and vb[r, c] and mask[r, c]:
                total += abs(a[r, c] - b[r, c])
                n += 1
    return (total / n if n else 0.0), n


def ssim_oracle(x, y, valid=None, C1=0.01**2, C2=0.03**2):
    h, w = x.shape
    if valid is None:
        valid = np.ones((h, w), dtype=bool)
    out = np.zeros((h, w))
    for r in range(h):
        for c in range(w):
            if not valid[r, c]:
                continue
            xs, ys = [], []
            for rr in range(max(r - 1, 0), min(r + 2, h)):
                for cc in range(max(c - 1, 0), min(c + 2, w)):
                    if valid[rr, cc]:
                        xs.append(x[rr, cc])
                        ys.append(y[rr, cc])
            n = len(xs)
            mx = sum(xs) / n
            my = sum(ys) / n
            vx = sum((a - mx) ** 2 for a in xs) / n
            vy = sum((b - my) ** 2 for b in ys) / n
            cxy = sum((a - mx) * (b - my) for a, b in zip(xs, ys)) / n
            out[r, c] = ((2 * mx * my + C1) * (2 * cxy + C2)) / (
                (mx * mx + my * my + C1) * (vx + vy + C2)
            )
    return out


def pe_oracle(x, y, mask, alpha=0.85):
    s = ssim_oracle(x, y, mask)
    total, n = 0.0, 0
    for r in range(x.shape[0]):
        for c in range(x.shape[1]):
            if mask[r, c]:
                total += alpha / 2 * (1 - s[r, c]) + (1 - alpha) * abs(x[r, c] - y[r, c])
                n += 1
    return total / n if n else 0.0


def smoothness_oracle(depth, image, keep=None):
    h, w = depth.shape
    if keep is None:
        keep = np.ones((h, w), dtype=bool)
    inv = [[1.0 / depth[r][c] if keep[r][c] else 0.0 for c in range(w)] for r in range(h)]
    vals = [inv[r][c] for r in range(h) for c in range(w) if keep[r][c]]
    m = sum(vals) / len(vals)
    sx, nx, sy, ny = 0.0, 0, 0.0, 0
    for r in range(h):
        for c in range(w - 1):
            if keep[r][c] and keep[r][c + 1]:
                sx += abs(inv[r][c + 1] / m - inv[r][c] / m) * math.exp(-abs(image[r][c + 1] - image[r][c]))
                nx += 1
    for r in range(h - 1):
        for c in range(w):
            if keep[r][c] and keep[r + 1][c]:
                sy += abs(inv[r + 1][c] / m - inv[r][c] / m) * math.exp(-abs(image[r + 1][c] - image[r][c]))
                ny += 1
    return (sx / nx if nx else 0.0) + (sy / ny if ny else 0.0)


def metrics_oracle(pred, gt, keep, min_depth, max_depth):
    a, s, sq, d, n = 0.0, 0.0, 0.0, 0, 0
    for p, g, k in zip(pred.ravel(), gt.ravel(), keep.ravel()):
        if not k or g < min_depth or g > max_depth:
            continue
        a += abs(p - g) / g
        s += (p - g) ** 2 / g
        sq += (p - g) ** 2
        d += 1 if max(p / g, g / p) < 1.25 else 0
        n += 1
    return a / n, s / n, math.sqrt(sq / n), d / n, n


def median_oracle(values):
    vals = sorted(values)
    n = len(vals)
    mid = n // 2
    return vals[mid] if n % 2 else 0.5 * (vals[mid - 1] + vals[mid])


def dep_con_oracle(a, b, gt, keep):
    total, n = 0.0, 0
    for x, y, g, k in zip(a.ravel(), b.ravel(), gt.ravel(), keep.ravel()):
        if k and g > 0:
            total += abs(x - y) / g
            n += 1
    return total / n


def central_difference(f, x, h=1e-4):
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    for k in range(x.size):
        e = np.zeros_like(x)
        e.flat[k] = h
        g.flat[k] = (f(x + e) - f(x - e)) / (2 * h)
    return g
