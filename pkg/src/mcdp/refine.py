"""Iterative refinement of per-camera basis weights.

Each round projects every camera's current depth into its neighbours, then
freezes those projections and runs backtracking gradient descent on each
camera's weights. With the projections frozen the objective splits into one
independent term per camera, so the update of one camera never depends on
the order in which cameras are processed.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .basis import DEFAULT_DEPTH_FLOOR, combine, combine_gradient, init_weights
from .consistency import (
    DEFAULT_LAMBDA,
    DEFAULT_MU,
    LossBreakdown,
    SourceView,
    _consistency_with_grad,
    _smoothness,
    _spatial_photometric,
    project_depth,
)
from .errors import EmptyOverlap, NonFiniteObjective, ShapeMismatch, ValidationError
from .metrics import dep_con

logger = logging.getLogger(__name__)

MAX_HALVINGS = 20


@dataclass(frozen=True)
class RefineConfig:
    m: int = 2
    inner_steps: int = 50
    step_size: float = 0.05
    lam: float = DEFAULT_LAMBDA
    mu: float = DEFAULT_MU
    depth_floor: float = DEFAULT_DEPTH_FLOOR
    convergence_tol: float = 1e-6
    zmin: bool = False
    step_growth: float = 2.0

    def __post_init__(self):
        if self.m < 0:
            raise ValidationError("m must be >= 0")
        if self.inner_steps < 1:
            raise ValidationError("inner_steps must be >= 1")
        if not self.step_size > 0:
            raise ValidationError("step_size must be > 0")
        if not self.convergence_tol >= 0:
            raise ValidationError("convergence_tol must be >= 0")
        if not self.depth_floor > 0:
            raise ValidationError("depth_floor must be > 0")
        if self.lam < 0 or self.mu < 0:
            raise ValidationError("loss weights must be non-negative")
        if not self.step_growth >= 1:
            raise ValidationError("step_growth must be >= 1")


@dataclass
class RoundRecord:
    index: int
    objective: LossBreakdown
    dep_con: dict  # (target, source) -> float, NaN when undefined
    weights: list

    @property
    def mean_dep_con(self):
        vals = [v for v in self.dep_con.values() if np.isfinite(v)]
        return float(np.mean(vals)) if vals else float("nan")


@dataclass
class RefineTrace:
    rounds: list = field(default_factory=list)
    converged_at: Optional[int] = None

    def __len__(self):
        return len(self.rounds)

    @property
    def objectives(self):
        return [r.objective.total for r in self.rounds]

    @property
    def mean_dep_con(self):
        return [r.mean_dep_con for r in self.rounds]


# ---------------------------------------------------------------------------
# building blocks
# ---------------------------------------------------------------------------


def _check_weights(scene, weights):
    if len(weights) != len(scene.views):
        raise ShapeMismatch(f"{len(weights)} weight vectors for {len(scene.views)} cameras")
    for v, w in zip(scene.views, weights):
        if np.shape(w) != (v.bases.n,):
            raise ShapeMismatch(f"camera {v.name!r}: {np.shape(w)} weights for {v.bases.n} bases")


def combined_depths(scene, weights, floor=DEFAULT_DEPTH_FLOOR):
    _check_weights(scene, weights)
    return [combine(v.bases, w, floor) for v, w in zip(scene.views, weights)]


def project_all(scene, depths, zmin=False):
    """Depth of every source projected into every target, keyed (target, source)."""
    out = {}
    for i, j in scene.adjacency:
        vi, vj = scene.views[i], scene.views[j]
        out[(i, j)] = project_depth(depths[j], vj.K, vi.K, scene.extrinsics(j, i), zmin=zmin)
    return out


def _sources(scene, i):
    return [
        SourceView(scene.views[j].image, scene.views[j].mask, scene.views[j].K, scene.extrinsics(i, j))
        for j in scene.sources(i)
    ]


def camera_objective(scene, i, w, projections, cfg, need_grad=False):
    """Camera i's share of the objective with frozen cross-camera projections.

    Returns:
        (LossBreakdown, gradient w.r.t. ``w`` or None)
    """
    view = scene.views[i]
    D = combine(view.bases, w, cfg.depth_floor)
    photo, g_photo = _spatial_photometric(
        view.image, D, view.K, _sources(scene, i), view.mask, need_grad
    )
    con = 0.0
    count = photo.count
    g_con = np.zeros(D.shape)
    for j in scene.sources(i):
        term, g = _consistency_with_grad(D, projections[(i, j)], view.mask)
        con += term.value
        count += term.count
        g_con += g
    smooth, g_smooth = _smoothness(D, view.image, view.mask, need_grad)
    parts = LossBreakdown.from_parts(photo.value, con, smooth, count, cfg.lam, cfg.mu)
    if not need_grad:
        return parts, None
    upstream = g_photo + cfg.lam * g_con + cfg.mu * g_smooth
    return parts, combine_gradient(view.bases, upstream, w, cfg.depth_floor)


def _sum_breakdowns(parts, cfg):
    return LossBreakdown.from_parts(
        sum(p.photometric for p in parts),
        sum(p.consistency for p in parts),
        sum(p.smoothness for p in parts),
        sum(p.valid_pixel_count for p in parts),
        cfg.lam,
        cfg.mu,
    )


def evaluate_objective(scene, weights, cfg=None, projections=None):
    """Photometric + lambda * consistency + mu * smoothness summed over cameras.

    Projections are derived from ``weights`` unless given explicitly.
    """
    cfg = cfg or RefineConfig()
    _check_weights(scene, weights)
    if projections is None:
        projections = project_all(scene, combined_depths(scene, weights, cfg.depth_floor), cfg.zmin)
    parts = [camera_objective(scene, i, w, projections, cfg)[0] for i, w in enumerate(weights)]
    return _sum_breakdowns(parts, cfg)


def objective_gradient(scene, weights, projections, cfg=None):
    """Per-camera gradients of the frozen-projection objective."""
    cfg = cfg or RefineConfig()
    _check_weights(scene, weights)
    return [camera_objective(scene, i, w, projections, cfg, need_grad=True)[1]
            for i, w in enumerate(weights)]


def pair_dep_con(scene, depths, projections):
    out = {}
    for (i, j), D_hat in projections.items():
        gt = scene.views[i].gt
        if gt is None:
            out[(i, j)] = float("nan")
            continue
        try:
            out[(i, j)] = dep_con(depths[i], D_hat, gt, scene.views[i].mask)
        except EmptyOverlap:
            out[(i, j)] = float("nan")
    return out


# ---------------------------------------------------------------------------
# optimisation
# ---------------------------------------------------------------------------


def _descend(fun, w, cfg):
    """Backtracking gradient descent on one camera's weights.

    A trial step that raises the objective halves the step size and retries;
    after MAX_HALVINGS failed halvings the current weights are returned. An
    accepted step grows the step size by ``cfg.step_growth``. A step whose
    relative improvement is below ``cfg.convergence_tol`` is discarded and
    ends the descent, so converged cameras stall exactly.
    """
    f, g = fun(w)
    step = cfg.step_size
    for _ in range(cfg.inner_steps):
        if not np.any(g):
            break
        for _ in range(MAX_HALVINGS + 1):
            cand = w - step * g
            fc, gc = fun(cand)
            if fc <= f:
                break
            step *= 0.5
        else:
            break
        if f - fc <= cfg.convergence_tol * abs(f):
            break
        w, f, g = cand, fc, gc
        step *= cfg.step_growth
    return w


def refine_round(scene, weights, cfg=None, projections=None):
    """One refinement round: per-camera descent with projections held fixed.

    Raises:
        NonFiniteObjective: the objective became NaN/inf; carries the entry
            weights so callers can fall back to them.
    """
    cfg = cfg or RefineConfig()
    _check_weights(scene, weights)
    entry = [np.array(w, dtype=np.float64) for w in weights]
    if projections is None:
        projections = project_all(scene, combined_depths(scene, entry, cfg.depth_floor), cfg.zmin)

    out = []
    for i, w in enumerate(entry):
        if scene.views[i].pinned:
            out.append(w.copy())
            continue

        def fun(x, i=i):
            parts, g = camera_objective(scene, i, x, projections, cfg, need_grad=True)
            if not (np.isfinite(parts.total) and np.all(np.isfinite(g))):
                raise NonFiniteObjective(
                    f"non-finite objective for camera {scene.views[i].name!r}", entry
                )
            return parts.total, g

        out.append(_descend(fun, w.copy(), cfg))
    return out


def _record(scene, index, weights, cfg):
    depths = combined_depths(scene, weights, cfg.depth_floor)
    projections = project_all(scene, depths, cfg.zmin)
    objective = evaluate_objective(scene, weights, cfg, projections)
    rec = RoundRecord(index, objective, pair_dep_con(scene, depths, projections),
                      [np.array(w) for w in weights])
    return rec, depths, projections


def refine(scene, cfg=None):
    """Run ``cfg.m`` refinement rounds from uniform weights.

    Returns:
        (per-camera depth maps, RefineTrace). The trace always holds
        ``m + 1`` records; after early convergence the remaining records
        repeat the converged state.
    """
    cfg = cfg or RefineConfig()
    weights = [init_weights(v.bases.n) for v in scene.views]
    rec, depths, projections = _record(scene, 0, weights, cfg)
    if not np.isfinite(rec.objective.total):
        raise NonFiniteObjective("initial objective is not finite", weights)
    trace = RefineTrace([rec])
    logger.info("round 0: objective %.6g, mean dep con %.6g", rec.objective.total, rec.mean_dep_con)

    for r in range(1, cfg.m + 1):
        if trace.converged_at is not None:
            prev = trace.rounds[-1]
            trace.rounds.append(RoundRecord(r, prev.objective, dict(prev.dep_con), prev.weights))
            continue
        weights = refine_round(scene, weights, cfg, projections)
        prev_total = rec.objective.total
        rec, depths, projections = _record(scene, r, weights, cfg)
        trace.rounds.append(rec)
        logger.info("round %d: objective %.6g, mean dep con %.6g", r, rec.objective.total, rec.mean_dep_con)
        change = abs(prev_total - rec.objective.total) / max(abs(prev_total), 1e-300)
        if change < cfg.convergence_tol:
            trace.converged_at = r
    return depths, trace
