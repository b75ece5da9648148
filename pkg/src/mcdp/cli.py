"""Command-line entry point: ``mcdp {synth,warp,refine,evaluate}``."""

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .basis import combine, init_weights
from .consistency import DEFAULT_LAMBDA, DEFAULT_MU, project_depth
from .errors import EmptyOverlap, MCDPError, NonFiniteObjective
from .metrics import (
    MAX_DEPTH_PRESETS,
    MIN_DEPTH,
    dep_con,
    depth_metrics,
    mean_metrics,
    median_scale,
    shared_median_scale,
)
from .refine import RefineConfig, refine
from .synth import SceneSpec, build_scene, canonical_spec, render

logger = logging.getLogger("mcdp")

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_NUMERIC = 2

METRIC_NAMES = ("abs_rel", "sq_rel", "rmse", "delta_125")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _fmt(x):
    return f"{x:.6g}"


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_synth(args):
    if args.spec == "canonical":
        spec = canonical_spec(0 if args.seed is None else args.seed)
    else:
        path = Path(args.spec)
        if not path.is_file():
            raise io.MissingFile(path)
        try:
            data = io.tomllib.loads(path.read_text())
        except io.tomllib.TOMLDecodeError as exc:
            raise io.ParseError(f"invalid scene spec: {exc}") from None
        spec = SceneSpec.from_dict(data, seed=args.seed)
    scene = build_scene(spec, render(spec))
    path = io.save_rig(scene, args.out)
    print(f"wrote {path}")
    return EXIT_OK


def cmd_warp(args):
    scene = io.load_rig(args.rig)
    src, dst = scene.index(args.src), scene.index(args.dst)
    view = scene.views[src]
    if args.depth:
        depth = io.read_depth(args.depth)
    else:
        depth = combine(view.bases, init_weights(view.bases.n))
    out = project_depth(depth, view.K, scene.views[dst].K, scene.extrinsics(src, dst), zmin=args.zmin)
    io.write_depth(args.out, out)
    print(f"wrote {args.out} ({int(out.valid.sum())} projected pixels)")
    return EXIT_OK


def _trace_lines(scene, trace):
    pairs = list(trace.rounds[0].dep_con)
    names = [f"{scene.views[i].name}<-{scene.views[j].name}" for i, j in pairs]
    lines = ["# round\tobjective\t" + "\t".join(names)]
    for rec in trace.rounds:
        vals = "\t".join(_fmt(rec.dep_con[p]) for p in pairs)
        lines.append(f"{rec.index}\t{_fmt(rec.objective.total)}\t{vals}".rstrip("\t"))
    return lines


def cmd_refine(args):
    scene = io.load_rig(args.rig)
    for name in args.pin or ():
        scene.views[scene.index(name)].pinned = True
    cfg = RefineConfig(
        m=args.m,
        inner_steps=args.steps,
        step_size=args.step_size,
        lam=args.lam,
        mu=args.mu,
        depth_floor=args.depth_floor,
        convergence_tol=args.tol,
        zmin=args.zmin,
    )
    depths, trace = refine(scene, cfg)

    lines = _trace_lines(scene, trace)
    if args.trace:
        Path(args.trace).write_text("\n".join(lines) + "\n")
    else:
        print("\n".join(lines))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        for view, depth in zip(scene.views, depths):
            io.write_depth(out / f"{view.name}.mcdp", depth)
        with open(out / "weights.txt", "w") as fh:
            for view, w in zip(scene.views, trace.rounds[-1].weights):
                fh.write(view.name + " " + " ".join(repr(float(x)) for x in w) + "\n")
    return EXIT_OK


def _table(rows, columns):
    widths = [max(len(c), *(len(r[k]) for r in rows)) for k, c in enumerate(columns)]
    fmt = "  ".join(f"{{:<{w}}}" if k == 0 else f"{{:>{w}}}" for k, w in enumerate(widths))
    out = [fmt.format(*columns), fmt.format(*("-" * w for w in widths))]
    out += [fmt.format(*r) for r in rows]
    return "\n".join(out)


def evaluate_dirs(scene, pred_dir, gt_dir, shared_scale=False, median_scaling=True,
                  min_depth=MIN_DEPTH, max_depth=MAX_DEPTH_PRESETS["ddad"]):
    """Metrics for predictions and ground truth stored as ``<dir>/<camera>.mcdp``.

    Returns:
        (per-camera DepthMetrics dict, mean DepthMetrics, per-pair Dep Con
        dict keyed by (target, source) names, scales dict)
    """
    preds = [io.read_depth(Path(pred_dir) / f"{v.name}.mcdp") for v in scene.views]
    gts = [io.read_depth(Path(gt_dir) / f"{v.name}.mcdp") for v in scene.views]
    masks = [v.mask for v in scene.views]
    scales = {}
    if median_scaling and shared_scale:
        preds, s = shared_median_scale(preds, gts, masks)
        scales = {v.name: s for v in scene.views}
    elif median_scaling:
        scaled = []
        for v, p, g, m in zip(scene.views, preds, gts, masks):
            p, s = median_scale(p, g, m)
            scaled.append(p)
            scales[v.name] = s
        preds = scaled
    else:
        scales = {v.name: 1.0 for v in scene.views}

    per_cam = {
        v.name: depth_metrics(p, g, min_depth, max_depth, m)
        for v, p, g, m in zip(scene.views, preds, gts, masks)
    }
    pairs = {}
    for i, j in scene.adjacency:
        vi, vj = scene.views[i], scene.views[j]
        D_hat = project_depth(preds[j], vj.K, vi.K, scene.extrinsics(j, i))
        try:
            pairs[(vi.name, vj.name)] = dep_con(preds[i], D_hat, gts[i], vi.mask)
        except EmptyOverlap:
            pairs[(vi.name, vj.name)] = float("nan")
    return per_cam, mean_metrics(per_cam.values()), pairs, scales


def cmd_evaluate(args):
    scene = io.load_rig(args.rig)
    max_depth = args.max_depth
    if max_depth is None:
        max_depth = MAX_DEPTH_PRESETS[args.preset]
    per_cam, mean, pairs, scales = evaluate_dirs(
        scene, args.pred, args.gt, args.shared_scale, not args.no_median_scaling,
        args.min_depth, max_depth,
    )

    rows = [[name] + [_fmt(getattr(m, k)) for k in METRIC_NAMES] + [str(m.pixel_count)]
            for name, m in per_cam.items()]
    rows.append(["mean"] + [_fmt(getattr(mean, k)) for k in METRIC_NAMES]
                + [str(mean.pixel_count)])
    print(_table(rows, ["camera", *METRIC_NAMES, "pixels"]))
    if pairs:
        print()
        print(_table([[f"{t}<-{s}", _fmt(v)] for (t, s), v in pairs.items()], ["pair", "dep_con"]))

    finite = [v for v in pairs.values() if np.isfinite(v)]
    kv = [f"{k}={_fmt(getattr(mean, k))}" for k in METRIC_NAMES]
    kv.append(f"pixel_count={mean.pixel_count}")
    kv.append(f"dep_con={_fmt(float(np.mean(finite)) if finite else float('nan'))}")
    for name, m in per_cam.items():
        kv += [f"{name}.{k}={_fmt(getattr(m, k))}" for k in METRIC_NAMES]
        kv.append(f"{name}.scale={_fmt(scales[name])}")
    for (t, s), v in pairs.items():
        kv.append(f"dep_con.{t}<-{s}={_fmt(v)}")
    out = Path(args.metrics_out) if args.metrics_out else Path(args.pred) / "metrics.txt"
    out.write_text("\n".join(kv) + "\n", encoding="ascii")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def build_parser():
    parser = _Parser(prog="mcdp", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="render a synthetic rig fixture")
    p.add_argument("--spec", required=True, help="scene spec TOML, or 'canonical'")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("warp", help="project one camera's depth into another")
    p.add_argument("--rig", required=True)
    p.add_argument("--from", dest="src", required=True)
    p.add_argument("--to", dest="dst", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--depth", help="source depth grid (default: uniform basis combination)")
    p.add_argument("--zmin", action="store_true", help="keep nearest depth instead of last write")
    p.set_defaults(func=cmd_warp)

    p = sub.add_parser("refine", help="optimise basis weights across cameras")
    p.add_argument("--rig", required=True)
    p.add_argument("-m", type=int, default=2)
    p.add_argument("--lambda", dest="lam", type=float, default=DEFAULT_LAMBDA)
    p.add_argument("--mu", type=float, default=DEFAULT_MU)
    p.add_argument("--steps", type=int, default=50)
    p.add_argument("--step-size", type=float, default=0.05)
    p.add_argument("--depth-floor", type=float, default=0.1)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--pin", action="append", help="camera whose weights stay fixed")
    p.add_argument("--zmin", action="store_true")
    p.add_argument("--out")
    p.add_argument("--trace")
    p.set_defaults(func=cmd_refine)

    p = sub.add_parser("evaluate", help="depth metrics and cross-camera Dep Con")
    p.add_argument("--rig", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--shared-scale", action="store_true")
    p.add_argument("--no-median-scaling", action="store_true")
    p.add_argument("--min-depth", type=float, default=MIN_DEPTH)
    p.add_argument("--max-depth", type=float)
    p.add_argument("--preset", choices=sorted(MAX_DEPTH_PRESETS), default="ddad")
    p.add_argument("--metrics-out")
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except NonFiniteObjective as exc:
        print(f"mcdp: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (MCDPError, KeyError) as exc:
        print(f"mcdp: error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
