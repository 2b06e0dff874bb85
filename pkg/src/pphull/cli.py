"""Command-line entry point: ``pphull <subcommand> ...``.

Every subcommand accepts ``--config FILE``, a JSON object keyed by option
name (``p_threshold`` or ``p-threshold``); explicit flags win over it.
Failures print one JSON line ``{"error": ..., "message": ...}`` on stderr.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import fileio
from .geometry import ImageFrame
from .hull import load_registry, validate_hull
from .losses import mean_l2_2d, mpjpe, stress
from .pseudo2d import PseudoTargetConfig, generate_pseudo_targets
from .raster import UNCERTAIN, build_planar_map, plane_visibility_from_keypoints, rasterize
from .uncertainty import P_THRESHOLD, semantic_pseudo_label_stages
from .visibility import estimate_visibility

EX_USAGE = 64
EX_INVALID = 2
DEFAULT_SEED = 0


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        _report(UsageError(message))
        sys.exit(EX_USAGE)


def _report(exc: BaseException) -> None:
    line = {"error": type(exc).__name__, "message": str(exc)}
    print(json.dumps(line), file=sys.stderr)


def default_seed() -> int:
    return int(os.environ.get("PPH_SEED", DEFAULT_SEED))


def _parse_size(text: str) -> tuple[int, int]:
    try:
        w, h = text.lower().split("x")
        w, h = int(w), int(h)
    except ValueError:
        raise argparse.ArgumentTypeError(f"size must look like WxH, got {text!r}") from None
    if w < 1 or h < 1:
        raise argparse.ArgumentTypeError("size must be positive")
    return w, h


def _load_category(hull_path, kf):
    registry = load_registry(hull_path)
    registry.category(kf.category)
    return registry


def _read_depths(path, n):
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if "depths" in data:
        z = np.asarray(data["depths"], dtype=float)
    else:
        coords = np.asarray(data["coords"], dtype=float)
        if coords.ndim != 2 or coords.shape[1] != 3:
            raise ValueError("depth file needs 'depths' or 3D 'coords'")
        z = coords[:, 2]
    if len(z) != n:
        raise ValueError(f"depth file has {len(z)} values for {n} keypoints")
    return z


# ---------------------------------------------------------------- commands

def cmd_validate_hull(args) -> int:
    registry = load_registry(args.hull)
    tf = fileio.read_keypoints(args.template)
    category = registry.category(args.category or tf.category)
    report = validate_hull(category, tf.coords)
    print(json.dumps(report.to_dict(), indent=2))
    return 0 if report.valid else EX_INVALID


def cmd_rasterize(args) -> int:
    kf = fileio.read_keypoints(args.keypoints)
    registry = _load_category(args.hull, kf)
    width, height = args.size
    z = _read_depths(args.depths, len(kf.coords))
    frame = None if kf.pixels else ImageFrame(width, height, args.half_extent)
    vis = plane_visibility_from_keypoints(registry, kf.category, kf.visibility)
    pm = build_planar_map(registry, kf.category, kf.coords[:, :2], z, vis, frame=frame)
    if args.estimate_visibility:
        pm = pm.with_visibility(estimate_visibility(pm.all_visible(), width, height))
    fileio.write_pgm(args.out, rasterize(pm, width, height))
    return 0


def cmd_gen_pseudo_labels(args) -> int:
    stack = fileio.read_pphl(args.logits)
    _, height, width, s = stack.shape
    kf = fileio.read_keypoints(args.keypoints)
    registry = _load_category(args.hull, kf)
    if s != registry.total_classes:
        raise ValueError(f"logits have {s} classes, hull defines {registry.total_classes}")
    frame = ImageFrame(width, height, args.half_extent)
    Y = kf.normalized(frame)[:, :2]
    X = fileio.read_keypoints(args.kp3d).normalized(frame)
    st = semantic_pseudo_label_stages(stack, X, Y, registry, kf.category, frame,
                                      threshold=args.p_threshold,
                                      exempt_background=not args.mask_background)
    fileio.write_pgm(args.out, st.label)
    print(json.dumps({"depth_sign": st.sign,
                      "uncertain_fraction": float(np.mean(st.label == UNCERTAIN))}))
    return 0


def _sidecar_path(out):
    root, ext = os.path.splitext(out)
    return root + ".provenance" + (ext or ".json")


def cmd_gen_pseudo_targets(args) -> int:
    L_E = fileio.read_pgm(args.pseudo_label)
    height, width = L_E.shape
    kf = fileio.read_keypoints(args.keypoints)
    registry = _load_category(args.hull, kf)
    frame = ImageFrame(width, height, args.half_extent)
    Y = kf.normalized(frame)[:, :2]
    X = fileio.read_keypoints(args.kp3d).normalized(frame)
    seed = args.seed if args.seed is not None else default_seed()
    cfg = PseudoTargetConfig(args.nq, args.sigma, seed, args.plane_context)
    sign = None if args.depth_sign == "auto" else int(args.depth_sign)
    targets, prov = generate_pseudo_targets(Y, X, L_E, registry, kf.category, cfg, frame,
                                            chosen_sign=sign, return_provenance=True)
    # write displacements on top of the input so untouched keypoints stay bit-identical
    delta = targets.coords - Y
    if kf.pixels:
        delta = delta * frame.scale
    out = kf.coords[:, :2] + delta
    fileio.write_keypoints(args.out, kf.category, out, kf.visibility,
                           pixels=kf.pixels, image_size=kf.image_size)
    with open(_sidecar_path(args.out), "w", encoding="utf-8", newline="\n") as fh:
        json.dump(prov, fh, indent=2)
        fh.write("\n")
    return 0


def cmd_simulate_recursion(args) -> int:
    from .simkit import SimulationConfig, simulate

    cfg = SimulationConfig.from_dict(args.sim_config or {})
    if args.seed is not None:
        cfg.noise.seed = args.seed
    elif "seed" not in (args.sim_config or {}).get("noise", {}):
        cfg.noise.seed = default_seed()
    for name in ("n_samples", "n_recursions", "jobs"):
        if getattr(args, name) is not None:
            setattr(cfg, name, getattr(args, name))
    report = simulate(cfg)
    report.to_csv(args.out)
    json_path = args.json or os.path.splitext(args.out)[0] + ".json"
    report.to_json(json_path)
    for row in report.rows():
        print(",".join(str(v) for v in row.values()))
    return 0


def cmd_metrics(args) -> int:
    pred = fileio.read_keypoints(args.pred)
    gt = fileio.read_keypoints(args.gt)
    if pred.coords.shape != gt.coords.shape:
        raise ValueError(f"shape mismatch: {pred.coords.shape} vs {gt.coords.shape}")
    rows = {}
    if pred.dim == 3:
        rows["MPJPE"] = mpjpe(pred.coords, gt.coords)
        rows["Stress"] = stress(pred.coords, gt.coords)
    rows["L2"] = mean_l2_2d(pred.coords, gt.coords)
    if args.json:
        print(json.dumps(rows))
    else:
        print(f"{'metric':<8}{'value':>14}")
        for k, v in rows.items():
            print(f"{k:<8}{v:>14.6f}")
    return 0


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pphull", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, func, help):
        p = sub.add_parser(name, help=help)
        p.add_argument("--config", help="JSON file with option defaults")
        p.set_defaults(func=func)
        return p

    p = add("validate-hull", cmd_validate_hull, "check a hull against a 3D template")
    p.add_argument("--hull", required=True)
    p.add_argument("--template", required=True)
    p.add_argument("--category")

    p = add("rasterize", cmd_rasterize, "render a planar map to a PGM mask")
    p.add_argument("--hull", required=True)
    p.add_argument("--keypoints", required=True)
    p.add_argument("--depths", required=True)
    p.add_argument("--size", required=True, type=_parse_size)
    p.add_argument("--out", required=True)
    p.add_argument("--half-extent", type=float, default=1.0)
    p.add_argument("--estimate-visibility", action="store_true")

    p = add("gen-pseudo-labels", cmd_gen_pseudo_labels, "segmentation pseudo-label from MC logits")
    p.add_argument("--hull", required=True)
    p.add_argument("--logits", required=True)
    p.add_argument("--keypoints", required=True)
    p.add_argument("--kp3d", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--p-threshold", type=float, default=P_THRESHOLD)
    p.add_argument("--half-extent", type=float, default=1.0)
    p.add_argument("--mask-background", action="store_true",
                   help="let plane agreement mark background pixels uncertain too")

    p = add("gen-pseudo-targets", cmd_gen_pseudo_targets, "2D keypoint pseudo-targets")
    p.add_argument("--hull", required=True)
    p.add_argument("--pseudo-label", required=True)
    p.add_argument("--keypoints", required=True)
    p.add_argument("--kp3d", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--nq", type=int, default=32)
    p.add_argument("--sigma", type=float, default=0.01)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--depth-sign", choices=["auto", "1", "-1"], default="auto")
    p.add_argument("--plane-context", choices=["isolation", "map"], default="isolation")
    p.add_argument("--half-extent", type=float, default=1.0)

    p = add("simulate-recursion", cmd_simulate_recursion, "synthetic recursion run")
    p.add_argument("--out", required=True)
    p.add_argument("--json")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--n-samples", type=int, default=None)
    p.add_argument("--n-recursions", type=int, default=None)
    p.add_argument("--jobs", type=int, default=None)

    p = add("metrics", cmd_metrics, "MPJPE / Stress / L2 between keypoint files")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--json", action="store_true")
    return parser


def _subparser(parser, name):
    action = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    return action.choices.get(name)


def _apply_config(parser, argv):
    """Parse `argv`, with config-file values installed as subcommand defaults."""
    argv = list(sys.argv[1:] if argv is None else argv)
    config_path = None
    for i, tok in enumerate(argv):
        if tok == "--config" and i + 1 < len(argv):
            config_path = argv[i + 1]
        elif tok.startswith("--config="):
            config_path = tok.split("=", 1)[1]
    command = next((t for t in argv if not t.startswith("-")), None)
    sub = _subparser(parser, command)
    config = None
    if config_path and sub is not None:
        with open(config_path, encoding="utf-8") as fh:
            config = json.load(fh)
        if not isinstance(config, dict):
            raise UsageError("config file must hold a JSON object")
        if command != "simulate-recursion":
            known = {a.dest for a in sub._actions}
            defaults = {}
            for key, value in config.items():
                dest = key.replace("-", "_")
                if dest not in known:
                    raise UsageError(f"unknown config key {key!r} for {command}")
                if dest == "size" and isinstance(value, str):
                    value = _parse_size(value)
                defaults[dest] = value
            sub.set_defaults(**defaults)
            for action in sub._actions:
                if action.dest in defaults:
                    action.required = False
    args = parser.parse_args(argv)
    args.sim_config = config if command == "simulate-recursion" else None
    return args


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
    except (UsageError, OSError, json.JSONDecodeError) as exc:
        _report(exc)
        return EX_USAGE
    try:
        return args.func(args)
    except Exception as exc:
        _report(exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
