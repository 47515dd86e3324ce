"""Command-line harness: ``angioseg <command> [options]``.

Commands: phantom-gen, vesselness, init-weights, forward, detect, evaluate,
gradcheck, ssd-bench and phfp-impulse.  Exit status is 0 on success, 2 on
usage errors and 1 on runtime errors, reported as ``error [<stage>]: ...``.
Every artifact is written atomically, and reruns with the same inputs give
byte-identical files (wall times only appear with ``--timing``).
"""
from __future__ import annotations

import argparse
import ast
import dataclasses
import io
import json
import os
import sys
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
from PIL import Image

from . import __version__
from .bench import format_benchmark, gradient_check, ssd_benchmark
from .network import NetworkConfig, init_weights, network_forward
from .ops import ShapeError
from .phantom import PRESETS, preset_specs, render_phantom, truth_to_json
from .seg_metrics import METRICS, aggregate, segmentation_metrics
from .stenosis import (GRADES, DetectionConfig, StenosisPoint, detect_from_mask,
                       graded_counts, match_ground_truth, metrics_from_counts,
                       smooth_profile, detection_metrics)
from .vesselness import VesselnessConfig, case_forward
from .wavelet import init_phfp, max_depth, phfp_forward
from .weights import WeightFileError, WeightStore

SEED_ENV = "SFD_SEED"


class CLIError(Exception):
    def __init__(self, stage: str, message: str):
        super().__init__(message)
        self.stage = stage

    def __reduce__(self):
        return type(self), (self.stage, str(self))


# --- I/O helpers ------------------------------------------------------------


def atomic_write(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    return obj


def write_json(path, obj) -> None:
    atomic_write(path, (json.dumps(_plain(obj), indent=2, sort_keys=True) + "\n").encode())


def read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise CLIError("read-input", f"cannot read JSON {path}: {exc}") from exc


def png_bytes(arr: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(np.ascontiguousarray(arr, dtype=np.uint8), mode="L").save(buf, format="PNG")
    return buf.getvalue()


def to_u8(x: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(np.asarray(x, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)


def write_png(path, unit_image) -> None:
    atomic_write(path, png_bytes(to_u8(unit_image)))


def read_png(path) -> np.ndarray:
    """Grayscale image scaled to [0, 1]."""
    try:
        with Image.open(path) as im:
            return np.asarray(im.convert("L"), dtype=np.float64) / 255.0
    except (OSError, ValueError) as exc:
        raise CLIError("read-input", f"cannot read image {path}: {exc}") from exc


def read_mask(path) -> np.ndarray:
    return read_png(path) > 0.5


def list_images(directory) -> list[Path]:
    """PNG files in ``directory`` excluding ``*_mask.png``, sorted by name."""
    d = Path(directory)
    if not d.is_dir():
        raise CLIError("read-input", f"not a directory: {d}")
    return sorted(p for p in d.glob("*.png") if not p.stem.endswith("_mask"))


def pmap(fn, items, jobs: int = 1) -> list:
    if jobs <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items))


# --- configuration ----------------------------------------------------------------


def parse_config_file(path) -> dict[str, object]:
    """``key = value`` lines; ``#`` starts a comment; values are Python literals
    or bare strings.  Keys may be prefixed ``network.``, ``detection.`` or
    ``vesselness.``."""
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CLIError("config", f"cannot read config {path}: {exc}") from exc
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CLIError("config", f"{path}:{n}: expected key=value, got {line!r}")
        key, val = (t.strip() for t in line.split("=", 1))
        try:
            out[key] = ast.literal_eval(val)
        except (ValueError, SyntaxError):
            out[key] = val
    return out


def _apply(obj, overrides: dict, prefix: str, used: set):
    names = {f.name for f in dataclasses.fields(obj)}
    kw = {}
    for key, val in overrides.items():
        if key.startswith(prefix + "."):
            short = key[len(prefix) + 1:]
        elif "." in key:
            continue
        else:
            short = key
        if short in names:
            cur = getattr(obj, short)
            if isinstance(cur, tuple) and not isinstance(val, tuple):
                val = tuple(val) if isinstance(val, list) else (val,)
            kw[short] = val
            used.add(key)
    try:
        return dataclasses.replace(obj, **kw)
    except (TypeError, ValueError) as exc:
        raise CLIError("config", f"invalid {prefix} setting: {exc}") from exc


def build_configs(args, image_size=None):
    overrides = parse_config_file(args.config) if getattr(args, "config", None) else {}
    used: set = set()
    vcfg = _apply(VesselnessConfig(), overrides, "vesselness", used)
    dcfg = _apply(DetectionConfig(), overrides, "detection", used)
    ncfg = NetworkConfig(vesselness=vcfg) if image_size is None else \
        NetworkConfig(vesselness=vcfg, input_size=tuple(image_size))
    ncfg = _apply(ncfg, {k: v for k, v in overrides.items() if k != "vesselness"}, "network", used)
    unknown = sorted(set(overrides) - used)
    if unknown:
        raise CLIError("config", f"unknown config keys: {', '.join(unknown)}")
    return ncfg, dcfg, vcfg


def resolve_seed(args, default: int = 0) -> int:
    if getattr(args, "seed", None) is not None:
        return args.seed
    env = os.environ.get(SEED_ENV)
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise CLIError("config", f"{SEED_ENV} must be an integer, got {env!r}") from exc
    return default


def report(command: str, args, config: dict, results, aggregate_=None, t0=None) -> dict:
    rep = {"command": command, "version": __version__, "config": config, "results": results}
    if aggregate_ is not None:
        rep["aggregate"] = aggregate_
    if getattr(args, "timing", False) and t0 is not None:
        rep["wall_time_s"] = time.perf_counter() - t0
        rep["finished_utc"] = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
    return rep


# --- commands -------------------------------------------------------------------


def cmd_phantom_gen(args) -> int:
    seed = resolve_seed(args)
    out = Path(args.out)
    try:
        specs = preset_specs(args.preset, seed, args.n, args.size)
    except ValueError as exc:
        raise CLIError("phantom", str(exc)) from exc
    corpus = pmap(render_phantom, specs, args.jobs)
    manifest = []
    for k, (spec, (image, truth)) in enumerate(zip(specs, corpus)):
        stem = f"{args.preset}_{k:03d}"
        write_png(out / f"{stem}.png", image)
        write_png(out / f"{stem}_mask.png", truth.mask.astype(float))
        write_json(out / f"{stem}_truth.json", truth_to_json(spec, truth))
        write_json(out / f"{stem}_gt.json", truth.gt_points())
        manifest.append({"stem": stem, "image": f"{stem}.png", "mask": f"{stem}_mask.png",
                         "truth": f"{stem}_truth.json", "gt": f"{stem}_gt.json",
                         "stenoses": len(truth.stenoses)})
    write_json(out / "manifest.json", {"preset": args.preset, "seed": seed, "n": args.n,
                                       "size": args.size, "images": manifest})
    return 0


def cmd_vesselness(args) -> int:
    _, _, vcfg = build_configs(args)
    if args.sigmas:
        vcfg = dataclasses.replace(vcfg, sigmas=tuple(args.sigmas))
    if args.bright_vessels:
        vcfg = dataclasses.replace(vcfg, dark_vessels=False)
    if args.beta is not None:
        vcfg = dataclasses.replace(vcfg, beta=args.beta)
    image = read_png(args.input)
    fld = case_forward(image, vcfg)
    if args.stats:
        win = np.bincount(fld.argmax_scale().ravel(), minlength=len(vcfg.sigmas))
        write_json(args.stats, report("vesselness", args, dataclasses.asdict(vcfg), [
            {"sigma": s, "mean": float(m.mean()), "max": float(m.max()), "argmax_pixels": int(n)}
            for s, m, n in zip(vcfg.sigmas, fld.per_scale, win)]))
    peak = float(fld.fused.max())
    write_png(args.out, fld.fused / peak if peak > 0 else fld.fused)
    if args.out_scale:
        scale = fld.argmax_scale().astype(float)
        write_png(args.out_scale, scale / max(1, len(vcfg.sigmas) - 1))
    return 0


def cmd_init_weights(args) -> int:
    ncfg, _, _ = build_configs(args, (args.size, args.size))
    store = init_weights(ncfg, resolve_seed(args), dtype=args.dtype)
    atomic_write(args.out, store.to_bytes())
    return 0


def _load_weights(args, ncfg) -> WeightStore:
    if args.weights:
        try:
            return WeightStore.load(args.weights)
        except OSError as exc:
            raise CLIError("weights", f"cannot read {args.weights}: {exc}") from exc
        except WeightFileError as exc:
            raise CLIError("weights", f"malformed weight file {args.weights}: {exc}") from exc
    return init_weights(ncfg, resolve_seed(args))


def _forward_one(job):
    path, weights, ncfg = job
    image = read_png(path)
    try:
        out = network_forward(image[None, None], weights, ncfg)
    except KeyError as exc:
        raise CLIError("weights", str(exc).strip("'\"")) from exc
    except (ShapeError, ValueError) as exc:
        raise CLIError("forward", f"{path}: {exc}") from exc
    return out.prob[0, 0], out.mask[0, 0]


def cmd_forward(args) -> int:
    src = Path(args.input)
    files = list_images(src) if src.is_dir() else [src]
    if not files:
        raise CLIError("read-input", f"no PNG images in {src}")
    size = read_png(files[0]).shape
    ncfg, _, _ = build_configs(args, size)
    ncfg = dataclasses.replace(ncfg, threshold=args.threshold)
    weights = _load_weights(args, ncfg)
    results = pmap(_forward_one, [(f, weights, ncfg) for f in files], args.jobs)
    for f, (prob, mask) in zip(files, results):
        if src.is_dir():
            write_png(Path(args.out_prob) / f.name, prob)
            if args.out_mask:
                write_png(Path(args.out_mask) / f.name, mask.astype(float))
        else:
            write_png(args.out_prob, prob)
            if args.out_mask:
                write_png(args.out_mask, mask.astype(float))
    return 0


def _gt_points(path) -> list[dict]:
    data = read_json(path)
    if isinstance(data, dict) and "stenoses" in data:
        data = data["stenoses"]
    try:
        return [{"row": int(g["row"]), "col": int(g["col"]), "severity": float(g["severity"])}
                for g in data]
    except (KeyError, TypeError, ValueError) as exc:
        raise CLIError("read-input", f"{path}: ground truth must be a list of "
                       "{row, col, severity}") from exc


def _detect_one(job):
    path, dcfg, gt_path = job
    mask = read_mask(path)
    graph, lesions = detect_from_mask(mask, dcfg)
    segments = []
    for sid, seg in enumerate(graph.segments):
        d = graph.segment_diameters(sid, mm=True)
        segments.append({"id": sid, "points": len(seg), "start": seg[0], "end": seg[-1],
                         "diameter_mm": np.round(d, 6),
                         "smoothed_mm": np.round(smooth_profile(d, dcfg.window), 6)})
    rep = {"image": Path(path).name, "segments": segments,
           "bifurcations": len(graph.bifurcations), "endpoints": len(graph.endpoints)}
    if gt_path is not None:
        gt = _gt_points(gt_path)
        match = match_ground_truth(lesions, gt, dcfg.radius)
        rep["gt"] = [dict(g, status=s) for g, s in zip(gt, match.gt_status)]
        rep["metrics"] = detection_metrics(lesions, gt, match)
    rep["stenoses"] = [p.to_json() for p in lesions]
    return rep


def _gt_for(stem: str, gt_dir: Path) -> Path | None:
    for cand in (f"{stem}_gt.json", f"{stem}.json"):
        if (gt_dir / cand).exists():
            return gt_dir / cand
    return None


def cmd_detect(args) -> int:
    _, dcfg, _ = build_configs(args)
    overrides = {k: v for k, v in (("spacing", args.spacing), ("radius", args.r)) if v is not None}
    try:
        dcfg = dataclasses.replace(dcfg, **overrides)
    except ValueError as exc:
        raise CLIError("config", str(exc)) from exc
    t0 = time.perf_counter()
    src = Path(args.mask)
    cfg = dataclasses.asdict(dcfg)
    if src.is_dir():
        files = list_images(src)
        gt_dir = Path(args.gt) if args.gt else None
        jobs = []
        for f in files:
            g = None
            if gt_dir is not None:
                g = _gt_for(f.stem, gt_dir)
                if g is None:
                    raise CLIError("detect", f"no ground truth for {f.name} in {gt_dir}")
            jobs.append((f, dcfg, g))
        reps = pmap(_detect_one, jobs, args.jobs)
        out = Path(args.out)
        for f, rep in zip(files, reps):
            write_json(out / f"{f.stem}.json", report("detect", args, cfg, rep, t0=t0))
    else:
        rep = _detect_one((src, dcfg, args.gt))
        write_json(args.out, report("detect", args, cfg, rep, t0=t0))
    return 0


def _pair_files(pred, gt, pred_suffix: str, gt_suffixes) -> list[tuple[Path, Path]]:
    pred_dir, gt_dir = Path(pred), Path(gt)
    preds = sorted(p for p in pred_dir.glob(f"*{pred_suffix}") if not p.stem.endswith("_mask")
                   and not p.stem.endswith("_gt") and not p.stem.endswith("_truth")
                   and p.name != "manifest.json")
    if not preds:
        raise CLIError("evaluate", f"no predictions in {pred_dir}")
    pairs = []
    for p in preds:
        match = next((gt_dir / f"{p.stem}{s}" for s in gt_suffixes if (gt_dir / f"{p.stem}{s}").exists()), None)
        if match is None:
            raise CLIError("evaluate", f"missing ground truth for {p.name}: expected "
                           + " or ".join(str(gt_dir / f"{p.stem}{s}") for s in gt_suffixes))
        pairs.append((p, match))
    return pairs


def _seg_one(pair):
    p, g = pair
    pm, gm = read_mask(p), read_mask(g)
    if pm.shape != gm.shape:
        raise CLIError("evaluate", f"{p.name}: shape {pm.shape} != ground truth {gm.shape}")
    return {"image": p.name, "gt": g.name, **segmentation_metrics(pm, gm)}


def cmd_evaluate(args) -> int:
    t0 = time.perf_counter()
    if args.pred_dir or args.gt_dir:
        if not (args.pred_dir and args.gt_dir):
            raise CLIError("evaluate", "detection mode needs both --pred-dir and --gt-dir")
        return _evaluate_detection(args, t0)
    if not (args.pred and args.gt):
        raise CLIError("evaluate", "segmentation mode needs --pred and --gt")
    if Path(args.pred).is_dir():
        pairs = _pair_files(args.pred, args.gt, ".png", ("_mask.png", ".png"))
    else:
        pairs = [(Path(args.pred), Path(args.gt))]
    per = pmap(_seg_one, pairs, args.jobs)
    write_json(args.out, report("evaluate", args, {"mode": "segmentation", "metrics": METRICS},
                                per, aggregate(per), t0))
    return 0


def _evaluate_detection(args, t0) -> int:
    pairs = _pair_files(args.pred_dir, args.gt_dir, ".json", ("_gt.json",))
    r = args.r if args.r is not None else DetectionConfig().radius
    per, be, bg = [], [], []
    totals = {"tp": 0, "fp": 0, "fn": 0}
    strata = {g: {"tp": 0, "fp": 0, "fn": 0} for g in GRADES}
    for p, g in pairs:
        data = read_json(p)
        pts = data["results"]["stenoses"] if isinstance(data, dict) and "results" in data else data
        pred = [StenosisPoint(int(q["row"]), int(q["col"]), float(q["severity"])) for q in pts]
        gt = _gt_points(g)
        match = match_ground_truth(pred, gt, r)
        m = detection_metrics(pred, gt, match)
        per.append({"image": p.name, "gt": g.name, **m})
        for k in totals:
            totals[k] += m[k]
        for i, j, _ in match.pairs:
            be.append(pred[i].severity)
            bg.append(gt[j]["severity"])
        for grade, row in graded_counts(pred, gt, match).items():
            for k in row:
                strata[grade][k] += row[k]
    agg = {"overall": metrics_from_counts(totals["tp"], totals["fp"], totals["fn"], be, bg),
           "by_grade": strata}
    write_json(args.out, report("evaluate", args, {"mode": "detection", "radius": r}, per, agg, t0))
    return 0


def cmd_gradcheck(args) -> int:
    res = gradient_check(resolve_seed(args), length=args.length, h=args.h)
    res["tolerance"] = args.tol
    res["passed"] = res["max_rel_error"] < args.tol
    text = json.dumps(_plain(res), indent=2, sort_keys=True) + "\n"
    if args.out:
        atomic_write(args.out, text.encode())
    else:
        sys.stdout.write(text)
    return 0 if res["passed"] else 1


def cmd_ssd_bench(args) -> int:
    rep = ssd_benchmark(args.length, tuple(args.chunks), args.heads, args.head_dim, args.state,
                        repeats=args.repeats, seed=resolve_seed(args))
    text = format_benchmark(rep)
    sys.stdout.write(text)
    if args.out:
        if str(args.out).endswith(".json"):
            write_json(args.out, rep)
        else:
            atomic_write(args.out, text.encode())
    return 0 if rep["chunked_faster"] and rep["max_abs_dev"] < 1e-6 else 1


def phfp_impulse_matrix(size: int = 8, depth: int = 1, seed: int = 0) -> np.ndarray:
    """Dense ``(size^2, size^2)`` matrix of a single-channel PHFP operator:
    column ``k`` is the response to the ``k``-th unit impulse."""
    params = init_phfp(np.random.default_rng(seed), 1, depth)
    n = size * size
    eye = np.eye(n).reshape(n, 1, size, size)
    return phfp_forward(eye, params).reshape(n, n).T


def cmd_phfp_impulse(args) -> int:
    if args.depth > max_depth(args.size, args.size):
        raise CLIError("phfp", f"depth {args.depth} too deep for {args.size}x{args.size}")
    m = phfp_impulse_matrix(args.size, args.depth, resolve_seed(args))
    lim = float(np.abs(m).max()) or 1.0
    write_png(args.out, 0.5 + 0.5 * m / lim)
    return 0


# --- parser ------------------------------------------------------------------------


def _positive_int(s):
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {s}")
    return v


def _unit_float(s):
    v = float(s)
    if not 0.0 <= v <= 1.0:
        raise argparse.ArgumentTypeError(f"expected a value in [0, 1], got {s}")
    return v


def _float_list(s):
    try:
        return [float(t) for t in s.split(",") if t]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {s}") from exc


def _int_list(s):
    try:
        return [_positive_int(t) for t in s.split(",") if t]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {s}") from exc


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value file overriding config defaults")
    common.add_argument("--jobs", type=_positive_int, default=1, help="worker processes")
    common.add_argument("--timing", action="store_true", help="add wall time to JSON reports")

    ap = argparse.ArgumentParser(prog="angioseg", description=__doc__.split("\n")[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", metavar="command")
    sub.required = True

    p = sub.add_parser("phantom-gen", parents=[common], help="write a synthetic phantom corpus")
    p.add_argument("--preset", choices=PRESETS, required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--n", type=_positive_int, default=32)
    p.add_argument("--size", type=_positive_int, default=128)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_phantom_gen)

    p = sub.add_parser("vesselness", parents=[common], help="multi-scale vesselness map")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--out-scale", help="optional PNG of the winning scale index")
    p.add_argument("--sigmas", type=_float_list)
    p.add_argument("--beta", type=float)
    p.add_argument("--bright-vessels", action="store_true")
    p.add_argument("--stats", help="optional JSON of per-scale statistics")
    p.set_defaults(func=cmd_vesselness)

    p = sub.add_parser("init-weights", parents=[common], help="write seeded test-mode weights")
    p.add_argument("--seed", type=int)
    p.add_argument("--size", type=_positive_int, default=64, help="input side length")
    p.add_argument("--dtype", choices=("f32", "f64"), default="f32")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_init_weights)

    p = sub.add_parser("forward", parents=[common], help="segmentation forward pass")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--weights")
    src.add_argument("--seed", type=int)
    p.add_argument("--input", required=True, help="PNG file or directory")
    p.add_argument("--out-prob", required=True)
    p.add_argument("--out-mask")
    p.add_argument("--threshold", type=_unit_float, default=0.5)
    p.set_defaults(func=cmd_forward)

    p = sub.add_parser("detect", parents=[common], help="stenosis detection on a binary mask")
    p.add_argument("--mask", required=True, help="PNG file or directory")
    p.add_argument("--spacing", type=float)
    p.add_argument("--r", type=float)
    p.add_argument("--gt", help="ground-truth JSON (or directory for --mask directories)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("evaluate", parents=[common], help="segmentation or detection metrics")
    p.add_argument("--pred")
    p.add_argument("--gt")
    p.add_argument("--pred-dir")
    p.add_argument("--gt-dir")
    p.add_argument("--r", type=float)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("gradcheck", parents=[common], help="finite-difference check of the scan adjoint")
    p.add_argument("--seed", type=int)
    p.add_argument("--length", type=_positive_int, default=8)
    p.add_argument("--h", type=float, default=1e-5)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--out")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("ssd-bench", parents=[common], help="time chunked vs sequential scan")
    p.add_argument("--length", "--L", type=_positive_int, default=4096)
    p.add_argument("--chunks", "--chunk", type=_int_list, default=[8, 16, 32, 64])
    p.add_argument("--heads", type=_positive_int, default=8)
    p.add_argument("--head-dim", type=_positive_int, default=8)
    p.add_argument("--state", type=_positive_int, default=16)
    p.add_argument("--repeats", "--repeat", type=_positive_int, default=3)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help=".txt report or .json")
    p.set_defaults(func=cmd_ssd_bench)

    p = sub.add_parser("phfp-impulse", parents=[common], help="dump a PHFP impulse-response matrix")
    p.add_argument("--size", type=_positive_int, default=8)
    p.add_argument("--depth", type=_positive_int, default=1)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_phfp_impulse)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except CLIError as exc:
        print(f"error [{exc.stage}]: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError, KeyError) as exc:
        print(f"error [{args.command}]: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
