"""Centerline extraction, diameter profiles and stenosis grading.

Pipeline on a binary vessel mask::

    skeleton  = skeletonize(mask)                 Zhang-Suen thinning
    d(p)      = 2 * EDT(mask)[p]                   diameter in px, times spacing for mm
    graph     = decompose_segments(skeleton)       endpoint/bifurcation to endpoint/bifurcation
    lesions   = detect_stenosis(graph, config)     b = 1 - d_min / d_ref per segment

followed by greedy point matching against ground truth and the detection
metrics TPR, PPV, ARMSE and RRMSE.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import ndimage

# (dr, dc) for P2..P9: N, NE, E, SE, S, SW, W, NW
RING = ((-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1))
EIGHT = np.ones((3, 3), dtype=bool)
GRADES = ("minimal", "mild", "moderate", "severe")
GRADE_EDGES = (0.01, 0.25, 0.50, 0.70)


@dataclass(frozen=True)
class DetectionConfig:
    radius: float = 10.0  # match radius r, px
    min_length: int = 20  # L_thresh, points
    min_diameter_mm: float = 1.8  # D_thresh
    min_severity: float = 0.10  # b_thresh
    spacing: float = 0.30  # mm per px
    window: int = 5  # profile smoothing, odd

    def __post_init__(self):
        if min(self.radius, self.min_length, self.min_diameter_mm, self.min_severity,
               self.spacing, self.window) <= 0:
            raise ValueError("detection parameters must be positive")
        if self.window % 2 == 0:
            raise ValueError("smoothing window must be odd")


@dataclass
class StenosisPoint:
    row: int
    col: int
    severity: float
    d_min: float = 0.0  # mm
    d_ref: float = 0.0  # mm
    segment: int = -1
    grade: str | None = None
    status: str | None = None  # TP/FP for predictions, matched/FN for ground truth

    def __post_init__(self):
        if self.grade is None:
            self.grade = scct_grade(self.severity)

    def to_json(self) -> dict:
        return asdict(self)


@dataclass
class CenterlineGraph:
    skeleton: np.ndarray
    points: np.ndarray  # (n, 2) raster-ordered skeleton pixels
    degree: np.ndarray  # (n,)
    segments: list[np.ndarray]  # each (m, 2), an 8-connected path
    diameter: np.ndarray | None = None  # (H, W) px, zero off the skeleton
    spacing: float = 1.0

    def degree_map(self) -> np.ndarray:
        out = np.zeros(self.skeleton.shape, dtype=int)
        out[self.points[:, 0], self.points[:, 1]] = self.degree
        return out

    def segment_diameters(self, k: int, mm: bool = True) -> np.ndarray:
        if self.diameter is None:
            raise ValueError("graph has no diameters; use build_centerline_graph")
        seg = self.segments[k]
        d = self.diameter[seg[:, 0], seg[:, 1]]
        return d * self.spacing if mm else d

    @property
    def bifurcations(self) -> np.ndarray:
        return self.points[self.degree >= 3]

    @property
    def endpoints(self) -> np.ndarray:
        return self.points[self.degree == 1]


def scct_grade(b: float) -> str | None:
    """SCCT bin for a fractional severity; ``None`` below 1 %."""
    if b < GRADE_EDGES[0]:
        return None
    return GRADES[int(np.searchsorted(GRADE_EDGES, b, side="right")) - 1]


# --- thinning -----------------------------------------------------------------


def _ring(img: np.ndarray) -> list[np.ndarray]:
    p = np.pad(img, 1)
    h, w = img.shape
    return [p[1 + dr : 1 + dr + h, 1 + dc : 1 + dc + w] for dr, dc in RING]


def _zhang_suen_pass(img: np.ndarray, first: bool) -> np.ndarray:
    n = [v.astype(np.int8) for v in _ring(img)]
    p2, p3, p4, p5, p6, p7, p8, p9 = n
    b = sum(n)
    a = sum(((n[i] == 0) & (n[(i + 1) % 8] == 1)).astype(np.int8) for i in range(8))
    if first:
        c1, c2 = p2 * p4 * p6, p4 * p6 * p8
    else:
        c1, c2 = p2 * p4 * p8, p2 * p6 * p8
    return img & (b >= 2) & (b <= 6) & (a == 1) & (c1 == 0) & (c2 == 0)


def _neighbours_connected(nb: list[bool]) -> bool:
    """Are the set positions of a 3x3 ring 8-connected without the centre?"""
    idx = [i for i in range(8) if nb[i]]
    seen = {idx[0]}
    stack = [idx[0]]
    while stack:
        i = stack.pop()
        r, c = RING[i]
        for j in idx:
            if j not in seen and max(abs(RING[j][0] - r), abs(RING[j][1] - c)) == 1:
                seen.add(j)
                stack.append(j)
    return len(seen) == len(idx)


def _remove_redundant(skel: np.ndarray) -> np.ndarray:
    """Drop non-endpoint pixels whose neighbours stay connected without them.

    This clears the 2x2 blocks and staircase corners that parallel thinning
    can leave behind, without changing connectivity or endpoints.
    """
    skel = skel.copy()
    h, w = skel.shape
    changed = True
    while changed:
        changed = False
        for r, c in zip(*np.nonzero(skel)):
            nb = [0 <= r + dr < h and 0 <= c + dc < w and bool(skel[r + dr, c + dc]) for dr, dc in RING]
            if sum(nb) >= 2 and _neighbours_connected(nb):
                skel[r, c] = False
                changed = True
    return skel


def skeletonize(mask) -> np.ndarray:
    """Zhang-Suen thinning to a fixpoint, then redundant-pixel cleanup.

    A component that thinning would erase entirely (a 2x2 square, say) keeps
    its innermost pixel, so the 8-connected component count is preserved.
    """
    img = np.asarray(mask).astype(bool)
    skel = img.copy()
    while True:
        d1 = _zhang_suen_pass(skel, True)
        skel &= ~d1
        d2 = _zhang_suen_pass(skel, False)
        skel &= ~d2
        if not d1.any() and not d2.any():
            break
    labels, n = ndimage.label(img, structure=EIGHT)
    if n:
        kept = np.bincount(labels[skel], minlength=n + 1)
        if np.any(kept[1:] == 0):
            edt = euclidean_distance_transform(img)
            for lab in np.nonzero(kept[1:] == 0)[0] + 1:
                rr, cc = np.nonzero(labels == lab)
                k = int(np.argmax(edt[rr, cc]))
                skel[rr[k], cc[k]] = True
    return _remove_redundant(skel)


# --- distance transform ---------------------------------------------------------


def _lower_envelope(f: np.ndarray) -> np.ndarray:
    """1-D squared distance transform of sampled function ``f`` (Felzenszwalb)."""
    n = len(f)
    out = np.empty(n)
    v = np.zeros(n, dtype=int)
    z = np.empty(n + 1)
    k = 0
    z[0], z[1] = -np.inf, np.inf
    finite = np.isfinite(f)
    start = int(np.argmax(finite))
    if not finite[start]:
        out[:] = np.inf
        return out
    v[0] = start
    for q in range(start + 1, n):
        if not finite[q]:
            continue
        while True:
            p = v[k]
            s = ((f[q] + q * q) - (f[p] + p * p)) / (2 * q - 2 * p)
            if s <= z[k]:
                k -= 1
            else:
                break
        k += 1
        v[k] = q
        z[k] = s
        z[k + 1] = np.inf
    k = 0
    for q in range(n):
        while z[k + 1] < q:
            k += 1
        out[q] = (q - v[k]) ** 2 + f[v[k]]
    return out


def euclidean_distance_transform(mask) -> np.ndarray:
    """Exact distance from each foreground pixel to the nearest background
    pixel; everything outside the image counts as background."""
    fg = np.pad(np.asarray(mask).astype(bool), 1)
    if not fg.any():
        return np.zeros(fg.shape)[1:-1, 1:-1]
    h, w = fg.shape
    # column pass: 1-D distance to the nearest background pixel
    idx = np.arange(h)[:, None]
    above = np.maximum.accumulate(np.where(~fg, idx, -1), axis=0)
    below = np.minimum.accumulate(np.where(~fg, idx, 2 * h)[::-1], axis=0)[::-1]
    g = np.minimum(idx - above, below - idx).astype(np.float64)
    f = g * g
    out = np.empty_like(f)
    for r in range(h):
        if fg[r].any():
            out[r] = _lower_envelope(f[r])
        else:
            out[r] = 0.0
    return np.sqrt(out)[1:-1, 1:-1]


def diameter_map(mask, skeleton, spacing: float = 1.0, mm: bool = False) -> np.ndarray:
    """``2 * EDT`` on skeleton pixels (px, or mm with ``mm=True``); 0 elsewhere."""
    mask = np.asarray(mask).astype(bool)
    skeleton = np.asarray(skeleton).astype(bool)
    if mask.shape != skeleton.shape:
        raise ValueError(f"mask {mask.shape} and skeleton {skeleton.shape} differ")
    outside = skeleton & ~mask
    if outside.any():
        r, c = np.argwhere(outside)[0]
        raise ValueError(f"skeleton point ({r}, {c}) lies outside the mask")
    d = np.where(skeleton, 2.0 * euclidean_distance_transform(mask), 0.0)
    return d * spacing if mm else d


# --- segments -------------------------------------------------------------------


def _neighbours(skel, r, c):
    h, w = skel.shape
    return [(r + dr, c + dc) for dr, dc in RING
            if 0 <= r + dr < h and 0 <= c + dc < w and skel[r + dr, c + dc]]


def decompose_segments(skeleton) -> CenterlineGraph:
    """Split a thin skeleton into node-to-node paths.

    Nodes are pixels whose degree is not 2.  Rings without nodes become one
    segment starting at their lexicographically smallest pixel.
    """
    skel = np.asarray(skeleton).astype(bool)
    pts = np.argwhere(skel)
    nbrs = {(int(r), int(c)): _neighbours(skel, r, c) for r, c in pts}
    degree = np.array([len(nbrs[(int(r), int(c))]) for r, c in pts], dtype=int)
    node = {p for p, nb in nbrs.items() if len(nb) != 2}
    used: set = set()
    segments: list[np.ndarray] = []

    def walk(start, nxt):
        path = [start, nxt]
        prev, cur = start, nxt
        while cur not in node:
            used.add(cur)
            step = next(q for q in nbrs[cur] if q != prev)
            if step == start:
                break  # ring closed
            path.append(step)
            prev, cur = cur, step
        return path

    for p in sorted(node):
        if not nbrs[p]:
            segments.append(np.array([p]))
            continue
        for q in nbrs[p]:
            if q in node:
                if p < q:
                    segments.append(np.array([p, q]))
            elif q not in used:
                segments.append(np.array(walk(p, q)))
    for p in sorted(nbrs):
        if p in node or p in used:
            continue
        used.add(p)
        segments.append(np.array(walk(p, min(nbrs[p]))))
    return CenterlineGraph(skel, pts, degree, segments)


def build_centerline_graph(mask, spacing: float = 1.0) -> CenterlineGraph:
    mask = np.asarray(mask).astype(bool)
    graph = decompose_segments(skeletonize(mask))
    graph.diameter = diameter_map(mask, graph.skeleton)
    graph.spacing = spacing
    return graph


# --- detection ------------------------------------------------------------------


def smooth_profile(d, window: int = 5) -> np.ndarray:
    """Centred moving average whose window shrinks near the ends."""
    d = np.asarray(d, dtype=np.float64)
    half = window // 2
    cs = np.concatenate([[0.0], np.cumsum(d)])
    i = np.arange(len(d))
    lo, hi = np.maximum(0, i - half), np.minimum(len(d), i + half + 1)
    return (cs[hi] - cs[lo]) / (hi - lo)


def interior_extrema(profile) -> tuple[list[int], list[int]]:
    """Indices of interior local minima and maxima; a flat run counts once,
    at its middle, if both neighbouring values lie on the same side."""
    v = np.asarray(profile, dtype=np.float64)
    starts = np.concatenate([[0], np.nonzero(np.diff(v) != 0)[0] + 1])
    ends = np.concatenate([starts[1:], [len(v)]])
    minima, maxima = [], []
    for k in range(1, len(starts) - 1):
        left, here, right = v[starts[k] - 1], v[starts[k]], v[ends[k]]
        mid = int((starts[k] + ends[k] - 1) // 2)
        if here < left and here < right:
            minima.append(mid)
        elif here > left and here > right:
            maxima.append(mid)
    return minima, maxima


def segment_severity(d_mm, config: DetectionConfig = DetectionConfig()):
    """``(index, b, d_min, d_ref)`` for one diameter profile, or ``None``."""
    d_mm = np.asarray(d_mm, dtype=np.float64)
    if len(d_mm) < config.min_length or d_mm.max() < config.min_diameter_mm:
        return None
    sm = smooth_profile(d_mm, config.window)
    minima, maxima = interior_extrema(sm)
    if not minima:
        return None
    k = min(minima, key=lambda i: (sm[i], i))
    d_ref = max(sm[i] for i in maxima) if maxima else float(d_mm.max())
    d_min = float(sm[k])
    if d_ref <= 0 or d_min > d_ref:
        return None
    return k, 1.0 - d_min / d_ref, d_min, float(d_ref)


def detect_stenosis(graph: CenterlineGraph, config: DetectionConfig = DetectionConfig()) -> list[StenosisPoint]:
    out = []
    for sid, seg in enumerate(graph.segments):
        res = segment_severity(graph.segment_diameters(sid, mm=True), config)
        if res is None:
            continue
        k, b, d_min, d_ref = res
        if b >= config.min_severity:
            out.append(StenosisPoint(int(seg[k, 0]), int(seg[k, 1]), float(b), d_min, d_ref, sid))
    return out


def detect_from_mask(mask, config: DetectionConfig = DetectionConfig()):
    graph = build_centerline_graph(mask, config.spacing)
    return graph, detect_stenosis(graph, config)


# --- matching and metrics ------------------------------------------------------------


@dataclass
class MatchResult:
    pairs: list[tuple[int, int, float]]  # (pred index, gt index, distance)
    tp: int
    fp: int
    fn: int
    pred_status: list[str] = field(default_factory=list)
    gt_status: list[str] = field(default_factory=list)


def _as_point(p):
    if isinstance(p, StenosisPoint):
        return p.row, p.col, p.severity
    return p["row"], p["col"], p["severity"]


def match_ground_truth(pred, gt, r: float = 10.0) -> MatchResult:
    """Greedy nearest-first matching within radius ``r`` (inclusive); ties go
    to the lower GT index, then the lower prediction index."""
    pp = [_as_point(p) for p in pred]
    gg = [_as_point(g) for g in gt]
    cand = []
    for i, (pr, pc, _) in enumerate(pp):
        for j, (gr, gc, _) in enumerate(gg):
            dist = math.hypot(pr - gr, pc - gc)
            if dist <= r:
                cand.append((dist, j, i))
    cand.sort()
    pm, gm = {}, {}
    for dist, j, i in cand:
        if i not in pm and j not in gm:
            pm[i], gm[j] = j, dist
    pairs = sorted((i, j, gm[j]) for i, j in pm.items())
    res = MatchResult(pairs, len(pairs), len(pp) - len(pairs), len(gg) - len(pairs))
    res.pred_status = ["TP" if i in pm else "FP" for i in range(len(pp))]
    res.gt_status = ["matched" if j in gm else "FN" for j in range(len(gg))]
    for objs, status in ((pred, res.pred_status), (gt, res.gt_status)):
        for o, s in zip(objs, status):
            if isinstance(o, StenosisPoint):
                o.status = s
    return res


def _ratio(num, den):
    return num / den if den else None


def detection_metrics(pred, gt, match: MatchResult) -> dict:
    """TPR, PPV, ARMSE and RRMSE; undefined values are ``None``."""
    out = {"tp": match.tp, "fp": match.fp, "fn": match.fn,
           "tpr": _ratio(match.tp, match.tp + match.fn),
           "ppv": _ratio(match.tp, match.tp + match.fp),
           "armse": None, "rrmse": None}
    if match.pairs:
        be = np.array([_as_point(pred[i])[2] for i, _, _ in match.pairs])
        bg = np.array([_as_point(gt[j])[2] for _, j, _ in match.pairs])
        out["armse"] = float(np.sqrt(np.mean((be - bg) ** 2)))
        if np.all(bg > 0):
            out["rrmse"] = float(np.sqrt(np.mean(((be - bg) / bg) ** 2)))
    return out


def metrics_from_counts(tp: int, fp: int, fn: int, be=(), bg=()) -> dict:
    be, bg = np.asarray(be, dtype=float), np.asarray(bg, dtype=float)
    out = {"tp": tp, "fp": fp, "fn": fn, "tpr": _ratio(tp, tp + fn), "ppv": _ratio(tp, tp + fp),
           "armse": None, "rrmse": None}
    if len(be):
        out["armse"] = float(np.sqrt(np.mean((be - bg) ** 2)))
        if np.all(bg > 0):
            out["rrmse"] = float(np.sqrt(np.mean(((be - bg) / bg) ** 2)))
    return out


def graded_counts(pred, gt, match: MatchResult) -> dict:
    """TP/FN per ground-truth grade and FP per predicted grade."""
    rows = {g: {"tp": 0, "fp": 0, "fn": 0} for g in GRADES}
    for j, s in enumerate(match.gt_status):
        g = scct_grade(_as_point(gt[j])[2])
        if g:
            rows[g]["tp" if s == "matched" else "fn"] += 1
    for i, s in enumerate(match.pred_status):
        g = scct_grade(_as_point(pred[i])[2])
        if s == "FP" and g:
            rows[g]["fp"] += 1
    return rows
