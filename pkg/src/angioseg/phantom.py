"""Synthetic vessel phantoms with exact ground truth.

A phantom is a set of branches (polylines or quadratic Bezier curves) swept
by a disk whose radius may dip at programmed stenoses::

    r(s) = r0 * (1 - b * exp(-((s - s0) / extent) ** 2))

with ``s`` the arc length along the branch.  The image is dark vessels on a
bright background, optionally blurred and noised with a seeded generator.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .vesselness import gaussian_smooth

PRESETS = ("tubes", "bifurcations", "stenoses", "mixed")
TUBE_WIDTHS = (2, 3, 5, 7, 9)
PRESET_SEVERITIES = (0.15, 0.35, 0.60, 0.80)
# Integer radii and long lesions keep the 2*EDT diameter quantisation
# within 0.1 of the programmed severity.
STENOSIS_RADII = (7.0, 8.0, 9.0, 10.0)
SAMPLE_STEP = 0.25  # px between curve samples (4x pixel density)


@dataclass(frozen=True)
class Stenosis:
    position: float  # fraction of branch length, in (0, 1)
    severity: float  # fractional radius reduction b, in (0, 1)
    extent: float = 6.0  # longitudinal scale in px

    def __post_init__(self):
        if not 0.0 < self.position < 1.0:
            raise ValueError("stenosis position must lie in (0, 1)")
        if not 0.0 < self.severity < 1.0:
            raise ValueError("stenosis severity must lie in (0, 1)")
        if self.extent <= 0:
            raise ValueError("stenosis extent must be positive")


@dataclass(frozen=True)
class Branch:
    points: tuple[tuple[float, float], ...]  # (row, col) control points
    radius: float
    kind: str = "polyline"  # or "quadratic" (exactly 3 control points)
    stenoses: tuple[Stenosis, ...] = ()

    def __post_init__(self):
        if self.radius < 1.0:
            raise ValueError("branch radius must be >= 1 px")
        if self.kind not in ("polyline", "quadratic"):
            raise ValueError(f"unknown branch kind {self.kind!r}")
        if len(self.points) < 2 or (self.kind == "quadratic" and len(self.points) != 3):
            raise ValueError("polyline needs >= 2 points, quadratic exactly 3")


@dataclass(frozen=True)
class PhantomSpec:
    branches: tuple[Branch, ...]
    size: tuple[int, int] = (128, 128)
    vessel_intensity: float = 0.25
    background_intensity: float = 0.85
    noise_sigma: float = 0.0
    blur_sigma: float = 1.0
    seed: int = 0


@dataclass
class StenosisTruth:
    row: int
    col: int
    severity: float
    branch: int
    radius_min: float


@dataclass
class PhantomTruth:
    mask: np.ndarray
    centerlines: list[np.ndarray]  # per branch, (n, 2) integer (row, col)
    stenoses: list[StenosisTruth]
    radius_profiles: list[np.ndarray]  # per branch, (n, 2) columns (arc length, radius)

    def gt_points(self) -> list[dict]:
        return [{"row": s.row, "col": s.col, "severity": s.severity} for s in self.stenoses]


def _dense_curve(branch: Branch, n: int = 2048) -> np.ndarray:
    pts = np.asarray(branch.points, dtype=np.float64)
    if branch.kind == "quadratic":
        t = np.linspace(0.0, 1.0, n)[:, None]
        return (1 - t) ** 2 * pts[0] + 2 * (1 - t) * t * pts[1] + t**2 * pts[2]
    segs = []
    for a, b in zip(pts[:-1], pts[1:]):
        t = np.linspace(0.0, 1.0, max(2, n // (len(pts) - 1)))[:, None]
        segs.append(a + t * (b - a) if not segs else (a + t * (b - a))[1:])
    return np.concatenate(segs)


def sample_branch(branch: Branch) -> tuple[np.ndarray, np.ndarray, float]:
    """Resample a branch at ~SAMPLE_STEP spacing.

    Returns ``(points, arc_length, total_length)``.  Each stenosis centre is
    inserted as an exact sample so the programmed minimum radius is attained.
    """
    dense = _dense_curve(branch)
    seg = np.linalg.norm(np.diff(dense, axis=0), axis=1)
    s_dense = np.concatenate([[0.0], np.cumsum(seg)])
    length = float(s_dense[-1])
    if length <= 0:
        raise ValueError("branch has zero length")
    n = max(2, int(np.ceil(length / SAMPLE_STEP)) + 1)
    s = np.linspace(0.0, length, n)
    extra = [st.position * length for st in branch.stenoses]
    if extra:
        s = np.unique(np.concatenate([s, extra]))
    pts = np.stack([np.interp(s, s_dense, dense[:, 0]), np.interp(s, s_dense, dense[:, 1])], axis=1)
    return pts, s, length


def radius_profile(branch: Branch, s: np.ndarray, length: float) -> np.ndarray:
    r = np.full_like(s, branch.radius)
    for st in branch.stenoses:
        s0 = st.position * length
        r = r * (1.0 - st.severity * np.exp(-(((s - s0) / st.extent) ** 2)))
    return r


def render_phantom(spec: PhantomSpec) -> tuple[np.ndarray, PhantomTruth]:
    h, w = spec.size
    mask = np.zeros((h, w), dtype=bool)
    centerlines, stenoses, profiles = [], [], []
    for bi, branch in enumerate(spec.branches):
        pts, s, length = sample_branch(branch)
        if pts[:, 0].min() < 0 or pts[:, 1].min() < 0 or pts[:, 0].max() > h - 1 or pts[:, 1].max() > w - 1:
            raise ValueError(f"branch {bi} leaves the {h}x{w} canvas")
        r = radius_profile(branch, s, length)
        for (pr, pc), rad in zip(pts, r):
            r0, r1 = max(0, int(np.floor(pr - rad))), min(h - 1, int(np.ceil(pr + rad)))
            c0, c1 = max(0, int(np.floor(pc - rad))), min(w - 1, int(np.ceil(pc + rad)))
            rr, cc = np.mgrid[r0 : r1 + 1, c0 : c1 + 1]
            mask[r0 : r1 + 1, c0 : c1 + 1] |= (rr - pr) ** 2 + (cc - pc) ** 2 <= rad * rad
        cl = np.rint(pts).astype(int)
        keep = np.ones(len(cl), dtype=bool)
        keep[1:] = np.any(cl[1:] != cl[:-1], axis=1)
        # a deep narrowing can shrink the disk below the pixel grid; keep the lumen connected
        mask[cl[:, 0], cl[:, 1]] = True
        centerlines.append(cl[keep])
        profiles.append(np.stack([s, r], axis=1))
        for st in branch.stenoses:
            k = int(np.argmin(np.abs(s - st.position * length)))
            stenoses.append(
                StenosisTruth(int(cl[k, 0]), int(cl[k, 1]), float(st.severity), bi, float(r[k]))
            )
    image = np.where(mask, spec.vessel_intensity, spec.background_intensity).astype(np.float64)
    if spec.blur_sigma > 0:
        image = gaussian_smooth(image, spec.blur_sigma)
    if spec.noise_sigma > 0:
        rng = np.random.default_rng(spec.seed)
        image = image + rng.normal(0.0, spec.noise_sigma, size=image.shape)
    image = np.clip(image, 0.0, 1.0)
    return image, PhantomTruth(mask, centerlines, stenoses, profiles)


# --- presets -----------------------------------------------------------------


def _curve_across(rng: np.random.Generator, size: int, margin: float, bend: float) -> tuple:
    """A quadratic curve crossing the canvas at a random angle."""
    theta = rng.uniform(0, np.pi)
    centre = np.array([size / 2, size / 2]) + rng.uniform(-size * 0.08, size * 0.08, 2)
    half = size / 2 - margin
    d = np.array([np.sin(theta), np.cos(theta)])
    normal = np.array([-d[1], d[0]])
    p0, p2 = centre - half * d, centre + half * d
    p1 = centre + rng.uniform(-bend, bend) * normal
    pts = np.clip(np.stack([p0, p1, p2]), margin, size - 1 - margin)
    return tuple(map(tuple, pts.round(3)))


def _tube_spec(k: int, rng, size: int) -> PhantomSpec:
    width = TUBE_WIDTHS[k % len(TUBE_WIDTHS)]
    pts = _curve_across(rng, size, margin=12.0, bend=size * 0.15)
    return PhantomSpec((Branch(pts, width / 2.0, "quadratic"),), (size, size), blur_sigma=0.5)


def _y_branches(rng, size: int, r_trunk: float, stenosis: Stenosis | None = None) -> tuple[Branch, ...]:
    root = np.array([size - 14.0, size / 2 + rng.uniform(-10, 10)])
    fork = np.array([size / 2 + rng.uniform(-6, 6), size / 2 + rng.uniform(-6, 6)])
    spread = rng.uniform(0.45, 0.8)
    ang = rng.uniform(-0.2, 0.2)
    tips = []
    for sgn in (-1, 1):
        a = ang + sgn * spread
        tip = fork + (size / 2 - 16) * np.array([-np.cos(a), np.sin(a)])
        tips.append(np.clip(tip, 12, size - 13))
    trunk = Branch((tuple(root.round(3)), tuple(fork.round(3))), r_trunk)
    r_d = max(2.0, 0.8 * r_trunk)
    d1 = Branch((tuple(fork.round(3)), tuple(tips[0].round(3))), r_d,
                stenoses=(stenosis,) if stenosis else ())
    d2 = Branch((tuple(fork.round(3)), tuple(tips[1].round(3))), r_d)
    return trunk, d1, d2


def _bifurcation_spec(k: int, rng, size: int) -> PhantomSpec:
    return PhantomSpec(_y_branches(rng, size, rng.uniform(2.5, 4.0)), (size, size), blur_sigma=0.5)


def _stenosis_spec(k: int, rng, size: int) -> PhantomSpec:
    b = PRESET_SEVERITIES[k % len(PRESET_SEVERITIES)]
    radius = STENOSIS_RADII[(k // len(PRESET_SEVERITIES)) % len(STENOSIS_RADII)]
    st = Stenosis(float(rng.uniform(0.4, 0.6)), b, float(rng.uniform(10.0, 14.0)))
    pts = _curve_across(rng, size, margin=14.0, bend=size * 0.12)
    return PhantomSpec((Branch(pts, radius, "quadratic", (st,)),), (size, size), blur_sigma=0.5)


def _mixed_spec(k: int, rng, size: int) -> PhantomSpec:
    b = PRESET_SEVERITIES[k % len(PRESET_SEVERITIES)]
    st = Stenosis(float(rng.uniform(0.4, 0.6)), b, float(rng.uniform(5.0, 8.0)))
    branches = _y_branches(rng, size, rng.uniform(3.5, 5.0), st)
    noise = (0.0, 0.02, 0.05)[k % 3]
    return PhantomSpec(branches, (size, size), noise_sigma=noise, blur_sigma=0.8,
                       seed=int(rng.integers(2**31)))


_BUILDERS = {
    "tubes": _tube_spec,
    "bifurcations": _bifurcation_spec,
    "stenoses": _stenosis_spec,
    "mixed": _mixed_spec,
}


def preset_specs(preset: str, seed: int = 0, n: int = 32, size: int = 128) -> list[PhantomSpec]:
    if preset not in _BUILDERS:
        raise ValueError(f"unknown preset {preset!r}; choose from {', '.join(PRESETS)}")
    rng = np.random.default_rng(seed)
    return [_BUILDERS[preset](k, rng, size) for k in range(n)]


def phantom_corpus(preset: str, seed: int = 0, n: int = 32, size: int = 128):
    return [render_phantom(spec) for spec in preset_specs(preset, seed, n, size)]


def truth_to_json(spec: PhantomSpec, truth: PhantomTruth) -> dict:
    return {
        "spec": asdict(spec),
        "stenoses": [asdict(s) for s in truth.stenoses],
        "centerlines": [cl.tolist() for cl in truth.centerlines],
        "radius_profiles": [np.round(p, 6).tolist() for p in truth.radius_profiles],
    }
