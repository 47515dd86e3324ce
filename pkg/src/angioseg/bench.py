"""Finite-difference gradient check and timing of the chunked scan."""
from __future__ import annotations

import time

import numpy as np

from .ssd import ssd_backward, ssd_chunked, ssm_naive

GROUPS = ("x", "A_log", "B_in", "C_in", "dt_raw", "dt_bias")


def random_ssd_inputs(rng: np.random.Generator, batch: int = 1, length: int = 8, heads: int = 2,
                      head_dim: int = 4, d_state: int = 8) -> dict[str, np.ndarray]:
    return {
        "x": rng.normal(size=(batch, length, heads, head_dim)),
        "A_log": rng.normal(scale=0.5, size=heads),
        "B_in": rng.normal(size=(batch, length, d_state)),
        "C_in": rng.normal(size=(batch, length, d_state)),
        "dt_raw": rng.normal(size=(batch, length, heads)),
        "dt_bias": rng.normal(scale=0.5, size=heads),
    }


def _args(inp):
    return tuple(inp[k] for k in GROUPS)


def gradient_check(seed: int = 0, length: int = 8, h: float = 1e-5, **shape) -> dict:
    """Analytic adjoint against central differences of ``sum(g * y)``.

    The error per group is normwise, ``|g_a - g_fd| / max(|g_fd|, 1e-12)``.
    """
    rng = np.random.default_rng(seed)
    inp = random_ssd_inputs(rng, length=length, **shape)
    g = rng.normal(size=inp["x"].shape)
    analytic = ssd_backward(*_args(inp), g)
    errors = {}
    for name in GROUPS:
        base = inp[name]
        fd = np.empty_like(base)
        for idx in np.ndindex(base.shape):
            vals = []
            for step in (h, -h):
                pert = dict(inp)
                p = base.copy()
                p[idx] += step
                pert[name] = p
                vals.append(float(np.sum(g * ssm_naive(*_args(pert)))))
            fd[idx] = (vals[0] - vals[1]) / (2 * h)
        errors[name] = float(np.linalg.norm(analytic[name] - fd) / max(np.linalg.norm(fd), 1e-12))
    return {"seed": seed, "length": length, "h": h, "errors": errors,
            "max_rel_error": max(errors.values())}


def _best_time(fn, repeats: int) -> tuple[float, np.ndarray]:
    best, out = np.inf, None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def ssd_benchmark(length: int = 4096, chunk_sizes=(8, 16, 32, 64), heads: int = 8,
                  head_dim: int = 8, d_state: int = 16, batch: int = 1, repeats: int = 3,
                  seed: int = 0) -> dict:
    """Best-of-``repeats`` wall time of the sequential scan and each chunk size."""
    rng = np.random.default_rng(seed)
    inp = random_ssd_inputs(rng, batch, length, heads, head_dim, d_state)
    t_naive, ref = _best_time(lambda: ssm_naive(*_args(inp)), repeats)
    rows = []
    for q in chunk_sizes:
        t, y = _best_time(lambda: ssd_chunked(*_args(inp), chunk_size=q), repeats)
        rows.append({"chunk_size": int(q), "seconds": t, "speedup": t_naive / t,
                     "max_abs_dev": float(np.max(np.abs(y - ref)))})
    best = min(rows, key=lambda r: r["seconds"])
    return {
        "shape": {"batch": batch, "length": length, "heads": heads, "head_dim": head_dim,
                  "d_state": d_state},
        "repeats": repeats, "seed": seed, "naive_seconds": t_naive, "chunked": rows,
        "best_chunk_size": best["chunk_size"],
        "chunked_faster": best["seconds"] < t_naive,
        "max_abs_dev": max(r["max_abs_dev"] for r in rows),
    }


def format_benchmark(rep: dict) -> str:
    s = rep["shape"]
    lines = [
        f"ssd-bench  B={s['batch']} L={s['length']} H={s['heads']} P={s['head_dim']} "
        f"N={s['d_state']}  best of {rep['repeats']}",
        f"naive sequential scan   {rep['naive_seconds'] * 1e3:9.2f} ms",
    ]
    for r in rep["chunked"]:
        lines.append(f"chunked Q={r['chunk_size']:<4d}          {r['seconds'] * 1e3:9.2f} ms  "
                     f"x{r['speedup']:.2f}  max|dev|={r['max_abs_dev']:.2e}")
    lines.append(f"best Q={rep['best_chunk_size']}  chunked faster: {rep['chunked_faster']}  "
                 f"max|dev| over all Q: {rep['max_abs_dev']:.2e}")
    return "\n".join(lines) + "\n"
