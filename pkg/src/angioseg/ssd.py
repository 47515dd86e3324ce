"""Chunked state-space-duality scan, its sequential reference, and the adjoint.

All three compute, per batch ``b`` and head ``h``, the recurrence::

    dt_t  = softplus(dt_raw_t + dt_bias)
    S_t   = exp(A * dt_t) * S_{t-1} + (x_t * dt_t) outer B_t      S_0 = 0
    y_t   = S_t @ C_t

with ``A = -exp(A_log)``; ``S_t`` is ``(P, N)``.  ``B`` and ``C`` are shared
by all heads (a single group).  Shapes: ``x`` ``(B, L, H, P)``, ``B_in`` and
``C_in`` ``(B, L, N)``, ``dt_raw`` ``(B, L, H)``, ``A_log`` and ``dt_bias``
``(H,)``.
"""
from __future__ import annotations

import numpy as np

from .ops import ShapeError, as_tensor, sigmoid, softplus

# dt_raw on padded steps: softplus underflows to exactly 0, so the state
# neither decays nor receives input there.
PAD_DT_RAW = -1e4


def segsum(a) -> np.ndarray:
    """Lower-triangular segment sums: ``out[..., i, j] = sum(a[..., j+1:i+1])``.

    Entries above the diagonal are ``-inf`` so that ``exp`` masks them to 0.
    """
    a = as_tensor(a)
    t = a.shape[-1]
    cs = np.cumsum(a, axis=-1)
    out = cs[..., :, None] - cs[..., None, :]
    return np.where(np.tril(np.ones((t, t), dtype=bool)), out, -np.inf)


def exp_segsum(a) -> np.ndarray:
    """``exp(segsum(a))`` evaluated only on the lower triangle."""
    a = as_tensor(a)
    t = a.shape[-1]
    cs = np.cumsum(a, axis=-1)
    diff = cs[..., :, None] - cs[..., None, :]
    return np.exp(diff, out=np.zeros_like(diff), where=np.tril(np.ones((t, t), dtype=bool)))


def _check(x, A_log, B_in, C_in, dt_raw, dt_bias):
    x, A_log, B_in, C_in, dt_raw, dt_bias = (
        as_tensor(v) for v in (x, A_log, B_in, C_in, dt_raw, dt_bias)
    )
    if x.ndim != 4:
        raise ShapeError(f"x must be (B, L, H, P), got {x.shape}")
    b, l, h, _ = x.shape
    if B_in.ndim != 3 or B_in.shape[:2] != (b, l):
        raise ShapeError(f"B_in must be ({b}, {l}, N), got {B_in.shape}")
    if C_in.shape != B_in.shape:
        raise ShapeError(f"C_in {C_in.shape} must match B_in {B_in.shape}")
    if dt_raw.shape != (b, l, h):
        raise ShapeError(f"dt_raw must be ({b}, {l}, {h}), got {dt_raw.shape}")
    if A_log.shape != (h,) or dt_bias.shape != (h,):
        raise ShapeError(f"A_log and dt_bias must be ({h},)")
    for name, v in (("x", x), ("A_log", A_log), ("B_in", B_in), ("C_in", C_in),
                    ("dt_raw", dt_raw), ("dt_bias", dt_bias)):
        if not np.all(np.isfinite(v)):
            raise ValueError(f"{name} contains non-finite values")
    return x, A_log, B_in, C_in, dt_raw, dt_bias


def ssm_naive(x, A_log, B_in, C_in, dt_raw, dt_bias, return_states: bool = False):
    """Step-by-step recurrence; the ground truth for the chunked scan."""
    x, A_log, B_in, C_in, dt_raw, dt_bias = _check(x, A_log, B_in, C_in, dt_raw, dt_bias)
    bsz, length, heads, p = x.shape
    n = B_in.shape[-1]
    dt = softplus(dt_raw + dt_bias)
    decay = np.exp(-np.exp(A_log) * dt)  # (B, L, H)
    xbar = x * dt[..., None]
    state = np.zeros((bsz, heads, p, n))
    y = np.empty_like(x)
    states = np.empty((bsz, length, heads, p, n)) if return_states else None
    for t in range(length):
        state = decay[:, t, :, None, None] * state + xbar[:, t, :, :, None] * B_in[:, t, None, None, :]
        y[:, t] = np.einsum("bhpn,bn->bhp", state, C_in[:, t])
        if return_states:
            states[:, t] = state
    return (y, states) if return_states else y


ssm_naive_oracle = ssm_naive


def ssd_chunked(x, A_log, B_in, C_in, dt_raw, dt_bias, chunk_size: int = 16) -> np.ndarray:
    """Block-decomposed scan: intra-chunk masked products plus inter-chunk states.

    Sequences whose length is not a multiple of ``chunk_size`` are padded with
    zero inputs and frozen steps, and the output is truncated back.
    """
    x, A_log, B_in, C_in, dt_raw, dt_bias = _check(x, A_log, B_in, C_in, dt_raw, dt_bias)
    if chunk_size < 1:
        raise ShapeError("chunk_size must be >= 1")
    bsz, length, heads, p = x.shape
    n = B_in.shape[-1]
    q = chunk_size
    pad = (-length) % q
    if pad:
        x = np.pad(x, ((0, 0), (0, pad), (0, 0), (0, 0)))
        B_in = np.pad(B_in, ((0, 0), (0, pad), (0, 0)))
        C_in = np.pad(C_in, ((0, 0), (0, pad), (0, 0)))
        dt_raw = np.pad(dt_raw, ((0, 0), (0, pad), (0, 0)), constant_values=PAD_DT_RAW)
    total = length + pad
    nc = total // q

    dt = softplus(dt_raw + dt_bias)
    x = x * dt[..., None]
    a = -np.exp(A_log) * dt  # (B, T, H)

    xb = x.reshape(bsz, nc, q, heads, p)
    bb = B_in.reshape(bsz, nc, q, n)
    cb = C_in.reshape(bsz, nc, q, n)
    ab = a.reshape(bsz, nc, q, heads).transpose(0, 3, 1, 2)  # (B, H, c, l)
    a_cum = np.cumsum(ab, axis=-1)

    # intra-chunk outputs
    mask = exp_segsum(ab)  # (B, H, c, l, s)
    cbt = cb @ bb.transpose(0, 1, 3, 2)  # (B, c, l, s)
    m = cbt[:, :, None] * mask.transpose(0, 2, 1, 3, 4)  # (B, c, H, l, s)
    y_diag = m @ xb.transpose(0, 1, 3, 2, 4)  # (B, c, H, l, P)

    # state at the end of each chunk
    decay_states = np.exp(a_cum[..., -1:] - a_cum)  # (B, H, c, l)
    xd = xb.transpose(0, 1, 3, 4, 2) * decay_states.transpose(0, 2, 1, 3)[:, :, :, None, :]
    states = xd @ bb[:, :, None]  # (B, c, H, P, N)

    # propagate states across chunks
    states = np.concatenate([np.zeros_like(states[:, :1]), states], axis=1)
    chunk_sums = np.pad(a_cum[..., -1], ((0, 0), (0, 0), (1, 0)))  # (B, H, c+1)
    decay_chunk = exp_segsum(chunk_sums)  # (B, H, z, c)
    flat = states.transpose(0, 2, 1, 3, 4).reshape(bsz, heads, nc + 1, p * n)
    states = (decay_chunk @ flat).reshape(bsz, heads, nc + 1, p, n)[:, :, :-1].transpose(0, 2, 1, 3, 4)

    # contribution of the carried-in state
    y_off = (cb[:, :, None] @ states.transpose(0, 1, 2, 4, 3)) * np.exp(a_cum).transpose(0, 2, 1, 3)[..., None]

    y = (y_diag + y_off).transpose(0, 1, 3, 2, 4).reshape(bsz, total, heads, p)
    return y[:, :length]


def ssd_backward(x, A_log, B_in, C_in, dt_raw, dt_bias, grad_y) -> dict[str, np.ndarray]:
    """Reverse-mode gradients of ``sum(grad_y * y)`` through the recurrence.

    Returns a dict keyed ``x``, ``B_in``, ``C_in``, ``dt_raw``, ``A_log`` and
    ``dt_bias``.
    """
    x, A_log, B_in, C_in, dt_raw, dt_bias = _check(x, A_log, B_in, C_in, dt_raw, dt_bias)
    g = as_tensor(grad_y)
    if g.shape != x.shape:
        raise ShapeError(f"grad_y {g.shape} must match output {x.shape}")
    _, states = ssm_naive(x, A_log, B_in, C_in, dt_raw, dt_bias, return_states=True)
    bsz, length, heads, p = x.shape
    n = B_in.shape[-1]
    pre = dt_raw + dt_bias
    dt = softplus(pre)
    a = -np.exp(A_log)
    decay = np.exp(a * dt)
    xbar = x * dt[..., None]

    gx = np.zeros_like(x)
    gB = np.zeros_like(B_in)
    gC = np.zeros_like(C_in)
    gdt = np.zeros_like(dt)
    ga = np.zeros(heads)
    gS = np.zeros((bsz, heads, p, n))
    for t in range(length - 1, -1, -1):
        s_t = states[:, t]
        gC[:, t] = np.einsum("bhp,bhpn->bn", g[:, t], s_t)
        gS = gS + g[:, t, :, :, None] * C_in[:, t, None, None, :]
        s_prev = states[:, t - 1] if t > 0 else np.zeros_like(s_t)
        gdecay = np.einsum("bhpn,bhpn->bh", gS, s_prev)
        gxbar = np.einsum("bhpn,bn->bhp", gS, B_in[:, t])
        gB[:, t] = np.einsum("bhpn,bhp->bn", gS, xbar[:, t])
        gx[:, t] = gxbar * dt[:, t, :, None]
        d_log = gdecay * decay[:, t]  # gradient w.r.t. a * dt
        gdt[:, t] = np.einsum("bhp,bhp->bh", gxbar, x[:, t]) + d_log * a
        ga += np.sum(d_log * dt[:, t], axis=0)
        gS = gS * decay[:, t, :, None, None]
    gpre = gdt * sigmoid(pre)
    return {
        "x": gx,
        "B_in": gB,
        "C_in": gC,
        "dt_raw": gpre,
        "A_log": ga * a,
        "dt_bias": gpre.sum(axis=(0, 1)),
    }
