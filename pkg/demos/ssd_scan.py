"""Chunked vs sequential selective scan.

Both evaluate the same linear recurrence; the chunked form trades the
step-by-step loop for a few batched matrix products per block.
"""
import time

import numpy as np

from angioseg.bench import gradient_check, random_ssd_inputs
from angioseg.ssd import ssd_chunked, ssm_naive

rng = np.random.default_rng(0)
inp = random_ssd_inputs(rng, batch=1, length=1024, heads=4, head_dim=16, d_state=16)
args = [inp[k] for k in ("x", "A_log", "B_in", "C_in", "dt_raw", "dt_bias")]

t0 = time.perf_counter()
y_seq = ssm_naive(*args)
t_seq = time.perf_counter() - t0
print(f"sequential        {t_seq * 1e3:7.1f} ms")

for q in (8, 16, 32, 64, 128):
    t0 = time.perf_counter()
    y = ssd_chunked(*args, chunk_size=q)
    dt = time.perf_counter() - t0
    print(f"chunked Q={q:<4d}    {dt * 1e3:7.1f} ms   max|dev| {np.abs(y - y_seq).max():.1e}")

# The hand-written adjoint agrees with central differences.
rep = gradient_check(seed=0, length=8)
for name, err in sorted(rep["errors"].items()):
    print(f"grad {name:8s} rel err {err:.1e}")
