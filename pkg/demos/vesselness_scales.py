"""Vesselness on synthetic tubes: which scale answers for which width?

Run with ``python demos/vesselness_scales.py``.
"""
import numpy as np

from angioseg.phantom import phantom_corpus, preset_specs
from angioseg.vesselness import VesselnessConfig, case_forward

# The "tubes" preset cycles through five lumen widths on a dark-vessel background.
specs = preset_specs("tubes", seed=0, n=10)
corpus = phantom_corpus("tubes", seed=0, n=10)

print("width  centreline/background  modal sigma")
for spec, (image, truth) in zip(specs, corpus):
    field = case_forward(image)
    cl = np.concatenate(truth.centerlines)
    on = field.fused[cl[:, 0], cl[:, 1]].mean()
    off = field.fused[~truth.mask].mean()
    picks = np.bincount(field.argmax_scale()[cl[:, 0], cl[:, 1]], minlength=3)
    sigma = VesselnessConfig().sigmas[int(picks.argmax())]
    print(f"{2 * spec.branches[0].radius:5.1f}  {on / off:21.1f}  {sigma:g}")

# A flat image has no curvature, so every response is exactly zero.
flat = case_forward(np.full((48, 48), 0.3))
print("flat image max response:", flat.fused.max())

# Scaling the intensities moves the response but not where its peak sits.
image = corpus[0][0]
peaks = {a: tuple(int(i) for i in np.unravel_index(case_forward(a * image).fused.argmax(), image.shape)) for a in (0.5, 1, 2, 10)}
print("peak location under intensity scaling:", peaks)
