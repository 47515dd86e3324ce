"""From a programmed narrowing back to a measured one.

Each phantom in the "stenoses" preset carries one lesion with a known
severity. We skeletonise the true mask, read diameters off the distance
transform, and compare what the detector finds with what was drawn.
"""
import numpy as np

from angioseg.phantom import phantom_corpus
from angioseg.stenosis import detect_from_mask, match_ground_truth, metrics_from_counts, scct_grade

tp = fp = fn = 0
est, ref = [], []
for k, (image, truth) in enumerate(phantom_corpus("stenoses", seed=0, n=8)):
    graph, found = detect_from_mask(truth.mask)
    gt = truth.gt_points()
    m = match_ground_truth(found, gt, r=10.0)
    tp, fp, fn = tp + m.tp, fp + m.fp, fn + m.fn
    for i, j, dist in m.pairs:
        b, b0 = found[i].severity, gt[j]["severity"]
        est.append(b)
        ref.append(b0)
        print(f"image {k}: programmed {b0:.2f} ({scct_grade(b0)}), measured {b:.2f} ({scct_grade(b)}), "
              f"offset {dist:.1f} px, {len(graph.segments)} segments")

met = metrics_from_counts(tp, fp, fn, est, ref)
print({k: round(v, 4) if isinstance(v, float) else v for k, v in met.items()})
print("worst severity error:", float(np.max(np.abs(np.subtract(est, ref)))))
