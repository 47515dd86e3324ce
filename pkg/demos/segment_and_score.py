"""Seeded network forward pass and segmentation scoring.

With test-mode weights the network is untrained, so the point is the
plumbing: shapes through every stage, a probability map in (0, 1), and
metrics that compare a threshold of it against the phantom mask.
"""
from angioseg.network import NetworkConfig, init_weights, network_forward
from angioseg.phantom import phantom_corpus
from angioseg.seg_metrics import segmentation_metrics

cfg = NetworkConfig(input_size=(64, 64))
weights = init_weights(cfg, seed=0)
image, truth = phantom_corpus("bifurcations", seed=0, n=1, size=64)[0]

out = network_forward(image[None, None], weights, cfg, return_features=True)
for name, f in out.features.items():
    print(f"{name:12s} {f.shape}")
print("probability range:", float(out.prob.min()), float(out.prob.max()))

pred = out.prob[0, 0] > 0.5
print(segmentation_metrics(pred, truth.mask))
# scoring the truth against itself is the sanity floor
print(segmentation_metrics(truth.mask, truth.mask))
