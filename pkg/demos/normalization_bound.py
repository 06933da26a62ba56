"""
Why normalization keeps GELU outputs in range
=============================================

Stacking linear maps lets activations grow geometrically.  A normalization
layer in between pins every sample back to zero mean and unit variance, and
GELU never pushes a value above its own magnitude, so the output stays within
the normalized range.
"""

import numpy as np

from gelulab import NormLayer, Tensor, gelu_tanh
from gelulab import analysis

# five linear layers that each double max|z|
plain = analysis.unnormalized_growth_demo(depth=5, scale=2.0)
normed = analysis.unnormalized_growth_demo(depth=5, scale=2.0, normalize=True)
print("layer   max|z| plain   max|z| with layer norm")
for i, (a, b) in enumerate(zip(plain, normed), start=1):
    print(f"{i:5d} {a:14.3f} {b:16.3f}")
print(f"a width-16 layer norm can never exceed sqrt(15) = {np.sqrt(15):.3f}")

# GELU(z) <= |z| on a normalized batch, whatever the input scale
rng = np.random.default_rng(1)
for scale in (0.1, 1.0, 100.0):
    batch = rng.normal(5.0, scale, size=(64, 8, 2, 2))
    z = NormLayer.batch(8)(Tensor(batch), "train").data
    print(f"input std {scale:6.1f}:  max GELU(z) = {gelu_tanh(z).max():.4f}   max|z| = {np.abs(z).max():.4f}")

# the same check the verify command runs, over 100 random batches per kind
for claim in analysis.composition_sweep(100, seed=0):
    print(claim.claim_id, f"{claim.measured:+.2e}", claim.status)
