"""
Twenty-one activations side by side
====================================

Values and slopes of every activation the library knows, sampled on a few
points, plus a rough throughput figure for each.
"""

import time

import numpy as np

from gelulab.activations import ACTIVATION_NAMES, Activation, derivative_values, forward_values

x = np.array([-3.0, -1.0, -0.1, 0.0, 0.1, 1.0, 3.0])
print("x".ljust(14) + " ".join(f"{v:+8.2f}" for v in x))

for name in ACTIVATION_NAMES:
    act = Activation(name)
    slope = act._slope(x, False, None)  # eval mode: RReLU uses its mean slope
    y = forward_values(act.kind, x, act.params, slope)
    print(name.ljust(14) + " ".join(f"{v:+8.4f}" for v in y))

print("\nslopes")
for name in ("relu", "leaky_relu", "elu", "gelu", "gelu_exact", "sigmoid", "softsign"):
    act = Activation(name)
    d = derivative_values(act.kind, x, act.params, act._slope(x, False, None))
    print(name.ljust(14) + " ".join(f"{v:+8.4f}" for v in d))

# a quick timing: 1M float32 values through each forward pass
big = np.random.default_rng(0).normal(0, 3, 1 << 20).astype(np.float32)
print("\nforward throughput (Melem/s)")
for name in ACTIVATION_NAMES:
    act = Activation(name)
    slope = act._slope(big, False, None)
    t0 = time.perf_counter()
    forward_values(act.kind, big, act.params, slope)
    print(f"{name:14s} {big.size / (time.perf_counter() - t0) / 1e6:8.1f}")
