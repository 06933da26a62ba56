"""
A tour of the GELU curve
========================

Where the minimum sits, how steep the curve gets, and how far the cheap tanh
form drifts from the erf form.  Run with ``python demos/gelu_tour.py``.
"""

import numpy as np

from gelulab import gelu_exact, gelu_tanh
from gelulab import analysis
from gelulab.activations import gelu_derivative_exact, gelu_derivative_tanh

# a coarse look first
x = np.linspace(-4, 4, 9)
for xi, t, e in zip(x, gelu_tanh(x), gelu_exact(x)):
    print(f"x={xi:+.1f}  tanh form {t:+.6f}  erf form {e:+.6f}")

# GELU dips below zero before climbing; the dip is shallow
x_star, f_star = analysis.find_minimum()
print(f"\nminimum {f_star:.6f} at x = {x_star:.6f}")

# steepest point of the curve: the derivative overshoots 1 a little
sup = analysis.derivative_sup()
print(f"sup |GELU'| = {sup:.6f} at x = {analysis.derivative_argsup():.4f}")

# the term x * phi(x) in the derivative peaks at x = 1
value, where = analysis.first_term_max()
print(f"x * phi(x) peaks at {value:.5f} (x = {where:.4f})")

# how good is the tanh shortcut?
print(f"\nmax |tanh form - erf form|    = {analysis.approximation_error():.3e}")
print(f"max |derivative difference|   = {analysis.derivative_approximation_error():.3e}")

# the gap as a function of x, on a few points
x = np.array([-3.0, -2.7, -1.0, 0.0, 1.0, 2.7, 3.0])
gap = gelu_tanh(x) - gelu_exact(x)
dgap = gelu_derivative_tanh(x) - gelu_derivative_exact(x)
for xi, g, d in zip(x, gap, dgap):
    print(f"x={xi:+.1f}  value gap {g:+.2e}  slope gap {d:+.2e}")

# curvature: positive near the origin, negative far out, flipping at +-sqrt(2)
for xi in (0.0, 1.0, np.sqrt(2), 3.0):
    print(f"GELU''({xi:.4f}) = {float(analysis.second_derivative(xi)):+.6f}")
