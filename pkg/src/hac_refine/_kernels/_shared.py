"""Constants shared by both kernel backends."""

import math

# Pole of the cubic B-spline direct filter.
CUBIC_POLE = math.sqrt(3.0) - 2.0

# Terms of the causal-init geometric sum below |pole|^k ~ 1e-17 are dropped;
# both backends truncate identically so outputs stay bit-equal.
SPLINE_INIT_HORIZON = 30

# Finite stand-in for "no feature on this line yet" in the EDT passes.
LARGE_DIST = 1e30
