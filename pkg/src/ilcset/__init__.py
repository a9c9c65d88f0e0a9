"""Iterative learning control with input-space equivalence transforms
for discrete linear time-varying MIMO systems.
"""

__version__ = "0.1.0"
