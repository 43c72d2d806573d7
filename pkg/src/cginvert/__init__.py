"""Compound-Gaussian-prior solvers for linear inverse problems.

A desk-scale library pairing an iterative block-coordinate solver with a
trainable unrolled network, plus sensing operators, quality metrics, and a
batch CLI.
"""

__version__ = "0.1.0"
