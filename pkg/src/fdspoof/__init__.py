"""Synthetic-speech detection from first-digit statistics of quantized MFCC coefficients.

The pipeline: decode 16 kHz mono PCM audio, strip exact zeros, peak-normalize,
split into full / silence / voiced views by short-window energy, compute MFCC
matrices, measure how far the first-digit statistics of the quantized
coefficients deviate from a fitted generalized Benford curve, and classify the
resulting divergence features with a from-scratch random forest.
"""

__version__ = "0.1.0"
