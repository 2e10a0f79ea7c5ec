"""Multi-source soft pseudo-labels with domain-gap weighting, on a toy
two-branch segmenter and a synthetic scenario harness."""

__version__ = "0.1.0"
