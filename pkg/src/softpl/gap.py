"""Entropy-based domain gap between a source model and a target image."""

import math
from dataclasses import dataclass

import numpy as np

from .tensor import as_map, pixel_entropy

SUM_TO_ONE = "sum-to-one"
RAW = "raw"
MODES = (SUM_TO_ONE, RAW)


@dataclass(frozen=True)
class GapScore:
    source: str
    G: float
    pixel_count: int


@dataclass(frozen=True)
class SimilarityWeights:
    sources: tuple
    weights: tuple
    mode: str

    def __len__(self):
        return len(self.weights)

    def as_array(self):
        return np.asarray(self.weights, dtype=np.float64)


def domain_gap(p, num_classes=None, source=""):
    """Summed per-pixel entropy of ``p`` divided by log(C).

    Larger values mean the source is farther from the image. The sum is not
    averaged over pixels.
    """
    p = as_map(p, "prediction")
    C = p.shape[-1] if num_classes is None else num_classes
    if p.shape[-1] != C:
        raise ValueError(f"prediction has {p.shape[-1]} channels, expected {C}")
    if C < 2:
        raise ValueError("domain gap needs at least 2 classes")
    total = float(pixel_entropy(p).sum(dtype=np.float64))
    return GapScore(source, max(total, 0.0) / math.log(C), int(np.prod(p.shape[:-1])))


def similarity_weights(gaps, mode=SUM_TO_ONE, epsilon=1e-6):
    """Inverse-gap weights, optionally normalized to sum to one.

    Gaps are clamped below at ``epsilon`` before inversion.
    """
    gaps = list(gaps)
    if not gaps:
        raise ValueError("similarity_weights needs at least one gap score")
    if mode not in MODES:
        raise ValueError(f"unknown weight mode {mode!r}; expected one of {MODES}")
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    raw = np.array([1.0 / max(g.G, epsilon) for g in gaps])
    if mode == SUM_TO_ONE:
        raw = raw / raw.sum()
    return SimilarityWeights(tuple(g.source for g in gaps), tuple(float(v) for v in raw), mode)


def uniform_weights(sources, mode=SUM_TO_ONE):
    """Equal weights: the plain-sum fusion used when similarity is switched off."""
    sources = tuple(sources)
    if not sources:
        raise ValueError("uniform_weights needs at least one source")
    value = 1.0 / len(sources) if mode == SUM_TO_ONE else 1.0
    return SimilarityWeights(sources, (value,) * len(sources), mode)
