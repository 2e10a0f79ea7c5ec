"""Fusion of converted source predictions into soft pseudo-labels."""

from dataclasses import dataclass

import numpy as np

from .tensor import IGNORE_INDEX, argmax_labels, as_map, pixel_entropy, softmax


@dataclass
class SoftLabelMap:
    y_hat: np.ndarray  # (H, W, C_T) float32
    entropy_weight: np.ndarray  # (H, W, 1) float32
    provenance: list  # [(source, weight)]


def fuse(converted, weights, temperature=1.0):
    """softmax(sum_i weight_i * p_i) per pixel.

    ``converted`` are target-space maps, one per source, in the same order as
    ``weights``. ``temperature`` divides the weighted sum before the softmax;
    1.0 is the plain form.
    """
    converted = [as_map(p, "converted map") for p in converted]
    w = weights.as_array() if hasattr(weights, "as_array") else np.asarray(weights, np.float64)
    if not converted:
        raise ValueError("fuse needs at least one source map")
    if len(converted) != len(w):
        raise ValueError(f"{len(converted)} maps but {len(w)} weights")
    shape = converted[0].shape
    for p in converted[1:]:
        if p.shape != shape:
            raise ValueError(f"map shapes differ: {shape} vs {p.shape}")
    if not temperature > 0:
        raise ValueError("fusion temperature must be positive")
    acc = np.zeros(shape, dtype=np.float64)
    for wi, p in zip(w, converted):
        acc += wi * p.astype(np.float64)
    return softmax(acc / temperature)


def entropy_weight_map(y_hat, lambda_scale=1.0):
    """exp(-lambda_scale * entropy) per pixel, shape (H, W, 1)."""
    if not lambda_scale > 0:
        raise ValueError("lambda_scale must be positive")
    return np.exp(-lambda_scale * pixel_entropy(y_hat)).astype(np.float32)


def hard_label(y_hat):
    """Argmax labels with lowest-index tie-breaking."""
    return argmax_labels(as_map(y_hat, "soft label map"))


def make_soft_labels(converted, weights, lambda_scale=1.0, use_entropy_weight=True,
                     temperature=1.0):
    y_hat = fuse(converted, weights, temperature)
    if use_entropy_weight:
        W = entropy_weight_map(y_hat, lambda_scale)
    else:
        W = np.ones(y_hat.shape[:-1] + (1,), dtype=np.float32)
    prov = list(zip(weights.sources, weights.weights))
    return SoftLabelMap(y_hat, W, prov)


def unanimity_labels(converted):
    """Hard labels kept only where every source's argmax agrees.

    Diagnostic baseline mirroring selection by source agreement; disputed
    pixels get IGNORE_INDEX.
    """
    labels = [hard_label(p) for p in converted]
    out = labels[0].copy()
    agree = np.ones(out.shape, dtype=bool)
    for lab in labels[1:]:
        agree &= lab == out
    out[~agree] = IGNORE_INDEX
    return out
