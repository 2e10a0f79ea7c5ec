"""Dense per-pixel tensors and the elementary probabilistic operations.

Maps are plain numpy arrays laid out (H, W, C). Storage is float32; entropy
and loss reductions are carried out in float64.
"""

import numpy as np

IGNORE_INDEX = 255
PROB_TOL = 1e-5


def _check_finite(x, name="input"):
    if not np.all(np.isfinite(x)):
        bad = int(np.size(x) - np.count_nonzero(np.isfinite(x)))
        raise ValueError(f"{name} contains {bad} non-finite value(s)")


def as_map(x, name="tensor"):
    """Coerce to an (H, W, C) float array, rejecting other ranks."""
    x = np.asarray(x)
    if x.ndim != 3:
        raise ValueError(f"{name} must have rank 3 (H, W, C), got shape {x.shape}")
    return x


def check_probability_map(p, name="probability map"):
    p = as_map(p, name)
    _check_finite(p, name)
    if p.size and (p.min() < 0.0 or p.max() > 1.0):
        raise ValueError(f"{name} has values outside [0, 1]")
    sums = p.sum(axis=-1, dtype=np.float64)
    if sums.size and np.max(np.abs(sums - 1.0)) > PROB_TOL:
        raise ValueError(f"{name} pixel sums deviate from 1 by more than {PROB_TOL}")
    return p


def softmax(logits, dtype=np.float32):
    """Channel-wise softmax with max subtraction.

    The result keeps ``dtype`` (float32 storage by default); pass
    ``np.float64`` for gradient work.
    """
    z = np.asarray(logits, dtype=np.float64)
    _check_finite(z, "logits")
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return (e / e.sum(axis=-1, keepdims=True)).astype(dtype, copy=False)


def log_softmax(logits):
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def xlogx(p):
    """Elementwise p*log(p) with 0*log(0) = 0, in float64."""
    p = np.asarray(p, dtype=np.float64)
    out = np.zeros_like(p)
    pos = p > 0
    out[pos] = p[pos] * np.log(p[pos])
    return out


def pixel_entropy(p):
    """Shannon entropy in nats of every pixel distribution.

    Returns an (H, W, 1) float64 map; a leading-rank-1 input (a single
    distribution) also works and returns shape (1,).
    """
    return -xlogx(p).sum(axis=-1, keepdims=True)


def combine_branches(main_logits, aux_logits, w=0.5, dtype=np.float32):
    """softmax(main + w * aux): the two-branch prediction."""
    main_logits = np.asarray(main_logits)
    aux_logits = np.asarray(aux_logits)
    if main_logits.shape != aux_logits.shape:
        raise ValueError(
            f"branch shapes differ: main {main_logits.shape} vs aux {aux_logits.shape}"
        )
    return softmax(np.asarray(main_logits, np.float64) + w * np.asarray(aux_logits, np.float64), dtype)


def argmax_labels(p):
    """Per-pixel argmax; numpy picks the lowest index on ties."""
    return np.argmax(np.asarray(p), axis=-1).astype(np.int64)


def one_hot(labels, num_classes, dtype=np.float64):
    labels = np.asarray(labels)
    out = np.zeros(labels.shape + (num_classes,), dtype=dtype)
    valid = labels != IGNORE_INDEX
    idx = np.where(valid, labels, 0)
    np.put_along_axis(out, idx[..., None], 1.0, axis=-1)
    out[~valid] = 0.0
    return out
