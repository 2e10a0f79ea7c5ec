"""Class prototypes, feature-distance weights and pseudo-label rectification."""

from dataclasses import dataclass

import numpy as np

from .tensor import IGNORE_INDEX, softmax

RECTIFY_FLOOR = 1e-12


@dataclass
class PrototypeBank:
    eta: np.ndarray  # (C, D) float64
    counts: np.ndarray  # (C,) pixels seen per class
    tau: float = 1.0
    momentum: float = 0.999
    missing: tuple = ()  # classes initialised from the global mean

    def __post_init__(self):
        self.eta = np.asarray(self.eta, np.float64)
        self.counts = np.asarray(self.counts, np.float64)
        if self.eta.ndim != 2 or self.counts.shape != (self.eta.shape[0],):
            raise ValueError("eta must be (C, D) and counts (C,)")
        if not np.all(np.isfinite(self.eta)):
            raise ValueError("prototype matrix has non-finite entries")
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")

    @property
    def num_classes(self):
        return self.eta.shape[0]

    def to_array(self):
        """Pack as a (C + 1, D + 1) float64 array.

        Rows 0..C-1 hold ``[eta_c, count_c]``; the last row holds
        ``[tau, momentum, 0, ...]``.
        """
        C, D = self.eta.shape
        out = np.zeros((C + 1, max(D + 1, 2)))
        out[:C, :D] = self.eta
        out[:C, D] = self.counts
        out[C, 0] = self.tau
        out[C, 1] = self.momentum
        return out

    @classmethod
    def from_array(cls, arr):
        arr = np.asarray(arr, np.float64)
        C = arr.shape[0] - 1
        D = arr.shape[1] - 1
        return cls(arr[:C, :D].copy(), arr[:C, D].copy(), float(arr[C, 0]), float(arr[C, 1]))


def _flatten(features, labels):
    f = np.asarray(features, np.float64)
    f = f.reshape(-1, f.shape[-1])
    y = np.asarray(labels).reshape(-1)
    if y.shape[0] != f.shape[0]:
        raise ValueError(f"{f.shape[0]} feature vectors but {y.shape[0]} labels")
    keep = y != IGNORE_INDEX
    return f[keep], y[keep]


def _stack(features, labels):
    if isinstance(features, np.ndarray):
        return _flatten(features, labels)
    fs, ys = zip(*(_flatten(f, y) for f, y in zip(features, labels)))
    return np.concatenate(fs), np.concatenate(ys)


def class_means(f, y, num_classes):
    sums = np.zeros((num_classes, f.shape[1]))
    np.add.at(sums, y, f)
    counts = np.bincount(y, minlength=num_classes).astype(np.float64)
    return sums, counts


def init_prototypes(features, labels, num_classes, tau=1.0, momentum=0.999):
    """Per-class mean feature over pixels hard-labelled with that class.

    ``features``/``labels`` are a single (H, W, D)/(H, W) pair or lists of
    them. Classes with no pixels fall back to the global mean and are listed
    in ``bank.missing``.
    """
    f, y = _stack(features, labels)
    if f.shape[0] == 0:
        raise ValueError("cannot initialise prototypes from an empty sample set")
    sums, counts = class_means(f, y, num_classes)
    eta = np.empty_like(sums)
    present = counts > 0
    eta[present] = sums[present] / counts[present, None]
    eta[~present] = f.mean(axis=0)
    missing = tuple(int(c) for c in np.flatnonzero(~present))
    return PrototypeBank(eta, counts, tau, momentum, missing)


def update_prototypes(bank, features, labels):
    """One EMA step per class toward that class's batch mean.

    Classes absent from the batch keep their prototype.
    """
    f, y = _stack(features, labels)
    sums, counts = class_means(f, y, bank.num_classes)
    present = counts > 0
    batch_mean = sums[present] / counts[present, None]
    m = bank.momentum
    bank.eta[present] = m * bank.eta[present] + (1.0 - m) * batch_mean
    bank.counts += counts
    return bank


def feature_weights(f_tilde, bank):
    """softmax over classes of -||f - eta_c|| / tau, per pixel."""
    f = np.asarray(f_tilde, np.float64)
    if f.shape[-1] != bank.eta.shape[1]:
        raise ValueError(f"features have {f.shape[-1]} dims, prototypes {bank.eta.shape[1]}")
    dist = np.linalg.norm(f[..., None, :] - bank.eta, axis=-1)
    return softmax(-dist / bank.tau, np.float64)


def rectify_soft_label(y_hat, omega, report=None):
    """Reweigh soft labels by prototype affinity and renormalize.

    Pixels whose reweighted mass falls below 1e-12 keep the original label;
    ``report`` (a dict) counts them under ``"degenerate"``. Pixels with
    uniform weights are passed through untouched, so that case is exact.
    """
    y = np.asarray(y_hat, np.float64)
    w = np.asarray(omega, np.float64)
    if y.shape != w.shape:
        raise ValueError(f"label shape {y.shape} does not match weights {w.shape}")
    num = w * y
    den = num.sum(axis=-1, keepdims=True)
    bad = den[..., 0] < RECTIFY_FLOOR
    flat = w.max(axis=-1) == w.min(axis=-1)
    keep = (bad | flat)[..., None]
    out = np.where(keep, y, num / np.where(keep, 1.0, den))
    if report is not None:
        report["degenerate"] = report.get("degenerate", 0) + int(bad.sum())
    return out


def ema_update(params, shadow, m):
    """shadow <- m * shadow + (1 - m) * params, for matching dicts of arrays."""
    if set(params) != set(shadow):
        raise ValueError("parameter and shadow keys differ")
    for k in shadow:
        if np.shape(shadow[k]) != np.shape(params[k]):
            raise ValueError(f"shape mismatch for {k!r}")
        shadow[k] = m * shadow[k] + (1.0 - m) * params[k]
    return shadow
