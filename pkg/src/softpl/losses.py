"""Training losses for soft pseudo-labels and their analytic logit gradients.

All per-pixel functions accept arrays shaped (..., C) and return (...).
Reductions are float64 sums in row-major order.
"""

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .fusion import entropy_weight_map
from .tensor import argmax_labels, log_softmax, one_hot, pixel_entropy, xlogx

LOG_FLOOR = 1e-12


@dataclass
class LossConfig:
    alpha: float = 0.1
    beta: float = 1.0
    lambda_scale: float = 1.0
    lambda_ent: float = 0.1
    lambda_kld: float = 1.0
    label_clamp: tuple = (1e-4, 1.0)
    branch_w: float = 0.5

    def __post_init__(self):
        self.label_clamp = tuple(float(v) for v in self.label_clamp)
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be non-negative")
        lo, hi = self.label_clamp
        if not 0 < lo <= hi:
            raise ValueError(f"label clamp {self.label_clamp} must satisfy 0 < lo <= hi")
        if self.lambda_scale <= 0:
            raise ValueError("lambda_scale must be positive")


def cross_entropy(p, y):
    """-sum_c y log p, with p floored at 1e-12 inside the log."""
    p = np.asarray(p, np.float64)
    y = np.asarray(y, np.float64)
    return -(y * np.log(np.maximum(p, LOG_FLOOR))).sum(axis=-1)


def _delta(y_hat, cfg):
    """One-hot of the argmax label and its clamped copy used inside logs."""
    y_hat = np.asarray(y_hat)
    d = one_hot(argmax_labels(y_hat), y_hat.shape[-1])
    return d, np.clip(d, *cfg.label_clamp)


def symmetric_ce(p, y_hat, cfg=None):
    cfg = cfg or LossConfig()
    d, d_clamped = _delta(y_hat, cfg)
    return cfg.alpha * cross_entropy(p, d) + cfg.beta * cross_entropy(d_clamped, p)


def weighted_sce(sce, W):
    W = np.asarray(W, np.float64)
    if W.ndim == np.ndim(sce) + 1:
        W = W[..., 0]
    if W.shape != np.shape(sce):
        raise ValueError(f"weight map {W.shape} does not match loss map {np.shape(sce)}")
    return W * sce


def kld_uncertainty(p_main, p_aux):
    """KL(main || aux) per pixel; aux floored at 1e-12 inside the log."""
    p_main = np.asarray(p_main, np.float64)
    p_aux = np.asarray(p_aux, np.float64)
    if p_main.shape != p_aux.shape:
        raise ValueError(f"branch shapes differ: {p_main.shape} vs {p_aux.shape}")
    kl = (xlogx(p_main) - p_main * np.log(np.maximum(p_aux, LOG_FLOOR))).sum(axis=-1)
    return np.maximum(kl, 0.0)


def rectified_loss(w_sce, kld):
    return np.exp(-np.asarray(kld, np.float64)) * w_sce


def entropy_loss(p):
    return pixel_entropy(p)[..., 0]


@dataclass
class LossBreakdown:
    ce: np.ndarray
    sce: np.ndarray
    w_sce: np.ndarray
    kld: np.ndarray
    rect: np.ndarray
    ent: np.ndarray
    all: np.ndarray  # per-pixel summand of L_all
    totals: dict = field(default_factory=dict)

    @property
    def L_all(self):
        return self.totals["all"]

    def to_json(self):
        return {k: float(v) for k, v in self.totals.items()}


def _sum(x):
    return float(np.sum(np.asarray(x, np.float64).ravel()))


def _prepare(main_logits, aux_logits, y_hat, W, cfg):
    main_logits = np.asarray(main_logits, np.float64)
    aux_logits = np.asarray(aux_logits, np.float64)
    if main_logits.shape != aux_logits.shape:
        raise ValueError(f"branch shapes differ: {main_logits.shape} vs {aux_logits.shape}")
    if np.shape(y_hat) != main_logits.shape:
        raise ValueError(f"label shape {np.shape(y_hat)} does not match logits {main_logits.shape}")
    if W is None:
        W = entropy_weight_map(y_hat, cfg.lambda_scale)
    W = np.asarray(W, np.float64)
    if W.ndim == main_logits.ndim:
        W = W[..., 0]
    if W.shape != main_logits.shape[:-1]:
        raise ValueError(f"weight map {W.shape} does not match pixels {main_logits.shape[:-1]}")
    log_p = log_softmax(main_logits + cfg.branch_w * aux_logits)
    log_pm = log_softmax(main_logits)
    log_pa = np.maximum(log_softmax(aux_logits), np.log(LOG_FLOOR))
    d, d_clamped = _delta(y_hat, cfg)
    return np.exp(log_p), log_p, np.exp(log_pm), log_pm, log_pa, d, d_clamped, W


def _breakdown(p, log_p, p_m, log_pm, log_pa, d, d_clamped, W, cfg):
    ce = cross_entropy(p, d)
    sce = cfg.alpha * ce + cfg.beta * cross_entropy(d_clamped, p)
    w_sce = W * sce
    kld = np.maximum((p_m * (log_pm - log_pa)).sum(-1), 0.0)
    rect = rectified_loss(w_sce, kld)
    ent = -(p * log_p).sum(-1)
    per_pixel = rect + cfg.lambda_ent * ent + cfg.lambda_kld * kld
    totals = {
        "ce": _sum(ce), "sce": _sum(sce), "w_sce": _sum(w_sce), "kld": _sum(kld),
        "rect": _sum(rect), "ent": _sum(ent), "all": _sum(per_pixel),
    }
    return LossBreakdown(ce, sce, w_sce, kld, rect, ent, per_pixel, totals)


def total_loss(main_logits, aux_logits, y_hat, W=None, cfg=None):
    """Full loss breakdown for branch logits against soft labels ``y_hat``.

    ``W`` is the label-entropy weight map; when omitted it is derived from
    ``y_hat`` with ``cfg.lambda_scale``.
    """
    cfg = cfg or LossConfig()
    return _breakdown(*_prepare(main_logits, aux_logits, y_hat, W, cfg), cfg)


def loss_gradients(main_logits, aux_logits, y_hat, W=None, cfg=None):
    """Analytic gradient of L_all with respect to both branches' logits.

    ``y_hat`` and ``W`` are constants. Returns ``(breakdown, d_main, d_aux)``
    with gradients shaped like the logits.
    """
    cfg = cfg or LossConfig()
    terms = _prepare(main_logits, aux_logits, y_hat, W, cfg)
    p, log_p, p_m, log_pm, log_pa, d, d_clamped, W = terms
    br = _breakdown(*terms, cfg)

    # SCE through the combined softmax: forward term alpha*(p - d); the
    # reverse term is linear in p with coefficients a_c = -log(clamp(d_c)).
    a = -np.log(d_clamped)
    g_rce = cfg.beta * p * (a - (a * p).sum(-1, keepdims=True))
    # Forward CE is flat where the 1e-12 floor is active.
    live = ((p * d).sum(-1) >= LOG_FLOOR)[..., None]
    g_sce = g_rce + live * cfg.alpha * (p - d)

    g_ent = -p * (log_p + br.ent[..., None])

    shrink = np.exp(-br.kld)
    d_u = (shrink * W)[..., None] * g_sce + cfg.lambda_ent * g_ent

    # KL(main || aux): d/dz_main = p_m*(log p_m - log p_a - KL), d/dz_aux = p_a - p_m.
    dk_main = p_m * (log_pm - log_pa - br.kld[..., None])
    dk_aux = np.exp(log_pa) - p_m
    coef = (cfg.lambda_kld - shrink * br.w_sce)[..., None]

    d_main = d_u + coef * dk_main
    d_aux = cfg.branch_w * d_u + coef * dk_aux
    return br, d_main, d_aux


def breakdown_json(breakdown, **extra):
    doc = dict(extra)
    doc.update(breakdown.to_json())
    return json.dumps(doc, sort_keys=True)


def config_dict(cfg):
    d = asdict(cfg)
    d["label_clamp"] = list(cfg.label_clamp)
    return d
