"""A two-branch per-pixel classifier and its training loop.

The model maps a D_in feature vector per pixel through a tanh layer of width
D into two linear heads (main and auxiliary). It stands in for a
segmentation network with two decoders so that the whole loss stack and the
prototype rectification run with exact gradients.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from . import losses
from .losses import LossConfig
from .prototypes import ema_update, feature_weights, init_prototypes, rectify_soft_label, update_prototypes
from .tensor import argmax_labels, softmax

log = logging.getLogger(__name__)

PARAM_NAMES = ("A", "a", "Bm", "bm", "Ba", "ba")


@dataclass
class TrainConfig:
    lr: float = 2e-2
    lr_min: float = 2e-3
    period: int = 200
    batch_size: int = 1
    epochs: int = 150
    seed: int = 0
    hidden: int = 16
    encoder_momentum: float = 0.999
    rectify: bool = True
    tau: float = 1.0
    proto_momentum: float = 0.999
    loss: LossConfig = field(default_factory=LossConfig)

    def __post_init__(self):
        if isinstance(self.loss, dict):
            self.loss = LossConfig(**self.loss)
        if not self.lr > 0 or not self.lr_min > 0:
            raise ValueError("learning rates must be positive")
        if self.lr_min > self.lr:
            raise ValueError("lr_min must not exceed lr")
        if self.period < 2:
            raise ValueError("cyclic period must be at least 2 steps")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")
        if not 0 <= self.encoder_momentum < 1:
            raise ValueError("encoder_momentum must lie in [0, 1)")


class TrainingDiverged(RuntimeError):
    def __init__(self, step, breakdown):
        self.step = step
        self.breakdown = breakdown
        super().__init__(f"non-finite loss at step {step}: {breakdown.to_json()}")


class ToyModel:
    def __init__(self, params, branch_w=0.5):
        self.params = {k: np.asarray(params[k], np.float64) for k in PARAM_NAMES}
        self.branch_w = branch_w
        C = self.params["Bm"].shape[0]
        if self.params["Ba"].shape[0] != C:
            raise ValueError("main and auxiliary heads must share the output width")

    @classmethod
    def init(cls, d_in, hidden, num_classes, seed=0, branch_w=0.5):
        rng = np.random.default_rng(seed)
        shapes = {
            "A": (hidden, d_in), "a": (hidden,),
            "Bm": (num_classes, hidden), "bm": (num_classes,),
            "Ba": (num_classes, hidden), "ba": (num_classes,),
        }
        return cls({k: rng.uniform(-0.1, 0.1, shapes[k]) for k in PARAM_NAMES}, branch_w)

    @property
    def d_in(self):
        return self.params["A"].shape[1]

    @property
    def num_classes(self):
        return self.params["Bm"].shape[0]

    def copy(self):
        return ToyModel({k: v.copy() for k, v in self.params.items()}, self.branch_w)

    def features(self, x, params=None):
        P = self.params if params is None else params
        x = np.asarray(x, np.float64)
        if x.shape[-1] != P["A"].shape[1]:
            raise ValueError(f"expected {P['A'].shape[1]} input features, got {x.shape[-1]}")
        return np.tanh(x @ P["A"].T + P["a"])

    def forward(self, x):
        """Return (hidden, main logits, aux logits, combined probabilities)."""
        P = self.params
        h = self.features(x)
        zm = h @ P["Bm"].T + P["bm"]
        za = h @ P["Ba"].T + P["ba"]
        return h, zm, za, softmax(zm + self.branch_w * za, np.float64)

    def predict(self, x):
        return argmax_labels(self.forward(x)[3])

    def backward(self, x, h, d_main, d_aux):
        """Parameter gradients given logit gradients from ``loss_gradients``."""
        P = self.params
        x = np.asarray(x, np.float64).reshape(-1, self.d_in)
        h2 = h.reshape(-1, h.shape[-1])
        gm = d_main.reshape(-1, d_main.shape[-1])
        ga = d_aux.reshape(-1, d_aux.shape[-1])
        dh = gm @ P["Bm"] + ga @ P["Ba"]
        dpre = dh * (1.0 - h2 ** 2)
        return {
            "A": dpre.T @ x, "a": dpre.sum(0),
            "Bm": gm.T @ h2, "bm": gm.sum(0),
            "Ba": ga.T @ h2, "ba": ga.sum(0),
        }


def cyclic_lr(step, cfg):
    """Triangular wave starting at ``cfg.lr``, reaching ``cfg.lr_min`` at
    half a period."""
    phase = (step % cfg.period) / cfg.period
    return cfg.lr - (cfg.lr - cfg.lr_min) * (1.0 - abs(1.0 - 2.0 * phase))


def _batch(samples, idx):
    x = np.stack([samples[i][0] for i in idx])
    y = np.stack([samples[i][1].y_hat for i in idx]).astype(np.float64)
    W = np.stack([samples[i][1].entropy_weight for i in idx]).astype(np.float64)
    return x, y, W


def loss_and_grads(model, x, y_hat, W, cfg):
    """Loss breakdown and parameter gradients of the per-pixel mean loss.

    The breakdown keeps the summed L_all; the gradients are divided by the
    pixel count so the step size does not depend on image size.
    """
    h, zm, za, _ = model.forward(x)
    br, gm, ga = losses.loss_gradients(zm, za, y_hat, W, cfg)
    n = gm.size // gm.shape[-1]
    grads = model.backward(x, h, gm / n, ga / n)
    return br, grads


def train(model, samples, cfg=None):
    """Train on ``samples`` = [(features (H, W, D_in), SoftLabelMap), ...].

    Each step: forward, rectify the batch's soft labels with prototypes built
    on momentum-encoder features, loss and analytic gradients, SGD step, EMA
    update of the momentum encoder, prototype update. Returns the trained
    model (updated in place) and a list of per-step log records.
    """
    cfg = cfg or TrainConfig()
    model.branch_w = cfg.loss.branch_w
    history = []
    if cfg.epochs == 0 or not samples:
        return model, history
    rng = np.random.default_rng(cfg.seed)
    shadow = {k: v.copy() for k, v in model.params.items()}
    bank = None
    if cfg.rectify:
        feats = [model.features(x, shadow) for x, _ in samples]
        labels = [argmax_labels(s.y_hat) for _, s in samples]
        bank = init_prototypes(feats, labels, model.num_classes, cfg.tau, cfg.proto_momentum)
    step = 0
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(samples))
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            x, y_hat, W = _batch(samples, idx)
            report = {}
            f_tilde = None
            if bank is not None:
                f_tilde = model.features(x, shadow)
                y_hat = rectify_soft_label(y_hat, feature_weights(f_tilde, bank), report)
            br, grads = loss_and_grads(model, x, y_hat, W, cfg.loss)
            if not np.isfinite(br.L_all) or not all(np.all(np.isfinite(g)) for g in grads.values()):
                raise TrainingDiverged(step, br)
            lr = cyclic_lr(step, cfg)
            for k in PARAM_NAMES:
                model.params[k] -= lr * grads[k]
            ema_update(model.params, shadow, cfg.encoder_momentum)
            if bank is not None:
                update_prototypes(bank, f_tilde, argmax_labels(y_hat))
            rec = {"step": step, "epoch": epoch, "lr": lr, "images": int(len(idx))}
            rec.update(br.to_json())
            rec["rectify_degenerate"] = report.get("degenerate", 0)
            history.append(rec)
            step += 1
        log.debug("epoch %d done, last L_all %.4f", epoch, history[-1]["all"])
    model.shadow = shadow
    model.bank = bank
    return model, history
