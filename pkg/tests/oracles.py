"""Independent reference implementations used as test oracles."""

import math

import numpy as np

from softpl.losses import LossConfig, total_loss


def fd_gradients(main, aux, y_hat, W, cfg, h=1e-4):
    """Central finite differences of the summed L_all w.r.t. both logit maps."""
    out = []
    for which in (0, 1):
        base = [main.copy(), aux.copy()]
        g = np.zeros_like(base[which])
        for idx in np.ndindex(base[which].shape):
            plus = [b.copy() for b in base]
            minus = [b.copy() for b in base]
            plus[which][idx] += h
            minus[which][idx] -= h
            lp = total_loss(*plus, y_hat, W, cfg).L_all
            lm = total_loss(*minus, y_hat, W, cfg).L_all
            g[idx] = (lp - lm) / (2 * h)
        out.append(g)
    return out


def relative_error(a, b):
    num = np.linalg.norm((a - b).ravel())
    den = max(np.linalg.norm(a.ravel()), np.linalg.norm(b.ravel()), 1e-8)
    return num / den


def random_loss_case(rng, shape):
    """Random logits, soft labels and weight map plus a swept LossConfig."""
    C = shape[-1]
    main = rng.normal(scale=2.0, size=shape)
    aux = rng.normal(scale=2.0, size=shape)
    y = rng.dirichlet(np.ones(C), size=shape[:-1])
    W = rng.uniform(0.0, 1.0, size=shape[:-1] + (1,))
    cfg = LossConfig(
        alpha=float(rng.choice([0.0, 0.1, 1.0])),
        beta=float(rng.choice([0.0, 1.0, 2.0])),
        lambda_ent=float(rng.choice([0.0, 0.1, 1.0])),
        lambda_kld=float(rng.choice([0.0, 0.1, 1.0])),
        branch_w=float(rng.choice([0.0, 0.5, 1.0])),
    )
    return main, aux, y, W, cfg


def scalar_softmax(z):
    m = max(z)
    e = [math.exp(v - m) for v in z]
    s = sum(e)
    return [v / s for v in e]


def set_iou(pred, truth, num_classes, ignore=255):
    """IoU from explicit pixel coordinate sets."""
    per_class = []
    for c in range(num_classes):
        P = {i for i, (p, t) in enumerate(zip(pred, truth)) if t != ignore and p == c}
        T = {i for i, t in enumerate(truth) if t == c}
        union = P | T
        per_class.append(len(P & T) / len(union) if union else None)
    defined = [v for v in per_class if v is not None]
    return per_class, (sum(defined) / len(defined) if defined else None)
