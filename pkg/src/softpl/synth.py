"""Synthetic multi-source scenes with ground truth.

Scenes are Voronoi partitions whose cells carry a target class; pixel
features are drawn around a per-class mean. Each synthetic source predicts
in its own label space from a logit field aligned with the ground truth:

    logits = (signal * onehot(source class) + bias) / temperature + noise * eps

so a hotter source is both fuzzier (higher entropy) and less accurate.
"""

from dataclasses import dataclass, field

import numpy as np

from .labels import LabelMapping, LabelSpace
from .tensor import softmax

TARGET_CLASSES = ("plant", "artificial", "ground", "grass")


@dataclass
class SourceSpec:
    name: str
    classes: tuple
    mapping: dict  # source class -> target class or None
    temperature: float = 1.0
    surrogates: dict = field(default_factory=dict)  # target class -> source class
    bias: dict = field(default_factory=dict)  # source class -> logit offset
    signal: float = 4.0
    noise: float = 1.0
    temperature_jitter: float = 0.0  # per-scene log-normal spread

    def __post_init__(self):
        self.classes = tuple(self.classes)
        if not self.temperature > 0:
            raise ValueError(f"source {self.name!r}: temperature must be positive")

    def space(self):
        return LabelSpace(self.name, self.classes)

    def label_mapping(self, target_space):
        return LabelMapping.from_names(self.space(), target_space, self.mapping)

    def target_to_source(self, target_space):
        """Source class index emitted for each ground-truth target class."""
        out = []
        for t in target_space.names:
            if t in self.surrogates:
                out.append(self.classes.index(self.surrogates[t]))
                continue
            hits = [s for s in self.classes if self.mapping.get(s) == t]
            if not hits:
                raise ValueError(f"source {self.name!r} has no class or surrogate for {t!r}")
            out.append(self.classes.index(hits[0]))
        return np.array(out)


@dataclass
class SynthConfig:
    height: int = 16
    width: int = 16
    d_in: int = 8
    n_train: int = 24
    n_test: int = 64
    regions: int = 10
    proportions: tuple = (0.3, 0.25, 0.25, 0.2)
    class_sep: float = 3.0
    feature_noise: float = 1.0
    target_classes: tuple = TARGET_CLASSES
    sources: list = field(default_factory=list)

    def __post_init__(self):
        self.target_classes = tuple(self.target_classes)
        self.proportions = tuple(float(v) for v in self.proportions)
        if len(self.proportions) != len(self.target_classes):
            raise ValueError("need one proportion per target class")
        if abs(sum(self.proportions) - 1.0) > 1e-9 or min(self.proportions) < 0:
            raise ValueError("proportions must be non-negative and sum to 1")
        self.sources = [s if isinstance(s, SourceSpec) else SourceSpec(**s) for s in self.sources]
        if not self.sources:
            self.sources = standard_sources()

    def target_space(self):
        return LabelSpace("target", self.target_classes)


def standard_sources():
    """Three sources: a reliable off-road one, a fuzzy city one and an urban
    one that has no grass class (grass pixels come out as road)."""
    return [
        SourceSpec(
            "forest", ("tree", "grass", "trail", "obstacle", "sky"),
            {"tree": "plant", "grass": "grass", "trail": "ground", "obstacle": "artificial", "sky": None},
            temperature=0.7,
        ),
        SourceSpec(
            "city", ("vegetation", "terrain", "building", "pole", "road", "sky"),
            {"vegetation": "plant", "terrain": "grass", "building": "artificial",
             "pole": "artificial", "road": "ground", "sky": None},
            temperature=3.0,
            bias={"road": 6.0},
        ),
        SourceSpec(
            "urban", ("tree", "building", "road", "sky"),
            {"tree": "plant", "building": "artificial", "road": "ground", "sky": None},
            temperature=1.0,
            surrogates={"grass": "road"},
        ),
    ]


@dataclass
class SyntheticScene:
    features: np.ndarray  # (H, W, D_in) float32
    labels: np.ndarray  # (H, W) int64
    seed: int
    index: int


def class_means(cfg, seed):
    rng = np.random.default_rng([seed, 0xC1A55])
    mu = rng.normal(size=(len(cfg.target_classes), cfg.d_in))
    mu /= np.linalg.norm(mu, axis=1, keepdims=True)
    return cfg.class_sep * mu


def make_scene(cfg, seed, index, means=None):
    means = class_means(cfg, seed) if means is None else means
    rng = np.random.default_rng([seed, index])
    H, W = cfg.height, cfg.width
    centers = rng.uniform(0, [H, W], size=(cfg.regions, 2))
    cell_class = rng.choice(len(cfg.target_classes), size=cfg.regions, p=cfg.proportions)
    yy, xx = np.mgrid[0:H, 0:W]
    pix = np.stack([yy + 0.5, xx + 0.5], axis=-1)
    nearest = np.argmin(((pix[:, :, None, :] - centers) ** 2).sum(-1), axis=-1)
    labels = cell_class[nearest].astype(np.int64)
    feats = means[labels] + cfg.feature_noise * rng.normal(size=(H, W, cfg.d_in))
    return SyntheticScene(feats.astype(np.float32), labels, seed, index)


def generate_dataset(cfg, seed, count=None, offset=0):
    """``count`` scenes (default n_train + n_test), reproducible from ``seed``."""
    count = cfg.n_train + cfg.n_test if count is None else count
    means = class_means(cfg, seed)
    return [make_scene(cfg, seed, offset + i, means) for i in range(count)]


def scene_temperature(source, scene, source_index=0):
    if source.temperature_jitter == 0:
        return source.temperature
    rng = np.random.default_rng([scene.seed, scene.index, source_index, 0x7E])
    return source.temperature * float(np.exp(source.temperature_jitter * rng.normal()))


def source_predict(source, scene, target_space, source_index=0):
    """Probability map of ``source`` on ``scene`` in the source's label space."""
    rng = np.random.default_rng([scene.seed, scene.index, source_index, 0x5EC])
    C = len(source.classes)
    emitted = source.target_to_source(target_space)[scene.labels]
    bias = np.array([source.bias.get(c, 0.0) for c in source.classes])
    T = scene_temperature(source, scene, source_index)
    spike = np.zeros(scene.labels.shape + (C,))
    np.put_along_axis(spike, emitted[..., None], source.signal, axis=-1)
    logits = (spike + bias) / T + source.noise * rng.normal(size=spike.shape)
    return softmax(logits)
