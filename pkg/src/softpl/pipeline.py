"""End-to-end pipeline over a synthetic scenario, shared by the CLI."""

from dataclasses import dataclass

import numpy as np

from .fusion import make_soft_labels, unanimity_labels
from .gap import RAW, SUM_TO_ONE, domain_gap, similarity_weights, uniform_weights
from .labels import convert_distribution
from .metrics import ConfusionMatrix, iou
from .model import ToyModel, TrainConfig, train
from .synth import SynthConfig, generate_dataset, source_predict


@dataclass
class FusionConfig:
    similarity: bool = True
    entropy_weight: bool = True
    weight_mode: str = SUM_TO_ONE
    epsilon: float = 1e-6
    temperature: float = 1.0

    def __post_init__(self):
        if self.weight_mode not in (SUM_TO_ONE, RAW):
            raise ValueError(f"unknown weight_mode {self.weight_mode!r}")
        if not self.temperature > 0:
            raise ValueError("fusion temperature must be positive")


@dataclass
class Scenario:
    synth: SynthConfig
    seed: int
    train_scenes: list
    test_scenes: list
    predictions: list  # per train scene: [source map, ...] in source spaces
    mappings: list

    @property
    def target_space(self):
        return self.synth.target_space()

    @property
    def source_names(self):
        return [s.name for s in self.synth.sources]


def build_scenario(synth, seed, mappings=None):
    scenes = generate_dataset(synth, seed)
    train_scenes = scenes[:synth.n_train]
    test_scenes = scenes[synth.n_train:]
    target = synth.target_space()
    preds = [
        [source_predict(src, sc, target, k) for k, src in enumerate(synth.sources)]
        for sc in train_scenes
    ]
    if mappings is None:
        mappings = [src.label_mapping(target) for src in synth.sources]
    return Scenario(synth, seed, train_scenes, test_scenes, preds, list(mappings))


def scene_gaps(predictions, mappings, names):
    return [domain_gap(p, m.source.C, n) for p, m, n in zip(predictions, mappings, names)]


def scene_weights(gaps, fusion):
    if fusion.similarity:
        return similarity_weights(gaps, fusion.weight_mode, fusion.epsilon)
    return uniform_weights([g.source for g in gaps], fusion.weight_mode)


def convert_all(predictions, mappings, report=None):
    return [convert_distribution(p, m, report) for p, m in zip(predictions, mappings)]


def pseudo_labels(scenario, fusion, lambda_scale=1.0, report=None):
    """Soft labels, gap scores and weights for every training scene."""
    out = []
    for preds in scenario.predictions:
        gaps = scene_gaps(preds, scenario.mappings, scenario.source_names)
        weights = scene_weights(gaps, fusion)
        converted = convert_all(preds, scenario.mappings, report)
        soft = make_soft_labels(converted, weights, lambda_scale, fusion.entropy_weight,
                                fusion.temperature)
        out.append((gaps, weights, soft))
    return out


def unanimity_pseudo_labels(scenario):
    return [unanimity_labels(convert_all(p, scenario.mappings)) for p in scenario.predictions]


def label_confusion(labels, scenes, num_classes):
    cm = ConfusionMatrix(num_classes)
    for lab, sc in zip(labels, scenes):
        cm.accumulate(lab, sc.labels)
    return cm


def train_on(scenario, softs, train_cfg):
    model = ToyModel.init(scenario.synth.d_in, train_cfg.hidden, scenario.target_space.C,
                          train_cfg.seed, train_cfg.loss.branch_w)
    samples = [(sc.features, s) for sc, s in zip(scenario.train_scenes, softs)]
    return train(model, samples, train_cfg)


def evaluate_model(model, scenes, num_classes):
    return label_confusion([model.predict(sc.features) for sc in scenes], scenes, num_classes)


ABLATION_GRID = ((False, False), (False, True), (True, False), (True, True))  # (entropy, similarity)


def run_ablation(synth, train_cfg, seeds, base_fusion=None):
    """mIoU on held-out scenes for each (entropy weight, similarity) cell."""
    base_fusion = base_fusion or FusionConfig()
    rows = []
    for ent, sim in ABLATION_GRID:
        fusion = FusionConfig(sim, ent, base_fusion.weight_mode, base_fusion.epsilon,
                              base_fusion.temperature)
        per_seed = []
        for seed in seeds:
            scenario = build_scenario(synth, seed)
            softs = [s for _, _, s in pseudo_labels(scenario, fusion, train_cfg.loss.lambda_scale)]
            cfg = TrainConfig(**{**train_cfg.__dict__, "seed": train_cfg.seed + seed})
            model, _ = train_on(scenario, softs, cfg)
            _, miou = iou(evaluate_model(model, scenario.test_scenes, scenario.target_space.C))
            per_seed.append(miou)
        rows.append({"entropy_weight": ent, "similarity": sim, "seeds": list(seeds),
                     "miou": per_seed, "miou_mean": float(np.mean(per_seed))})
    return rows
