"""Pipeline configuration document.

A JSON object with the sections below; every section and key is optional
and unknown keys are rejected. Defaults::

    {
      "seed": 0,
      "synth":  {height 16, width 16, d_in 8, n_train 24, n_test 64, regions 10,
                 proportions [0.3, 0.25, 0.25, 0.2], class_sep 3.0,
                 feature_noise 1.0, target_classes [plant, artificial, ground, grass],
                 sources: three standard sources (forest, city, urban)},
      "fusion": {similarity true, entropy_weight true, weight_mode "sum-to-one",
                 epsilon 1e-6, temperature 1.0},
      "loss":   {alpha 0.1, beta 1.0, lambda_scale 1.0, lambda_ent 0.1,
                 lambda_kld 1.0, label_clamp [1e-4, 1.0], branch_w 0.5},
      "train":  {lr 0.02, lr_min 0.002, period 200, batch_size 1, epochs 150,
                 seed 0, hidden 16, encoder_momentum 0.999, rectify true,
                 tau 1.0, proto_momentum 0.999},
      "mappings": {source name: mapping file path}   # overrides synth mappings
    }
"""

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .losses import LossConfig, config_dict
from .model import TrainConfig
from .pipeline import FusionConfig
from .synth import SourceSpec, SynthConfig

SECTIONS = ("seed", "synth", "fusion", "loss", "train", "mappings")


class ConfigError(ValueError):
    pass


def _build(cls, doc, where, skip=()):
    if not isinstance(doc, dict):
        raise ConfigError(f"{where} must be a JSON object")
    names = {f.name for f in dataclasses.fields(cls)} - set(skip)
    unknown = sorted(set(doc) - names)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {unknown}")
    try:
        return cls(**doc)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


@dataclass
class PipelineConfig:
    seed: int = 0
    synth: SynthConfig = field(default_factory=SynthConfig)
    fusion: FusionConfig = field(default_factory=FusionConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    mappings: dict = field(default_factory=dict)

    def train_config(self):
        return dataclasses.replace(self.train, loss=self.loss)

    def to_dict(self):
        synth = dataclasses.asdict(self.synth)
        synth["proportions"] = list(self.synth.proportions)
        synth["target_classes"] = list(self.synth.target_classes)
        for s in synth["sources"]:
            s["classes"] = list(s["classes"])
        train = dataclasses.asdict(self.train)
        train.pop("loss")
        return {
            "seed": self.seed,
            "synth": synth,
            "fusion": dataclasses.asdict(self.fusion),
            "loss": config_dict(self.loss),
            "train": train,
            "mappings": dict(self.mappings),
        }


def from_dict(doc):
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    unknown = sorted(set(doc) - set(SECTIONS))
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {unknown}")
    synth_doc = dict(doc.get("synth", {}))
    if "sources" in synth_doc:
        synth_doc["sources"] = [
            _build(SourceSpec, s, f"synth.sources[{i}]") for i, s in enumerate(synth_doc["sources"])
        ]
    loss = _build(LossConfig, doc.get("loss", {}), "loss")
    train = _build(TrainConfig, doc.get("train", {}), "train", skip=("loss",))
    train.loss = loss
    mappings = doc.get("mappings", {})
    if not isinstance(mappings, dict):
        raise ConfigError("mappings must map source names to file paths")
    seed = doc.get("seed", 0)
    if not isinstance(seed, int):
        raise ConfigError("seed must be an integer")
    return PipelineConfig(
        seed=seed,
        synth=_build(SynthConfig, synth_doc, "synth"),
        fusion=_build(FusionConfig, doc.get("fusion", {}), "fusion"),
        loss=loss,
        train=train,
        mappings=dict(mappings),
    )


def load_config(path=None):
    if path is None:
        return PipelineConfig()
    with open(Path(path)) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    try:
        return from_dict(doc)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None
