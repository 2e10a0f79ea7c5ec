"""Label spaces and conversion of source distributions into the target space."""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .tensor import as_map


@dataclass(frozen=True)
class LabelSpace:
    name: str
    names: tuple

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        if len(self.names) < 2:
            raise ValueError(f"label space {self.name!r} needs at least 2 classes")
        if len(set(self.names)) != len(self.names):
            raise ValueError(f"label space {self.name!r} has duplicate class names")

    @property
    def C(self):
        return len(self.names)

    def index(self, cls):
        try:
            return self.names.index(cls)
        except ValueError:
            raise KeyError(f"class {cls!r} not in label space {self.name!r}") from None


@dataclass(frozen=True)
class LabelMapping:
    """Many-to-one partial map from source classes to target classes.

    ``targets[i]`` is the target index of source class ``i`` or ``None`` when
    the source class has no counterpart.
    """

    source: LabelSpace
    target: LabelSpace
    targets: tuple

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(self.targets))
        if len(self.targets) != self.source.C:
            raise ValueError(
                f"mapping has {len(self.targets)} entries for {self.source.C} source classes"
            )
        for t in self.targets:
            if t is not None and not 0 <= t < self.target.C:
                raise ValueError(f"mapped index {t} outside target space of {self.target.C}")
        if all(t is None for t in self.targets):
            raise ValueError(f"mapping {self.source.name!r} -> {self.target.name!r} maps nothing")

    @classmethod
    def from_names(cls, source, target, mapping):
        """Build from ``{source_name: target_name | None}``; absent names are unmapped."""
        for key in mapping:
            if key not in source.names:
                raise KeyError(f"unknown source class {key!r}")
        targets = []
        for name in source.names:
            t = mapping.get(name)
            targets.append(None if t is None else target.index(t))
        return cls(source, target, targets)

    @classmethod
    def identity(cls, space):
        return cls(space, space, range(space.C))

    def groups(self):
        """Source-class indices feeding each target class."""
        out = [[] for _ in range(self.target.C)]
        for s, t in enumerate(self.targets):
            if t is not None:
                out[t].append(s)
        return out

    def to_json(self):
        return {
            "source_space": {"name": self.source.name, "classes": list(self.source.names)},
            "target_space": {"name": self.target.name, "classes": list(self.target.names)},
            "map": {
                s: (None if t is None else self.target.names[t])
                for s, t in zip(self.source.names, self.targets)
            },
        }


def _space_from_json(obj, key):
    if not isinstance(obj, dict) or set(obj) != {"name", "classes"}:
        raise ValueError(f"{key} must be an object with exactly 'name' and 'classes'")
    return LabelSpace(obj["name"], obj["classes"])


def load_mapping(path):
    """Read a mapping file; unknown class names raise KeyError naming the key."""
    path = Path(path)
    with open(path) as fh:
        doc = json.load(fh)
    extra = set(doc) - {"source_space", "target_space", "map"}
    if extra:
        raise KeyError(f"{path}: unknown key(s) {sorted(extra)}")
    source = _space_from_json(doc["source_space"], "source_space")
    target = _space_from_json(doc["target_space"], "target_space")
    try:
        return LabelMapping.from_names(source, target, doc["map"])
    except KeyError as exc:
        raise KeyError(f"{path}: {exc.args[0]}") from None


def save_mapping(mapping, path):
    with open(path, "w") as fh:
        json.dump(mapping.to_json(), fh, indent=2)
        fh.write("\n")


@dataclass
class ConversionReport:
    degenerate_pixels: int = 0
    notes: list = field(default_factory=list)


def convert_distribution(p_src, mapping, report=None):
    """Project a source-space probability map into the target space.

    Each target class takes the maximum score over the source classes mapped
    to it (zero when nothing maps to it), then every pixel is renormalized.
    Unmapped source classes drop out. Pixels left with no mass become uniform
    and are tallied in ``report.degenerate_pixels``.
    """
    p_src = as_map(p_src, "source probability map")
    if p_src.shape[-1] != mapping.source.C:
        raise ValueError(
            f"map has {p_src.shape[-1]} channels, mapping expects {mapping.source.C}"
        )
    p = p_src.astype(np.float64)
    out = np.zeros(p.shape[:-1] + (mapping.target.C,))
    for t, members in enumerate(mapping.groups()):
        if members:
            out[..., t] = p[..., members].max(axis=-1)
    total = out.sum(axis=-1, keepdims=True)
    dead = total[..., 0] <= 0.0
    out[dead] = 1.0 / mapping.target.C
    total[dead] = 1.0
    out /= total
    if report is not None:
        report.degenerate_pixels += int(dead.sum())
    return out.astype(np.float32)
