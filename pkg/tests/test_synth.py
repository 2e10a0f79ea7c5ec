import dataclasses

import numpy as np
import pytest

from softpl.fusion import hard_label
from softpl.metrics import ConfusionMatrix
from softpl.pipeline import (
    ABLATION_GRID,
    FusionConfig,
    build_scenario,
    convert_all,
    label_confusion,
    pseudo_labels,
    scene_gaps,
)
from softpl.synth import SourceSpec, SynthConfig, generate_dataset, source_predict, standard_sources
from softpl.tensor import check_probability_map


def test_dataset_reproducible_and_shaped():
    cfg = SynthConfig(height=8, width=12, d_in=5)
    a = generate_dataset(cfg, seed=3, count=4)
    b = generate_dataset(cfg, seed=3, count=4)
    for x, y in zip(a, b):
        assert x.features.tobytes() == y.features.tobytes()
        assert np.array_equal(x.labels, y.labels)
    assert a[0].features.shape == (8, 12, 5)
    assert a[0].labels.shape == (8, 12)


def test_class_histogram_matches_proportions():
    cfg = SynthConfig()
    scenes = generate_dataset(cfg, seed=0, count=100)
    counts = np.bincount(np.concatenate([s.labels.ravel() for s in scenes]), minlength=4)
    np.testing.assert_allclose(counts / counts.sum(), cfg.proportions, atol=0.05)


def test_config_validation():
    with pytest.raises(ValueError):
        SynthConfig(proportions=(0.5, 0.5))
    with pytest.raises(ValueError):
        SynthConfig(proportions=(0.5, 0.5, 0.5, -0.5))


def test_source_predictions_are_distributions():
    cfg = SynthConfig()
    scene = generate_dataset(cfg, 0, 1)[0]
    for k, src in enumerate(cfg.sources):
        p = source_predict(src, scene, cfg.target_space(), k)
        assert p.shape == scene.labels.shape + (len(src.classes),)
        check_probability_map(p)


def test_cold_source_is_near_one_hot_and_correct():
    cfg = SynthConfig()
    src = dataclasses.replace(cfg.sources[0], temperature=0.01, noise=0.0)
    scene = generate_dataset(cfg, 0, 1)[0]
    p = source_predict(src, scene, cfg.target_space())
    emitted = src.target_to_source(cfg.target_space())[scene.labels]
    assert np.all(p.argmax(-1) == emitted)
    assert p.max(-1).min() > 0.999


def test_hotter_source_has_larger_gap():
    cfg = SynthConfig()
    target = cfg.target_space()
    for seed in range(5):
        scenes = generate_dataset(cfg, seed, 4)
        mean_gaps = []
        for T in (0.5, 1.0, 2.0, 4.0):
            src = dataclasses.replace(cfg.sources[0], temperature=T)
            m = src.label_mapping(target)
            gaps = [scene_gaps([source_predict(src, s, target)], [m], [src.name])[0].G for s in scenes]
            mean_gaps.append(np.mean(gaps))
        assert np.all(np.diff(mean_gaps) > 0)


def test_source_without_grass_never_emits_grass():
    cfg = SynthConfig()
    urban = cfg.sources[2]
    assert "grass" not in urban.mapping.values()
    target = cfg.target_space()
    m = urban.label_mapping(target)
    scene = generate_dataset(cfg, 1, 1)[0]
    converted = convert_all([source_predict(urban, scene, target, 2)], [m])[0]
    assert np.all(converted[..., target.index("grass")] == 0)


def test_missing_surrogate_rejected():
    src = SourceSpec("x", ("a", "b"), {"a": "plant", "b": "ground"})
    with pytest.raises(ValueError, match="no class or surrogate"):
        src.target_to_source(SynthConfig().target_space())


def test_reliable_source_outweighs_unreliable_on_every_scene():
    cfg = SynthConfig(n_test=0)
    temps = [s.temperature for s in cfg.sources]
    for seed in range(5):
        for _, weights, _ in pseudo_labels(build_scenario(cfg, seed), FusionConfig()):
            order = np.argsort(temps)
            assert np.all(np.diff(np.array(weights.weights)[order]) < 0)


def test_fused_labels_no_worse_than_best_source():
    cfg = SynthConfig(n_test=0)
    for seed in range(20):
        sc = build_scenario(cfg, seed)
        fused = [hard_label(s.y_hat) for _, _, s in pseudo_labels(sc, FusionConfig())]
        fused_acc = label_confusion(fused, sc.train_scenes, 4).pixel_accuracy()
        best = 0.0
        for k in range(len(cfg.sources)):
            cm = ConfusionMatrix(4)
            for preds, scene in zip(sc.predictions, sc.train_scenes):
                cm.accumulate(hard_label(convert_all([preds[k]], [sc.mappings[k]])[0]), scene.labels)
            best = max(best, cm.pixel_accuracy())
        assert fused_acc >= best - 0.01


def test_standard_sources_fresh_copies():
    a = standard_sources()
    a[0].temperature = 9.0
    assert standard_sources()[0].temperature != 9.0


def test_ablation_grid_is_two_by_two():
    assert sorted(ABLATION_GRID) == [(False, False), (False, True), (True, False), (True, True)]
