"""Command-line interface: synth, gap, fuse, train, eval, ablate."""

import argparse
import csv
import io as _io
import json
import logging
import sys
from pathlib import Path


from . import io
from .config import ConfigError, load_config
from .fusion import SoftLabelMap, hard_label, make_soft_labels, unanimity_labels
from .gap import SimilarityWeights, uniform_weights
from .labels import ConversionReport, LabelSpace, load_mapping, save_mapping
from .metrics import ConfusionMatrix, iou_report
from .model import ToyModel, TrainingDiverged, train
from .pipeline import ABLATION_GRID, build_scenario, convert_all, run_ablation, scene_gaps, scene_weights
from .synth import SyntheticScene

log = logging.getLogger("softpl")

EXPECTED_ERRORS = (ValueError, KeyError, OSError, ConfigError, io.FormatError, TrainingDiverged)


# --- scenario directory -----------------------------------------------------

def _scene_dir(split, i):
    return f"{split}/{i:04d}"


def write_scenario(out, cfg):
    scenario = build_scenario(cfg.synth, cfg.seed)
    target = scenario.target_space
    sources = []
    for src, mapping in zip(cfg.synth.sources, scenario.mappings):
        rel = f"mappings/{src.name}.json"
        (out / "mappings").mkdir(parents=True, exist_ok=True)
        save_mapping(mapping, out / rel)
        sources.append({"name": src.name, "classes": list(src.classes), "mapping": rel})
    images = {"train": [], "test": []}
    for split, scenes in (("train", scenario.train_scenes), ("test", scenario.test_scenes)):
        for i, sc in enumerate(scenes):
            rel = _scene_dir(split, i)
            images[split].append(rel)
            d = out / rel
            io.write_tensor(d / "features.plf", sc.features)
            io.write_labels(d / "labels.plf", sc.labels)
            if split == "train":
                for src, pred in zip(cfg.synth.sources, scenario.predictions[i]):
                    io.write_tensor(d / f"pred.{src.name}.plf", pred)
    manifest = {
        "seed": cfg.seed,
        "target_space": {"name": target.name, "classes": list(target.names)},
        "sources": sources,
        "images": images,
        "config": cfg.to_dict(),
    }
    io.write_json(out / "scenario.json", manifest)
    return manifest


class ScenarioDir:
    def __init__(self, root, mapping_overrides=None):
        self.root = Path(root)
        path = self.root / "scenario.json"
        if not path.exists():
            raise FileNotFoundError(f"{path}: scenario manifest not found")
        self.manifest = io.read_json(path)
        t = self.manifest["target_space"]
        self.target = LabelSpace(t["name"], t["classes"])
        self.sources = [s["name"] for s in self.manifest["sources"]]
        overrides = mapping_overrides or {}
        unknown = set(overrides) - set(self.sources)
        if unknown:
            raise KeyError(f"mapping override for unknown source(s) {sorted(unknown)}")
        self.mappings = []
        for s in self.manifest["sources"]:
            mpath = overrides.get(s["name"]) or self.root / s["mapping"]
            m = load_mapping(mpath)
            if m.target.names != self.target.names:
                raise ValueError(f"{mpath}: target space does not match the scenario")
            self.mappings.append(m)

    def images(self, split):
        return self.manifest["images"][split]

    def predictions(self, image):
        return [io.read_tensor(self.root / image / f"pred.{n}.plf") for n in self.sources]

    def scene(self, image, index=0):
        d = self.root / image
        return SyntheticScene(io.read_tensor(d / "features.plf"), io.read_labels(d / "labels.plf"),
                              self.manifest["seed"], index)


def _load_soft_labels(labels_dir, image):
    d = Path(labels_dir) / image
    return SoftLabelMap(io.read_tensor(d / "y_hat.plf"), io.read_tensor(d / "entropy_weight.plf"), [])


def _gap_doc(sd, cfg):
    out = []
    for image in sd.images("train"):
        gaps = scene_gaps(sd.predictions(image), sd.mappings, sd.sources)
        weights = scene_weights(gaps, cfg.fusion)
        out.append({
            "image": image,
            "mode": weights.mode,
            "similarity": cfg.fusion.similarity,
            "scores": [
                {"source": g.source, "G": g.G, "pixels": g.pixel_count, "weight": w}
                for g, w in zip(gaps, weights.weights)
            ],
        })
    return out


def _weights_from_doc(entry, sources):
    scores = {s["source"]: s for s in entry["scores"]}
    missing = [n for n in sources if n not in scores]
    if missing:
        raise KeyError(f"gap entry for {entry['image']} lacks source(s) {missing}")
    return SimilarityWeights(tuple(sources), tuple(float(scores[n]["weight"]) for n in sources),
                             entry.get("mode", "sum-to-one"))


# --- commands ---------------------------------------------------------------

def cmd_synth(args, cfg):
    if args.seed is not None:
        cfg.seed = args.seed
    with io.staged_outputs(args.out) as stage:
        manifest = write_scenario(stage, cfg)
    print(f"wrote {len(manifest['images']['train'])} train and "
          f"{len(manifest['images']['test'])} test scenes to {args.out}")


def cmd_gap(args, cfg):
    sd = ScenarioDir(args.scenario, cfg.mappings)
    doc = _gap_doc(sd, cfg)
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if args.out:
        io.atomic_write(args.out, text)
    else:
        sys.stdout.write(text)


def cmd_fuse(args, cfg):
    sd = ScenarioDir(args.scenario, cfg.mappings)
    gap_entries = {}
    if args.gaps:
        gap_entries = {e["image"]: e for e in io.read_json(args.gaps)}
    elif cfg.fusion.similarity and not args.unanimity:
        raise ValueError("--gaps is required when similarity weighting is enabled")
    report = ConversionReport()
    records = []
    with io.staged_outputs(args.out) as stage:
        for n, image in enumerate(sd.images("train")):
            converted = convert_all(sd.predictions(image), sd.mappings, report)
            d = stage / image
            if args.unanimity:
                labels = unanimity_labels(converted)
                io.write_labels(d / "labels.plf", labels)
                io.write_label_ppm(d / "argmax.ppm", labels)
                records.append({"image": image, "abstained": int((labels == 255).sum())})
                continue
            if cfg.fusion.similarity:
                if image not in gap_entries:
                    raise KeyError(f"{args.gaps} has no entry for image {image}")
                weights = _weights_from_doc(gap_entries[image], sd.sources)
            else:
                weights = uniform_weights(sd.sources, cfg.fusion.weight_mode)
            soft = make_soft_labels(converted, weights, cfg.loss.lambda_scale,
                                    cfg.fusion.entropy_weight, cfg.fusion.temperature)
            io.write_tensor(d / "y_hat.plf", soft.y_hat)
            io.write_tensor(d / "entropy_weight.plf", soft.entropy_weight)
            fused = hard_label(soft.y_hat)
            io.write_label_ppm(d / "argmax.ppm", fused)
            io.write_weight_pgm(d / "inv_entropy.pgm", soft.entropy_weight)
            records.append({"image": image, "provenance": [[s, w] for s, w in soft.provenance]})
            if args.figures and n == 0:
                from .plots import plot_pseudo_label

                plot_pseudo_label([hard_label(c) for c in converted], sd.sources, weights.weights,
                                  fused, soft.entropy_weight, stage / "pseudo_labels.png",
                                  sd.target.names)
        io.write_json(stage / "fused.json", {
            "mode": "unanimity" if args.unanimity else "soft",
            "fusion": cfg.to_dict()["fusion"],
            "lambda_scale": cfg.loss.lambda_scale,
            "degenerate_pixels": report.degenerate_pixels,
            "images": records,
        })
    print(f"fused {len(records)} images into {args.out}")


def cmd_train(args, cfg):
    sd = ScenarioDir(args.scenario)
    tcfg = cfg.train_config()
    samples = []
    for i, image in enumerate(sd.images("train")):
        samples.append((sd.scene(image, i).features, _load_soft_labels(args.labels, image)))
    d_in = samples[0][0].shape[-1]
    model = ToyModel.init(d_in, tcfg.hidden, sd.target.C, tcfg.seed, tcfg.loss.branch_w)
    model, history = train(model, samples, tcfg)
    with io.staged_outputs(args.out) as stage:
        io.save_checkpoint(stage, model, len(history), cfg.to_dict(), getattr(model, "bank", None))
        io.write_json(stage / "train_log.json", history)
        if args.figures and history:
            from .plots import plot_training

            plot_training(history, stage / "loss.png")
    last = history[-1]["all"] if history else float("nan")
    print(f"trained {len(history)} steps, final L_all {last:.4f}; checkpoint in {args.out}")


def cmd_eval(args, cfg):
    sd = ScenarioDir(args.scenario)
    if bool(args.checkpoint) == bool(args.labels):
        raise ValueError("give exactly one of --checkpoint or --labels")
    split = args.split or ("test" if args.checkpoint else "train")
    cm = ConfusionMatrix(sd.target.C)
    model = io.load_checkpoint(args.checkpoint)[0] if args.checkpoint else None
    for i, image in enumerate(sd.images(split)):
        scene = sd.scene(image, i)
        if model is not None:
            pred = model.predict(scene.features)
        else:
            d = Path(args.labels) / image
            pred = io.read_labels(d / "labels.plf") if (d / "labels.plf").exists() \
                else hard_label(io.read_tensor(d / "y_hat.plf"))
        cm.accumulate(pred, scene.labels)
    report = iou_report(cm, sd.target.names)
    report["split"] = split
    text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    if args.out:
        out = Path(args.out)
        with io.staged_outputs(out.parent) as stage:
            io.atomic_write(stage / out.name, text)
            if args.figures:
                from .plots import plot_iou

                plot_iou(report, stage / (out.stem + ".png"))
    else:
        sys.stdout.write(text)


def ablation_csv(rows):
    buf = _io.StringIO()
    seeds = rows[0]["seeds"]
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["label_entropy_weight", "domain_similarity", "miou_mean"]
                    + [f"miou_seed{s}" for s in seeds])
    for r in rows:
        writer.writerow([int(r["entropy_weight"]), int(r["similarity"]), f"{r['miou_mean']:.6f}"]
                        + [f"{v:.6f}" for v in r["miou"]])
    return buf.getvalue()


def cmd_ablate(args, cfg):
    seeds = args.seeds if args.seeds else [cfg.seed]
    rows = run_ablation(cfg.synth, cfg.train_config(), seeds, cfg.fusion)
    assert len(rows) == len(ABLATION_GRID)
    text = ablation_csv(rows)
    with io.staged_outputs(args.out) as stage:
        io.atomic_write(stage / "ablation.csv", text)
        io.write_json(stage / "ablation.json", rows)
        if args.figures:
            from .plots import plot_ablation

            plot_ablation(rows, stage / "ablation.png")
    sys.stdout.write(text)


# --- entry point ------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="softpl", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", help="pipeline config JSON (defaults otherwise)")
        sp.set_defaults(func=func)
        return sp

    def figures(sp):
        sp.add_argument("--no-figures", dest="figures", action="store_false",
                        help="skip the PNG report figures")

    sp = add("synth", cmd_synth, "generate a synthetic multi-source scenario")
    sp.add_argument("--out", required=True)
    sp.add_argument("--seed", type=int)

    sp = add("gap", cmd_gap, "domain gap and similarity weights per image (JSON)")
    sp.add_argument("--scenario", required=True)
    sp.add_argument("--out")

    sp = add("fuse", cmd_fuse, "fuse source predictions into soft pseudo-labels")
    sp.add_argument("--scenario", required=True)
    sp.add_argument("--gaps")
    sp.add_argument("--out", required=True)
    sp.add_argument("--unanimity", action="store_true",
                    help="diagnostic: keep labels only where all sources agree")
    figures(sp)

    sp = add("train", cmd_train, "train the two-branch toy model on fused labels")
    sp.add_argument("--scenario", required=True)
    sp.add_argument("--labels", required=True)
    sp.add_argument("--out", required=True)
    figures(sp)

    sp = add("eval", cmd_eval, "per-class IoU and mIoU (JSON)")
    sp.add_argument("--scenario", required=True)
    sp.add_argument("--checkpoint")
    sp.add_argument("--labels")
    sp.add_argument("--split", choices=("train", "test"))
    sp.add_argument("--out")
    figures(sp)

    sp = add("ablate", cmd_ablate, "entropy-weight x similarity grid (CSV)")
    sp.add_argument("--seeds", type=int, nargs="*")
    sp.add_argument("--out", required=True)
    figures(sp)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        args.func(args, cfg)
    except EXPECTED_ERRORS as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"softpl: error: {str(msg).splitlines()[0]}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
