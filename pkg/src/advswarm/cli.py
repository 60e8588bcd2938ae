"""Command-line interface.

Subcommands: ``train``, ``finetune``, ``mfi-map``, ``attack``,
``attack-set``, ``report``.  Every numeric hyperparameter is a flag; a JSON
config file (``--config``) may supply any flag by its long name
(dashes -> underscores), with explicit command-line values taking
precedence.  Progress and warnings go to stderr; machine-readable output
goes to files only.

Exit codes: 0 success, 2 parse/validation errors (flags, config, malformed
data files), 3 I/O errors, 4 runtime failures (attack infeasibility,
divergence, non-finite numerics).

Datasets are named by spec strings:

* ``synth:k=3,n=200,side=8,noise=0.1,seed=0`` - synthetic blobs
* ``idx:IMAGES,LABELS``                       - IDX file pair
* ``results:DIR``                             - adversarial images from stored result JSONs
* a bare directory path                       - raster images + labels.csv
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import classifier, data, report
from .attack import (
    AttackSpec,
    DatasetAttackSpec,
    generate_adversarial,
    generate_adversarial_set,
    score_images,
)
from .errors import (
    AdvswarmError,
    DataError,
    InputError,
    NumericalError,
    OptimizerError,
    TrainingDivergedError,
)
from .influence import pixel_influence_map
from .pso import SwarmConfig

log = logging.getLogger("advswarm")

_COMMON = {"seed": 0, "config": None}
_SWARM = {"np": 200, "iters": 500, "eps": 0.15, "loss_weight": 100.0,
          "norm_weight": 1.0, "perr_tol": 0.05}
_TRAIN_HYPER = {"hidden": "64", "epochs": 60, "lr": 0.1, "batch_size": 32,
                "weight_decay": 1e-2, "momentum": 0.9, "val_fraction": 0.2}

DEFAULTS = {
    "train": {**_COMMON, **_TRAIN_HYPER, "data": None, "out": None},
    "finetune": {**_COMMON, **_TRAIN_HYPER, "model": None, "data": None,
                 "adv_train": None, "test_data": None, "adv_test": None, "out": None},
    "mfi-map": {**_COMMON, "model": None, "data": None, "out": None,
                "index": None, "target": None},
    "attack": {**_COMMON, **_SWARM, "model": None, "data": None, "out": None,
               "index": 0, "m": None, "pixels": None, "mfi_pixel": None,
               "perr": None, "target": None},
    "attack-set": {**_COMMON, **_SWARM, "model": None, "data": None, "out": None,
                   "m": None, "perr": None, "mfi_img": 0.0, "mfi_pixel": 0.0,
                   "p_target": 0.0, "workers": os.cpu_count() or 1},
    "report": {**_COMMON, "results": None, "out": None,
               "thresholds": "0.01,0.1,0.2", "model": None},
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="advswarm",
        description="Influence-guided particle-swarm adversarial image attacks",
    )
    sub = parser.add_subparsers(dest="cmd", required=True)

    def add(sp, *names, **kw):
        kw.setdefault("default", argparse.SUPPRESS)
        sp.add_argument(*names, **kw)

    def common(sp):
        add(sp, "--seed", type=int, help="master seed for every random draw")
        add(sp, "--config", help="JSON file supplying any flag by long name")
        add(sp, "--out", help="output directory")

    def train_hyper(sp):
        add(sp, "--hidden", help="comma-separated hidden layer widths")
        add(sp, "--epochs", type=int)
        add(sp, "--lr", type=float, help="learning rate")
        add(sp, "--batch-size", type=int)
        add(sp, "--weight-decay", type=float)
        add(sp, "--momentum", type=float)
        add(sp, "--val-fraction", type=float, help="held-out validation fraction")

    def swarm_flags(sp):
        add(sp, "--np", type=int, help="swarm particle count")
        add(sp, "--iters", type=int, help="swarm iteration cap")
        add(sp, "--eps", type=float, help="sup-norm perturbation bound")
        add(sp, "--loss-weight", type=float, help="weight a on the misclassification loss")
        add(sp, "--norm-weight", type=float, help="weight b on the perturbation norm")
        add(sp, "--perr", type=float, help="requested misclassification probability")
        add(sp, "--perr-tol", type=float, help="accepted |P - perr| band for success")

    sp = sub.add_parser("train", help="train a classifier on a dataset")
    common(sp)
    train_hyper(sp)
    add(sp, "--data", help="dataset spec")
    sp = sub.add_parser("finetune", help="continue training on original + adversarial data")
    common(sp)
    train_hyper(sp)
    add(sp, "--model", help="checkpoint to start from")
    add(sp, "--data", help="original training dataset spec")
    add(sp, "--adv-train", help="adversarial training results directory")
    add(sp, "--test-data", help="original test dataset spec")
    add(sp, "--adv-test", help="adversarial test results directory")

    sp = sub.add_parser("mfi-map", help="pixel heatmap for one image or image-level CSV")
    common(sp)
    add(sp, "--model", help="classifier checkpoint")
    add(sp, "--data", help="dataset spec")
    add(sp, "--index", type=int, help="image index (omit for dataset-level CSV)")
    add(sp, "--target", type=int, help="targeted class for the map objective")

    sp = sub.add_parser("attack", help="craft one adversarial image")
    common(sp)
    swarm_flags(sp)
    add(sp, "--model", help="classifier checkpoint")
    add(sp, "--data", help="dataset spec")
    add(sp, "--index", type=int, help="image to attack")
    group = sp.add_mutually_exclusive_group()
    add(group, "--m", type=int, help="number of pixels to perturb")
    add(group, "--pixels", help="explicit comma-separated pixel indices")
    add(sp, "--mfi-pixel", type=float, help="pixel influence cutoff when --m absent")
    add(sp, "--target", type=int, help="targeted incorrect class")

    sp = sub.add_parser("attack-set", help="attack every vulnerable image of a dataset")
    common(sp)
    swarm_flags(sp)
    add(sp, "--model", help="classifier checkpoint")
    add(sp, "--data", help="dataset spec")
    add(sp, "--m", type=int, help="number of pixels to perturb")
    add(sp, "--mfi-img", type=float, help="image influence selection threshold")
    add(sp, "--mfi-pixel", type=float, help="pixel influence cutoff when --m absent")
    add(sp, "--p-target", type=float, help="minimum P(y_target | x) for selection")
    add(sp, "--workers", type=int, help="parallel attack workers")

    sp = sub.add_parser("report", help="regenerate tables from stored result JSONs")
    common(sp)
    add(sp, "--results", help="directory of result JSONs")
    add(sp, "--thresholds", help="comma-separated image-influence thresholds")
    add(sp, "--model", help="optional checkpoint for re-verifying success flags")
    return parser


def _merge_options(cmd: str, provided: dict) -> argparse.Namespace:
    merged = dict(DEFAULTS[cmd])
    config_path = provided.get("config")
    if config_path:
        try:
            loaded = json.loads(Path(config_path).read_text())
        except json.JSONDecodeError as exc:
            raise InputError(f"{config_path}: invalid JSON ({exc})") from exc
        if not isinstance(loaded, dict):
            raise InputError(f"{config_path}: config must be a JSON object")
        for key, value in loaded.items():
            key = key.replace("-", "_")
            if key not in merged:
                raise InputError(f"{config_path}: unknown option {key!r} for {cmd}")
            merged[key] = value
    merged.update(provided)
    if merged.get("m") is not None and merged.get("pixels") is not None:
        raise InputError("--m and --pixels are mutually exclusive; give only one")
    return argparse.Namespace(**merged)


def _resolve_dataset(spec: str | None, what: str = "--data") -> data.Dataset:
    if not spec:
        raise InputError(f"{what} is required")
    if spec.startswith("synth:") or spec == "synth":
        params = {}
        if ":" in spec:
            for item in filter(None, spec.split(":", 1)[1].split(",")):
                key, _, value = item.partition("=")
                params[key.strip()] = value.strip()
        try:
            return data.synth_blobs(
                num_classes=int(params.get("k", 3)),
                n_per_class=int(params.get("n", 200)),
                side=int(params.get("side", 8)),
                noise_sd=float(params.get("noise", 0.1)),
                seed=int(params.get("seed", 0)),
            )
        except ValueError as exc:
            raise InputError(f"bad synth spec {spec!r}: {exc}") from exc
    if spec.startswith("idx:"):
        parts = spec[4:].split(",")
        if len(parts) != 2:
            raise InputError(f"idx spec needs 'idx:IMAGES,LABELS', got {spec!r}")
        return data.load_idx(parts[0], parts[1])
    if spec.startswith("results:"):
        return _dataset_from_results(spec[8:])
    return data.load_image_dir(spec)


def _result_files(directory) -> list[Path]:
    directory = Path(directory)
    files = sorted(directory.glob("result_*.json"))
    if not files:
        raise InputError(f"{directory}: no result_*.json files")
    return files


def _dataset_from_results(directory) -> data.Dataset:
    images, labels = [], []
    num_classes = 0
    for path in _result_files(directory):
        r = report.load_result_json(path)
        images.append(data.Image(r.adversarial, width=r.width, height=r.height,
                                 channels=r.channels, label=r.y_true))
        labels.append(r.y_true)
        num_classes = max(num_classes, len(r.probs_after))
    return data.Dataset(images, labels, num_classes, Path(directory).name)


def _out_dir(ns) -> Path:
    if not ns.out:
        raise InputError("--out is required")
    out = Path(ns.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _train_config(ns) -> classifier.TrainConfig:
    return classifier.TrainConfig(
        learning_rate=ns.lr,
        epochs=ns.epochs,
        batch_size=ns.batch_size,
        seed=ns.seed,
        momentum=ns.momentum,
        weight_decay=ns.weight_decay,
    )


def _hidden_widths(ns) -> tuple:
    try:
        return tuple(int(h) for h in str(ns.hidden).split(",") if h != "")
    except ValueError as exc:
        raise InputError(f"bad --hidden {ns.hidden!r}: {exc}") from exc


def _swarm_config(ns) -> SwarmConfig:
    return SwarmConfig(n_particles=ns.np, max_iter=ns.iters, seed=ns.seed)


def _attack_spec(ns, pixels=None) -> AttackSpec:
    return AttackSpec(
        m=getattr(ns, "m", None),
        pixel_indices=pixels,
        p_err=ns.perr,
        y_target=getattr(ns, "target", None),
        epsilon=ns.eps,
        loss_weight=ns.loss_weight,
        norm_weight=ns.norm_weight,
        pixel_threshold=getattr(ns, "mfi_pixel", None),
        perr_tol=ns.perr_tol,
        swarm=_swarm_config(ns),
    )


def _accuracy(model, dataset) -> float:
    probs = classifier.predict_batch(model, dataset.pixel_matrix())
    return float(np.mean(probs.argmax(axis=1) == np.asarray(dataset.labels)))


def _write_json(path, payload) -> None:
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=1) + "\n")


def cmd_train(ns) -> int:
    out = _out_dir(ns)
    dataset = _resolve_dataset(ns.data)
    train_split, val_split = data.split(dataset, ns.val_fraction, seed=ns.seed)
    model = classifier.train(train_split, hidden=_hidden_widths(ns),
                             hyper=_train_config(ns), val=val_split)
    classifier.save(model, out / "model.ckpt")
    summary = {
        "train_accuracy": model.meta["train_accuracy"],
        "val_accuracy": model.meta.get("val_accuracy"),
        "n_train": len(train_split),
        "n_val": len(val_split),
        "hidden": list(_hidden_widths(ns)),
        "seed": ns.seed,
    }
    _write_json(out / "train_summary.json", summary)
    log.info("train accuracy %.4f, validation %.4f",
             summary["train_accuracy"], summary["val_accuracy"])
    return 0


def cmd_finetune(ns) -> int:
    out = _out_dir(ns)
    model = classifier.load(ns.model)
    original = _resolve_dataset(ns.data)
    adv_train = _dataset_from_results(ns.adv_train) if ns.adv_train else None
    test_set = _resolve_dataset(ns.test_data, "--test-data") if ns.test_data else None
    adv_test = _dataset_from_results(ns.adv_test) if ns.adv_test else None

    combined_images = list(original.images)
    combined_labels = list(original.labels)
    if adv_train is not None:
        combined_images += adv_train.images
        combined_labels += adv_train.labels
    combined = data.Dataset(combined_images, combined_labels,
                            original.num_classes, original.name + "+adv")

    before = {
        "test_accuracy": _accuracy(model, test_set) if test_set else None,
        "adv_test_accuracy": _accuracy(model, adv_test) if adv_test else None,
    }
    tuned = classifier.finetune(model, combined, _train_config(ns))
    after = {
        "test_accuracy": _accuracy(tuned, test_set) if test_set else None,
        "adv_test_accuracy": _accuracy(tuned, adv_test) if adv_test else None,
    }
    classifier.save(tuned, out / "model.ckpt")
    _write_json(out / "finetune_summary.json", {
        "before": before,
        "after": after,
        "n_original": len(original),
        "n_adversarial": len(adv_train) if adv_train else 0,
        "seed": ns.seed,
    })
    log.info("fine-tuned: test %s -> %s, adversarial test %s -> %s",
             before["test_accuracy"], after["test_accuracy"],
             before["adv_test_accuracy"], after["adv_test_accuracy"])
    return 0


def cmd_mfi_map(ns) -> int:
    out = _out_dir(ns)
    model = classifier.load(ns.model)
    dataset = _resolve_dataset(ns.data)
    if ns.index is None:
        scores = score_images(model, dataset)
        report.manhattan_csv(scores, out / "image_influence.csv")
        log.info("wrote image-level influences for %d images",
                 sum(s.correct for s in scores))
        return 0
    if not 0 <= ns.index < len(dataset):
        raise InputError(f"--index {ns.index} out of range for {len(dataset)} images")
    image = dataset.images[ns.index]
    values = pixel_influence_map(model, image, ns.target)
    report.emit_heatmap(values, (image.height, image.width, image.channels),
                        out / f"mfi_map_{ns.index:05d}.png")
    lines = ["coord,influence"] + [f"{i},{v!r}" for i, v in enumerate(values)]
    (out / f"mfi_map_{ns.index:05d}.csv").write_text("\n".join(lines) + "\n")
    return 0


def _pixel_list(ns):
    if getattr(ns, "pixels", None) is None:
        return None
    try:
        return tuple(int(p) for p in str(ns.pixels).split(",") if p != "")
    except ValueError as exc:
        raise InputError(f"bad --pixels {ns.pixels!r}: {exc}") from exc


def cmd_attack(ns) -> int:
    out = _out_dir(ns)
    model = classifier.load(ns.model)
    dataset = _resolve_dataset(ns.data)
    if not 0 <= ns.index < len(dataset):
        raise InputError(f"--index {ns.index} out of range for {len(dataset)} images")
    spec = _attack_spec(ns, pixels=_pixel_list(ns))
    log.info("attacking image %d with loss kind %s", ns.index, _loss_name(spec))
    result = generate_adversarial(model, dataset.images[ns.index], spec, ns.index)
    report.write_result_json(result, out / f"result_{ns.index:05d}.json")
    image = dataset.images[ns.index]
    shape = (image.height, image.width, image.channels)
    report.emit_image(result.adversarial, shape, out / "adversarial.png")
    report.emit_perturbation_map(result, out / "perturbation.png")
    log.info("success=%s after=%d iterations, |w|_inf=%.4f",
             result.success, result.iterations, result.linf_norm)
    return 0


def _loss_name(spec: AttackSpec) -> str:
    if spec.y_target is not None:
        return "targeted_perr" if spec.p_err is not None else "targeted"
    return "perr" if spec.p_err is not None else "untargeted"


def cmd_attack_set(ns) -> int:
    out = _out_dir(ns)
    model = classifier.load(ns.model)
    dataset = _resolve_dataset(ns.data)
    dspec = DatasetAttackSpec(
        image_threshold=ns.mfi_img,
        target_prob_threshold=ns.p_target,
        pixel_threshold=ns.mfi_pixel,
        m=ns.m,
        p_err=ns.perr,
        attack=replace(_attack_spec(ns), m=None, pixel_threshold=None),
    )
    adv_set, results, summary = generate_adversarial_set(
        model, dataset, dspec, workers=ns.workers)
    results_dir = out / "results"
    results_dir.mkdir(exist_ok=True)
    for r in results:
        report.write_result_json(r, results_dir / f"result_{r.image_index:05d}.json")
    if len(adv_set) and adv_set.images[0].channels == 1:
        data.save_idx(adv_set, out / "adv_images.idx", out / "adv_labels.idx")
    scores = score_images(model, dataset)
    report.manhattan_csv(scores, out / "image_influence.csv")
    _write_json(out / "summary.json", {
        "n_total": summary.n_total,
        "n_correct": summary.n_correct,
        "n_selected": summary.n_selected,
        "n_success": summary.n_success,
        "success_rate": summary.success_rate,
        "mfi_img": ns.mfi_img,
        "mfi_pixel": ns.mfi_pixel,
        "p_target": ns.p_target,
        "seed": ns.seed,
    })
    log.info("selected %d/%d correctly classified, %d successes",
             summary.n_selected, summary.n_correct, summary.n_success)
    return 0


def cmd_report(ns) -> int:
    out = _out_dir(ns)
    if not ns.results:
        raise InputError("--results is required")
    try:
        thresholds = [float(t) for t in str(ns.thresholds).split(",") if t != ""]
    except ValueError as exc:
        raise InputError(f"bad --thresholds {ns.thresholds!r}: {exc}") from exc
    results = [report.load_result_json(p) for p in _result_files(ns.results)]
    (out / "success_table.csv").write_text(
        report.success_rate_table(results, thresholds))
    if ns.model:
        from .attack import verify_success

        model = classifier.load(ns.model)
        mismatches = [
            r.image_index for r in results if verify_success(model, r) != r.success
        ]
        _write_json(out / "verification.json", {
            "n_results": len(results),
            "n_mismatched": len(mismatches),
            "mismatched_indices": mismatches,
        })
        if mismatches:
            log.warning("%d stored success flags failed re-verification", len(mismatches))
    return 0


_COMMANDS = {
    "train": cmd_train,
    "finetune": cmd_finetune,
    "mfi-map": cmd_mfi_map,
    "attack": cmd_attack,
    "attack-set": cmd_attack_set,
    "report": cmd_report,
}


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    parser = _build_parser()
    ns = parser.parse_args(argv)
    provided = {k: v for k, v in vars(ns).items() if k != "cmd"}
    try:
        options = _merge_options(ns.cmd, provided)
        return _COMMANDS[ns.cmd](options)
    except (InputError, DataError) as exc:
        log.error("%s", exc)
        return 2
    except OSError as exc:
        log.error("%s", exc)
        return 3
    except (OptimizerError, NumericalError, TrainingDivergedError) as exc:
        log.error("%s", exc)
        return 4
    except AdvswarmError as exc:
        log.error("%s", exc)
        return 4


if __name__ == "__main__":
    sys.exit(main())
