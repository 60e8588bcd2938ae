"""File outputs: success-rate tables, influence heatmaps, perturbation maps,
and full attack-result records.

Everything is CSV, JSON, or lossless PNG so tests can diff outputs and other
tools can consume them.  JSON records keep exact float64 values (Python's
repr round-trips), which is what makes stored success flags re-verifiable
from the stored adversarial pixels.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .attack import AdversarialResult
from .errors import InputError

RESULT_FORMAT = "advswarm-result"
RESULT_VERSION = 1
SIDECAR_VERSION = 1


def success_rate_table(results_by_split, thresholds) -> str:
    """CSV of attack success rates per image-influence threshold.

    ``results_by_split`` maps a split name ("train", "test", ...) to a list
    of AdversarialResult; a bare list is treated as one unnamed split.  Each
    threshold row counts the results with image influence >= threshold;
    rates are percentages with two decimals, and empty buckets report n=0
    with a blank rate.
    """
    if isinstance(results_by_split, (list, tuple)):
        results_by_split = {"all": list(results_by_split)}
    splits = list(results_by_split)
    lines = ["threshold," + ",".join(f"{s}_n,{s}_rate" for s in splits)]
    for thr in thresholds:
        cells = [f"{thr:g}"]
        for s in splits:
            bucket = [
                r for r in results_by_split[s]
                if r.image_influence is not None and r.image_influence >= thr
            ]
            if bucket:
                rate = 100.0 * sum(r.success for r in bucket) / len(bucket)
                cells += [str(len(bucket)), f"{rate:.2f}"]
            else:
                cells += ["0", ""]
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def _write_gray_png(byte_grid: np.ndarray, path) -> None:
    from PIL import Image as PilImage

    PilImage.fromarray(byte_grid.astype(np.uint8), mode="L").save(path, format="PNG")


def _channel_paths(path, channels: int) -> list[Path]:
    path = Path(path)
    if channels == 1:
        return [path]
    return [path.with_name(f"{path.stem}_c{k}{path.suffix}") for k in range(channels)]


def emit_heatmap(values, shape, path) -> list[Path]:
    """Render an influence map as grayscale PNG(s), one file per channel.

    Values are min-max scaled onto [0, 255] with one global scale across
    channels, so a larger influence never renders darker; an all-zero map is
    all black.  The scaling bounds land in a JSON sidecar next to the image.
    """
    height, width, channels = shape
    values = np.asarray(values, dtype=np.float64)
    if values.shape != (height * width * channels,):
        raise InputError(f"map has {values.shape}, expected {height * width * channels} values")
    vmin, vmax = float(values.min()), float(values.max())
    scale = vmax - vmin
    scaled = np.zeros_like(values) if scale <= 0 else (values - vmin) / scale
    byte_cube = np.round(255.0 * scaled).reshape(height, width, channels)
    paths = _channel_paths(path, channels)
    for k, file_path in enumerate(paths):
        _write_gray_png(byte_cube[:, :, k], file_path)
    sidecar = Path(path).with_suffix(".json")
    sidecar.write_text(json.dumps({
        "version": SIDECAR_VERSION,
        "vmin": vmin,
        "vmax": vmax,
        "files": [p.name for p in paths],
    }, sort_keys=True, indent=2) + "\n")
    return paths


def emit_image(pixels, shape, path) -> list[Path]:
    """Render a [0, 1] pixel vector as PNG(s), one file per channel."""
    height, width, channels = shape
    pixels = np.asarray(pixels, dtype=np.float64)
    if pixels.shape != (height * width * channels,):
        raise InputError(f"{pixels.shape} pixels do not fit shape {shape}")
    byte_cube = np.round(255.0 * np.clip(pixels, 0.0, 1.0))
    byte_cube = byte_cube.reshape(height, width, channels)
    paths = _channel_paths(path, channels)
    for k, file_path in enumerate(paths):
        _write_gray_png(byte_cube[:, :, k], file_path)
    return paths


def manhattan_csv(scores, path) -> None:
    """CSV of (image index, true class, image-level influence) for plotting.

    Rows cover the correctly classified images, the ones an image-level
    influence is defined for.
    """
    lines = ["index,label,image_influence"]
    for s in scores:
        if s.correct:
            lines.append(f"{s.index},{s.y_true},{s.influence!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def emit_perturbation_map(result: AdversarialResult, path) -> list[Path]:
    """Render a signed perturbation as diverging grayscale (byte 128 = zero).

    Scaled by the largest absolute perturbation so byte values span
    [1, 255]; the exact values, coordinates and scale go to a JSON sidecar.
    """
    if result.width is None or result.height is None or result.channels is None:
        raise InputError("result carries no image shape")
    omega = np.asarray(result.adversarial) - np.asarray(result.original)
    scale = float(np.max(np.abs(omega))) if omega.size else 0.0
    unit = omega / scale if scale > 0 else np.zeros_like(omega)
    byte_cube = np.clip(np.round(128.0 + 127.0 * unit), 0, 255)
    byte_cube = byte_cube.reshape(result.height, result.width, result.channels)
    paths = _channel_paths(path, result.channels)
    for k, file_path in enumerate(paths):
        _write_gray_png(byte_cube[:, :, k], file_path)
    sidecar = Path(path).with_suffix(".json")
    sidecar.write_text(json.dumps({
        "version": SIDECAR_VERSION,
        "scale": scale,
        "coords": [int(c) for c in result.coords],
        "values": [float(v) for v in result.perturbation],
        "files": [p.name for p in paths],
    }, sort_keys=True, indent=2) + "\n")
    return paths


def result_to_dict(result: AdversarialResult) -> dict:
    return {
        "format": RESULT_FORMAT,
        "version": RESULT_VERSION,
        "image_index": result.image_index,
        "width": result.width,
        "height": result.height,
        "channels": result.channels,
        "y_true": result.y_true,
        "y_target": result.y_target,
        "p_err": result.p_err,
        "perr_tol": result.perr_tol,
        "original": result.original.tolist(),
        "adversarial": result.adversarial.tolist(),
        "coords": [int(c) for c in result.coords],
        "perturbation": result.perturbation.tolist(),
        "success": bool(result.success),
        "probs_before": result.probs_before.tolist(),
        "probs_after": result.probs_after.tolist(),
        "label_before": result.label_before,
        "label_after": result.label_after,
        "l2_norm": result.l2_norm,
        "linf_norm": result.linf_norm,
        "iterations": result.iterations,
        "f0_value": result.f0_value,
        "objective_value": result.objective_value,
        "image_influence": result.image_influence,
    }


def write_result_json(result: AdversarialResult, path) -> None:
    """Serialize a complete result; floats keep full precision."""
    Path(path).write_text(
        json.dumps(result_to_dict(result), sort_keys=True, indent=1) + "\n"
    )


def load_result_json(path) -> AdversarialResult:
    payload = json.loads(Path(path).read_text())
    if payload.get("format") != RESULT_FORMAT:
        raise InputError(f"{path}: unexpected format {payload.get('format')!r}")
    if payload.get("version") != RESULT_VERSION:
        raise InputError(f"{path}: unsupported result version {payload.get('version')}")
    return AdversarialResult(
        image_index=payload["image_index"],
        original=np.asarray(payload["original"], dtype=np.float64),
        adversarial=np.asarray(payload["adversarial"], dtype=np.float64),
        perturbation=np.asarray(payload["perturbation"], dtype=np.float64),
        coords=np.asarray(payload["coords"], dtype=np.int64),
        success=payload["success"],
        probs_before=np.asarray(payload["probs_before"], dtype=np.float64),
        probs_after=np.asarray(payload["probs_after"], dtype=np.float64),
        label_before=payload["label_before"],
        label_after=payload["label_after"],
        y_true=payload["y_true"],
        y_target=payload["y_target"],
        p_err=payload["p_err"],
        perr_tol=payload["perr_tol"],
        l2_norm=payload["l2_norm"],
        linf_norm=payload["linf_norm"],
        iterations=payload["iterations"],
        f0_value=payload["f0_value"],
        objective_value=payload["objective_value"],
        image_influence=payload["image_influence"],
        width=payload["width"],
        height=payload["height"],
        channels=payload["channels"],
    )
