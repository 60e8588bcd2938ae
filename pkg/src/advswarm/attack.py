"""Influence-guided swarm attacks on a softmax classifier.

Single-image flow: rank pixels by their influence map, keep the top m, and
run the swarm optimizer over the box

    w_i in eps * [0 - x_i, 1 - x_i]

(which simultaneously enforces the eps sup-norm budget and keeps perturbed
pixels in [0, 1]) minimizing a*f0(w) + b*||w||_2.  The misclassification
loss f0 is picked by which of {p_err, y_target} the caller supplied; `a` is
chosen much larger than `b` so the norm term only breaks ties between
equally misleading perturbations.

Dataset flow: score every correctly classified image by its image-level
influence, keep those above the threshold whose target-class probability is
large enough, and attack each one, targeting its second most probable class
unless told otherwise.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .classifier import predict
from .data import Dataset, Image
from .errors import InputError
from .influence import image_influence, pixel_influence_map, top_pixels
from .pso import Bounds, SwarmConfig, optimize

log = logging.getLogger(__name__)


@dataclass
class AttackSpec:
    """User-customized attack options for a single image."""

    m: int | None = None
    pixel_indices: tuple | None = None
    p_err: float | None = None
    y_target: int | None = None
    epsilon: float = 0.15
    loss_weight: float = 100.0     # a, on the misclassification loss
    norm_weight: float = 1.0       # b, on the perturbation norm
    pixel_threshold: float | None = None  # influence cutoff used when m is absent
    perr_tol: float = 0.05         # accepted |P - p_err| band for success
    swarm: SwarmConfig = field(default_factory=SwarmConfig)

    def __post_init__(self):
        if self.m is not None and self.pixel_indices is not None:
            raise InputError("give at most one of m and pixel_indices")
        if self.p_err is not None and not 0.5 <= self.p_err < 1.0:
            raise InputError("p_err must lie in [0.5, 1)")
        if not 0.0 < self.epsilon <= 1.0:
            raise InputError("epsilon must lie in (0, 1]")
        if self.m is not None and self.m < 1:
            raise InputError(f"m={self.m} is infeasible")


@dataclass
class DatasetAttackSpec:
    """Thresholds and per-image targets for attacking a whole dataset."""

    image_threshold: float = 0.0       # minimum image-level influence
    target_prob_threshold: float = 0.0  # minimum P(y_target | x)
    pixel_threshold: float = 0.0       # pixel influence cutoff when m is absent
    m: int | None = None
    p_err: float | None = None
    y_targets: tuple | None = None     # per-image; None -> second-best class
    attack: AttackSpec = field(default_factory=AttackSpec)

    def __post_init__(self):
        if self.image_threshold < 0 or self.pixel_threshold < 0:
            raise InputError("influence thresholds must be nonnegative")
        if not 0.0 <= self.target_prob_threshold <= 1.0:
            raise InputError("target probability threshold must lie in [0, 1]")


@dataclass
class AdversarialResult:
    image_index: int | None
    original: np.ndarray
    adversarial: np.ndarray
    perturbation: np.ndarray   # values at the perturbed coordinates
    coords: np.ndarray
    success: bool
    probs_before: np.ndarray
    probs_after: np.ndarray
    label_before: int
    label_after: int
    y_true: int | None
    y_target: int | None
    p_err: float | None
    perr_tol: float
    l2_norm: float
    linf_norm: float
    iterations: int
    f0_value: float
    objective_value: float
    image_influence: float | None = None
    width: int | None = None
    height: int | None = None
    channels: int | None = None


@dataclass
class DatasetAttackSummary:
    n_total: int
    n_correct: int
    n_selected: int
    n_success: int

    @property
    def success_rate(self) -> float | None:
        return self.n_success / self.n_selected if self.n_selected else None


def _top_two(probs: np.ndarray) -> tuple[int, int]:
    order = np.argsort(-probs, kind="stable")
    return int(order[0]), int(order[1])


def f0_untargeted(probs: np.ndarray, y_true: int) -> float:
    """Gap between the top two classes while the prediction is still correct."""
    y1, y2 = _top_two(probs)
    return float(abs(probs[y1] - probs[y2])) if y1 == y_true else 0.0


def f0_perr(probs: np.ndarray, y_true: int, p_err: float) -> float:
    """Distance of the leading wrong class from the requested probability."""
    y1, y2 = _top_two(probs)
    wrong = y2 if y1 == y_true else y1
    return float(abs(probs[wrong] - p_err))


def f0_targeted(probs: np.ndarray, y_target: int) -> float:
    """Gap between the current winner and the target class."""
    y1, _ = _top_two(probs)
    return float(abs(probs[y1] - probs[y_target])) if y1 != y_target else 0.0


def f0_targeted_perr(probs: np.ndarray, y_target: int, p_err: float) -> float:
    """|P(y_target) - p_err|; zero exactly when the target hits the requested level."""
    return float(abs(probs[y_target] - p_err))


def _loss_kind(spec: AttackSpec) -> int:
    if spec.y_target is not None:
        return kernels.LOSS_TARGETED_PERR if spec.p_err is not None else kernels.LOSS_TARGETED
    return kernels.LOSS_PERR if spec.p_err is not None else kernels.LOSS_UNTARGETED


def _f0(probs: np.ndarray, spec: AttackSpec, y_true: int | None) -> float:
    kind = _loss_kind(spec)
    if kind == kernels.LOSS_UNTARGETED:
        return f0_untargeted(probs, y_true)
    if kind == kernels.LOSS_PERR:
        return f0_perr(probs, y_true, spec.p_err)
    if kind == kernels.LOSS_TARGETED:
        return f0_targeted(probs, spec.y_target)
    return f0_targeted_perr(probs, spec.y_target, spec.p_err)


def adversarial_objective(omega, model, image, spec: AttackSpec, coords) -> float:
    """a*f0 + b*||w||_2 at one perturbation (reference path, not the kernel)."""
    omega = np.asarray(omega, dtype=np.float64)
    coords = np.asarray(coords)
    perturbed = np.array(image.pixels)
    perturbed[coords] += omega
    probs = predict(model, perturbed)
    y_true = image.label if image.label is not None else None
    return spec.loss_weight * _f0(probs, spec, y_true) + spec.norm_weight * float(
        np.linalg.norm(omega)
    )


def success_predicate(probs, y_true=None, y_target=None, p_err=None, tol=0.05) -> bool:
    """Did the attack goal hold for these probabilities?

    Targeted: the target class wins.  Untargeted: the true class lost.  When
    p_err was requested, the winner's probability must also sit within tol
    of it.
    """
    probs = np.asarray(probs)
    y1, _ = _top_two(probs)
    if y_target is not None:
        ok = y1 == int(y_target)
    else:
        if y_true is None:
            raise InputError("untargeted success needs y_true")
        ok = y1 != int(y_true)
    if ok and p_err is not None:
        ok = abs(float(probs[y1]) - float(p_err)) <= tol
    return bool(ok)


def success(result: AdversarialResult, spec: AttackSpec | None = None) -> bool:
    """Evaluate the success predicate on a result's stored probabilities."""
    y_target = spec.y_target if spec is not None else result.y_target
    p_err = spec.p_err if spec is not None else result.p_err
    tol = spec.perr_tol if spec is not None else result.perr_tol
    return success_predicate(result.probs_after, result.y_true, y_target, p_err, tol)


def verify_success(model, result: AdversarialResult) -> bool:
    """Recompute the flag from the stored adversarial image, ignoring caches."""
    probs = predict(model, result.adversarial)
    return success_predicate(
        probs, result.y_true, result.y_target, result.p_err, result.perr_tol
    )


def _select_coords(model, image, spec: AttackSpec) -> np.ndarray:
    if spec.pixel_indices is not None:
        coords = np.asarray(spec.pixel_indices, dtype=np.int64)
        if coords.size == 0:
            raise InputError("pixel_indices is empty")
        if coords.size != np.unique(coords).size:
            raise InputError("pixel_indices contains duplicates")
        if coords.min() < 0 or coords.max() >= image.size:
            raise InputError("pixel_indices out of range")
        return coords
    influence_map = pixel_influence_map(model, image, spec.y_target)
    if spec.m is not None:
        m = spec.m
    elif spec.pixel_threshold is not None:
        m = int(np.count_nonzero(influence_map >= spec.pixel_threshold))
        if m == 0:
            log.warning(
                "pixel threshold %.4g selects no pixels; falling back to the "
                "single most influential one", spec.pixel_threshold,
            )
            m = 1
    else:
        m = image.size  # all pixels when nothing narrows the attack
    if not 1 <= m <= image.size:
        raise InputError(f"m={m} is infeasible for a {image.size}-pixel image")
    return np.asarray(top_pixels(influence_map, m), dtype=np.int64)


def _result(image, index, coords, omega, model, spec, probs_before, iterations):
    x = image.pixels
    adversarial = np.array(x)
    adversarial[coords] += omega
    np.clip(adversarial, 0.0, 1.0, out=adversarial)
    applied = adversarial - x
    probs_after = predict(model, adversarial)
    y_true = int(image.label) if image.label is not None else None
    f0 = _f0(probs_after, spec, y_true)
    objective = spec.loss_weight * f0 + spec.norm_weight * float(np.linalg.norm(applied))
    return AdversarialResult(
        image_index=index,
        original=np.array(x),
        adversarial=adversarial,
        perturbation=applied[coords],
        coords=np.asarray(coords, dtype=np.int64),
        success=success_predicate(
            probs_after, y_true, spec.y_target, spec.p_err, spec.perr_tol
        ),
        probs_before=probs_before,
        probs_after=probs_after,
        label_before=int(np.argmax(probs_before)),
        label_after=int(np.argmax(probs_after)),
        y_true=y_true,
        y_target=spec.y_target,
        p_err=spec.p_err,
        perr_tol=spec.perr_tol,
        l2_norm=float(np.linalg.norm(applied)),
        linf_norm=float(np.max(np.abs(applied))) if applied.size else 0.0,
        iterations=iterations,
        f0_value=f0,
        objective_value=objective,
        width=image.width,
        height=image.height,
        channels=image.channels,
    )


def generate_adversarial(model, image: Image, spec: AttackSpec,
                         image_index: int | None = None) -> AdversarialResult:
    """Craft one adversarial image (single-image attack procedure)."""
    if spec.y_target is None and image.label is None:
        raise InputError("untargeted attack needs a labeled image")
    if spec.y_target is not None and not 0 <= spec.y_target < model.num_classes:
        raise InputError(f"y_target={spec.y_target} out of range")
    probs_before = predict(model, image)
    y_true = int(image.label) if image.label is not None else None

    coords = _select_coords(model, image, spec)

    # nothing to do if the goal already holds at zero perturbation
    if _f0(probs_before, spec, y_true) == 0.0:
        return _result(image, image_index, coords, np.zeros(coords.size), model,
                       spec, probs_before, iterations=0)

    x = image.pixels
    bounds = Bounds(spec.epsilon * (0.0 - x[coords]), spec.epsilon * (1.0 - x[coords]))
    packed = kernels.pack_model(model)
    kind = _loss_kind(spec)
    y_true_arg = y_true if y_true is not None else -1
    y_target_arg = spec.y_target if spec.y_target is not None else -1
    p_err_arg = spec.p_err if spec.p_err is not None else -1.0

    def batch_objective(positions):
        return kernels.swarm_objective(
            positions, x, coords, packed, kind, y_true_arg, y_target_arg,
            p_err_arg, spec.loss_weight, spec.norm_weight,
        )

    outcome = optimize(batch_objective, bounds, spec.swarm,
                       anchor=np.zeros(coords.size), vectorized=True)
    return _result(image, image_index, coords, outcome.x, model, spec,
                   probs_before, outcome.iterations)


@dataclass
class ImageScore:
    """Per-image screening record used for selection and reporting."""

    index: int
    y_true: int
    correct: bool
    influence: float | None     # image-level influence; None if misclassified
    probs: np.ndarray
    y_target: int
    selected: bool = False


def score_images(model, dataset: Dataset, y_targets=None) -> list[ImageScore]:
    """Predict and score every image; influence only for the correctly classified."""
    if y_targets is not None and len(y_targets) != len(dataset):
        raise InputError("y_targets must match the dataset length")
    scores = []
    for i, image in enumerate(dataset.images):
        probs = predict(model, image)
        y_true = int(image.label)
        correct = int(np.argmax(probs)) == y_true
        value = image_influence(model, image) if correct else None
        _, y2 = _top_two(probs)
        y_target = int(y_targets[i]) if y_targets is not None else y2
        scores.append(ImageScore(i, y_true, correct, value, probs, y_target))
    return scores


def _child_seed(base_seed: int, index: int) -> int:
    return int(np.random.SeedSequence((base_seed, index)).generate_state(1)[0])


def generate_adversarial_set(model, dataset: Dataset, dspec: DatasetAttackSpec,
                             workers: int = 1):
    """Attack every sufficiently vulnerable image of a dataset.

    Returns (adversarial Dataset labeled with the true classes, per-image
    results in index order, summary, per-image scores).  An empty selection
    yields empty results plus the diagnostic counts, not an error.
    """
    scores = score_images(model, dataset, dspec.y_targets)
    selected = []
    for s in scores:
        if not s.correct:
            continue
        if s.influence < dspec.image_threshold:
            continue
        if s.probs[s.y_target] < dspec.target_prob_threshold:
            continue
        s.selected = True
        selected.append(s)

    base = dspec.attack
    kernels.pack_model(model)  # pack once, outside the worker pool

    def attack_one(s: ImageScore) -> AdversarialResult:
        spec = replace(
            base,
            m=dspec.m,
            pixel_threshold=dspec.pixel_threshold if dspec.m is None else None,
            p_err=dspec.p_err,
            y_target=s.y_target,
            swarm=replace(base.swarm, seed=_child_seed(base.swarm.seed, s.index)),
        )
        result = generate_adversarial(model, dataset.images[s.index], spec, s.index)
        result.image_influence = s.influence
        return result

    if workers > 1 and len(selected) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(attack_one, selected))
    else:
        results = [attack_one(s) for s in selected]
    results.sort(key=lambda r: r.image_index)

    adv_images = [
        Image(r.adversarial, width=r.width, height=r.height, channels=r.channels,
              label=r.y_true)
        for r in results
    ]
    adv_set = Dataset(adv_images, [r.y_true for r in results], dataset.num_classes,
                      dataset.name + "-adv")
    summary = DatasetAttackSummary(
        n_total=len(dataset),
        n_correct=sum(s.correct for s in scores),
        n_selected=len(selected),
        n_success=sum(r.success for r in results),
    )
    return adv_set, results, summary
