"""Hot-loop kernels for the swarm attack objective.

Evaluating the objective for a swarm splits into two parts: dense batched
linear algebra (first-layer correction, hidden layers), which numpy already
runs on BLAS/SIMD and which both backends share, and a scalar
per-particle tail (softmax, top-two scan, loss selection, perturbation
norm) where numpy spends most of its time on temporaries and sorting.  The
tail is what gets compiled: ``_native`` is a Cython extension, ``_python``
the vectorized numpy fallback.

The extension is preferred when its import succeeds; set
``ADVSWARM_PURE_PYTHON=1`` to force the fallback.  Both must agree to
floating-point roundoff; ``benchmarks/bench_kernels.py`` compares them.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

LOSS_UNTARGETED = 0
LOSS_PERR = 1
LOSS_TARGETED = 2
LOSS_TARGETED_PERR = 3

if os.environ.get("ADVSWARM_PURE_PYTHON"):
    from . import _python as _impl

    BACKEND = "python"
else:
    try:
        from . import _native as _impl  # type: ignore[attr-defined]

        BACKEND = "native"
    except ImportError:
        from . import _python as _impl

        BACKEND = "python"


@dataclass(frozen=True)
class PackedModel:
    """Per-layer views of a classifier plus kernel-friendly metadata."""

    weights: tuple
    biases: tuple
    act_ids: np.ndarray  # (L,) int64: 0 identity, 1 tanh


_ACT_IDS = {"identity": 0, "tanh": 1}


def pack_model(model) -> PackedModel:
    """Snapshot an MlpClassifier for kernel use (cached on the model)."""
    cached = getattr(model, "_packed_cache", None)
    if cached is not None:
        return cached
    packed = PackedModel(
        weights=tuple(np.ascontiguousarray(w) for w in model.weights),
        biases=tuple(np.ascontiguousarray(b) for b in model.biases),
        act_ids=np.asarray([_ACT_IDS[a] for a in model.activations], dtype=np.int64),
    )
    model._packed_cache = packed
    return packed


def _batch_logits(packed: PackedModel, base, coords, positions) -> np.ndarray:
    """Logits of base + scatter(positions) for every particle, via BLAS.

    Only the first layer sees the perturbation, so its pre-activation is
    computed once for the base image and corrected with the m perturbed
    weight rows.
    """
    w0, b0 = packed.weights[0], packed.biases[0]
    acts = (base @ w0 + b0) + positions @ w0[coords, :]
    if packed.act_ids[0] == 1:
        acts = np.tanh(acts)
    for w, b, act in zip(packed.weights[1:], packed.biases[1:], packed.act_ids[1:]):
        acts = acts @ w + b
        if act == 1:
            acts = np.tanh(acts)
    return acts


def swarm_objective(positions, base, coords, packed: PackedModel, loss_kind,
                    y_true, y_target, p_err, loss_weight, norm_weight) -> np.ndarray:
    """Attack objective a*f0 + b*||w||_2 for every particle position.

    ``positions`` is (n, m); particle i's perturbation is added onto
    ``base[coords]`` before the forward pass.  ``y_true``/``y_target`` use -1
    for "absent"; ``p_err`` is only read by the P_err loss kinds.
    """
    positions = np.ascontiguousarray(positions, dtype=np.float64)
    base = np.asarray(base, dtype=np.float64)
    coords = np.asarray(coords, dtype=np.int64)
    logits = np.ascontiguousarray(_batch_logits(packed, base, coords, positions))
    return _impl.objective_from_logits(
        logits, positions, int(loss_kind), int(y_true), int(y_target),
        float(p_err), float(loss_weight), float(norm_weight),
    )


def swarm_move(positions, velocities, pbest_pos, gbest_pos, r1, r2,
               inertia, cognitive, social, vmax, lower, upper) -> None:
    """One in-place swarm update: velocity rule, velocity clamp, box clamp.

    ``r1``/``r2`` are (n, 1) for scalar draws or (n, m) for per-dimension
    draws.  Both backends apply the identical operation order, so particle
    trajectories match bit-for-bit between them.
    """
    _impl.swarm_move(positions, velocities, pbest_pos, gbest_pos,
                     np.ascontiguousarray(r1), np.ascontiguousarray(r2),
                     float(inertia), float(cognitive), float(social),
                     vmax, lower, upper)
