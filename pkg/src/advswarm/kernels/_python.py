"""Vectorized numpy fallbacks for the swarm kernels."""

from __future__ import annotations

import numpy as np


def swarm_move(positions, velocities, pbest_pos, gbest_pos, r1, r2,
               inertia, cognitive, social, vmax, lower, upper):
    # operation order mirrors the compiled kernel so both backends move
    # particles bit-identically
    vel = (inertia * velocities
           + cognitive * r1 * (pbest_pos - positions)
           + social * r2 * (gbest_pos - positions))
    np.clip(vel, -vmax, vmax, out=vel)
    velocities[:] = vel
    pos = positions + vel
    np.clip(pos, lower, upper, out=pos)
    positions[:] = pos


def objective_from_logits(logits, positions, loss_kind, y_true, y_target,
                          p_err, loss_weight, norm_weight):
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    probs = e / e.sum(axis=1, keepdims=True)

    # stable descending sort: ties resolve to the lower class index
    order = np.argsort(-probs, axis=1, kind="stable")
    y1 = order[:, 0]
    rows = np.arange(probs.shape[0])
    p1 = probs[rows, y1]

    if loss_kind == 0:  # untargeted: gap between the top two while still correct
        y2 = order[:, 1]
        f0 = np.where(y1 == y_true, np.abs(p1 - probs[rows, y2]), 0.0)
    elif loss_kind == 1:  # drive the wrong class toward probability p_err
        y2 = order[:, 1]
        f0 = np.where(y1 == y_true, np.abs(probs[rows, y2] - p_err), np.abs(p1 - p_err))
    elif loss_kind == 2:  # targeted: close the gap to the target class
        f0 = np.where(y1 != y_target, np.abs(p1 - probs[rows, y_target]), 0.0)
    elif loss_kind == 3:  # targeted with confidence: |P(target) - p_err|
        f0 = np.abs(probs[rows, y_target] - p_err)
    else:
        raise ValueError(f"unknown loss kind {loss_kind}")

    norms = np.sqrt(np.einsum("ij,ij->i", positions, positions))
    return loss_weight * f0 + norm_weight * norms
