# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled swarm kernels: the per-particle objective tail and the particle
move.

``objective_from_logits`` matches ``_python.objective_from_logits``: given
the batched logits (one row per particle) and the particle positions,
compute

    a * f0(softmax(logits)) + b * ||position||_2

in one pass per particle: softmax, top-two scan (strict > keeps the lowest
class index on ties, matching a stable descending sort), the selected
misclassification loss, and the perturbation norm.  The dense algebra that
produces the logits stays in BLAS; this loop is where the numpy fallback
loses time to temporaries and sorting.

``swarm_move`` fuses the velocity/position update with both clamps in one
in-place pass, mirroring the numpy fallback's operation order exactly so the
two backends move particles bit-identically.

Both run with the GIL released so dataset attacks can spread across threads.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, fabs, sqrt

cnp.import_array()


def objective_from_logits(const double[:, ::1] logits,
                          const double[:, ::1] positions,
                          long loss_kind, long y_true, long y_target,
                          double p_err, double loss_weight, double norm_weight):
    cdef Py_ssize_t n = logits.shape[0]
    cdef Py_ssize_t num_classes = logits.shape[1]
    cdef Py_ssize_t m = positions.shape[1]

    fvals_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] fvals = fvals_arr
    probs_arr = np.empty(num_classes, dtype=np.float64)
    cdef double[::1] probs = probs_arr

    cdef Py_ssize_t k, y, j, y1, y2
    cdef double top, total, norm_sq, f0, p1, p2

    if positions.shape[0] != n:
        raise ValueError("positions and logits row counts differ")

    with nogil:
        for k in range(n):
            top = logits[k, 0]
            for y in range(1, num_classes):
                if logits[k, y] > top:
                    top = logits[k, y]
            total = 0.0
            for y in range(num_classes):
                probs[y] = exp(logits[k, y] - top)
                total += probs[y]
            for y in range(num_classes):
                probs[y] /= total

            y1 = 0
            for y in range(1, num_classes):
                if probs[y] > probs[y1]:
                    y1 = y
            y2 = 1 if y1 == 0 else 0
            for y in range(num_classes):
                if y != y1 and probs[y] > probs[y2]:
                    y2 = y
            p1 = probs[y1]
            p2 = probs[y2]

            if loss_kind == 0:
                f0 = fabs(p1 - p2) if y1 == y_true else 0.0
            elif loss_kind == 1:
                f0 = fabs(p2 - p_err) if y1 == y_true else fabs(p1 - p_err)
            elif loss_kind == 2:
                f0 = fabs(p1 - probs[y_target]) if y1 != y_target else 0.0
            else:
                f0 = fabs(probs[y_target] - p_err)

            norm_sq = 0.0
            for j in range(m):
                norm_sq += positions[k, j] * positions[k, j]

            fvals[k] = loss_weight * f0 + norm_weight * sqrt(norm_sq)

    return fvals_arr


def swarm_move(double[:, ::1] positions, double[:, ::1] velocities,
               const double[:, ::1] pbest_pos, const double[::1] gbest_pos,
               const double[:, ::1] r1, const double[:, ::1] r2,
               double inertia, double cognitive, double social,
               const double[::1] vmax, const double[::1] lower,
               const double[::1] upper):
    """One in-place velocity/position update for the whole swarm.

    ``r1``/``r2`` have one column for a scalar draw per particle or m
    columns for per-dimension draws.
    """
    cdef Py_ssize_t n = positions.shape[0]
    cdef Py_ssize_t m = positions.shape[1]
    cdef Py_ssize_t rdim = r1.shape[1]
    cdef Py_ssize_t i, j, rj
    cdef double vel, pos

    if velocities.shape[0] != n or velocities.shape[1] != m:
        raise ValueError("velocities shape mismatch")
    if r1.shape[0] != n or r2.shape[0] != n or r2.shape[1] != rdim:
        raise ValueError("draw shape mismatch")

    with nogil:
        for i in range(n):
            for j in range(m):
                rj = j if rdim > 1 else 0
                vel = (inertia * velocities[i, j]
                       + (cognitive * r1[i, rj]) * (pbest_pos[i, j] - positions[i, j])
                       + (social * r2[i, rj]) * (gbest_pos[j] - positions[i, j]))
                if vel > vmax[j]:
                    vel = vmax[j]
                elif vel < -vmax[j]:
                    vel = -vmax[j]
                velocities[i, j] = vel
                pos = positions[i, j] + vel
                if pos > upper[j]:
                    pos = upper[j]
                elif pos < lower[j]:
                    pos = lower[j]
                positions[i, j] = pos
