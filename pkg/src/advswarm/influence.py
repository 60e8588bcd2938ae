"""Manifold-based first-order influence of pixel perturbations.

For a perturbation w acting additively on a set of pixel coordinates, the
classifier's probabilities trace out a statistical manifold whose metric
tensor at w = 0 is

    G = sum_y P(y) * grad(log P(y))^T grad(log P(y)),

i.e. G = L^T D L with L the class-by-coordinate log-probability Jacobian and
D = diag(P).  The influence of the attack objective f (a negative class
log-probability) is the intrinsic squared gradient norm

    g^T G^+ g,   g = grad f at w = 0,

which corrects the plain squared gradient norm with the pseudoinverse of G
and is invariant under diffeomorphic reparameterizations of w.  Because the
probability-weighted gradient rows sum to zero, G has rank at most K - 1, so
the quadratic form is evaluated through a K x K eigenproblem instead of the
m x m metric: with A = D^{1/2} L and A A^T = U diag(lam) U^T,

    g^T G^+ g = sum_j ((U^T A g)_j)^2 / lam_j^2   over retained lam_j.

Eigenvalues are retained iff lam > RANK_RTOL * max(lam); if all are cut the
influence is 0 (a flat model is maximally insensitive).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .classifier import logprob_jacobian, predict
from .errors import InputError, NumericalError

# relative eigenvalue cutoff defining the numerical rank of the metric
RANK_RTOL = 1e-10


@dataclass(frozen=True)
class PerturbationSpec:
    """Which coordinates are perturbed and which class log-prob is attacked.

    ``y_target`` None means the untargeted objective -log P(y_true); the true
    label then comes from the image.
    """

    coords: tuple
    y_target: int | None = None


@dataclass(frozen=True)
class MetricTensor:
    """Metric G with its compact eigendecomposition G = U0 diag(lam0) U0^T."""

    matrix: np.ndarray   # (m, m)
    eigvecs: np.ndarray  # (m, r0)
    eigvals: np.ndarray  # (r0,) descending, all positive

    @property
    def rank(self) -> int:
        return int(self.eigvals.shape[0])


def _objective_class(image, y_target) -> int:
    if y_target is not None:
        return int(y_target)
    if image.label is None:
        raise InputError("untargeted influence needs a labeled image")
    return int(image.label)


def metric_tensor(model, image, spec: PerturbationSpec) -> MetricTensor:
    """Assemble G = L^T diag(P) L explicitly with its compact decomposition.

    Only sensible for small coordinate sets; the influence computations below
    never materialize this matrix.
    """
    coords = np.asarray(spec.coords)
    jac = logprob_jacobian(model, image, coords)
    probs = predict(model, image)
    g_mat = (jac * probs[:, None]).T @ jac
    g_mat = 0.5 * (g_mat + g_mat.T)  # exact symmetry despite rounding
    eigvals, eigvecs = np.linalg.eigh(g_mat)
    cutoff = RANK_RTOL * max(eigvals.max(initial=0.0), 0.0)
    keep = np.nonzero(eigvals > cutoff)[0][::-1]  # descending order
    return MetricTensor(g_mat, np.ascontiguousarray(eigvecs[:, keep]), eigvals[keep])


def influence_from_metric(metric: MetricTensor, grad: np.ndarray) -> float:
    """g^T G^+ g through an explicit metric decomposition."""
    proj = metric.eigvecs.T @ np.asarray(grad, dtype=np.float64)
    if metric.rank == 0:
        return 0.0
    return float(np.sum((proj * proj) / metric.eigvals))


def quadratic_influence(jac: np.ndarray, probs: np.ndarray, grad: np.ndarray) -> float:
    """g^T G^+ g for G = jac^T diag(probs) jac, via the K x K Gram matrix.

    ``grad`` must be the objective gradient in the same coordinates as the
    Jacobian columns.  This is the workhorse; it never forms the m x m metric.
    """
    jac = np.asarray(jac, dtype=np.float64)
    probs = np.asarray(probs, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    a_mat = np.sqrt(probs)[:, None] * jac         # (K, m)
    gram = a_mat @ a_mat.T                        # (K, K), eigenvalues = spectrum of G
    eigvals, eigvecs = np.linalg.eigh(gram)
    top = eigvals.max(initial=0.0)
    if top <= 0.0:
        return 0.0
    keep = eigvals > RANK_RTOL * top
    if not keep.any():
        return 0.0
    proj = eigvecs.T @ (a_mat @ grad)
    value = float(np.sum((proj[keep] / eigvals[keep]) ** 2))
    if not np.isfinite(value):
        raise NumericalError(
            f"influence became non-finite (top eigenvalue {top:.3e}, m={jac.shape[1]})"
        )
    return value


def mfi(model, image, spec: PerturbationSpec) -> float:
    """Influence of perturbing ``spec.coords`` on the selected objective."""
    coords = np.asarray(spec.coords)
    y_obj = _objective_class(image, spec.y_target)
    jac = logprob_jacobian(model, image, coords)
    probs = predict(model, image)
    if not 0 <= y_obj < probs.shape[0]:
        raise InputError(f"class {y_obj} out of range for K={probs.shape[0]}")
    grad = -jac[y_obj]  # gradient of f = -log P(y_obj)
    return quadratic_influence(jac, probs, grad)


def pixel_influence_map(model, image, y_target: int | None = None) -> np.ndarray:
    """Per-pixel influence: coordinate i scores (df/dx_i)^2 / G_i.

    Each coordinate is treated as its own one-dimensional perturbation, with
    the scalar pseudoinverse convention G_i = 0 -> 0.  RGB channel components
    count as separate coordinates.
    """
    y_obj = _objective_class(image, y_target)
    jac = logprob_jacobian(model, image)          # (K, p)
    probs = predict(model, image)
    if not 0 <= y_obj < probs.shape[0]:
        raise InputError(f"class {y_obj} out of range for K={probs.shape[0]}")
    metric_diag = probs @ (jac * jac)             # (p,)
    numer = jac[y_obj] ** 2
    values = np.zeros_like(numer)
    np.divide(numer, metric_diag, out=values, where=metric_diag > 0.0)
    if not np.isfinite(values).all():
        raise NumericalError("pixel influence map contains non-finite entries")
    return values


def image_influence(model, image) -> float:
    """Image-level influence: all pixels perturbed, objective -log P(y_true)."""
    if image.label is None:
        raise InputError("image-level influence needs a labeled image")
    jac = logprob_jacobian(model, image)
    probs = predict(model, image)
    return quadratic_influence(jac, probs, -jac[int(image.label)])


def top_pixels(values: np.ndarray, m: int) -> np.ndarray:
    """Indices of the m largest map entries, descending; ties by lower index."""
    values = np.asarray(values)
    if not 1 <= m <= values.shape[0]:
        raise InputError(f"m={m} out of range for a {values.shape[0]}-pixel map")
    order = np.argsort(-values, kind="stable")
    return order[:m]


def intrinsic_transform(metric: MetricTensor, omega: np.ndarray) -> np.ndarray:
    """Map a perturbation into intrinsic coordinates: nu = lam0^{1/2} U0^T w.

    In these coordinates the metric is the identity at the base point, so the
    influence equals the plain squared gradient norm of the objective.
    """
    omega = np.asarray(omega, dtype=np.float64)
    return np.sqrt(metric.eigvals) * (metric.eigvecs.T @ omega)


def intrinsic_gradient(metric: MetricTensor, grad: np.ndarray) -> np.ndarray:
    """Objective gradient in intrinsic coordinates: lam0^{-1/2} U0^T g."""
    grad = np.asarray(grad, dtype=np.float64)
    return (metric.eigvecs.T @ grad) / np.sqrt(metric.eigvals)
