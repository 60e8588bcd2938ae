import os
import subprocess
import sys

import numpy as np
import pytest

from advswarm import classifier as clf
from advswarm import kernels
from advswarm.kernels import _python

native = pytest.importorskip("advswarm.kernels._native")


def random_case(rng, n=40, k=3, m=5):
    logits = rng.normal(0.0, 3.0, (n, k))
    positions = rng.uniform(-0.15, 0.15, (n, m))
    return np.ascontiguousarray(logits), np.ascontiguousarray(positions)


class TestBackendAgreement:
    @pytest.mark.parametrize("kind,y_true,y_target,p_err", [
        (0, 1, -1, -1.0),
        (1, 1, -1, 0.75),
        (2, -1, 2, -1.0),
        (3, -1, 2, 0.9),
    ])
    def test_all_loss_kinds_match(self, kind, y_true, y_target, p_err):
        rng = np.random.default_rng(kind)
        for _ in range(10):
            logits, positions = random_case(rng, k=int(rng.integers(3, 6)))
            a = native.objective_from_logits(
                logits, positions, kind, y_true, y_target, p_err, 100.0, 1.0)
            b = _python.objective_from_logits(
                logits, positions, kind, y_true, y_target, p_err, 100.0, 1.0)
            assert np.allclose(a, b, rtol=1e-12, atol=1e-12)

    def test_tie_break_matches_stable_sort(self):
        # exact probability ties must pick the same y1/y2 in both backends
        logits = np.array([[1.0, 1.0, 0.0], [0.5, 2.0, 2.0], [3.0, 3.0, 3.0]])
        positions = np.zeros((3, 2))
        for kind, y_true, y_target, p_err in [(0, 0, -1, -1.0), (1, 1, -1, 0.6),
                                              (2, -1, 1, -1.0)]:
            a = native.objective_from_logits(
                logits, positions, kind, y_true, y_target, p_err, 1.0, 0.0)
            b = _python.objective_from_logits(
                logits, positions, kind, y_true, y_target, p_err, 1.0, 0.0)
            assert np.array_equal(a, b)


class TestSwarmObjective:
    def test_matches_scalar_reference(self, blobs, blobs_model):
        from advswarm.attack import AttackSpec, adversarial_objective

        rng = np.random.default_rng(1)
        image = blobs.images[7]
        coords = np.array([3, 12, 45, 60], dtype=np.int64)
        positions = rng.uniform(-0.12, 0.12, (30, 4))
        packed = kernels.pack_model(blobs_model)
        spec = AttackSpec(y_target=2)
        batch = kernels.swarm_objective(
            positions, image.pixels, coords, packed, kernels.LOSS_TARGETED,
            -1, 2, -1.0, spec.loss_weight, spec.norm_weight)
        for i in (0, 13, 29):
            ref = adversarial_objective(positions[i], blobs_model, image, spec, coords)
            assert batch[i] == pytest.approx(ref, rel=1e-12, abs=1e-12)

    def test_batch_logits_match_predict(self, blobs, blobs_model):
        rng = np.random.default_rng(2)
        image = blobs.images[11]
        coords = np.array([0, 8, 33], dtype=np.int64)
        positions = rng.uniform(-0.1, 0.1, (12, 3))
        packed = kernels.pack_model(blobs_model)
        logits = kernels._batch_logits(packed, image.pixels, coords, positions)
        for i in range(12):
            perturbed = np.array(image.pixels)
            perturbed[coords] += positions[i]
            expected = clf.predict(blobs_model, perturbed)
            e = np.exp(logits[i] - logits[i].max())
            assert np.allclose(e / e.sum(), expected, rtol=1e-12, atol=1e-15)

    def test_empty_coords(self, blobs, blobs_model):
        packed = kernels.pack_model(blobs_model)
        image = blobs.images[0]
        vals = kernels.swarm_objective(
            np.zeros((4, 0)), image.pixels, np.array([], dtype=np.int64), packed,
            kernels.LOSS_UNTARGETED, image.label, -1, -1.0, 100.0, 1.0)
        probs = clf.predict(blobs_model, image)
        from advswarm.attack import f0_untargeted

        assert np.allclose(vals, 100.0 * f0_untargeted(probs, image.label))

    def test_pack_model_cached(self, blobs_model):
        assert kernels.pack_model(blobs_model) is kernels.pack_model(blobs_model)


class TestSwarmMove:
    @pytest.mark.parametrize("rdim_is_full", [False, True])
    def test_backends_move_bit_identically(self, rdim_is_full):
        rng = np.random.default_rng(42)
        n, m = 64, 9
        rdim = m if rdim_is_full else 1
        pos = rng.uniform(-0.1, 0.1, (n, m))
        vel = rng.normal(0, 0.02, (n, m))
        pb = rng.uniform(-0.1, 0.1, (n, m))
        gb = rng.uniform(-0.1, 0.1, m)
        r1 = rng.random((n, rdim))
        r2 = rng.random((n, rdim))
        vmax = rng.uniform(0.01, 0.1, m)
        lo, hi = np.full(m, -0.1), np.full(m, 0.1)
        pos_a, vel_a = pos.copy(), vel.copy()
        pos_b, vel_b = pos.copy(), vel.copy()
        native.swarm_move(pos_a, vel_a, pb, gb, r1, r2, 0.6, 2.0, 2.0, vmax, lo, hi)
        _python.swarm_move(pos_b, vel_b, pb, gb, r1, r2, 0.6, 2.0, 2.0, vmax, lo, hi)
        assert np.array_equal(pos_a, pos_b)
        assert np.array_equal(vel_a, vel_b)

    def test_clamps_apply(self):
        rng = np.random.default_rng(1)
        n, m = 32, 4
        pos = rng.uniform(-1.0, 1.0, (n, m))
        vel = rng.normal(0, 5.0, (n, m))
        pb = rng.uniform(-1.0, 1.0, (n, m))
        gb = rng.uniform(-1.0, 1.0, m)
        r1, r2 = rng.random((n, 1)), rng.random((n, 1))
        vmax = np.full(m, 0.25)
        lo, hi = np.full(m, -1.0), np.full(m, 1.0)
        kernels.swarm_move(pos, vel, pb, gb, r1, r2, 0.6, 2.0, 2.0, vmax, lo, hi)
        assert np.abs(vel).max() <= 0.25
        assert pos.min() >= -1.0 and pos.max() <= 1.0


class TestBackendSelection:
    def test_env_var_forces_python(self):
        code = (
            "import advswarm.kernels as k; print(k.BACKEND)"
        )
        env = dict(os.environ, ADVSWARM_PURE_PYTHON="1")
        out = subprocess.run([sys.executable, "-c", code], capture_output=True,
                             text=True, env=env, check=True)
        assert out.stdout.strip() == "python"

    def test_native_preferred_by_default(self):
        env = {k: v for k, v in os.environ.items() if k != "ADVSWARM_PURE_PYTHON"}
        code = "import advswarm.kernels as k; print(k.BACKEND)"
        out = subprocess.run([sys.executable, "-c", code], capture_output=True,
                             text=True, env=env, check=True)
        assert out.stdout.strip() == "native"
