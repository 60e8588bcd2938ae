import numpy as np
import pytest

from advswarm import classifier as clf
from advswarm import influence as infl
from advswarm.data import Image
from advswarm.errors import InputError

from conftest import dense_pinv_influence, finite_diff_jacobian, random_model_image


def constant_model(p=4, k=3):
    return clf.MlpClassifier([np.zeros((p, k))], [np.zeros(k)], ["identity"])


class TestMetricTensor:
    def test_constant_classifier_zero_metric(self):
        image = Image(np.full(4, 0.5), 4, 1, 1, label=0)
        mt = infl.metric_tensor(constant_model(), image, infl.PerturbationSpec((0, 1, 2)))
        assert np.all(mt.matrix == 0.0)
        assert mt.rank == 0

    def test_scalar_coordinate(self):
        rng = np.random.default_rng(0)
        model, image = random_model_image(rng, p=6, k=3)
        mt = infl.metric_tensor(model, image, infl.PerturbationSpec((2,)))
        jac = clf.logprob_jacobian(model, image, [2])
        probs = clf.predict(model, image)
        expected = float(np.sum(probs * jac[:, 0] ** 2))
        assert mt.matrix[0, 0] == pytest.approx(expected, rel=1e-12)

    def test_matches_finite_difference_assembly(self):
        rng = np.random.default_rng(1)
        model, image = random_model_image(rng, p=9, k=3)
        coords = np.array([0, 2, 4, 6, 8])
        mt = infl.metric_tensor(model, image, infl.PerturbationSpec(tuple(coords)))
        jac_fd = finite_diff_jacobian(model, image.pixels, coords)
        probs = clf.predict(model, image)
        brute = sum(p * np.outer(row, row) for p, row in zip(probs, jac_fd))
        assert np.abs(mt.matrix - brute).max() <= 1e-6

    def test_decomposition_invariants(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            model, image = random_model_image(rng)
            m = int(rng.integers(1, min(7, model.input_dim)))
            coords = tuple(int(c) for c in rng.choice(model.input_dim, m, replace=False))
            mt = infl.metric_tensor(model, image, infl.PerturbationSpec(coords))
            k = model.num_classes
            assert mt.rank <= min(m, k - 1)
            norm = np.linalg.norm(mt.matrix)
            eigvals = np.linalg.eigvalsh(mt.matrix)
            assert eigvals.min() >= -1e-10 * max(norm, 1e-300)
            recon = mt.eigvecs @ np.diag(mt.eigvals) @ mt.eigvecs.T
            assert np.linalg.norm(recon - mt.matrix) <= 1e-8 * max(norm, 1e-300)


class TestMfi:
    def test_constant_classifier_zero(self):
        image = Image(np.full(4, 0.5), 4, 1, 1, label=1)
        assert infl.mfi(constant_model(), image, infl.PerturbationSpec((0, 1))) == 0.0

    def test_matches_dense_pseudoinverse(self):
        rng = np.random.default_rng(3)
        for _ in range(40):
            model, image = random_model_image(rng, k=3)
            m = int(rng.integers(1, 4))
            coords = rng.choice(model.input_dim, m, replace=False)
            spec = infl.PerturbationSpec(tuple(int(c) for c in coords))
            value = infl.mfi(model, image, spec)
            jac = clf.logprob_jacobian(model, image, coords)
            probs = clf.predict(model, image)
            oracle = dense_pinv_influence(jac, probs, -jac[image.label])
            assert value == pytest.approx(oracle, rel=1e-8, abs=1e-12)

    def test_rescaling_invariance(self):
        # diffeomorphic reparameterization: scale coordinate j by d_j > 0
        rng = np.random.default_rng(4)
        for _ in range(25):
            model, image = random_model_image(rng)
            m = int(rng.integers(1, 6))
            coords = rng.choice(model.input_dim, m, replace=False)
            jac = clf.logprob_jacobian(model, image, coords)
            probs = clf.predict(model, image)
            grad = -jac[image.label]
            scales = rng.uniform(0.1, 10.0, m)
            base = infl.quadratic_influence(jac, probs, grad)
            rescaled = infl.quadratic_influence(jac * scales, probs, grad * scales)
            assert rescaled == pytest.approx(base, rel=1e-8, abs=1e-15)

    def test_nonnegative(self):
        rng = np.random.default_rng(5)
        for _ in range(25):
            model, image = random_model_image(rng)
            value = infl.mfi(model, image, infl.PerturbationSpec((0, 1)))
            assert value >= 0.0 and np.isfinite(value)

    def test_targeted_objective_selects_class(self):
        rng = np.random.default_rng(6)
        model, image = random_model_image(rng, k=3)
        spec = infl.PerturbationSpec((0, 1), y_target=2)
        jac = clf.logprob_jacobian(model, image, [0, 1])
        probs = clf.predict(model, image)
        oracle = dense_pinv_influence(jac, probs, -jac[2])
        assert infl.mfi(model, image, spec) == pytest.approx(oracle, rel=1e-8)

    def test_unlabeled_untargeted_rejected(self):
        model = constant_model()
        image = Image(np.zeros(4), 4, 1, 1)
        with pytest.raises(InputError):
            infl.mfi(model, image, infl.PerturbationSpec((0,)))


class TestPixelMap:
    def test_constant_classifier_all_zero(self):
        image = Image(np.full(4, 0.5), 4, 1, 1, label=0)
        assert np.all(infl.pixel_influence_map(constant_model(), image) == 0.0)

    def test_matches_scalar_oracle(self):
        rng = np.random.default_rng(7)
        model, image = random_model_image(rng, p=8, k=3)
        values = infl.pixel_influence_map(model, image)
        jac_fd = finite_diff_jacobian(model, image.pixels)
        probs = clf.predict(model, image)
        for i in range(8):
            denom = float(np.sum(probs * jac_fd[:, i] ** 2))
            expected = jac_fd[image.label, i] ** 2 / denom if denom > 0 else 0.0
            assert values[i] == pytest.approx(expected, rel=1e-6, abs=1e-9)

    def test_matches_per_pixel_mfi(self):
        rng = np.random.default_rng(8)
        model, image = random_model_image(rng, p=6)
        values = infl.pixel_influence_map(model, image)
        for i in range(6):
            single = infl.mfi(model, image, infl.PerturbationSpec((i,)))
            assert values[i] == pytest.approx(single, rel=1e-10, abs=1e-15)

    def test_invariant_to_relabeling_uninvolved_classes(self):
        # swapping the output units of classes 1 and 2 must not move the
        # untargeted map for y_true = 0
        rng = np.random.default_rng(9)
        model, image = random_model_image(rng, p=7, k=3)
        image = Image(image.pixels, 7, 1, 1, label=0)
        permuted = clf.MlpClassifier(
            [model.weights[0], model.weights[1][:, [0, 2, 1]]],
            [model.biases[0], model.biases[1][[0, 2, 1]]],
            list(model.activations),
        )
        a = infl.pixel_influence_map(model, image)
        b = infl.pixel_influence_map(permuted, image)
        assert np.allclose(a, b, rtol=1e-12, atol=1e-15)

    def test_finite_nonnegative(self):
        rng = np.random.default_rng(10)
        for _ in range(10):
            model, image = random_model_image(rng)
            values = infl.pixel_influence_map(model, image)
            assert np.isfinite(values).all() and (values >= 0.0).all()

    def test_needs_label_when_untargeted(self):
        model = constant_model()
        with pytest.raises(InputError):
            infl.pixel_influence_map(model, Image(np.zeros(4), 4, 1, 1))


class TestImageInfluence:
    def test_equals_all_coordinate_mfi(self):
        rng = np.random.default_rng(11)
        model, image = random_model_image(rng, p=6)
        spec = infl.PerturbationSpec(tuple(range(6)))
        assert infl.image_influence(model, image) == pytest.approx(
            infl.mfi(model, image, spec), rel=1e-10)


class TestTopPixels:
    def test_basic_order(self):
        assert list(infl.top_pixels(np.array([0.5, 0.1, 0.9]), 2)) == [2, 0]

    def test_tie_break_ascending_index(self):
        assert list(infl.top_pixels(np.array([0.3, 0.3, 0.3]), 3)) == [0, 1, 2]

    def test_full_selection_is_permutation(self):
        rng = np.random.default_rng(12)
        values = rng.random(17)
        assert sorted(infl.top_pixels(values, 17)) == list(range(17))

    def test_rejects_bad_m(self):
        with pytest.raises(InputError):
            infl.top_pixels(np.array([1.0, 2.0]), 0)
        with pytest.raises(InputError):
            infl.top_pixels(np.array([1.0, 2.0]), 3)


class TestIntrinsic:
    def test_transform_shape_and_identity(self):
        rng = np.random.default_rng(13)
        for _ in range(20):
            model, image = random_model_image(rng)
            m = int(rng.integers(1, 6))
            coords = tuple(int(c) for c in rng.choice(model.input_dim, m, replace=False))
            spec = infl.PerturbationSpec(coords)
            mt = infl.metric_tensor(model, image, spec)
            omega = rng.normal(size=m)
            nu = infl.intrinsic_transform(mt, omega)
            assert nu.shape == (mt.rank,)
            # the squared intrinsic gradient norm reproduces the influence
            jac = clf.logprob_jacobian(model, image, np.asarray(coords))
            probs = clf.predict(model, image)
            grad = -jac[image.label]
            if mt.rank:
                g_nu = infl.intrinsic_gradient(mt, grad)
                value = infl.quadratic_influence(jac, probs, grad)
                assert float(g_nu @ g_nu) == pytest.approx(value, rel=1e-8, abs=1e-15)

    def test_identity_metric_reduces_to_gradient_norm(self):
        # with G = I the influence is exactly the squared gradient norm
        rng = np.random.default_rng(14)
        for m in range(1, 7):
            grad = rng.normal(size=m)
            mt = infl.MetricTensor(np.eye(m), np.eye(m), np.ones(m))
            assert infl.influence_from_metric(mt, grad) == np.sum(grad * grad)
