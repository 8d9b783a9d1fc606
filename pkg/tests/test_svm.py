import numpy as np
import pytest

from gliomics.errors import NoConvergence, SingleClass
from gliomics.svm import (Kernel, OvaSvm, SvmModel, smo_solve,
                          train_ova, train_svm_binary)

XOR_X = np.array([[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]])
XOR_Y = np.array([-1.0, -1.0, 1.0, 1.0])


def blobs(rng, n_per_class, centers, sd=0.5):
    X, y = [], []
    for label, c in enumerate(centers):
        X.append(rng.normal(c, sd, size=(n_per_class, len(c))))
        y.append(np.full(n_per_class, label))
    return np.vstack(X), np.concatenate(y)


class TestKernel:
    def test_linear_is_dot_product(self, rng):
        a = rng.normal(size=(4, 3))
        b = rng.normal(size=(5, 3))
        assert np.allclose(Kernel("linear").matrix(a, b), a @ b.T)

    def test_rbf_diagonal_is_one(self, rng):
        a = rng.normal(size=(6, 4))
        K = Kernel("rbf", gamma=0.7).matrix(a, a)
        assert np.allclose(np.diag(K), 1.0)
        assert np.allclose(K, K.T)

    def test_rbf_decays_with_distance(self):
        k = Kernel("rbf", gamma=1.0)
        near = k.matrix(np.array([[0.0]]), np.array([[0.1]]))[0, 0]
        far = k.matrix(np.array([[0.0]]), np.array([[3.0]]))[0, 0]
        assert near > far

    def test_unknown_kernel_rejected(self):
        with pytest.raises(ValueError):
            Kernel("cubic")

    def test_rbf_needs_gamma(self):
        with pytest.raises(ValueError):
            Kernel("rbf")


class TestSmo:
    def test_two_point_oracle(self):
        # max-margin separator of (+1,0)/(-1,0) is w=(1,0), b=0, both
        # points on the margin with alpha = 1/2
        X = np.array([[1.0, 0.0], [-1.0, 0.0]])
        y = np.array([1.0, -1.0])
        res = smo_solve(Kernel("linear").matrix(X, X), y, C=10.0)
        assert np.allclose(res.alphas, [0.5, 0.5], atol=1e-6)
        assert res.bias == pytest.approx(0.0, abs=1e-6)

    def test_four_point_oracle(self):
        # support vectors are the antipodal pair (1,1)/(-1,-1); the other
        # two points sit strictly inside the margin, so their alphas must
        # vanish and the remaining pair splits 0.25/0.25 to give w=(.5,.5)
        X = np.array([[1.0, 1.0], [2.0, 3.0], [-1.0, -1.0], [-2.0, -3.0]])
        y = np.array([1.0, 1.0, -1.0, -1.0])
        res = smo_solve(Kernel("linear").matrix(X, X), y, C=100.0)
        assert np.allclose(res.alphas, [0.25, 0.0, 0.25, 0.0], atol=1e-4)
        w = (res.alphas * y) @ X
        assert np.allclose(w, [0.5, 0.5], atol=1e-4)
        assert res.bias == pytest.approx(0.0, abs=1e-4)

    def test_kkt_residuals(self, rng):
        X, labels = blobs(rng, 20, [(-2.0, 0.0), (2.0, 0.0)])
        y = np.where(labels == 0, -1.0, 1.0)
        C, tol = 1.0, 1e-3
        K = Kernel("linear").matrix(X, X)
        res = smo_solve(K, y, C=C, tol=tol)
        margins = y * ((res.alphas * y) @ K + res.bias)
        free = (res.alphas > 1e-8) & (res.alphas < C - 1e-8)
        assert np.all(np.abs(margins[free] - 1.0) <= tol + 1e-6)
        assert np.all(margins[res.alphas <= 1e-8] >= 1.0 - tol - 1e-6)
        assert np.all(margins[res.alphas >= C - 1e-8] <= 1.0 + tol + 1e-6)

    def test_alphas_within_box(self, rng):
        X, labels = blobs(rng, 15, [(-1.0,), (1.0,)], sd=1.0)
        y = np.where(labels == 0, -1.0, 1.0)
        res = smo_solve(Kernel("linear").matrix(X, X), y, C=0.5)
        assert np.all(res.alphas >= -1e-12)
        assert np.all(res.alphas <= 0.5 + 1e-12)
        # dual equality constraint: sum alpha_i y_i = 0
        assert float(res.alphas @ y) == pytest.approx(0.0, abs=1e-9)

    def test_no_convergence_raises(self, rng):
        X, labels = blobs(rng, 25, [(-0.1, 0.0), (0.1, 0.0)], sd=2.0)
        y = np.where(labels == 0, -1.0, 1.0)
        with pytest.raises(NoConvergence):
            smo_solve(Kernel("rbf", gamma=5.0).matrix(X, X), y, C=1000.0,
                      max_passes=1)


class TestBinaryTraining:
    def test_xor_rbf_solves_linear_does_not(self):
        rbf = train_svm_binary(XOR_X, XOR_Y, Kernel("rbf", gamma=1.0), C=10.0)
        linear = train_svm_binary(XOR_X, XOR_Y, Kernel("linear"), C=10.0)
        assert np.array_equal(rbf.predict(XOR_X), XOR_Y)
        assert np.sum(linear.predict(XOR_X) != XOR_Y) >= 1

    def test_labels_must_be_pm_one(self):
        with pytest.raises(SingleClass):
            train_svm_binary(XOR_X, np.array([0.0, 0.0, 1.0, 1.0]),
                             Kernel("linear"))

    def test_single_class_rejected(self):
        with pytest.raises(SingleClass):
            train_svm_binary(XOR_X, np.ones(4), Kernel("linear"))

    def test_decision_sign_matches_predict(self, rng):
        X, labels = blobs(rng, 12, [(-2.0, 0.0), (2.0, 0.0)])
        y = np.where(labels == 0, -1.0, 1.0)
        m = train_svm_binary(X, y, Kernel("linear"), C=1.0)
        assert np.array_equal(np.sign(m.decision_function(X)), m.predict(X))

    def test_only_support_vectors_kept(self):
        X = np.array([[1.0, 1.0], [2.0, 3.0], [-1.0, -1.0], [-2.0, -3.0]])
        y = np.array([1.0, 1.0, -1.0, -1.0])
        m = train_svm_binary(X, y, Kernel("linear"), C=100.0)
        assert len(m.support_vectors) == 2

    def test_json_round_trip(self, rng):
        X, labels = blobs(rng, 10, [(-1.5, 0.5), (1.5, -0.5)])
        y = np.where(labels == 0, -1.0, 1.0)
        m = train_svm_binary(X, y, Kernel("rbf", gamma=0.5), C=2.0)
        back = SvmModel.from_json(m.to_json())
        assert np.allclose(back.decision_function(X), m.decision_function(X))
        assert back.kernel == m.kernel
        assert back.C == m.C


class TestOneVsAll:
    def test_three_separated_blobs(self, rng):
        X, y = blobs(rng, 15, [(0.0, 4.0), (-4.0, -2.0), (4.0, -2.0)], sd=0.6)
        model = train_ova(X, y, Kernel("linear"), C=10.0)
        assert np.mean(model.predict(X) == y) >= 0.95

    def test_decision_matrix_shape(self, rng):
        X, y = blobs(rng, 5, [(0.0, 4.0), (-4.0, -2.0), (4.0, -2.0)], sd=0.3)
        model = train_ova(X, y, Kernel("rbf", gamma=0.2), C=5.0)
        assert model.decision_matrix(X).shape == (15, 3)

    def test_needs_two_samples_per_class(self):
        X = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]])
        with pytest.raises(SingleClass):
            train_ova(X, np.array([0, 0, 1]), Kernel("linear"))

    def test_needs_two_classes(self):
        X = np.array([[0.0, 0.0], [1.0, 1.0]])
        with pytest.raises(SingleClass):
            train_ova(X, np.array([2, 2]), Kernel("linear"))

    def test_prevalence_breaks_ties(self):
        # both per-class models are the same object, so every row of the
        # decision matrix ties and the more prevalent class must win
        m = SvmModel(Kernel("linear"), np.array([[0.0, 0.0]]),
                     np.array([1.0]), 0.0, 1.0)
        ova = OvaSvm(classes=(3, 7), models=(m, m), prevalence=(2, 5))
        pred = ova.predict(np.array([[1.0, 1.0], [0.5, -0.5]]))
        assert np.all(pred == 7)

    def test_deterministic(self, rng):
        X, y = blobs(rng, 10, [(0.0, 3.0), (-3.0, -2.0), (3.0, -2.0)])
        a = train_ova(X, y, Kernel("linear"), C=1.0, seed=5)
        b = train_ova(X, y, Kernel("linear"), C=1.0, seed=5)
        assert np.array_equal(a.decision_matrix(X), b.decision_matrix(X))
