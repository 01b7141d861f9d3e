import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fdan import tensor as T
from fdan.errors import LabelError, ParameterError
from fdan.kernels import (KernelSpec, class_weights, gaussian_kernel_matrix, lmmd,
                          median_heuristic_bandwidth, mmd)
from fdan.tensor import Tensor

from oracles import central_diff, explicit_linear_lmmd, rel_err

LINEAR = KernelSpec(family="linear")


class TestGaussianKernel:
    def test_unit_diagonal(self):
        X = Tensor(np.random.default_rng(0).normal(size=(6, 3)))
        K = gaussian_kernel_matrix(X, X, KernelSpec(bandwidth=0.7)).data
        assert np.all(np.diag(K) == 1.0)

    def test_single_bandwidth(self):
        K = gaussian_kernel_matrix(Tensor([[0.0]]), Tensor([[1.0]]),
                                   KernelSpec(bandwidth=1.0, ladder=[1.0]))
        assert K.item() == pytest.approx(math.exp(-1), abs=1e-15)

    def test_ladder_mean(self):
        K = gaussian_kernel_matrix(Tensor([[0.0]]), Tensor([[1.0]]),
                                   KernelSpec(bandwidth=1.0, ladder=[0.5, 2.0]))
        assert K.item() == pytest.approx((math.exp(-2) + math.exp(-0.5)) / 2, abs=1e-15)

    def test_rejects_bad_bandwidth(self):
        with pytest.raises(ParameterError):
            KernelSpec(bandwidth=0.0)
        with pytest.raises(ParameterError):
            KernelSpec(ladder=[])
        with pytest.raises(ParameterError):
            gaussian_kernel_matrix(Tensor([[0.0]]), Tensor([[1.0]]), KernelSpec(), sigma2=-1.0)

    @pytest.mark.parametrize("n", [5, 20, 50])
    def test_symmetric_psd(self, n):
        X = Tensor(np.random.default_rng(n).normal(size=(n, 4)))
        K = gaussian_kernel_matrix(X, X, KernelSpec()).data
        assert np.max(np.abs(K - K.T)) < 1e-12
        assert np.linalg.eigvalsh(K).min() > -1e-8


class TestMedianHeuristic:
    def test_duplicates(self):
        assert median_heuristic_bandwidth([[0.0], [0.0]], [[2.0]]) == 4.0

    def test_three_points(self):
        assert median_heuristic_bandwidth([[0.0], [1.0]], [[3.0]]) == 4.0

    def test_all_identical(self):
        assert median_heuristic_bandwidth(np.ones((3, 2)), np.ones((2, 2))) == 1.0

    def test_zero_median_falls_back_to_mean_of_nonzero(self):
        # six zero distances and four 4s: the median is 0
        X = np.zeros((4, 1))
        Y = np.array([[2.0]])
        assert median_heuristic_bandwidth(X, Y) == 4.0


class TestClassWeights:
    def test_counts(self):
        W = class_weights(np.array([[1, 0], [1, 0], [0, 1]]))
        np.testing.assert_array_equal(W, [[0.5, 0], [0.5, 0], [0, 1]])

    def test_absent_class(self):
        W = class_weights(np.array([[1, 0], [1, 0]]))
        np.testing.assert_array_equal(W, [[0.5, 0], [0.5, 0]])

    def test_identity(self):
        np.testing.assert_array_equal(class_weights(np.eye(3)), np.eye(3))

    def test_rejects_non_one_hot(self):
        with pytest.raises(LabelError, match="row 1"):
            class_weights(np.array([[1, 0], [1, 1]]))

    @given(st.integers(1, 30), st.integers(1, 6), st.integers(0, 2**32 - 1))
    def test_column_law(self, n, C, seed):
        Y = np.eye(C)[np.random.default_rng(seed).integers(0, C, size=n)]
        sums = class_weights(Y).sum(axis=0)
        present = Y.sum(axis=0) > 0
        assert np.all(np.abs(sums[present] - 1) < 1e-15)
        assert np.all(sums[~present] == 0)


class TestLmmd:
    def test_identical_streams(self):
        rng = np.random.default_rng(0)
        Z = Tensor(rng.normal(size=(8, 3)))
        W = class_weights(np.eye(3)[rng.integers(0, 3, size=8)])
        assert abs(lmmd(Z, Z, W, W, KernelSpec()).item()) < 1e-10

    def test_linear_hand_value(self):
        W1 = class_weights(np.ones((2, 1)))
        W2 = class_weights(np.ones((1, 1)))
        value = lmmd(Tensor([[0.0], [2.0]]), Tensor([[4.0]]), W1, W2, LINEAR)
        assert value.item() == pytest.approx(9.0, abs=1e-12)

    def test_explicit_feature_map(self):
        rng = np.random.default_rng(1)
        Zv, Za = rng.normal(size=(6, 3)), rng.normal(size=(5, 3))
        Yv = np.eye(2)[[0, 1, 0, 1, 1, 0]]
        Ya = np.eye(2)[[1, 0, 0, 1, 1]]
        got = lmmd(Tensor(Zv), Tensor(Za), class_weights(Yv), class_weights(Ya), LINEAR)
        assert abs(got.item() - explicit_linear_lmmd(Zv, Za, Yv, Ya)) < 1e-10

    def test_no_overlap(self):
        Wv = class_weights(np.array([[1, 0], [1, 0]]))
        Wa = class_weights(np.array([[0, 1]]))
        value, shared = lmmd(Tensor(np.ones((2, 2))), Tensor(np.zeros((1, 2))), Wv, Wa,
                             return_overlap=True)
        assert shared == 0 and value.item() == 0.0

    def test_class_count_mismatch(self):
        with pytest.raises(ParameterError):
            lmmd(Tensor(np.ones((2, 2))), Tensor(np.ones((2, 2))),
                 class_weights(np.eye(2)), class_weights(np.eye(3)[:2]))

    def test_skips_batch_absent_classes(self):
        # class 2 is only in the visual batch, so only classes 0 and 1 count
        rng = np.random.default_rng(2)
        Zv, Za = rng.normal(size=(5, 2)), rng.normal(size=(4, 2))
        Yv = np.eye(3)[[0, 1, 2, 0, 1]]
        Ya = np.eye(3)[[0, 1, 1, 0]]
        got = lmmd(Tensor(Zv), Tensor(Za), class_weights(Yv), class_weights(Ya), LINEAR)
        assert got.item() == pytest.approx(explicit_linear_lmmd(Zv, Za, Yv, Ya), abs=1e-12)

    def test_nonnegative_and_permutation_invariant(self):
        rng = np.random.default_rng(3)
        for _ in range(30):
            Zv, Za = rng.normal(size=(7, 3)), rng.normal(size=(6, 3))
            Wv = class_weights(np.eye(3)[rng.integers(0, 3, size=7)])
            Wa = class_weights(np.eye(3)[rng.integers(0, 3, size=6)])
            spec = KernelSpec(bandwidth=2.0)
            base = lmmd(Tensor(Zv), Tensor(Za), Wv, Wa, spec).item()
            assert base >= -1e-10
            pv, pa = rng.permutation(7), rng.permutation(6)
            perm = lmmd(Tensor(Zv[pv]), Tensor(Za[pa]), Wv[pv], Wa[pa], spec).item()
            assert abs(perm - base) < 1e-12

    def test_gradient(self):
        rng = np.random.default_rng(4)
        Zv, Za = rng.normal(size=(6, 3)), rng.normal(size=(5, 3))
        Wv = class_weights(np.eye(2)[[0, 1, 0, 1, 1, 0]])
        Wa = class_weights(np.eye(2)[[1, 0, 0, 1, 1]])
        for spec in (KernelSpec(bandwidth=3.0), LINEAR):
            lv, la = T.param(Zv), T.param(Za)
            gv, ga = T.backward(lmmd(lv, la, Wv, Wa, spec), [lv, la])

            def f():
                return lmmd(Tensor(Zv), Tensor(Za), Wv, Wa, spec).item()

            assert rel_err(gv, central_diff(f, Zv)) < 1e-4
            assert rel_err(ga, central_diff(f, Za)) < 1e-4

    def test_monotone_in_mean_shift(self):
        spec = KernelSpec(bandwidth=2.0)
        means = []
        for delta in (0.0, 1.0, 2.0, 4.0):
            vals = []
            for seed in range(20):
                rng = np.random.default_rng(seed)
                Zv = rng.normal(size=(20, 2))
                Za = rng.normal(size=(20, 2)) + [delta, 0.0]
                W = class_weights(np.ones((20, 1)))
                vals.append(lmmd(Tensor(Zv), Tensor(Za), W, W, spec).item())
            means.append(np.mean(vals))
        assert all(a <= b for a, b in zip(means, means[1:]))


class TestMmd:
    def test_identical(self):
        Z = Tensor(np.random.default_rng(0).normal(size=(9, 4)))
        assert abs(mmd(Z, Z).item()) < 1e-10

    def test_linear_hand_value(self):
        assert mmd(Tensor([[0.0]]), Tensor([[3.0]]), LINEAR).item() == pytest.approx(9.0)

    def test_empty_rejected(self):
        with pytest.raises(ParameterError):
            mmd(Tensor(np.zeros((0, 2))), Tensor(np.ones((2, 2))))

    def test_equals_single_class_lmmd(self):
        rng = np.random.default_rng(5)
        Zv, Za = Tensor(rng.normal(size=(7, 3))), Tensor(rng.normal(size=(4, 3)))
        Wv, Wa = class_weights(np.ones((7, 1))), class_weights(np.ones((4, 1)))
        for spec in (KernelSpec(), LINEAR):
            assert mmd(Zv, Za, spec).item() == pytest.approx(
                lmmd(Zv, Za, Wv, Wa, spec).item(), abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 20), st.integers(1, 20), st.integers(1, 8), st.integers(1, 4),
       st.integers(0, 2**32 - 1))
def test_linear_lmmd_matches_explicit_map(nv, na, d, C, seed):
    rng = np.random.default_rng(seed)
    Zv, Za = rng.normal(size=(nv, d)), rng.normal(size=(na, d))
    Yv = np.eye(C)[rng.integers(0, C, size=nv)]
    Ya = np.eye(C)[rng.integers(0, C, size=na)]
    got = lmmd(Tensor(Zv), Tensor(Za), class_weights(Yv), class_weights(Ya), LINEAR).item()
    assert abs(got - explicit_linear_lmmd(Zv, Za, Yv, Ya)) < 1e-9
