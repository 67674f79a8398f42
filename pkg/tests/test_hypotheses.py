import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oodpac.hypotheses import (
    CapacityError,
    CompositeHypothesis,
    ConstantHypothesis,
    FcnnArchitecture,
    FcnnClassifier,
    FcnnParams,
    HypothesisDomainError,
    ScoreClassifier,
    TableSpace,
    all_tables,
    classify_score,
    compose,
    composite_space,
    constant_params,
    enumerate_space,
    fcnn_forward,
    induced_label,
    relabel_binary,
    score,
    tables_over,
)


def _params(ws, bs):
    return FcnnParams(tuple(np.array(w, float) for w in ws), tuple(np.array(b, float) for b in bs))


class TestForward:
    def test_zero_weights_onehot_bias(self):
        arch = FcnnArchitecture((3, 5, 4, 4), "sigmoid")
        p = constant_params(arch, [0, 0, 1, 0])
        X = np.random.default_rng(0).normal(size=(6, 3))
        assert np.array_equal(fcnn_forward(arch, p, X), np.tile([0, 0, 1.0, 0], (6, 1)))

    def test_relu_kill(self):
        arch = FcnnArchitecture((2, 3, 2), "relu")
        p = _params([np.ones((3, 2)), np.ones((2, 3))], [np.full(3, -100.0), [0.5, -0.25]])
        out = fcnn_forward(arch, p, np.array([[1.0, 2.0], [-3.0, 4.0]]))
        assert np.array_equal(out, [[0.5, -0.25], [0.5, -0.25]])

    def test_matches_hand_evaluation(self):
        w2, b2 = [[1.5, -2.0], [0.5, 0.25]], [0.1, -0.3]
        w3, b3 = [[2.0, -1.0], [-0.5, 3.0]], [0.2, 0.0]
        arch = FcnnArchitecture((2, 2, 2), "relu")
        p = _params([w2, w3], [b2, b3])

        def hand(x1, x2):
            h1 = max(0.0, 1.5 * x1 - 2.0 * x2 + 0.1)
            h2 = max(0.0, 0.5 * x1 + 0.25 * x2 - 0.3)
            return [2.0 * h1 - 1.0 * h2 + 0.2, -0.5 * h1 + 3.0 * h2 + 0.0]

        X = np.random.default_rng(1).normal(size=(5, 2))
        got = fcnn_forward(arch, p, X)
        for x, g in zip(X, got):
            assert np.allclose(g, hand(*x), atol=1e-12, rtol=0)
        assert np.allclose(fcnn_forward(arch, p, X[0]), got[0])

    def test_shape_errors(self):
        arch = FcnnArchitecture((2, 2, 2))
        p = constant_params(arch, [1, 0])
        with pytest.raises(ValueError):
            fcnn_forward(arch, p, np.zeros(3))
        with pytest.raises(ValueError):
            fcnn_forward(FcnnArchitecture((2, 3, 2)), p, np.zeros(2))

    def test_depth_guard(self):
        with pytest.raises(ValueError):
            FcnnArchitecture((2, 2))


class TestInducedLabel:
    @pytest.mark.parametrize(
        "scores, label", [((1.0, 0.0), 1), ((0.3, 0.3), 2), ((0.1, 0.5, 0.5), 3), ((2.0, 5.0, 1.0), 2)]
    )
    def test_examples(self, scores, label):
        assert induced_label(scores) == label

    def test_rowwise(self):
        assert list(induced_label(np.array([[1.0, 0.0], [0.3, 0.3]]))) == [1, 2]

    def test_empty(self):
        with pytest.raises(ValueError):
            induced_label([])

    @given(
        st.lists(st.integers(-20, 20), min_size=1, max_size=6),
        st.integers(-50, 50),
        st.integers(1, 9),
    )
    def test_shift_and_scale_invariance(self, s, c, a):
        s = np.array(s, float)
        lab = induced_label(s)
        assert induced_label(s + c) == lab
        assert induced_label(a * s) == lab


class TestScore:
    def test_golden_values(self):
        mpmath.mp.dps = 40
        e = mpmath.e
        assert abs(score([2.0, 0.0], "softmax") - float(e**2 / (e**2 + 1))) < 1e-12
        assert abs(score([2.0, 0.0], "temperature", 2.0) - float(e / (e + 1))) < 1e-12
        assert abs(score([0.0, 0.0], "energy", 1.0) - float(mpmath.log(2))) < 1e-12
        assert score([0.0, 0.0], "softmax") == 0.5

    def test_bad_temperature(self):
        with pytest.raises(ValueError):
            score([1.0, 2.0], "energy", 0.0)
        with pytest.raises(ValueError):
            score([1.0, 2.0], "temperature", -1.0)

    @given(st.lists(st.floats(-30, 30, allow_nan=False), min_size=1, max_size=8), st.floats(0.1, 10))
    def test_ranges(self, f, T):
        l = len(f)
        for kind in ("softmax", "temperature"):
            v = score(f, kind, T)
            assert 1.0 / l - 1e-12 <= v <= 1.0 + 1e-12

    @given(
        st.lists(st.floats(-30, 30, allow_nan=False), min_size=1, max_size=8),
        st.floats(-100, 100, allow_nan=False),
        st.floats(0.1, 10),
    )
    def test_energy_shift(self, f, c, T):
        f = np.array(f)
        assert abs(score(f + c, "energy", T) - (score(f, "energy", T) + c)) < 1e-9

    def test_stabilised(self):
        v = score([1000.0, 0.0], "softmax")
        assert math.isfinite(v)
        assert abs(v - 1.0 / (1.0 + math.exp(-1000.0))) < 1e-9
        e = score([1000.0, 0.0], "energy")
        assert abs(e - (1000.0 + math.log1p(math.exp(-1000.0)))) < 1e-9


class TestScoreClassifier:
    arch = FcnnArchitecture((1, 4, 3), "relu")

    def test_above_and_at_threshold(self):
        v = np.array([2.0, 0.0, 0.0])
        p = constant_params(self.arch, v)
        s = score(v, "softmax")
        X = np.linspace(-1, 1, 7)[:, None]
        assert np.all(ScoreClassifier(self.arch, p, "softmax", s - 0.1)(X) == 1)
        assert np.all(classify_score(ScoreClassifier(self.arch, p, "softmax", s), X) == 1)

    def test_constant_scorer_all_ood(self):
        p = constant_params(self.arch, np.zeros(3))
        c = ScoreClassifier(self.arch, p, "softmax", 0.5)
        assert np.all(c(np.linspace(-5, 5, 11)[:, None]) == 2)
        e = ScoreClassifier(self.arch, p, "energy", math.log(3) + 0.1)
        assert np.all(e(np.linspace(-5, 5, 11)[:, None]) == 2)

    def test_lambda_range(self):
        p = constant_params(self.arch, np.zeros(3))
        with pytest.raises(ValueError):
            ScoreClassifier(self.arch, p, "softmax", 0.2)
        with pytest.raises(ValueError):
            ScoreClassifier(self.arch, p, "temperature", 1.0, T=2.0)


class TestConstantRealizability:
    @pytest.mark.parametrize("widths", [(2, 3, 3), (2, 5, 4, 3), (2, 1, 1, 1, 3)])
    @pytest.mark.parametrize("activation", ["relu", "sigmoid"])
    def test_every_constant_label(self, widths, activation):
        arch = FcnnArchitecture(widths, activation)
        X = np.random.default_rng(2).normal(size=(10, 2))
        for label in range(1, widths[-1] + 1):
            h = FcnnClassifier(arch, constant_params(arch, np.eye(widths[-1])[label - 1]))
            assert np.all(h(X) == label)

    def test_detector_constants(self):
        arch = FcnnArchitecture((2, 4, 3))
        X = np.random.default_rng(3).normal(size=(10, 2))
        lam = 0.6
        ident = ScoreClassifier(arch, constant_params(arch, [5.0, 0, 0]), "softmax", lam)
        ood = ScoreClassifier(arch, constant_params(arch, [0.0, 0, 0]), "softmax", lam)
        assert np.all(ident(X) == 1) and np.all(ood(X) == 2)


class TestComposite:
    def test_branches(self):
        h = CompositeHypothesis(ConstantHypothesis(3), ConstantHypothesis(1), k=5)
        assert list(compose(h, np.zeros((2, 1)))) == [3, 3]
        h = CompositeHypothesis(ConstantHypothesis(3), ConstantHypothesis(2), k=5)
        assert list(compose(h, np.zeros((2, 1)))) == [6, 6]

    def test_identity_reduction(self):
        sp = tables_over(np.arange(3.0), 2, [1, 2])
        X = np.arange(3.0)
        for h_in in sp:
            assert np.array_equal(CompositeHypothesis(h_in, ConstantHypothesis(1), 2)(X), h_in(X))

    def test_relabel_examples(self):
        assert relabel_binary(ConstantHypothesis(3), np.zeros(1), k=5)[0] == 1
        assert relabel_binary(ConstantHypothesis(6), np.zeros(1), k=5)[0] == 2

    def test_relabel_of_composite_is_detector(self):
        X = np.arange(3.0)
        ins = tables_over(X, 2, [1, 2])
        bs = tables_over(X, 1, [1, 2])
        for h_in in ins:
            for h_b in bs:
                h = CompositeHypothesis(h_in, h_b, 2)
                assert np.array_equal(relabel_binary(h, X, 2), h_b(X))

    def test_composite_space_is_all_tables(self):
        X = np.arange(3.0)
        comp = composite_space(tables_over(X, 2, [1, 2]), tables_over(X, 1, [1, 2]))
        assert {tuple(r) for r in comp.table_array()} == {tuple(r) for r in all_tables(X, 2).table_array()}


class TestEnumeration:
    @pytest.mark.parametrize("m, k, count", [(2, 1, 4), (3, 2, 27)])
    def test_counts(self, m, k, count):
        sp = all_tables(np.arange(float(m)), k)
        tables = [tuple(h.labels) for h in enumerate_space(sp)]
        assert len(tables) == len(sp) == count
        assert len(set(tables)) == count

    def test_exhaustive(self):
        sp = all_tables(np.arange(4.0), 2)
        seen = {tuple(r) for r in sp.table_array()}
        rng = np.random.default_rng(0)
        for _ in range(50):
            assert tuple(rng.integers(1, 4, size=4)) in seen

    def test_mixed_radix_order(self):
        rows = all_tables(np.arange(2.0), 1).table_array().tolist()
        assert rows == [[1, 1], [1, 2], [2, 1], [2, 2]]

    def test_without_constant_ood(self):
        sp = all_tables(np.arange(2.0), 1).without_constant(2)
        assert len(sp) == 3 and [2, 2] not in sp.table_array().tolist()

    def test_capacity_guard(self):
        with pytest.raises(CapacityError):
            all_tables(np.arange(30.0), 1).table_array()

    def test_table_lookup(self):
        sp = all_tables(np.array([[0.0, 0.0], [1.0, 0.0]]), 1)
        h = sp.hypothesis([2, 1])
        assert list(h(np.array([[1.0, 0.0], [0.0, 0.0]]))) == [1, 2]
        with pytest.raises(HypothesisDomainError):
            h(np.array([[5.0, 5.0]]))

    def test_explicit_tables_validated(self):
        with pytest.raises(ValueError):
            TableSpace(np.arange(2.0), 1, [[1, 3]])
