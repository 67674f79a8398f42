import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oodpac.conditions import (
    EPS_GRID,
    ConditionArgumentError,
    check_argmin_decomposition,
    check_compatibility,
    check_condition3,
    check_eps_intersection,
    check_eps_intersection_all,
    check_linear,
    check_realizability,
    overlap_lower_bound,
)
from oodpac.domains import (
    LabelSpace,
    OodDecomposition,
    discrete_joint,
    make_domain,
    point_mass,
    random_finite_domain,
    two_atom_domain,
)
from oodpac.hypotheses import CapacityError, TableSpace, all_tables
from oodpac.risk import Loss, inf_risk
from oracles import dyadic_instance, to_domain

A, B, C = [0.0], [1.0], [2.0]


def _space(dom, k=1):
    pts = np.vstack([dom.id_joint.marginal.points, dom.ood_joint.marginal.points])
    return all_tables(np.unique(pts, axis=0), k)


def _three_point_space():
    return all_tables(np.array([A, B, C]), 1)


class TestLinear:
    def test_separate_holds(self):
        dom = two_atom_domain(overlap=False)
        rep = check_linear(_space(dom), dom)
        assert rep.holds and rep.max_deviation == 0

    def test_overlap_fails_at_half(self):
        dom = two_atom_domain(overlap=True)
        rep = check_linear(_space(dom), dom)
        assert not rep.holds
        assert rep.violating_alpha == 0.5 and rep.max_deviation == 0.5

    def test_endpoints_only(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            dom, feats = random_finite_domain(rng, 4, 2, k=2, separate=False)
            assert check_linear(all_tables(feats, 2), dom, alpha_grid=[0.0, 1.0]).holds

    def test_kink_added_to_grid(self):
        # the two candidate lines 0.5 * a and 1 - a cross at 2/3, off the uniform grid
        dom = make_domain(1, point_mass(A, 1), discrete_joint([A, B], [0.5, 0.5], [2, 2]))
        rep = check_linear(_space(dom), dom)
        assert rep.violating_alpha == pytest.approx(2 / 3, abs=1e-15)

    def test_capacity(self):
        dom, feats = random_finite_domain(np.random.default_rng(1), 30, 10)
        with pytest.raises(CapacityError):
            check_linear(all_tables(feats, 1), dom)

    def test_report_serialises(self):
        dom = two_atom_domain(overlap=True)
        d = check_linear(_space(dom), dom).as_dict()
        assert set(d) >= {"condition", "holds", "max_deviation", "violating_alpha", "witness"}


class TestEpsIntersection:
    def test_separate(self):
        dom = two_atom_domain(overlap=False)
        for eps in EPS_GRID:
            rep = check_eps_intersection(_space(dom), dom, eps)
            assert rep.holds and list(rep.witness.labels) == [1, 2]

    def test_overlap(self):
        dom = two_atom_domain(overlap=True)
        rep = check_eps_intersection(_space(dom), dom, 0.1)
        assert not rep.holds and rep.witness is None

    def test_large_eps_always_holds(self):
        dom = two_atom_domain(overlap=True)
        assert check_eps_intersection(_space(dom), dom, 1.0).holds

    @given(st.integers(0, 100_000))
    @settings(max_examples=40)
    def test_monotone_in_eps(self, seed):
        rng = np.random.default_rng(seed)
        dom, feats = random_finite_domain(rng, 4, 2, k=2, separate=bool(rng.random() < 0.5))
        sp = all_tables(feats, 2)
        grid = sorted(rng.uniform(0, 0.6, size=6))
        held = [check_eps_intersection(sp, dom, e).holds for e in grid]
        first = held.index(True) if True in held else len(held)
        assert all(held[first:])

    def test_grid_report(self):
        dom = two_atom_domain(overlap=True)
        rep = check_eps_intersection_all(_space(dom), dom)
        assert not rep.holds
        assert rep.details["per_eps"][1.0] and not rep.details["per_eps"][0.001]


class TestLinearEpsAgreement:
    def test_random_instances(self):
        rng = np.random.default_rng(2024)
        seen = {True: 0, False: 0}
        for _ in range(150):
            keys, k, ida, oda, loss = dyadic_instance(rng, loss_kind="zero_one" if rng.random() < 0.5 else "random")
            dom = to_domain(keys, k, ida, oda)
            sp = all_tables(np.array(keys), k)
            lin = check_linear(sp, dom, tol=1e-9, loss=Loss(loss)).holds
            eps = check_eps_intersection_all(sp, dom, loss=Loss(loss)).holds
            assert lin == eps
            seen[lin] += 1
        assert min(seen.values()) >= 20


class TestCompatibility:
    def test_singleton_agrees(self):
        rng = np.random.default_rng(9)
        for _ in range(100):
            keys, k, ida, oda, loss = dyadic_instance(rng)
            dom = to_domain(keys, k, ida, oda)
            sp = all_tables(np.array(keys), k)
            for eps in (0.01, 0.001):
                assert check_compatibility(sp, [dom], eps).holds == check_eps_intersection(sp, dom, eps).holds

    @given(st.integers(0, 100_000), st.floats(0.0, 0.6))
    @settings(max_examples=40)
    def test_singleton_scale(self, seed, eps):
        # the intersection check widens both level sets by 2 eps
        dom, feats = random_finite_domain(np.random.default_rng(seed), 4, 2, k=1, separate=False)
        sp = all_tables(feats, 1)
        assert check_compatibility(sp, [dom], 2 * eps).holds == check_eps_intersection(sp, dom, eps).holds

    def test_two_separate_members(self):
        idj = point_mass(A, 1)
        d1, d2 = make_domain(1, idj, point_mass(B, 2)), make_domain(1, idj, point_mass(C, 2))
        rep = check_compatibility(_three_point_space(), [d1, d2], 0.01)
        assert rep.holds and list(rep.witness.labels) == [1, 2, 2]

    @pytest.mark.parametrize("eps", [0.0, 0.1, 0.249])
    def test_member_on_id_atom(self, eps):
        idj = point_mass(A, 1)
        d1, d2 = make_domain(1, idj, point_mass(B, 2)), make_domain(1, idj, point_mass(A, 2))
        assert not check_compatibility(_three_point_space(), [d1, d2], eps).holds

    def test_differing_id_rejected(self):
        d1 = make_domain(1, point_mass(A, 1), point_mass(B, 2))
        d2 = make_domain(1, point_mass(C, 1), point_mass(B, 2))
        with pytest.raises(ConditionArgumentError):
            check_compatibility(_three_point_space(), [d1, d2], 0.1)


class TestCondition3:
    @pytest.mark.parametrize("k", [1, 2, 5])
    def test_zero_one(self, k):
        assert check_condition3(Loss.zero_one(k), k)

    def test_violation(self):
        # pred 3 (OOD) on true 1 costs 0.5, pred 2 on true 1 costs 1
        L = Loss([[0, 1, 1], [1, 0, 1], [0.5, 1, 0]])
        assert not check_condition3(L, 2)

    def test_k1_vacuous(self):
        assert check_condition3(Loss([[0, 5], [0.1, 0]]), 1)


class TestRealizability:
    def test_labelling_table(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            dom, feats = random_finite_domain(rng, 5, 3, k=2)
            ok, w = check_realizability(all_tables(feats, 2), dom)
            assert ok
            assert np.array_equal(w(dom.id_joint.marginal.points), dom.id_joint.labels)
            assert np.all(w(dom.ood_joint.marginal.points) == 3)

    def test_overlap(self):
        dom = two_atom_domain(overlap=True)
        assert check_realizability(_space(dom), dom) == (False, None)

    def test_only_h_out_on_ood(self):
        dom = make_domain(1, point_mass(A, 1), point_mass(B, 2), pi_out=1.0)
        sp = TableSpace(np.array([A, B]), 1, [[2, 2]])
        ok, w = check_realizability(sp, dom, alpha=1.0)
        assert ok and list(w.labels) == [2, 2]


class TestArgminDecomposition:
    ls = LabelSpace(1)

    def test_separate(self):
        dec = OodDecomposition(self.ls, point_mass(A, 1), (point_mass(B, 2), point_mass(C, 2)), [0.25, 0.25])
        assert check_argmin_decomposition(_three_point_space(), dec)

    def test_component_on_id_atom(self):
        dec = OodDecomposition(self.ls, point_mass(A, 1), (point_mass(A, 2), point_mass(C, 2)), [0.25, 0.25])
        assert not check_argmin_decomposition(_three_point_space(), dec)

    def test_single_component_uniformly_ood(self):
        sp = TableSpace(np.array([A, B, C]), 1, [[1, 2, 2], [1, 2, 1], [2, 2, 2]])
        dec = OodDecomposition(self.ls, point_mass(A, 1), (point_mass(B, 2),), [0.5])
        assert check_argmin_decomposition(sp, dec)


class TestOverlapBound:
    def test_two_atom(self):
        dom = two_atom_domain(overlap=True)
        assert overlap_lower_bound(dom, 0.5) == 0.5
        assert inf_risk(_space(dom), dom, 0.5).value == 0.5

    def test_no_overlap(self):
        assert overlap_lower_bound(two_atom_domain(overlap=False), 0.3) == 0.0

    @pytest.mark.parametrize("alpha", [0.0, 1.0])
    def test_endpoints_rejected(self, alpha):
        with pytest.raises(ConditionArgumentError):
            overlap_lower_bound(two_atom_domain(True), alpha)

    def test_three_atoms(self):
        dom = make_domain(
            1, discrete_joint([A, B], [0.2, 0.8], [1, 1]), discrete_joint([A, C], [0.3, 0.7], [2, 2])
        )
        sp = _three_point_space()
        for a in np.linspace(0.01, 0.99, 99):
            bound = overlap_lower_bound(dom, a)
            assert bound > 0
            assert bound <= inf_risk(sp, dom, a).value + 1e-12

    def test_random_discrete(self):
        rng = np.random.default_rng(12)
        for _ in range(30):
            dom, feats = random_finite_domain(rng, 5, 3, k=2, separate=False)
            L = Loss(np.where(np.eye(3) == 1, 0, rng.choice([0.5, 1.0, 2.0], size=(3, 3))))
            sp = all_tables(feats, 2)
            for a in np.linspace(0.05, 0.95, 19):
                assert overlap_lower_bound(dom, a, L) <= inf_risk(sp, dom, a, L).value + 1e-12
