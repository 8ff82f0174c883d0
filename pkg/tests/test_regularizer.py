import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from sspca.groups import GridSpec, Group, GroupStructure, make_halfspace_groups, make_singletons
from sspca.regularizer import (
    EtaState,
    Partition,
    RegularizerParams,
    block_norms,
    eta_minimizer,
    lemma_objective,
    lp_norm,
    omega_alpha,
    shared_omega_alpha,
    update_eta,
    variational_penalty,
    zeta_from_eta,
)


def direct_omega(y, sets, alpha, weights=None):
    # independent evaluation straight from the definition
    total = 0.0
    for i, g in enumerate(sets):
        w = np.ones(len(g)) if weights is None else np.asarray(weights[i])
        total += np.sqrt(sum((wj * y[j]) ** 2 for wj, j in zip(w, g))) ** alpha
    return total ** (1.0 / alpha)


def grid_min(y, alpha, hi=6.0, step=0.01):
    z = np.arange(step, hi + step / 2, step)
    Z1, Z2 = np.meshgrid(z, z, indexing="ij")
    beta = alpha / (2 - alpha)
    vals = 0.5 * (y[0] ** 2 / Z1 + y[1] ** 2 / Z2) + 0.5 * (Z1**beta + Z2**beta) ** (1 / beta)
    i = np.unravel_index(np.argmin(vals), vals.shape)
    return vals[i], (Z1[i], Z2[i])


class TestOmega:
    def test_l1_reduction(self):
        assert omega_alpha([3, 4, 0], make_singletons(3), 1.0) == 7

    @pytest.mark.parametrize("alpha", [0.3, 0.5, 1.0, 1.7])
    def test_single_block(self, alpha):
        gs = GroupStructure.from_sets(2, [{0, 1}])
        assert omega_alpha([3, 4], gs, alpha) == pytest.approx(5.0, rel=1e-15)

    def test_overlapping_pair(self):
        gs = GroupStructure.from_sets(3, [{0, 1}, {1, 2}])
        val = omega_alpha([1, 1, 1], gs, 0.5)
        assert val == pytest.approx(direct_omega(np.ones(3), [[0, 1], [1, 2]], 0.5), rel=1e-14)
        assert val == pytest.approx(4 * np.sqrt(2), rel=1e-14)
        assert val == pytest.approx(5.656854249492381, rel=1e-12)

    def test_weighted_against_direct(self, rng):
        groups = [Group((0, 2, 3), (0.5, 2.0, 1.0)), Group((1, 2), (1.5, 0.25)), Group((3, 4), (1.0, 3.0))]
        gs = GroupStructure(5, groups)
        y = rng.standard_normal(5)
        for a in (0.5, 1.0, 1.5):
            expect = direct_omega(y, [g.members for g in groups], a, [g.weights for g in groups])
            assert omega_alpha(y, gs, a) == pytest.approx(expect, rel=1e-13)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            omega_alpha([1, 2], make_singletons(3), 1.0)

    def test_zero_iff_zero(self, rng):
        gs = make_halfspace_groups(GridSpec((3, 3)))
        assert omega_alpha(np.zeros(9), gs, 0.5) == 0
        y = np.zeros(9)
        y[rng.integers(9)] = 1e-8
        assert omega_alpha(y, gs, 0.5) > 0


@settings(max_examples=60, deadline=None)
@given(
    y=arrays(np.float64, 9, elements=st.floats(-1e3, 1e3)),
    t=st.floats(-1e3, 1e3).filter(lambda t: abs(t) > 1e-3),
    alpha=st.sampled_from([0.25, 0.5, 1.0, 1.5]),
)
def test_homogeneity(y, t, alpha):
    gs = make_halfspace_groups(GridSpec((3, 3)))
    assert omega_alpha(t * y, gs, alpha) == pytest.approx(abs(t) * omega_alpha(y, gs, alpha), rel=1e-9, abs=1e-300)


_entries = st.one_of(st.just(0.0), st.floats(1e-100, 10), st.floats(-10, -1e-100))


@settings(max_examples=60, deadline=None)
@given(y=arrays(np.float64, 9, elements=_entries), alpha=st.sampled_from([0.5, 1.0]))
def test_group_sparsity(y, alpha):
    # zero block norms on every group containing j force y_j = 0
    gs = make_halfspace_groups(GridSpec((3, 3)))
    from sspca.regularizer import group_norms

    b = group_norms(y, gs)
    for j in range(9):
        if all(b[i] == 0 for i, g in enumerate(gs.groups) if j in g.members):
            assert y[j] == 0


class TestEtaMinimizer:
    def test_alpha_one(self):
        z = eta_minimizer([3, 4], 1.0)
        np.testing.assert_allclose(z, [3, 4])
        assert lemma_objective([3, 4], z, 1.0) == pytest.approx(7.0)
        val, arg = grid_min(np.array([3.0, 4.0]), 1.0)
        assert val == pytest.approx(7.0, abs=1e-4)
        np.testing.assert_allclose(arg, [3, 4], atol=0.011)

    def test_alpha_half(self):
        y = np.array([1.0, 1.0])
        assert lp_norm(y, 0.5) == pytest.approx(4.0)
        z = eta_minimizer(y, 0.5)
        np.testing.assert_allclose(z, [0.5, 0.5])
        assert lp_norm(z, 1 / 3) == pytest.approx(4.0)
        assert lemma_objective(y, z, 0.5) == pytest.approx(4.0)
        val, arg = grid_min(y, 0.5)
        assert val == pytest.approx(4.0, abs=1e-4)
        np.testing.assert_allclose(arg, [0.5, 0.5], atol=0.011)

    @pytest.mark.parametrize("alpha", [0.5, 1.0, 1.5])
    def test_single_coordinate(self, alpha):
        z = eta_minimizer([0, 5], alpha)
        assert z[0] == 0
        assert z[1] == pytest.approx(5.0)
        assert lemma_objective([0, 5], z, alpha) == pytest.approx(5.0)

    def test_zero_vector(self):
        z = eta_minimizer([0, 0, 0], 0.5)
        assert np.all(z == 0)
        assert lemma_objective([0, 0, 0], z, 0.5) == 0

    def test_convention(self):
        assert lemma_objective([1, 0], [0, 1], 1.0) == np.inf

    def test_rejects_alpha_two(self):
        with pytest.raises(ValueError):
            eta_minimizer([1, 2], 2.0)
        with pytest.raises(ValueError):
            RegularizerParams(alpha=2.0)


def test_partition():
    part = Partition.parse("1,2;3")
    assert part.classes == ((0, 1), (2,))
    assert part.format() == "1,2;3"
    assert list(part.class_index) == [0, 0, 1]
    assert Partition.blocks(7, 3).classes == ((0, 1, 2), (3, 4, 5), (6,))
    with pytest.raises(ValueError):
        Partition([(0, 1), (1, 2)], 3)
    with pytest.raises(ValueError):
        Partition([(0,), ()], 1)
    with pytest.raises(ValueError):
        Partition([(0,), (2,)], 3)


class TestUpdateEta:
    def test_single_group(self, rng):
        V = rng.standard_normal((4, 3))
        gs = GroupStructure.from_sets(4, [range(4)])
        st = update_eta(V, gs, Partition.singletons(3), RegularizerParams(1.0))
        np.testing.assert_allclose(st.eta[0], np.linalg.norm(V, axis=0) + st.epsilon, rtol=1e-14)
        np.testing.assert_allclose(st.zeta, np.tile(st.eta[0], (4, 1)), rtol=1e-14)

    def test_zero_column_gets_epsilon(self, rng):
        V = rng.standard_normal((9, 2))
        V[:, 1] = 0
        gs = make_halfspace_groups(GridSpec((3, 3)))
        st = update_eta(V, gs, Partition.singletons(2), RegularizerParams(0.5))
        assert np.all(st.eta[:, 1] == st.epsilon)
        assert st.epsilon > 0
        assert np.all(np.isfinite(st.zeta)) and np.all(st.zeta > 0)

    def test_zero_dictionary_floor(self):
        st = update_eta(np.zeros((4, 2)), make_singletons(4), Partition.singletons(2), RegularizerParams(0.5))
        assert st.epsilon == 1e-12
        assert np.all(st.eta == 1e-12)

    def test_relative_epsilon(self, rng):
        V = 1e3 * rng.standard_normal((9, 2))
        gs = make_halfspace_groups(GridSpec((3, 3)))
        raw = update_eta(V, gs, Partition.singletons(2), RegularizerParams(0.5, epsilon=0.0))
        st = update_eta(V, gs, Partition.singletons(2), RegularizerParams(0.5))
        assert st.epsilon == pytest.approx(1e-9 * raw.eta.max())
        np.testing.assert_allclose(st.eta, raw.eta + st.epsilon)
        fixed = update_eta(V, gs, Partition.singletons(2), RegularizerParams(0.5, epsilon=1e-4))
        assert fixed.epsilon == 1e-4

    def test_zeta_two_groups(self):
        gs = GroupStructure.from_sets(2, [{0, 1}, {0}])
        zeta = zeta_from_eta(np.array([[1.0], [1.0]]), gs, Partition.singletons(1))
        assert zeta[0, 0] == 0.5
        assert zeta[1, 0] == 1.0

    def test_zeta_consistency(self, rng):
        gs = make_halfspace_groups(GridSpec((4, 4)))
        part = Partition.parse("1,2;3;4,5")
        st = update_eta(rng.standard_normal((16, 5)), gs, part, RegularizerParams(0.5))
        assert np.array_equal(zeta_from_eta(st.eta, gs, part), st.zeta)

    def test_zeta_matches_definition(self, rng):
        groups = [Group((0, 1), (1.0, 2.0)), Group((1, 2), (0.5, 1.0)), Group((0, 2), (3.0, 1.0))]
        gs = GroupStructure(3, groups)
        eta = rng.uniform(0.5, 2.0, size=(3, 2))
        part = Partition.parse("1;2,3")
        zeta = zeta_from_eta(eta, gs, part)
        for j in range(3):
            for k in range(3):
                m = part.class_index[k]
                s = sum(g.weights[g.members.index(j)] ** 2 / eta[i, m] for i, g in enumerate(groups) if j in g.members)
                assert zeta[j, k] == pytest.approx(1 / s, rel=1e-14)


class TestVariationalPenalty:
    def test_zero_dictionary(self):
        gs = make_halfspace_groups(GridSpec((3, 3)))
        params = RegularizerParams(0.5)
        part = Partition.singletons(2)
        st = update_eta(np.zeros((9, 2)), gs, part, params)
        expect = 2 * lp_norm(np.full(len(gs), st.epsilon), params.beta)
        assert variational_penalty(np.zeros((9, 2)), st, part, params) == pytest.approx(expect)

    def test_single_group_alpha_one(self, rng):
        V = rng.standard_normal((5, 3))
        gs = GroupStructure.from_sets(5, [range(5)])
        params = RegularizerParams(1.0, epsilon=0.0)
        part = Partition.singletons(3)
        st = update_eta(V, gs, part, params)
        assert variational_penalty(V, st, part, params) == pytest.approx(2 * np.linalg.norm(V, axis=0).sum(), rel=1e-13)

    @pytest.mark.parametrize("alpha", [0.5, 1.0, 1.5])
    def test_matches_twice_omega(self, rng, alpha):
        gs = GroupStructure.from_sets(4, [{0, 1}, {2, 3}, {1, 2}])
        V = rng.standard_normal((4, 2))
        params = RegularizerParams(alpha, epsilon=0.0)
        part = Partition.singletons(2)
        st = update_eta(V, gs, part, params)
        expect = 2 * sum(omega_alpha(V[:, k], gs, alpha) for k in range(2))
        assert variational_penalty(V, st, part, params) == pytest.approx(expect, abs=1e-6)
        assert variational_penalty(V, st, part, params) == pytest.approx(expect, rel=1e-12)

    def test_shared_matches_twice_shared_omega(self, rng):
        gs = make_halfspace_groups(GridSpec((3, 4)))
        part = Partition.parse("1,2,3;4")
        V = rng.standard_normal((12, 4))
        params = RegularizerParams(0.5, epsilon=0.0)
        st = update_eta(V, gs, part, params)
        expect = 2 * shared_omega_alpha(V, gs, part, 0.5)
        assert variational_penalty(V, st, part, params) == pytest.approx(expect, rel=1e-12)

    def test_upper_bound_for_any_eta(self, rng):
        gs = make_halfspace_groups(GridSpec((3, 3)))
        part = Partition.singletons(2)
        params = RegularizerParams(0.5)
        V = rng.standard_normal((9, 2))
        lower = 2 * shared_omega_alpha(V, gs, part, 0.5)
        for _ in range(50):
            eta = rng.uniform(0.01, 5, size=(len(gs), 2))
            st = EtaState(eta, zeta_from_eta(eta, gs, part))
            assert variational_penalty(V, st, part, params) >= lower * (1 - 1e-12)

    def test_infinite_when_support_violated(self):
        gs = make_singletons(2)
        part = Partition.singletons(1)
        params = RegularizerParams(1.0, epsilon=0.0)
        st = EtaState(np.array([[1.0], [0.0]]), zeta_from_eta(np.array([[1.0], [0.0]]), gs, part))
        assert variational_penalty(np.array([[1.0], [0.0]]), st, part, params) < np.inf
        assert variational_penalty(np.array([[1.0], [1.0]]), st, part, params) == np.inf


class TestSharedOmega:
    def test_rank_one(self, rng):
        gs = make_halfspace_groups(GridSpec((3, 3)))
        v = rng.standard_normal(9)
        assert shared_omega_alpha(v[:, None], gs, Partition.singletons(1), 0.5) == pytest.approx(
            omega_alpha(v, gs, 0.5), rel=1e-15
        )

    def test_composed_pair(self):
        gs = GroupStructure.from_sets(2, [{0, 1}])
        V = np.array([[1.0, 1.0], [0.0, 0.0]])
        assert shared_omega_alpha(V, gs, Partition.parse("1,2"), 1.0) == pytest.approx(np.sqrt(2))

    def test_zero(self):
        gs = make_singletons(3)
        assert shared_omega_alpha(np.zeros((3, 4)), gs, Partition.blocks(4, 2), 0.5) == 0

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            shared_omega_alpha(np.zeros((3, 4)), make_singletons(4), None, 0.5)
        with pytest.raises(ValueError):
            shared_omega_alpha(np.zeros((3, 4)), make_singletons(3), Partition.singletons(3), 0.5)

    def test_block_norms_shape(self, rng):
        gs = make_halfspace_groups(GridSpec((3, 3)))
        B = block_norms(rng.standard_normal((9, 5)), gs, Partition.parse("1,2;3,4,5"))
        assert B.shape == (len(gs), 2)


@settings(max_examples=50, deadline=None)
@given(V=arrays(np.float64, (12, 3), elements=st.floats(-100, 100)), alpha=st.sampled_from([0.5, 1.0, 1.5]))
def test_shared_singleton_agrees_with_unshared(V, alpha):
    gs = make_halfspace_groups(GridSpec((3, 4)))
    shared = shared_omega_alpha(V, gs, Partition.singletons(3), alpha)
    unshared = sum(omega_alpha(V[:, k], gs, alpha) for k in range(3))
    assert abs(shared - unshared) <= 1e-12 * max(1.0, unshared)
