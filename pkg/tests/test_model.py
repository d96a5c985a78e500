import json

import numpy as np
import pytest

from varma_causal import (
    ModelError,
    TimedNode,
    VarmaSpec,
    embed_as_var,
    endo,
    full_time_window,
    ice_matrix,
    innov,
    marginalized_admg_window,
    remove_instantaneous,
    rewritten_full_time_window,
    spec_from_json,
    spec_to_json,
    validate,
)

X, Y = 0, 1


def random_acyclic_a0(rng, d, scale=1.0, keep=0.6):
    tri = np.tril(rng.uniform(-scale, scale, (d, d)), -1)
    tri *= rng.random((d, d)) < keep
    perm = rng.permutation(d)
    a0 = np.zeros((d, d))
    a0[np.ix_(perm, perm)] = tri
    return a0


def random_stable_spec(rng, d=None, p=None, q=None, sparsity=0.4):
    d = d or int(rng.integers(1, 4))
    p = p if p is not None else int(rng.integers(1, 3))
    q = q if q is not None else int(rng.integers(0, 3))
    for _ in range(100):
        a0 = random_acyclic_a0(rng, d, scale=0.7)
        ars = [
            rng.uniform(-0.9 / (max(p, 1) * d), 0.9 / (max(p, 1) * d), (d, d))
            * (rng.random((d, d)) >= sparsity)
            for _ in range(p)
        ]
        mas = [
            rng.uniform(-0.5, 0.5, (d, d)) * (rng.random((d, d)) >= sparsity)
            for _ in range(q)
        ]
        spec = VarmaSpec([a0, *ars], mas, rng.uniform(0.5, 2.0, d))
        if validate(spec).passed:
            return spec
    raise AssertionError("no stable draw")


class TestValidation:
    def test_var_instant_passes(self, var_instant_spec):
        report = validate(var_instant_spec)
        assert report.passed
        assert report.instantaneous_acyclic
        assert report.topological_order == (0, 1)
        assert report.spectral_radius == pytest.approx(0.5)

    def test_unit_root_fails_with_radius(self):
        spec = VarmaSpec(a=[[[0.0]], [[1.0]]], gamma=[1.0])
        report = validate(spec)
        assert not report.passed
        assert report.spectral_radius == pytest.approx(1.0)
        assert any("unstable" in m for m in report.messages)

    def test_instantaneous_cycle_fails(self):
        spec = VarmaSpec(a=[[[0, 0.5], [0.5, 0]], np.zeros((2, 2))], gamma=[1, 1])
        report = validate(spec)
        assert not report.passed and not report.instantaneous_acyclic

    def test_nonzero_diagonal_fails(self):
        spec = VarmaSpec(a=[[[0.1]], [[0.2]]], gamma=[1.0])
        assert not validate(spec).passed

    def test_shape_mismatch_raises(self):
        with pytest.raises(ModelError, match="must be 2x2"):
            VarmaSpec(a=[np.zeros((2, 2)), np.zeros((3, 3))], gamma=[1, 1])
        with pytest.raises(ModelError, match="gamma"):
            VarmaSpec(a=[np.zeros((2, 2))], gamma=[1.0])

    def test_zero_variance_flagged_not_rejected(self):
        spec = VarmaSpec(a=[np.zeros((2, 2))], gamma=[0.0, 1.0])
        assert not validate(spec).passed
        report = validate(spec, allow_zero_variance=True)
        assert report.passed and not report.gamma_positive


class TestRewrite:
    def test_var_instant_rewrite_numbers(self, var_instant_spec):
        rw = remove_instantaneous(var_instant_spec)
        assert abs(rw.ar[0][1, 0] - 1 / 6) < 1e-12
        expected = np.array([[9, 3], [3, 10]]) / 9
        assert np.max(np.abs(rw.sigma_delta - expected)) < 1e-12

    def test_varma_instant_rewrite_numbers(self, varma_instant_spec):
        rw = remove_instantaneous(varma_instant_spec)
        assert abs(rw.ar[0][1, 0] - 13 / 30) < 1e-12
        assert abs(rw.ice[1, 0] - 1 / 5) < 1e-12
        assert abs(rw.ma_eps[0][1, 1] - 1 / 20) < 1e-12

    def test_identity_rewrite_without_instantaneous(self, varma_lagged_spec):
        rw = remove_instantaneous(varma_lagged_spec)
        assert np.array_equal(rw.ice, np.eye(2))
        assert np.array_equal(rw.ar[0], varma_lagged_spec.a[1])
        assert np.array_equal(rw.sigma_delta, np.diag(varma_lagged_spec.gamma))

    def test_ma_delta_consistent_with_ma_eps(self, varma_instant_spec):
        rw = remove_instantaneous(varma_instant_spec)
        # C Bl C^{-1} * C = C Bl
        recovered = rw.ma_delta[0] @ rw.ice
        assert np.max(np.abs(recovered - rw.ma_eps[0])) < 1e-14


class TestIceMatrix:
    def test_two_node_base_case(self):
        a0 = np.array([[0.0, 0.0], [0.7, 0.0]])
        assert np.array_equal(ice_matrix(a0), np.array([[1.0, 0.0], [0.7, 1.0]]))

    def test_zero_gives_identity(self):
        assert np.array_equal(ice_matrix(np.zeros((3, 3))), np.eye(3))

    def test_cyclic_rejected(self):
        with pytest.raises(ModelError, match="cycle"):
            ice_matrix(np.array([[0, 0.5], [0.5, 0]]))

    def test_inverse_identity_and_path_sums(self):
        rng = np.random.default_rng(42)
        for _ in range(40):
            d = int(rng.integers(2, 7))
            a0 = random_acyclic_a0(rng, d)
            ice = ice_matrix(a0)
            assert np.max(np.abs((np.eye(d) - a0) @ ice - np.eye(d))) < 1e-12
            brute = brute_force_ice(a0)
            assert np.max(np.abs(brute - ice)) < 1e-10

    def test_structural_zeros_are_exact(self):
        rng = np.random.default_rng(5)
        a0 = random_acyclic_a0(rng, 5, keep=0.4)
        ice = ice_matrix(a0)
        brute = brute_force_ice(a0)
        assert np.array_equal(ice == 0.0, brute == 0.0)


def brute_force_ice(a0):
    """Sum of coefficient products over all directed paths, per pair."""
    d = a0.shape[0]
    out = np.eye(d)
    for j in range(d):
        stack = [(j, 1.0)]
        while stack:
            node, prod = stack.pop()
            for nxt in range(d):
                if a0[nxt, node] != 0:
                    out[nxt, j] += prod * a0[nxt, node]
                    stack.append((nxt, prod * a0[nxt, node]))
    return out


class TestEmbedding:
    def test_block_structure(self, varma_lagged_spec):
        emb = embed_as_var(varma_lagged_spec)
        assert (emb.d, emb.p, emb.q) == (4, 1, 0)
        a1, b1 = varma_lagged_spec.a[1], varma_lagged_spec.b[0]
        assert np.array_equal(emb.a[1][:2, :2], a1)
        assert np.array_equal(emb.a[1][:2, 2:], b1)
        assert np.array_equal(emb.a[1][2:], np.zeros((2, 4)))
        # instantaneous block: A0 plus the unit loading of eps on S
        assert np.array_equal(emb.a[0][:2, 2:], np.eye(2))
        assert np.array_equal(emb.gamma, np.array([0, 0, 1, 1]))

    def test_degenerate_variances_flagged_not_rejected(self, varma_lagged_spec):
        emb = embed_as_var(varma_lagged_spec)
        report = validate(emb, allow_zero_variance=True)
        assert report.passed and not report.gamma_positive

    def test_stationarity_preserved(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            spec = random_stable_spec(rng)
            emb = embed_as_var(spec)
            r_orig = validate(spec, allow_zero_variance=True).spectral_radius
            r_emb = validate(emb, allow_zero_variance=True).spectral_radius
            assert abs(r_orig - r_emb) < 1e-9

    def test_orders_padded_to_max(self):
        spec = VarmaSpec(
            a=[np.zeros((1, 1))], b=[[[0.5]], [[0.25]]], gamma=[1.0])
        emb = embed_as_var(spec)
        assert emb.p == 2 and emb.q == 0 and emb.d == 2


class TestWindows:
    def test_varma_lagged_full_window_adjacency(self, varma_lagged_spec):
        g = full_time_window(varma_lagged_spec, -2, 1, include_innovations=True).graph
        assert g.directed[(innov(Y, -1), endo(X, 0))] == pytest.approx(0.25)
        assert g.directed[(innov(X, 0), endo(X, 0))] == 1.0
        assert g.directed[(endo(X, -1), endo(Y, 0))] == pytest.approx(1 / 3)
        assert (innov(X, -1), endo(Y, 0)) not in g.directed

    def test_zero_matrices_only_unit_innovation_edges(self):
        spec = VarmaSpec(a=[np.zeros((2, 2)), np.zeros((2, 2))],
                         b=[np.zeros((2, 2))], gamma=[1, 1])
        g = full_time_window(spec, -1, 0, include_innovations=True).graph
        assert set(g.directed) == {
            (innov(i, t), endo(i, t)) for i in (0, 1) for t in (-1, 0)
        }

    def test_translation_isomorphism(self, varma_instant_spec):
        w1 = full_time_window(varma_instant_spec, 0, 3, include_innovations=True).graph
        w2 = full_time_window(varma_instant_spec, 10, 13, include_innovations=True).graph
        shift = lambda v: TimedNode(v.component, v.time + 10, v.kind)
        assert {(shift(t), shift(h)): c for (t, h), c in w1.directed.items()} == dict(
            w2.directed)

    def test_invalid_range(self, varma_lagged_spec):
        with pytest.raises(ModelError, match="invalid window"):
            full_time_window(varma_lagged_spec, 1, 0)
        with pytest.raises(ModelError, match="invalid window"):
            marginalized_admg_window(varma_lagged_spec, 1, 0)

    def test_varma_lagged_marginalized_adjacency(self, varma_lagged_spec):
        g = marginalized_admg_window(varma_lagged_spec, -2, 0).graph
        expected_directed = set()
        for t in (-1, 0):
            expected_directed |= {
                (endo(X, t - 1), endo(X, t)),
                (endo(X, t - 1), endo(Y, t)),
                (endo(Y, t - 1), endo(Y, t)),
            }
        assert set(g.directed) == expected_directed
        assert g.bidirected == frozenset(
            frozenset((endo(Y, t - 1), endo(X, t))) for t in (-1, 0)
        )

    def test_marginalized_window_translation_invariant(self, varma_instant_spec):
        w1 = marginalized_admg_window(varma_instant_spec, -3, 0).graph
        w2 = marginalized_admg_window(varma_instant_spec, 7, 10).graph
        shift = lambda v: TimedNode(v.component, v.time + 10, v.kind)
        assert {frozenset(map(shift, p)) for p in w1.bidirected} == set(w2.bidirected)
        assert {(shift(t), shift(h)) for t, h in w1.directed} == set(w2.directed)

    def test_pure_var_has_no_bidirected(self, var_instant_spec):
        g = marginalized_admg_window(var_instant_spec, -2, 0).graph
        assert not g.bidirected
        assert (endo(X, 0), endo(Y, 0)) in g.directed  # instantaneous edge kept

    def test_rewrite_adds_bidirected_families(self, varma_instant_spec):
        original = marginalized_admg_window(varma_instant_spec, -2, 0).graph
        rewritten = marginalized_admg_window(varma_instant_spec, -2, 0, rewritten=True).graph
        assert original.bidirected < rewritten.bidirected
        assert frozenset((endo(X, 0), endo(Y, 0))) in rewritten.bidirected


def build_g_star(spec, t_min, t_max):
    """Extended DAG: lagged parents of instantaneous ancestors are drawn into
    every node, then all instantaneous edges are removed."""
    base = full_time_window(spec, t_min, t_max).graph
    extra = set()
    for v in base.nodes:
        instantaneous_ancestors = [
            u for u in base.ancestors([v]) if u.time == v.time
        ]
        for u in instantaneous_ancestors:
            for parent in base.parents(u):
                if parent.time < u.time:
                    extra.add((parent, v))
    directed = {
        (t, h) for (t, h) in base.directed if t.time != h.time
    } | {e for e in extra if e[0].time != e[1].time}
    return directed


class TestRewriteGraphProperties:
    def test_cor2_ancestor_containment(self):
        rng = np.random.default_rng(21)
        for _ in range(25):
            spec = random_stable_spec(rng)
            orig = full_time_window(spec, -4, 0, include_innovations=True).graph
            rewr = rewritten_full_time_window(spec, -4, 0).graph
            for i in range(spec.d):
                node = endo(i, 0)
                an_orig = set(orig.ancestors([node]))
                an_rewr = set(rewr.ancestors([node]))
                assert an_rewr <= an_orig

    def test_prop6_edge_containment(self):
        rng = np.random.default_rng(22)
        for _ in range(25):
            spec = random_stable_spec(rng, q=0)
            rewr = rewritten_full_time_window(
                spec, -3, 0, include_innovations=False).graph
            g_star_edges = build_g_star(spec, -3, 0)
            assert set(rewr.directed) <= g_star_edges

    def test_prop7_exact_zero_innovation_covariance(self):
        rng = np.random.default_rng(23)
        for _ in range(40):
            d = int(rng.integers(2, 5))
            a0 = random_acyclic_a0(rng, d, keep=0.4)
            spec = VarmaSpec([a0, np.zeros((d, d))], gamma=rng.uniform(0.5, 2, d))
            rw = remove_instantaneous(spec)
            g = full_time_window(spec, 0, 0).graph
            for i in range(d):
                for j in range(i + 1, d):
                    an_i = {v for v in g.ancestors([endo(i, 0)])}
                    an_j = {v for v in g.ancestors([endo(j, 0)])}
                    if not an_i & an_j:
                        assert rw.sigma_delta[i, j] == 0.0


class TestModelJson:
    def test_round_trip(self, varma_instant_spec):
        data = spec_to_json(varma_instant_spec)
        clone = spec_from_json(json.loads(json.dumps(data)))
        assert clone.d == varma_instant_spec.d and clone.p == varma_instant_spec.p and clone.q == varma_instant_spec.q
        for m1, m2 in zip(clone.a, varma_instant_spec.a):
            assert np.array_equal(m1, m2)
        for m1, m2 in zip(clone.b, varma_instant_spec.b):
            assert np.array_equal(m1, m2)
        assert clone.names == varma_instant_spec.names

    def test_inconsistent_metadata_rejected(self, varma_lagged_spec):
        data = spec_to_json(varma_lagged_spec)
        data["p"] = 3
        with pytest.raises(ModelError, match="claims p=3"):
            spec_from_json(data)

    def test_malformed_rejected(self):
        with pytest.raises(ModelError, match="malformed"):
            spec_from_json({"gamma": [1.0]})
