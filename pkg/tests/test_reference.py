import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_density, random_unit
from spectral_risk.errors import DimensionMismatchError, EmptyClusterError
from spectral_risk.preprocess import l2_normalize
from spectral_risk.reference import (
    SimilarityEntry,
    SimilaritySet,
    SolverOptions,
    SolverWarning,
    TailCluster,
    TailRule,
    aggregate_fidelity,
    estimate_reference,
    heuristic_vector,
    principal_eigenvector,
    reference_oracle,
    similarity_set,
    tail_cluster,
    tail_threshold,
)
from spectral_risk.symmat import DensityMatrix


def fv(components, name="z"):
    return l2_normalize(components, name)


def cluster_of(*vectors):
    return TailCluster(tuple(fv(v, str(i)) for i, v in enumerate(vectors)), 0.0, TailRule.MEAN)


def frob(a, b):
    return float(np.linalg.norm(np.asarray(a) - np.asarray(b)))


def sim_set(values):
    return SimilaritySet(tuple(SimilarityEntry(str(i), fv([1.0]), s) for i, s in enumerate(values)))


class TestHeuristic:
    def test_dim3(self):
        np.testing.assert_allclose(heuristic_vector(3).components, [0.577350] * 3, atol=5e-7)

    def test_dim2(self):
        np.testing.assert_allclose(heuristic_vector(2).components, [0.7071067811865476] * 2, rtol=0, atol=1e-15)

    def test_dim1(self):
        assert heuristic_vector(1).components.tolist() == [1.0]

    def test_dim0(self):
        with pytest.raises(ValueError):
            heuristic_vector(0)

    @given(st.integers(1, 50))
    def test_unit_and_equal(self, d):
        c = heuristic_vector(d).components
        assert abs(np.linalg.norm(c) - 1) < 1e-12 and np.all(c == c[0]) and c[0] > 0


class TestSimilarity:
    def test_examples(self):
        h = heuristic_vector(3)
        s = similarity_set([fv([1, 1, 1], "h"), fv([1, 0, 0], "axis"), fv([0, 0, 0], "zero")], h)
        np.testing.assert_allclose(s.values, [1.0, 1 / math.sqrt(3), 0.0], atol=1e-15)
        assert [e.locality_id for e in s.entries] == ["h", "axis", "zero"]

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            similarity_set([fv([1, 0])], heuristic_vector(3))


class TestTail:
    def test_mean_of_three(self):
        c = tail_cluster(sim_set([0.2, 0.4, 0.9]), "mean")
        assert len(c.members) == 1 and c.threshold == pytest.approx(0.5)

    def test_zero_one(self):
        s = SimilaritySet((SimilarityEntry("a", fv([0, 0], "a"), 0.0), SimilarityEntry("b", fv([1, 1], "b"), 1.0)))
        c = tail_cluster(s, TailRule.MEAN)
        assert len(c.members) == 1 and c.members[0].locality_id == "b"

    def test_all_equal_is_empty(self):
        with pytest.raises(EmptyClusterError, match="looser"):
            tail_cluster(sim_set([0.3, 0.3, 0.3]), "mean")

    def test_inclusive_keeps_ties(self):
        assert len(tail_cluster(sim_set([0.3, 0.3]), "mean", inclusive=True).members) == 2

    def test_mean_plus_sample_std(self):
        vals = [0.1, 0.2, 0.3, 0.4, 0.9]
        assert tail_threshold(vals, "mean_std") == pytest.approx(np.mean(vals) + np.std(vals, ddof=1))
        assert len(tail_cluster(sim_set(vals), "mean_std").members) == 1

    def test_rule_spellings(self):
        assert TailRule("mean-plus-std") is TailRule.MEAN_PLUS_STD

    def test_members_exceed_threshold(self, rng):
        vals = rng.uniform(size=200)
        c = tail_cluster(sim_set(vals), "mean")
        assert len(c.members) == int(np.sum(vals > vals.mean()))


class TestEstimate:
    def test_single_vector(self, rng):
        u = random_unit(rng, 3, nonneg=True)
        r = estimate_reference(cluster_of(u))
        assert frob(r.estimate.data, np.outer(u, u)) <= 1e-6
        assert abs(r.objective - 1) <= 1e-6 and r.converged

    def test_two_axes(self):
        r = estimate_reference(cluster_of([1, 0], [0, 1]))
        assert frob(r.estimate.data, np.diag([0.5, 0.5])) <= 1e-4
        assert abs(r.objective - math.sqrt(2)) <= 1e-6

    def test_two_axes_by_calculus(self):
        # diag(t, 1-t) is optimal among all states here; scan sqrt(t) + sqrt(1-t) directly
        t = np.linspace(0, 1, 10001)
        assert t[np.argmax(np.sqrt(t) + np.sqrt(1 - t))] == pytest.approx(0.5)
        assert aggregate_fidelity([[1, 0], [0, 1]], reference_oracle(cluster_of([1, 0], [0, 1]))) <= math.sqrt(2) + 1e-12

    def test_tight_cluster_collapse(self, rng):
        u = random_unit(rng, 3, nonneg=True)
        r = estimate_reference(cluster_of(u, u, u, u))
        assert frob(r.estimate.data, np.outer(u, u)) <= 1e-6

    def test_objective_matches_recomputation(self, rng):
        vecs = [random_unit(rng, 3, nonneg=True) for _ in range(7)]
        r = estimate_reference(cluster_of(*vecs))
        direct = sum(math.sqrt(max(v @ r.estimate.data @ v, 0)) for v in vecs)
        assert abs(r.objective - direct) <= 1e-9
        assert r.final_gap <= 1e-8

    def test_zero_members_ignored_by_solver(self):
        r = estimate_reference(cluster_of([1, 0], [0, 0]))
        assert abs(r.objective - 1) <= 1e-6

    def test_all_zero_members(self):
        with pytest.raises(EmptyClusterError):
            estimate_reference(cluster_of([0, 0], [0, 0]))

    def test_non_convergence_warns(self, rng):
        vecs = [random_unit(rng, 3, nonneg=True) for _ in range(6)]
        with pytest.warns(SolverWarning, match="1 iterations"):
            r = estimate_reference(cluster_of(*vecs), SolverOptions(gap_tol=1e-15, max_iter=1))
        assert not r.converged and r.iterations == 1

    def test_bad_options(self):
        with pytest.raises(ValueError):
            SolverOptions(gap_tol=0)
        with pytest.raises(ValueError):
            SolverOptions(max_iter=0)

    def test_feasible_and_monotone(self, rng):
        for _ in range(30):
            dim = int(rng.integers(2, 5))
            vecs = [random_unit(rng, dim, nonneg=True) for _ in range(int(rng.integers(1, 9)))]
            r = estimate_reference(cluster_of(*vecs))
            DensityMatrix(r.estimate.data)  # re-validates PSD and trace within 1e-9
            assert np.all(np.diff(r.history) >= -1e-12)
            assert r.final_gap >= 0 and r.converged

    def test_accepts_plain_arrays(self):
        r = estimate_reference([np.array([0.6, 0.8])])
        np.testing.assert_allclose(r.estimate.data, [[0.36, 0.48], [0.48, 0.64]], atol=1e-6)


class TestOracle:
    def test_two_axes(self):
        rho = reference_oracle(cluster_of([1, 0], [0, 1]), 0.01)
        assert abs(aggregate_fidelity([[1, 0], [0, 1]], rho) - math.sqrt(2)) <= 1e-3

    def test_single(self, rng):
        u = random_unit(rng, 2, nonneg=True)
        rho = reference_oracle(cluster_of(u), 0.01)
        assert abs(aggregate_fidelity([u], rho) - 1) <= 1e-3

    def test_three_dims_coarse(self):
        u = np.array([0.58, 0.8, 0.12])
        u /= np.linalg.norm(u)
        rho = reference_oracle(cluster_of(u), 0.1)
        assert aggregate_fidelity([u], rho) > 0.95

    def test_solver_dominates(self, rng):
        for _ in range(10):
            vecs = [random_unit(rng, 2, nonneg=True) for _ in range(4)]
            oracle = aggregate_fidelity(vecs, reference_oracle(cluster_of(*vecs), 0.01))
            assert oracle <= estimate_reference(cluster_of(*vecs)).objective + 1e-6

    def test_unsupported(self):
        with pytest.raises(NotImplementedError):
            reference_oracle(cluster_of([1, 0, 0, 0]))
        with pytest.raises(ValueError):
            reference_oracle(cluster_of([1, 0]), 0.5)


@settings(deadline=None, max_examples=60)
@given(st.integers(0, 2**32 - 1), st.integers(2, 4), st.floats(0.01, 0.99))
def test_aggregate_fidelity_is_concave(seed, dim, t):
    rng = np.random.default_rng(seed)
    vecs = [random_unit(rng, dim, nonneg=True) for _ in range(5)]
    r1, r2 = random_density(rng, dim), random_density(rng, dim)
    mixed = aggregate_fidelity(vecs, t * r1 + (1 - t) * r2)
    assert mixed >= t * aggregate_fidelity(vecs, r1) + (1 - t) * aggregate_fidelity(vecs, r2) - 1e-9


class TestPrincipalEigenvector:
    def test_diagonal(self):
        np.testing.assert_allclose(principal_eigenvector(DensityMatrix(np.diag([0.9, 0.1]))), [1, 0], atol=1e-15)

    def test_projector(self, rng):
        u = random_unit(rng, 3)
        p = principal_eigenvector(DensityMatrix(np.outer(u, u)))
        assert abs(abs(p @ u) - 1) < 1e-12
        assert p[np.argmax(np.abs(p))] > 0

    def test_degenerate_top_warns(self):
        with pytest.warns(SolverWarning, match="multiplicity"):
            p = principal_eigenvector(DensityMatrix(np.eye(2) / 2))
        np.testing.assert_allclose(p, [1, 0])

    def test_published_matrix(self):
        # the printed vulnerability reference carries rounding that breaks PSD at 1e-9
        v = np.array([[0.34086951, 0.35583112, 0.31314804],
                      [0.35583112, 0.37144944, 0.3268929],
                      [0.31314804, 0.3268929, 0.28768105]])
        p = principal_eigenvector(DensityMatrix(v, psd_tol=1e-8))
        w, vecs = np.linalg.eigh(v)
        ref = vecs[:, -1] * np.sign(vecs[np.argmax(np.abs(vecs[:, -1])), -1])
        np.testing.assert_allclose(p, ref, atol=1e-12)
        assert p[0] == pytest.approx(0.58384031, abs=1e-6)
