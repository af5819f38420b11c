import json
import math

import numpy as np
import pytest
import sympy

from netcohesion.errors import DegenerateCriterionError, InputError, RetryExhaustedError, SingularSystemError
from netcohesion.graph import Graph, build_laplacian
from netcohesion.kernels import KernelSpec, gram
from netcohesion.solver import (
    FitConfig,
    assemble_system,
    default_grid,
    fit,
    fit_cohesion_only,
    fit_from_dict,
    fit_to_dict,
    gcv_score,
    hat_matrix,
    kfold_assignment,
    objective,
    objective_gradient,
    select_hyperparameters,
)

from conftest import random_graph
from oracles import cg_minimizer, objective_loop


def instance(rng, n=12, p=3, p_edge=0.3, family="rbf"):
    g = random_graph(rng, n, p_edge, connected=True)
    X = rng.standard_normal((n, p))
    K = gram(KernelSpec(family, gamma=0.5), X)
    Y = rng.standard_normal(n)
    return Y, K, build_laplacian(g), g, X


class TestFitConfig:
    def test_negative_rejected(self):
        with pytest.raises(InputError):
            FitConfig(lam=-1.0)

    def test_unknown_form_rejected(self):
        with pytest.raises(InputError):
            FitConfig(weight_penalty_form="l1")

    def test_roundtrip(self):
        cfg = FitConfig(lam=0.5, psi=2.0, weight_penalty_form="rkhs")
        d = cfg.to_dict()
        assert d["lambda"] == 0.5
        assert FitConfig.from_dict(d) == cfg


class TestAssembleSystem:
    def test_scalar(self):
        s = assemble_system(np.array([[1.0]]), np.array([[0.0]]), FitConfig(1.0, 1.0))
        np.testing.assert_array_equal(s.matrix, [[1, 1], [1, 2]])

    def test_unpenalized_rank(self, rng):
        Y, K, L, _, _ = instance(rng, n=6)
        s = assemble_system(K, L, FitConfig(0.0, 0.0, allow_interpolation=True))
        assert np.linalg.matrix_rank(s.matrix) == 6

    @pytest.mark.parametrize("form", ["euclidean", "rkhs"])
    def test_block_form(self, rng, form):
        Y, K, L, _, _ = instance(rng, n=6)
        lam, psi = 0.7, 1.3
        Lm = L.matrix
        pen = K if form == "rkhs" else np.eye(6)
        expected = np.block([[np.eye(6) + lam * Lm, K], [K.T, K.T @ K + psi * pen]])
        s = assemble_system(K, L, FitConfig(lam, psi, form))
        np.testing.assert_allclose(s.matrix, expected, atol=1e-14)
        np.testing.assert_array_equal(s.K_tilde[:, :6], np.eye(6))

    def test_dimension_mismatch(self):
        with pytest.raises(InputError):
            assemble_system(np.eye(3), np.zeros((2, 2)), FitConfig())


class TestFit:
    def test_scalar_by_hand(self):
        f = fit([2.0], np.array([[1.0]]), np.array([[0.0]]), FitConfig(1.0, 1.0))
        np.testing.assert_allclose(f.alpha, [2.0], atol=1e-14)
        np.testing.assert_allclose(f.w, [0.0], atol=1e-14)

    def test_free_intercepts_interpolate(self, rng):
        Y, K, L, _, _ = instance(rng)
        f = fit(Y, K, L, FitConfig(0.0, 1.0))
        np.testing.assert_allclose(f.alpha, Y, atol=1e-10)
        np.testing.assert_allclose(f.w, 0.0, atol=1e-10)

    @pytest.mark.parametrize("form", ["euclidean", "rkhs"])
    def test_matches_cg_oracle(self, rng, form):
        Y, K, L, g, _ = instance(rng)
        cfg = FitConfig(0.8, 0.3, form)
        f = fit(Y, K, L, cfg)
        a, w = cg_minimizer(Y, K, g.edges, 0.8, 0.3, form)
        np.testing.assert_allclose(f.alpha, a, atol=1e-6)
        np.testing.assert_allclose(f.w, w, atol=1e-6)

    @pytest.mark.parametrize("form", ["euclidean", "rkhs"])
    def test_stationarity(self, rng, form):
        Y, K, L, _, _ = instance(rng)
        cfg = FitConfig(1.5, 0.2, form)
        f = fit(Y, K, L, cfg)
        ga, gw = objective_gradient(Y, K, L, cfg, f.alpha, f.w)
        assert np.linalg.norm(np.concatenate([ga, gw])) <= 1e-8 * np.linalg.norm(Y)

    def test_objective_value_and_bound(self, rng):
        Y, K, L, g, _ = instance(rng)
        cfg = FitConfig(0.5, 0.5)
        f = fit(Y, K, L, cfg)
        assert f.objective_value == pytest.approx(
            objective_loop(Y, K, g.edges, 0.5, 0.5, "euclidean", f.alpha, f.w), rel=1e-12
        )
        assert f.objective_value <= Y @ Y
        for _ in range(100):
            a = f.alpha + rng.standard_normal(12) * 0.1
            w = f.w + rng.standard_normal(12) * 0.1
            assert f.objective_value <= objective(Y, K, L, cfg, a, w)

    def test_interpolation_needs_flag(self, rng):
        Y, K, L, _, _ = instance(rng, n=5)
        with pytest.raises(SingularSystemError, match="allow_interpolation"):
            fit(Y, K, L, FitConfig(0.0, 0.0))
        f = fit(Y, K, L, FitConfig(0.0, 0.0, allow_interpolation=True))
        assert f.min_norm
        np.testing.assert_allclose(f.alpha + K @ f.w, Y, atol=1e-8)

    def test_singular_reports_condition(self, rng):
        X = rng.standard_normal((6, 2))
        X[3] = X[1]  # duplicated row makes K singular
        K = gram(KernelSpec("rbf"), X)
        L = build_laplacian(Graph(6, ((0, 1), (1, 2), (2, 3), (3, 4), (4, 5))))
        with pytest.raises(SingularSystemError) as info:
            fit(rng.standard_normal(6), K, L, FitConfig(1.0, 1.0, "rkhs"))
        assert info.value.condition > 1e12
        assert "lam > 0" in str(info.value)

    def test_spread_shrinks_along_lambda(self, rng):
        Y, K, L, _, _ = instance(rng)
        spreads = [np.ptp(fit(Y, K, L, FitConfig(lam, 1.0)).alpha) for lam in np.logspace(-2, 4, 8)]
        assert all(b < a for a, b in zip(spreads, spreads[1:]))

    def test_retains_graph_from_laplacian(self, rng):
        Y, K, L, g, _ = instance(rng)
        assert fit(Y, K, L, FitConfig()).graph == g


class TestFitCohesionOnly:
    def test_equals_fit_with_zero_psi(self, rng):
        Y, K, L, _, _ = instance(rng)
        a = fit_cohesion_only(Y, K, L, 0.7)
        b = fit(Y, K, L, FitConfig(0.7, 0.0))
        np.testing.assert_array_equal(a.alpha, b.alpha)
        np.testing.assert_array_equal(a.w, b.w)
        assert a.min_norm

    def test_two_node_symbolic(self):
        y1, y2 = sympy.Rational(3), sympy.Rational(-1, 2)
        Kt = sympy.Matrix([[1, 0, 1, 0], [0, 1, 0, 1]])
        M = sympy.zeros(4, 4)
        M[:2, :2] = sympy.Matrix([[1, -1], [-1, 1]])
        S = Kt.T * Kt + 2 * M
        expected = S.pinv() * Kt.T * sympy.Matrix([y1, y2])
        f = fit_cohesion_only([3.0, -0.5], np.eye(2),
                              build_laplacian(Graph(2, ((0, 1),))), 2.0)
        np.testing.assert_allclose(np.concatenate([f.alpha, f.w]),
                                   np.array(expected, dtype=float).ravel(), atol=1e-12)

    def test_large_lambda_collapses_intercepts(self, rng):
        Y, K, L, _, _ = instance(rng)
        f = fit_cohesion_only(Y, K, L, 1e6)
        assert np.max(np.abs(f.alpha - f.alpha.mean())) <= 1e-3 * (1 + np.linalg.norm(Y))
        # fitted values still interpolate: K w absorbs what alpha cannot
        np.testing.assert_allclose(f.alpha + K @ f.w, Y, atol=1e-6)


class TestHatMatrix:
    def test_identity_when_intercepts_free(self, rng):
        Y, K, L, _, _ = instance(rng)
        np.testing.assert_allclose(hat_matrix(K, L, FitConfig(0.0, 1.0)), np.eye(12), atol=1e-10)

    @pytest.mark.parametrize("form", ["euclidean", "rkhs"])
    def test_properties(self, rng, form):
        for _ in range(20):
            Y, K, L, _, _ = instance(rng, n=10)
            cfg = FitConfig(rng.uniform(0.1, 5), rng.uniform(0.1, 5), form)
            H = hat_matrix(K, L, cfg)
            f = fit(Y, K, L, cfg)
            np.testing.assert_array_equal(H, H.T)
            np.testing.assert_allclose(H @ Y, f.alpha + K @ f.w, atol=1e-10)
            ev = np.linalg.eigvalsh(H)
            assert ev.min() >= -1e-8 and ev.max() <= 1 + 1e-8

    def test_trace_decreases_with_lambda(self, rng):
        Y, K, L, _, _ = instance(rng)
        tr = [np.trace(hat_matrix(K, L, FitConfig(lam, 0.5))) for lam in np.logspace(-3, 2, 7)]
        assert all(b < a for a, b in zip(tr, tr[1:]))


class TestGCV:
    def test_degenerate_when_interpolating(self, rng):
        Y, K, L, _, _ = instance(rng)
        with pytest.raises(DegenerateCriterionError):
            gcv_score(Y, K, L, FitConfig(0.0, 1.0))

    def test_zero_for_perfect_fit(self, rng):
        _, K, L, _, _ = instance(rng)
        assert gcv_score(np.full(12, 2.5), K, L, FitConfig(1.0, 1.0)) == pytest.approx(0.0, abs=1e-20)

    def test_direct_formula(self, rng):
        Y, K, L, _, _ = instance(rng)
        cfg = FitConfig(0.3, 0.9)
        H = hat_matrix(K, L, cfg)
        r = Y - H @ Y
        assert gcv_score(Y, K, L, cfg) == pytest.approx(12 * r @ r / (12 - np.trace(H)) ** 2, rel=1e-12)


class TestSelection:
    def test_singleton(self, rng):
        Y, K, L, _, _ = instance(rng)
        cfg = FitConfig(0.4, 0.6)
        assert select_hyperparameters(Y, K, L, [cfg]) is cfg

    def test_zero_gcv_and_tie_break(self, rng):
        _, K, L, _, _ = instance(rng)
        grid = default_grid([0.1, 1.0], [0.5, 2.0])
        # a constant response is fitted exactly by every config; ties prefer smoother
        best = select_hyperparameters(np.ones(12), K, L, grid)
        assert (best.lam, best.psi) == (1.0, 2.0)

    def test_empty_grid(self, rng):
        Y, K, L, _, _ = instance(rng)
        with pytest.raises(InputError):
            select_hyperparameters(Y, K, L, [])

    def test_all_singular(self, rng):
        Y, K, L, _, _ = instance(rng)
        with pytest.raises(SingularSystemError):
            select_hyperparameters(Y, K, L, [FitConfig(0.0, 1.0), FitConfig(0.0, 0.0)])

    @pytest.mark.parametrize("method", ["gcv", "kfold:4"])
    def test_strong_cohesion_picks_smoothing(self, method):
        rng = np.random.default_rng(5)
        n, groups = 60, 3
        labels = np.arange(n) % groups
        edges = tuple((u, v) for u in range(n) for v in range(u + 1, n)
                      if labels[u] == labels[v] and rng.random() < 0.4)
        g = Graph(n, edges)
        X = rng.standard_normal((n, 2))
        Y = np.array([-3.0, 0.0, 3.0])[labels] + 0.5 * np.sin(X[:, 0]) + 0.3 * rng.standard_normal(n)
        K = gram(KernelSpec("rbf", gamma=0.5), X)
        grid = default_grid([1e-4, 1.0, 100.0], [1.0])
        best = select_hyperparameters(Y, K, build_laplacian(g), grid, method=method, seed=1)
        assert best.lam >= 1.0

    def test_unknown_method(self, rng):
        Y, K, L, _, _ = instance(rng)
        with pytest.raises(InputError):
            select_hyperparameters(Y, K, L, [FitConfig()], method="aic")


class TestKfold:
    def test_folds_partition_nodes(self, rng):
        g = random_graph(rng, 20, 0.3, connected=True)
        folds = kfold_assignment(build_laplacian(g), 4, np.random.default_rng(0))
        assert sorted(np.concatenate(folds).tolist()) == list(range(20))

    def test_retries_exhausted(self):
        # an isolated node can never be reached from its fold's training nodes
        g = Graph(6, ((0, 1), (1, 2), (2, 3), (3, 4)))
        with pytest.raises(RetryExhaustedError):
            kfold_assignment(build_laplacian(g), 3, np.random.default_rng(0), retries=5)

    def test_bad_k(self, path3):
        with pytest.raises(InputError):
            kfold_assignment(build_laplacian(path3), 1, np.random.default_rng(0))


class TestSerialization:
    def test_roundtrip(self, rng):
        Y, K, L, g, X = instance(rng)
        spec = KernelSpec("rbf", gamma=0.5)
        f = fit(Y, K, L, FitConfig(0.5, 1.0), kernel=spec, X_train=X)
        d = json.loads(json.dumps(fit_to_dict(f)))
        assert {"n", "p", "alpha", "w", "kernel", "config", "objective_value",
                "graph_edge_count"} <= set(d)
        back = fit_from_dict(d)
        np.testing.assert_array_equal(back.alpha, f.alpha)
        np.testing.assert_array_equal(back.w, f.w)
        np.testing.assert_array_equal(back.X_train, X)
        assert back.graph == g and back.kernel == spec and back.config == f.config
        assert math.isclose(back.condition, f.condition)

    def test_without_embedding(self, rng):
        Y, K, L, _, X = instance(rng)
        d = fit_to_dict(fit(Y, K, L, FitConfig(), X_train=X), embed=False)
        assert "X_train" not in d and "edges" not in d

    def test_rejects_other_machine(self):
        with pytest.raises(InputError):
            fit_from_dict({"machine": "krr"})
