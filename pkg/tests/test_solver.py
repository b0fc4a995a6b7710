import numpy as np
import pytest
from scipy import sparse

from meshreg import (
    ADMMOptions,
    MBSProblem,
    PenaltySpec,
    RankDeficiencyError,
    SparseBandedMatrix,
    admm_solve,
    kkt_residual,
    lambda_grid,
    lambda_max,
    mesh_from_points,
    mlp_matrix,
    normalized_difference_matrix,
    penalty_null_basis,
    regular_mesh,
    soft_threshold,
    solve_path,
)


def identity_operator(n):
    return SparseBandedMatrix(sparse.eye_array(n, format="csr"), bandwidth=1)


def random_instance(rng, n_max=60, m_max=30):
    """Random desk-scale univariate problem with k <= r <= 2."""
    r = int(rng.integers(0, 3))
    k = int(rng.integers(0, r + 1))
    n = int(rng.integers(10, n_max + 1))
    m = int(rng.integers(max(r + 2, k + 1, 4), m_max + 1))
    xs = np.sort(rng.uniform(0, 1, n))
    ys = np.sin(3 * xs) + rng.normal(size=n) * 0.7
    mesh = regular_mesh(0.0, 1.0, m)
    plan = mlp_matrix(xs, mesh, k)
    pen_op = normalized_difference_matrix(mesh, r, 1.0)
    basis = penalty_null_basis(mesh, PenaltySpec(orders=((r,),), ell=1.0))
    return plan, pen_op, ys, basis


class TestSoftThreshold:
    def test_basic(self):
        np.testing.assert_allclose(soft_threshold(np.array([2.5]), 1.0), [1.5])

    def test_dead_zone(self):
        np.testing.assert_allclose(soft_threshold(np.array([-0.5]), 1.0), [0.0])

    def test_zero_threshold_identity(self):
        z = np.array([-3.0, 0.0, 1.7])
        np.testing.assert_array_equal(soft_threshold(z, 0.0), z)

    def test_negative_threshold_rejected(self):
        with pytest.raises(ValueError):
            soft_threshold(np.array([1.0]), -0.1)


class TestAdmmSolve:
    def test_unpenalized_identity_recovers_y(self):
        rng = np.random.default_rng(0)
        y = rng.normal(size=9)
        mesh = regular_mesh(0, 1, 9)
        pen_op = normalized_difference_matrix(mesh, 0, 1.0)
        prob = MBSProblem(y=y, interp=identity_operator(9), penalty_op=pen_op, lam=0.0)
        fit = admm_solve(prob)
        assert fit.converged
        np.testing.assert_allclose(fit.f_mesh, y, atol=1e-6)

    def test_above_lambda_max_collapses_to_mean(self):
        rng = np.random.default_rng(1)
        n = 14
        xs = np.sort(rng.uniform(0, 1, n))
        ys = rng.normal(size=n) + 4.0
        mesh = regular_mesh(0, 1, 7)
        plan = mlp_matrix(xs, mesh, 0)
        pen_op = normalized_difference_matrix(mesh, 0, 1.0)
        prob0 = MBSProblem(y=ys, interp=plan.matrix, penalty_op=pen_op, lam=0.0)
        lmax = lambda_max(prob0)
        fit = admm_solve(
            MBSProblem(y=ys, interp=plan.matrix, penalty_op=pen_op, lam=1.05 * lmax)
        )
        np.testing.assert_allclose(fit.fitted, ys.mean(), atol=1e-6)

    def test_fused_lasso_step_certified_by_kkt(self):
        y = np.array([0.0, 0.0, 0.0, 1.0, 1.0, 1.0])
        mesh = regular_mesh(0, 1, 6)
        pen_op = normalized_difference_matrix(mesh, 0, 1.0)
        prob = MBSProblem(y=y, interp=identity_operator(6), penalty_op=pen_op, lam=0.4)
        fit = admm_solve(prob)
        # Oracle: the subgradient certificate, independent of the ADMM path.
        assert kkt_residual(fit.f_mesh, prob) <= 1e-6

    def test_objective_recompute_matches(self):
        rng = np.random.default_rng(2)
        plan, pen_op, ys, _ = random_instance(rng)
        prob = MBSProblem(y=ys, interp=plan.matrix, penalty_op=pen_op, lam=0.3)
        fit = admm_solve(prob)
        recomputed = prob.objective(fit.f_mesh)
        assert fit.objective == pytest.approx(recomputed, rel=1e-8)

    def test_objective_close_to_best_seen(self):
        rng = np.random.default_rng(3)
        plan, pen_op, ys, _ = random_instance(rng)
        prob = MBSProblem(y=ys, interp=plan.matrix, penalty_op=pen_op, lam=0.2)
        fit = admm_solve(prob, ADMMOptions(record_history=True))
        assert fit.objective <= np.min(fit.objective_history) * (1 + 1e-6)

    def test_max_iterations_flags_not_converged(self):
        rng = np.random.default_rng(4)
        plan, pen_op, ys, _ = random_instance(rng)
        prob = MBSProblem(y=ys, interp=plan.matrix, penalty_op=pen_op, lam=0.5)
        fit = admm_solve(prob, ADMMOptions(max_iter=2))
        assert not fit.converged
        assert fit.iterations == 2

    def test_converged_residuals_below_tolerance(self):
        rng = np.random.default_rng(5)
        plan, pen_op, ys, _ = random_instance(rng)
        opts = ADMMOptions()
        prob = MBSProblem(y=ys, interp=plan.matrix, penalty_op=pen_op, lam=0.1)
        fit = admm_solve(prob, opts)
        assert fit.converged
        q = pen_op.rows
        m = pen_op.cols
        assert fit.primal_residual <= np.sqrt(q) * opts.tol_abs + opts.tol_rel * 10
        assert fit.dual_residual <= np.sqrt(m) * opts.tol_abs + opts.tol_rel * 100

    def test_invalid_problem_shapes(self):
        with pytest.raises(ValueError):
            MBSProblem(
                y=np.ones(3),
                interp=identity_operator(4),
                penalty_op=normalized_difference_matrix(regular_mesh(0, 1, 4), 0, 1.0),
            )
        with pytest.raises(ValueError):
            MBSProblem(
                y=np.ones(4),
                interp=identity_operator(4),
                penalty_op=normalized_difference_matrix(regular_mesh(0, 1, 4), 0, 1.0),
                lam=-1.0,
            )


class TestKktResidual:
    def test_least_squares_stationarity(self):
        rng = np.random.default_rng(6)
        n, m = 20, 6
        o_dense = rng.normal(size=(n, m))
        interp = SparseBandedMatrix(sparse.csr_array(o_dense))
        pen_op = normalized_difference_matrix(regular_mesh(0, 1, m), 0, 1.0)
        y = rng.normal(size=n)
        f_ls = np.linalg.lstsq(o_dense, y, rcond=None)[0]
        prob = MBSProblem(y=y, interp=interp, penalty_op=pen_op, lam=0.0)
        assert kkt_residual(f_ls, prob) <= 1e-8

    def test_constant_fit_at_lambda_max(self):
        rng = np.random.default_rng(7)
        n = 18
        xs = np.sort(rng.uniform(0, 1, n))
        ys = rng.normal(size=n)
        mesh = regular_mesh(0, 1, 8)
        plan = mlp_matrix(xs, mesh, 0)
        pen_op = normalized_difference_matrix(mesh, 0, 1.0)
        prob0 = MBSProblem(y=ys, interp=plan.matrix, penalty_op=pen_op, lam=0.0)
        lmax = lambda_max(prob0)
        f_const = np.full(8, ys.mean())
        prob = MBSProblem(y=ys, interp=plan.matrix, penalty_op=pen_op, lam=lmax)
        assert kkt_residual(f_const, prob) <= 1e-6

    def test_non_optimal_point_flagged(self):
        rng = np.random.default_rng(8)
        plan, pen_op, ys, _ = random_instance(rng)
        prob = MBSProblem(y=ys, interp=plan.matrix, penalty_op=pen_op, lam=0.25)
        fit = admm_solve(prob)
        random_f = fit.f_mesh + rng.normal(size=fit.f_mesh.size)
        assert kkt_residual(random_f, prob) > 1e-3
        assert kkt_residual(random_f, prob) > kkt_residual(fit.f_mesh, prob)


class TestLambdaMax:
    def test_constant_response_gives_zero(self):
        mesh = regular_mesh(0, 1, 5)
        pen_op = normalized_difference_matrix(mesh, 0, 1.0)
        prob = MBSProblem(
            y=np.full(5, 2.0), interp=identity_operator(5), penalty_op=pen_op, lam=0.0
        )
        assert lambda_max(prob) == pytest.approx(0.0, abs=1e-10)

    def test_two_point_hand_example(self):
        # f0 = (0.5, 0.5); solve D'u = 2(y - f0) = (-1, 1) with D = (-1, 1).
        mesh = regular_mesh(0, 1, 2)
        pen_op = normalized_difference_matrix(mesh, 0, 1.0)
        prob = MBSProblem(
            y=np.array([0.0, 1.0]),
            interp=identity_operator(2),
            penalty_op=pen_op,
            lam=0.0,
        )
        assert lambda_max(prob) == pytest.approx(1.0, rel=1e-10)

    @pytest.mark.parametrize("seed", range(6))
    def test_bracketing(self, seed):
        rng = np.random.default_rng(100 + seed)
        plan, pen_op, ys, basis = random_instance(rng)
        prob0 = MBSProblem(y=ys, interp=plan.matrix, penalty_op=pen_op, lam=0.0)
        lmax = lambda_max(prob0, null_basis=basis)
        if lmax < 1e-8:
            pytest.skip("degenerate draw")
        hi = admm_solve(
            MBSProblem(y=ys, interp=plan.matrix, penalty_op=pen_op, lam=1.01 * lmax)
        )
        lo = admm_solve(
            MBSProblem(y=ys, interp=plan.matrix, penalty_op=pen_op, lam=0.9 * lmax)
        )
        assert np.sum(np.abs(pen_op @ hi.f_mesh)) <= 1e-6
        assert np.sum(np.abs(pen_op @ lo.f_mesh)) > 1e-6

    def test_explicit_basis_matches_dense_path(self):
        rng = np.random.default_rng(9)
        plan, pen_op, ys, basis = random_instance(rng)
        prob = MBSProblem(y=ys, interp=plan.matrix, penalty_op=pen_op, lam=0.0)
        assert lambda_max(prob) == pytest.approx(
            lambda_max(prob, null_basis=basis), rel=1e-8
        )

    def test_rank_deficiency_detected(self):
        # Two mesh columns never touched by O and a null space of constants:
        # O restricted to null(D) keeps full rank, so instead collapse O to
        # a zero matrix, which cannot identify the constant component.
        mesh = regular_mesh(0, 1, 4)
        pen_op = normalized_difference_matrix(mesh, 0, 1.0)
        zero = SparseBandedMatrix(
            sparse.csr_array(np.zeros((3, 4))), bandwidth=None
        )
        prob = MBSProblem(y=np.ones(3), interp=zero, penalty_op=pen_op, lam=0.0)
        with pytest.raises(RankDeficiencyError):
            lambda_max(prob)


class TestLambdaGrid:
    def test_three_point_log_spacing(self):
        np.testing.assert_allclose(lambda_grid(100, 3, 1), [100.0, 10.0, 1.0])

    def test_endpoints_exact(self):
        grid = lambda_grid(7.3, 50, 1e-3)
        assert grid.size == 50
        assert grid[0] == 7.3
        assert grid[-1] == 1e-3
        assert np.all(np.diff(grid) < 0)

    def test_two_points(self):
        np.testing.assert_allclose(lambda_grid(1.0, 2, 1e-3), [1.0, 1e-3])

    def test_ordering_violation(self):
        with pytest.raises(ValueError):
            lambda_grid(1.0, 5, 2.0)


class TestSolvePath:
    def test_warm_start_matches_cold_kkt(self):
        rng = np.random.default_rng(11)
        plan, pen_op, ys, basis = random_instance(rng)
        prob0 = MBSProblem(y=ys, interp=plan.matrix, penalty_op=pen_op, lam=0.0)
        lmax = lambda_max(prob0, null_basis=basis)
        lams = lambda_grid(lmax, 12, max(1e-3, 1e-3 * lmax))
        warm = solve_path(ys, plan.matrix, pen_op, lams)
        tol_scale = 1e-5 * (1 + np.max(np.abs(plan.matrix.tocsr().T @ ys)))
        for lam, fit in zip(lams, warm):
            prob = MBSProblem(y=ys, interp=plan.matrix, penalty_op=pen_op, lam=lam)
            cold = admm_solve(prob)
            assert kkt_residual(fit.f_mesh, prob) <= tol_scale
            assert kkt_residual(cold.f_mesh, prob) <= tol_scale

    def test_penalty_term_grows_as_lambda_shrinks(self):
        rng = np.random.default_rng(12)
        plan, pen_op, ys, basis = random_instance(rng)
        prob0 = MBSProblem(y=ys, interp=plan.matrix, penalty_op=pen_op, lam=0.0)
        lmax = lambda_max(prob0, null_basis=basis)
        lams = lambda_grid(lmax, 10, 1e-3)
        fits = solve_path(ys, plan.matrix, pen_op, lams)
        pens = [float(np.sum(np.abs(pen_op @ f.f_mesh))) for f in fits]
        assert all(b >= a - 1e-7 for a, b in zip(pens, pens[1:]))


class TestTrendFilteringReduction:
    @pytest.mark.parametrize("r", [0, 1, 2])
    def test_mesh_at_observations_gives_identity_and_kkt(self, r):
        rng = np.random.default_rng(40 + r)
        n = 30
        xs = np.sort(rng.uniform(0, 1, n))
        ys = np.cos(5 * xs) + 0.5 * rng.normal(size=n)
        mesh = mesh_from_points(xs)
        plan = mlp_matrix(xs, mesh, r)
        np.testing.assert_allclose(plan.matrix.toarray(), np.eye(n), atol=1e-9)
        pen_op = normalized_difference_matrix(mesh, r, 1.0)
        lam = 0.3
        prob = MBSProblem(y=ys, interp=plan.matrix, penalty_op=pen_op, lam=lam)
        fit = admm_solve(prob)
        # KKT of the trend-filtering objective directly (identity design):
        # 2 (f - y) + lam D's must vanish for an admissible subgradient.
        tf_prob = MBSProblem(
            y=ys, interp=identity_operator(n), penalty_op=pen_op, lam=lam
        )
        tol = 1e-5 * (1 + np.max(np.abs(ys)))
        assert kkt_residual(fit.f_mesh, tf_prob) <= tol


class TestRandomizedOptimality:
    @pytest.mark.parametrize("seed", range(12))
    def test_kkt_certificate(self, seed):
        rng = np.random.default_rng(1000 + seed)
        plan, pen_op, ys, basis = random_instance(rng)
        prob0 = MBSProblem(y=ys, interp=plan.matrix, penalty_op=pen_op, lam=0.0)
        lmax = lambda_max(prob0, null_basis=basis)
        lam = float(rng.uniform(0.02, 1.1)) * lmax
        prob = MBSProblem(y=ys, interp=plan.matrix, penalty_op=pen_op, lam=lam)
        fit = admm_solve(prob)
        tol = 1e-5 * (1 + np.max(np.abs(plan.matrix.tocsr().T @ ys)))
        assert kkt_residual(fit.f_mesh, prob) <= tol
