import numpy as np
import numpy.testing as npt
import pytest

import mimopa as m
from mimopa import oracle
from mimopa.precoding import Precoder

from conftest import make_pipeline, random_dims


def precoder_from_powers(A):
    """Precoder whose per-antenna power table row_sq equals A (T x L)."""
    return Precoder(Wp=np.sqrt(np.asarray(A, dtype=float)).astype(complex))


def grid_log_p_optimum(A, P_total, steps=400):
    """Batch grid oracle for max sum(log p) under per-antenna budgets."""
    T = A.shape[0]
    b = P_total / T
    upper = b / A.max(axis=0)
    spec = oracle.GridSpec(lower=tuple(1e-3 * upper), upper=tuple(upper), steps=(steps,) * A.shape[1])
    feas = lambda pts: np.all(pts @ A.T <= b * (1.0 + 1e-12), axis=1)
    obj = lambda pts: np.sum(np.log(pts), axis=1)
    return oracle.grid_maximize(obj, feas, spec, batch=True), spec


class TestEqualPaTpc:
    def test_unit_norm_columns(self):
        Wp = np.vstack([np.eye(8), np.zeros((8, 8))]).astype(complex)
        pa = m.equal_pa_tpc(Precoder(Wp=Wp), 8.0)
        npt.assert_allclose(pa.p, np.ones(8))
        npt.assert_allclose(pa.rho, np.ones(8))

    def test_formula_substitution(self):
        # Column norms [1, 2]: rho = [2, 2], p = [2, 0.5].
        Wp = np.array([[1.0, 0.0], [0.0, 2.0]], dtype=complex)
        pa = m.equal_pa_tpc(Precoder(Wp=Wp), 4.0)
        npt.assert_allclose(pa.rho, [2.0, 2.0])
        npt.assert_allclose(pa.p, [2.0, 0.5])

    def test_meets_budget_exactly(self):
        dims = m.SystemDims.uniform(T=16, K=2, R_k=2, L_k=2)
        _, _, _, pre = make_pipeline(dims, seed=1)
        pa = m.equal_pa_tpc(pre, 4.0)
        assert pa.total == pytest.approx(4.0, rel=1e-12)

    def test_simplex_grid_oracle(self, rng):
        # Product of rho on the simplex peaks at the equal split.
        for _ in range(3):
            P = float(rng.uniform(1.0, 8.0))
            spec = oracle.GridSpec(lower=(0.0, 0.0), upper=(P, P), steps=(201, 201))
            obj = lambda q: q[0] * q[1] * (P - q[0] - q[1])
            feas = lambda q: q[0] + q[1] <= P
            pt, _ = oracle.grid_maximize(obj, feas, spec)
            assert np.all(np.abs(pt - P / 3) <= P / 200 + 1e-12)

    def test_zero_norm_column_rejected(self):
        Wp = np.array([[1.0, 0.0], [0.0, 0.0]], dtype=complex)
        with pytest.raises(ValueError, match="zero-norm"):
            m.equal_pa_tpc(Precoder(Wp=Wp), 1.0)


class TestEqualPaPapcStart:
    def test_binding_antenna_meets_budget(self, rng):
        for seed in range(20):
            dims = random_dims(rng, T_max=12, L_max=6)
            _, _, _, pre = make_pipeline(dims, seed=seed)
            pa = m.equal_pa_papc_start(pre, 3.0)
            row_power = pre.row_sq @ pa.p
            budget = 3.0 / pre.T
            assert row_power.max() == pytest.approx(budget, rel=1e-12)
            assert m.check_constraints(m.apply_power(pre, pa), 3.0, "papc").ok

    def test_equal_rho_direction(self):
        dims = m.SystemDims.uniform(T=8, K=2, R_k=2, L_k=2)
        _, _, _, pre = make_pipeline(dims, seed=3)
        pa = m.equal_pa_papc_start(pre, 2.0)
        npt.assert_allclose(pa.rho, pa.rho[0], rtol=1e-12)


class TestEesmTpcClosedForm:
    def _single_user_setup(self, w_sq, g_sq, T=4):
        L = len(w_sq)
        dims = m.SystemDims(T=T, R_per_user=(L,), L_per_user=(L,))
        A = np.zeros((T, L))
        A[0] = w_sq  # column norms equal w_sq; row structure irrelevant for TPC
        pre = precoder_from_powers(A)
        det = m.DetectionSet(blocks=(np.sqrt(np.diag(g_sq)).astype(complex),))
        return dims, pre, det

    def test_symmetric_case_collapses_to_equal_rho(self):
        dims, pre, det = self._single_user_setup([2.0, 2.0], [0.7, 0.7])
        res = m.eesm_tpc_closed_form(pre, det, 1.6, 1.0, 10.0, dims)
        assert res.feasible
        npt.assert_allclose(res.context.f, 1.0, rtol=1e-12)
        npt.assert_allclose(res.pa.rho, 5.0, rtol=1e-12)

    def test_stationarity_and_fd_agreement(self, rng):
        for seed in range(20):
            r = np.random.default_rng(seed)
            w_sq = r.uniform(0.5, 2.0, 2)
            g_sq = r.uniform(0.5, 2.0, 2)
            sigma2 = float(r.uniform(0.5, 2.0))
            P = float(r.uniform(5.0, 20.0))
            dims, pre, det = self._single_user_setup(w_sq, g_sq)
            res = m.eesm_tpc_closed_form(pre, det, 1.6, sigma2, P, dims)
            assert res.feasible
            betas = res.context.beta_k
            lam_w = res.multiplier * pre.col_norms**2
            grad = m.eesm_lagrangian_gradient(res.p_raw, lam_w, g_sq, sigma2, betas, dims)
            assert np.linalg.norm(grad) < 1e-6
            owner = dims.layer_owner()
            fun = lambda p: oracle.eesm_model_lagrangian(
                p, res.multiplier, pre.col_norms**2, P, g_sq, betas, owner, dims.L_per_user, sigma2
            )
            fd = oracle.finite_diff_gradient(fun, res.p_raw, 1e-6 * float(np.abs(res.p_raw).max()))
            scale = float(np.abs(lam_w).max())
            assert np.abs(grad - fd).max() <= 1e-5 * scale

    def test_matches_constrained_grid_optimum(self):
        # Single user, L = 2: the budget line is 1-D; scan it finely.
        dims, pre, det = self._single_user_setup([1.0, 2.0], [1.0, 1.0])
        sigma2, P = 1.0, 10.0
        res = m.eesm_tpc_closed_form(pre, det, 1.6, sigma2, P, dims)
        assert res.feasible
        w = pre.col_norms**2
        owner = dims.layer_owner()
        betas = res.context.beta_k
        p1_grid = np.linspace(1e-4, (P - 1e-4) / w[0], 20001)
        p2_grid = (P - w[0] * p1_grid) / w[1]
        best = max(
            range(p1_grid.size),
            key=lambda i: oracle.eesm_model_se(
                np.array([p1_grid[i], p2_grid[i]]), det.row_norms_sq(), betas, owner, dims.L_per_user, sigma2
            ),
        )
        p_grid = np.array([p1_grid[best], p2_grid[best]])
        assert np.abs(p_grid - res.p_raw).max() <= 0.01 * np.abs(res.p_raw).max()

    def test_budget_met_exactly(self):
        dims, pre, det = self._single_user_setup([1.0, 3.0], [2.0, 0.5])
        res = m.eesm_tpc_closed_form(pre, det, 1.6, 1.0, 12.0, dims)
        assert float(pre.col_norms**2 @ res.p_raw) == pytest.approx(12.0, rel=1e-12)

    def test_infeasible_flagged_not_clipped(self):
        # Extreme column imbalance pushes the weak layer negative.
        dims, pre, det = self._single_user_setup([1.0, 1000.0], [1.0, 1.0])
        res = m.eesm_tpc_closed_form(pre, det, 5.0, 1.0, 1.0, dims)
        assert not res.feasible
        assert res.pa is None
        assert np.any(res.p_raw <= 0)

    def test_table_driven_beta_freeze(self):
        dims, pre, det = self._single_user_setup([1.0, 2.0], [1.5, 0.5])
        table = m.load_mcs_table(1)
        sigma2, P = 0.8, 10.0
        res = m.eesm_tpc_closed_form(pre, det, table, sigma2, P, dims)
        p0 = m.equal_pa_tpc(pre, P).p
        sinrs = p0 / (sigma2 * det.row_norms_sq())
        expected = m.eesm_fixed_point(sinrs, table).beta
        assert res.context.beta_k[0] == expected

    def test_context_invariants(self):
        dims, pre, det = self._single_user_setup([1.0, 2.0], [1.0, 0.5])
        res = m.eesm_tpc_closed_form(pre, det, 1.6, 1.0, 10.0, dims)
        assert np.all(res.context.x > 0) and np.all(res.context.x <= 1.0)
        npt.assert_allclose(res.context.X, res.context.x.mean(), rtol=1e-12)


class TestPapcKktSolve:
    def test_symmetric_table_reduces_to_equal_split(self):
        T, L, P = 6, 3, 4.0
        pre = precoder_from_powers(np.full((T, L), 1.0 / T))
        sol = m.papc_kkt_solve(pre, P)
        npt.assert_allclose(sol.p, P / L, rtol=1e-10)

    def test_single_binding_antenna_formula(self):
        # Dominant first row: p_l = P / (T L |w_il|^2).
        A = np.array([[1.0, 0.5], [0.1, 0.05], [0.12, 0.03], [0.02, 0.08]])
        sol = m.papc_kkt_solve(precoder_from_powers(A), 8.0)
        npt.assert_allclose(sol.p, [1.0, 2.0], rtol=1e-12)
        assert sol.active_set == (0,)
        npt.assert_allclose(sol.multipliers[0], 2 * 4 / 8.0)

    def test_certificates_on_random_instances(self, rng):
        for seed in range(30):
            r = np.random.default_rng(seed)
            A = r.uniform(0.05, 1.0, (5, 3))
            pre = precoder_from_powers(A)
            sol = m.papc_kkt_solve(pre, 2.0)
            assert np.all(sol.p > 0)
            assert np.all(sol.multipliers >= -1e-10)
            assert sol.residuals["stationarity"] < 1e-8
            assert sol.residuals["complementarity"] < 1e-8
            row_power = A @ sol.p
            assert np.all(row_power <= (2.0 / 5) * (1 + 1e-9))

    @pytest.mark.parametrize("seed", [1, 5, 6, 10])
    def test_mixed_active_set_newton_path(self, seed):
        # These instances bind two antennas with L = 3, exercising the
        # damped-Newton branch between the closed-form and square cases.
        r = np.random.default_rng(seed)
        A = r.uniform(0.05, 1.0, (5, 3))
        sol = m.papc_kkt_solve(precoder_from_powers(A), 2.0)
        assert len(sol.active_set) == 2
        assert sol.residuals["stationarity"] < 1e-10

    def test_grid_oracle_cross_check(self):
        for seed in (0, 7):
            r = np.random.default_rng(seed)
            T = 3 + (seed % 2)
            A = r.uniform(0.05, 1.0, (T, 2))
            pre = precoder_from_powers(A)
            sol = m.papc_kkt_solve(pre, 2.0)
            (pt, val), spec = grid_log_p_optimum(A, 2.0)
            assert sol.objective >= val - 1e-9
            slack = float(np.sum(spec.cell() / sol.p))
            assert val >= sol.objective - slack

    def test_objective_invariant_to_joint_scaling(self):
        r = np.random.default_rng(3)
        A = r.uniform(0.05, 1.0, (4, 2))
        p_base = m.papc_kkt_solve(precoder_from_powers(A), 2.0).p
        c = 7.5
        p_scaled = m.papc_kkt_solve(precoder_from_powers(c * A), c * 2.0).p
        npt.assert_allclose(p_scaled, p_base, rtol=1e-10)

    def test_enumeration_budget_guard(self):
        r = np.random.default_rng(0)
        A = r.uniform(0.05, 1.0, (64, 8))
        with pytest.raises(ValueError, match="enumeration budget"):
            m.papc_kkt_solve(precoder_from_powers(A), 2.0, max_subsets=1000)


class TestIntersectionGeo:
    def test_symmetric_rows_return_point2_equals_point1(self):
        rng = np.random.default_rng(0)
        row = rng.uniform(0.5, 2.0, 3)
        pre = precoder_from_powers(np.tile(row, (6, 1)))
        P = 4.0
        pa = m.intersection_method_geo(pre, P)
        start = m.equal_pa_papc_start(pre, P)
        npt.assert_allclose(pa.p, start.p, rtol=1e-12)
        npt.assert_allclose(pa.p, P / (6 * 3 * row), rtol=1e-12)

    def test_point3_sits_on_two_hyperplanes(self):
        A = np.array([[1.0, 0.2, 0.2], [0.1, 1.4, 0.1], [0.1, 0.1, 0.3]])
        pre = precoder_from_powers(A)
        P = 3.0
        pa = m.intersection_method_geo(pre, P)
        row_power = A @ pa.p
        budget = P / 3
        active = np.flatnonzero(np.abs(row_power - budget) < 1e-9 * budget)
        assert list(active) == [0, 1]
        assert m.check_constraints(m.apply_power(pre, pa), P, "papc").ok

    def test_never_worse_than_start_in_log_objective(self, rng):
        # Point 2 maximizes sum(log p) on the binding hyperplane and the
        # walk keeps a convex combination, so the start is a lower bound.
        for seed in range(50):
            dims = random_dims(rng, T_max=10, L_max=5)
            _, _, _, pre = make_pipeline(dims, seed=seed)
            P = 2.0
            pa = m.intersection_method_geo(pre, P)
            start = m.equal_pa_papc_start(pre, P)
            assert np.sum(np.log(pa.p)) >= np.sum(np.log(start.p)) - 1e-12

    def test_bounded_by_kkt_optimum(self, rng):
        for seed in range(20):
            r = np.random.default_rng(seed)
            A = r.uniform(0.05, 1.0, (5, 3))
            pre = precoder_from_powers(A)
            sol = m.papc_kkt_solve(pre, 2.0)
            pa = m.intersection_method_geo(pre, 2.0)
            assert np.sum(np.log(pa.p)) <= sol.objective + 1e-12


class TestIntersectionEesm:
    def test_symmetric_collapse_to_point1(self):
        dims = m.SystemDims(T=4, R_per_user=(2,), L_per_user=(2,))
        pre = precoder_from_powers(np.full((4, 2), 0.7))
        det = m.DetectionSet(blocks=(0.8 * np.eye(2, dtype=complex),))
        pa = m.intersection_method_eesm(pre, det, 1.6, 0.5, 2.0, dims)
        start = m.equal_pa_papc_start(pre, 2.0)
        assert np.abs(pa.p / start.p - 1).max() < 1e-6

    def test_beta_freeze_matches_fixed_point(self):
        dims = m.SystemDims(T=5, R_per_user=(2,), L_per_user=(2,))
        rng = np.random.default_rng(4)
        A = rng.uniform(0.1, 1.0, (5, 2))
        pre = precoder_from_powers(A)
        det = m.DetectionSet(blocks=(np.diag([1.2, 0.6]).astype(complex),))
        table = m.load_mcs_table(1)
        sigma2, P = 0.4, 2.0
        from mimopa.power_allocation import _freeze_betas, _papc_start

        p1, _, _ = _papc_start(pre, P)
        frozen = _freeze_betas(table, p1, det.row_norms_sq(), sigma2, dims)
        sinrs = p1 / (sigma2 * det.row_norms_sq())
        assert frozen[0] == m.eesm_fixed_point(sinrs, table).beta

    def test_fallback_to_point1_on_infeasible_point2(self):
        # The closed form's weak-layer power goes negative here, so the
        # heuristic must return its starting point unchanged.
        dims = m.SystemDims(T=2, R_per_user=(2,), L_per_user=(2,))
        A = np.array([[1.0, 1000.0], [0.9, 999.0]])
        pre = precoder_from_powers(A)
        det = m.DetectionSet(blocks=(np.eye(2, dtype=complex),))
        from mimopa.power_allocation import _eesm_closed_form, _papc_start

        p1, i, budget = _papc_start(pre, 1.0)
        p2, _, _ = _eesm_closed_form(A[i], budget, det.row_norms_sq(), 1.0, np.array([5.0]), dims)
        assert np.any(p2 <= 0)
        pa = m.intersection_method_eesm(pre, det, 5.0, 1.0, 1.0, dims)
        npt.assert_allclose(pa.p, p1, rtol=1e-12)

    def test_outputs_feasible_on_pipeline(self, rng):
        dims = m.SystemDims.uniform(T=16, K=2, R_k=2, L_k=2)
        table = m.load_mcs_table(2)
        for seed in range(25):
            hs, svds, dec, pre = make_pipeline(dims, seed=seed)
            sigma2, P = 0.5, 1.0
            start = m.equal_pa_papc_start(pre, P)
            det = m.build_detection_set(
                "mmse-irc", dims, m.apply_power(pre, start), channels=hs, lambda_reg=sigma2
            )
            pa = m.intersection_method_eesm(pre, det, table, sigma2, P, dims)
            assert m.check_constraints(m.apply_power(pre, pa), P, "papc", tol=1e-9).ok


class TestPowerConstraintType:
    def test_validation(self):
        m.PowerConstraint("tpc", 1.0, 4)
        with pytest.raises(ValueError):
            m.PowerConstraint("both", 1.0, 4)
        with pytest.raises(ValueError):
            m.PowerConstraint("tpc", -1.0, 4)
