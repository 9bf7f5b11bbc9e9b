import numpy as np
import numpy.testing as npt
import pytest

import mimopa as m
from mimopa import oracle


class TestGridSpec:
    def test_validation(self):
        with pytest.raises(ValueError):
            oracle.GridSpec(lower=(0.0,), upper=(0.0,), steps=(10,))
        with pytest.raises(ValueError):
            oracle.GridSpec(lower=(0.0,), upper=(1.0,), steps=(1,))

    def test_cell_size(self):
        spec = oracle.GridSpec(lower=(0.0, 0.0), upper=(1.0, 2.0), steps=(11, 21))
        npt.assert_allclose(spec.cell(), [0.1, 0.1])


class TestGridMaximize:
    def test_symmetric_product_on_simplex(self):
        # max rho1*rho2*rho3 with rho3 = P - rho1 - rho2 peaks at P/3 each.
        P = 3.0
        spec = oracle.GridSpec(lower=(0.0, 0.0), upper=(P, P), steps=(201, 201))

        def objective(pt):
            rho3 = P - pt[0] - pt[1]
            return pt[0] * pt[1] * rho3

        feasible = lambda pt: pt[0] + pt[1] <= P
        pt, val = oracle.grid_maximize(objective, feasible, spec)
        step = P / 200
        assert abs(pt[0] - P / 3) <= step and abs(pt[1] - P / 3) <= step

    def test_batch_matches_scalar(self):
        spec = oracle.GridSpec(lower=(0.1, 0.1), upper=(1.0, 1.0), steps=(25, 25))
        obj = lambda p: -((p[0] - 0.4) ** 2) - (p[1] - 0.7) ** 2
        obj_b = lambda pts: -((pts[:, 0] - 0.4) ** 2) - (pts[:, 1] - 0.7) ** 2
        feas = lambda p: True
        feas_b = lambda pts: np.ones(len(pts), dtype=bool)
        pt1, v1 = oracle.grid_maximize(obj, feas, spec)
        pt2, v2 = oracle.grid_maximize(obj_b, feas_b, spec, batch=True)
        npt.assert_array_equal(pt1, pt2)
        assert v1 == v2

    def test_empty_feasible_set(self):
        spec = oracle.GridSpec(lower=(0.1,), upper=(1.0,), steps=(10,))
        with pytest.raises(ValueError, match="no feasible grid point"):
            oracle.grid_maximize(lambda p: 0.0, lambda p: False, spec)

    def test_lexicographic_tie_break(self):
        spec = oracle.GridSpec(lower=(0.0, 0.0), upper=(1.0, 1.0), steps=(3, 3))
        pt, _ = oracle.grid_maximize(lambda p: 1.0, lambda p: True, spec)
        npt.assert_array_equal(pt, [0.0, 0.0])

    def test_refinement_never_decreases_optimum(self):
        obj = lambda p: np.sin(3 * p[0]) + np.cos(2 * p[1])
        feas = lambda p: True
        vals = []
        for n in (11, 21, 41):
            spec = oracle.GridSpec(lower=(0.0, 0.0), upper=(2.0, 2.0), steps=(n, n))
            vals.append(oracle.grid_maximize(obj, feas, spec)[1])
        assert vals[0] <= vals[1] <= vals[2]


class TestFiniteDiff:
    def test_log_gradient(self):
        grad = oracle.finite_diff_gradient(lambda p: np.sum(np.log(p)), np.ones(3), 1e-6)
        npt.assert_allclose(grad, np.ones(3), atol=1e-8)

    def test_quadratic_near_exact(self):
        A = np.diag([1.0, 2.0, 3.0])
        point = np.array([0.5, -1.0, 2.0])
        grad = oracle.finite_diff_gradient(lambda p: p @ A @ p, point, 1e-5)
        npt.assert_allclose(grad, 2 * A @ point, rtol=1e-8)

    def test_non_finite_stencil_rejected(self):
        with np.errstate(invalid="ignore"), pytest.raises(ValueError, match="non-finite"):
            oracle.finite_diff_gradient(lambda p: np.log(p[0]), np.array([1e-7]), 1e-6)


class TestDirectMetrics:
    def test_match_production_implementations(self, rng):
        # Same formulas, independent code: values must agree to rounding.
        for _ in range(50):
            s = rng.uniform(0.05, 40.0, 4)
            beta = rng.uniform(1.6, 60.0)
            assert oracle.direct_geo_eff_sinr(s) == pytest.approx(m.geo_mean_eff_sinr(s), rel=1e-12)
            assert oracle.direct_eesm_eff_sinr(s, beta) == pytest.approx(m.eesm_eff_sinr(s, beta), rel=1e-12)
            eff = rng.uniform(0.1, 9.0, 3)
            assert oracle.direct_spectral_efficiency(eff, [2, 1, 2]) == pytest.approx(
                m.spectral_efficiency(eff, [2, 1, 2]), rel=1e-12
            )

    def test_direct_layer_sinr_matches(self, rng):
        dims = m.SystemDims.uniform(T=8, K=2, R_k=2, L_k=2)
        hs = m.generate_rayleigh(dims, 3)
        svds = [m.truncated_svd(h, 2) for h in hs]
        dec = m.stack_svds(svds)
        pre = m.build_precoder(m.PrecoderKind.rzf(0.05), dec)
        pa = m.equal_pa_tpc(pre, 4.0)
        W = m.apply_power(pre, pa)
        det = m.build_detection_set("cd", dims, W, svds=svds, p=pa.p)
        for k in range(2):
            sl = dims.layer_slice(k)
            for i, l in enumerate(range(sl.start, sl.stop)):
                a = oracle.direct_layer_sinr(W, hs[k], det.blocks[k][i], 0.2, l)
                b = m.per_layer_sinr(W, hs[k], det.blocks[k][i], 0.2, l)
                assert a == pytest.approx(b, rel=1e-12)
