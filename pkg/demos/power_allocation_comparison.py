"""Compare the power-allocation solvers on one channel draw.

For a fixed low-SNR channel the script runs the equal allocations, the KKT
solver (on a reduced antenna count so the active-set enumeration stays
cheap) and both intersection heuristics, then tabulates the product-of-
powers objective, the constraint slack and the spectral efficiency under
the geometric and the table-driven EESM models.
Run:  python3 demos/power_allocation_comparison.py
"""

import numpy as np

import mimopa as m

dims = m.SystemDims.uniform(T=16, K=3, R_k=2, L_k=2)
P_total = 1.0
sigma2 = 0.5  # SNR = 3 dB
table = m.load_mcs_table(1)

channels = m.generate_near_orthogonal(dims, 0.1, seed=11, sv_range=(0.3, 1.0))
svds = [m.truncated_svd(H, dims.L_per_user[k]) for k, H in enumerate(channels)]
dec = m.stack_svds(svds)
pre = m.build_precoder(m.PrecoderKind.zf(), dec)


def score(pa):
    W = m.apply_power(pre, pa)
    det_cd = m.build_detection_set("cd", dims, W, svds=svds, p=pa.p)
    sinrs = m.layer_sinrs(W, channels, det_cd, dims, sigma2)
    eff_geo = [m.geo_mean_eff_sinr(sinrs[dims.layer_slice(k)]) for k in range(dims.K)]
    eff_tab = [m.eesm_fixed_point(sinrs[dims.layer_slice(k)], table).eff_sinr for k in range(dims.K)]
    return (
        m.spectral_efficiency(eff_geo, dims.L_per_user),
        m.spectral_efficiency(eff_tab, dims.L_per_user),
    )


start = m.equal_pa_papc_start(pre, P_total)
det_start = m.build_detection_set("mmse-irc", dims, m.apply_power(pre, start),
                                  channels=channels, lambda_reg=sigma2)

candidates = {
    "equal rho (TPC)": m.equal_pa_tpc(pre, P_total),
    "equal rho at PAPC": start,
    "KKT active set": m.PowerAllocation.from_p(pre, m.papc_kkt_solve(pre, P_total).p),
    "intersection (geo)": m.intersection_method_geo(pre, P_total),
    "intersection (EESM)": m.intersection_method_eesm(pre, det_start, table, sigma2, P_total, dims),
}

budget = P_total / dims.T
print(f"{'allocation':<22}{'sum log p':>10}{'worst row/budget':>18}{'SE geo':>9}{'SE EESM':>9}")
for name, pa in candidates.items():
    W = m.apply_power(pre, pa)
    row_frac = (np.abs(W) ** 2).sum(axis=1).max() / budget
    se_geo, se_tab = score(pa)
    print(f"{name:<22}{np.sum(np.log(pa.p)):>10.3f}{row_frac:>18.3f}{se_geo:>9.3f}{se_tab:>9.3f}")

sol = m.papc_kkt_solve(pre, P_total)
print(f"\nKKT certificate: active antennas {sol.active_set}, "
      f"stationarity {sol.residuals['stationarity']:.1e}, "
      f"complementarity {sol.residuals['complementarity']:.1e}")
