"""Walk one channel draw through the whole downlink pipeline.

Generates a 4-user channel at the reference dimensions (64 transmit
antennas, 4 receive antennas and 2 layers per user), decomposes it, builds
the four precoder families, applies equal power, and scores every receiver.
Run:  python3 demos/pipeline_walkthrough.py
"""

import numpy as np

import mimopa as m

dims = m.SystemDims.uniform(T=64, K=4, R_k=4, L_k=2)
P_total = 1.0
snr_db = 10.0
sigma2 = 10 ** (-snr_db / 10)

print(f"system: T={dims.T}, K={dims.K}, R={dims.R_total}, L={dims.L_total}, "
      f"SNR={snr_db} dB (sigma2={sigma2:.3f}, P={P_total})")

channels = m.generate_rayleigh(dims, seed=1)
svds = [m.truncated_svd(H, dims.L_per_user[k]) for k, H in enumerate(channels)]
dec = m.stack_svds(svds)

print("\n-- channel decomposition --")
print(f"singular values per layer: {np.round(dec.S, 3)}")
print(f"cross-user correlation ||C||_2 = {np.linalg.norm(dec.C, 2):.3f} "
      f"(diag residual {np.abs(np.diag(dec.C)).max():.1e})")

print("\n-- precoders (equal power, total budget) --")
lam = sigma2 / P_total
for kind in (m.PrecoderKind.mrt(), m.PrecoderKind.zf(), m.PrecoderKind.rzf(lam), m.PrecoderKind.arzf(lam)):
    pre = m.build_precoder(kind, dec)
    pa = m.equal_pa_tpc(pre, P_total)
    W = m.apply_power(pre, pa)
    offdiag = dec.V @ W - np.diag(np.diag(dec.V @ W))
    report = m.check_constraints(W, P_total, "tpc")
    print(f"{kind.name:>4}: ||W||_F^2 = {np.sum(np.abs(W) ** 2):.4f} "
          f"(tpc ok={report.ok}), residual interference {np.abs(offdiag).max():.2e}")

print("\n-- receivers on the RZF precoder --")
pre = m.build_precoder(m.PrecoderKind.rzf(lam), dec)
pa = m.equal_pa_tpc(pre, P_total)
W = m.apply_power(pre, pa)
for method in ("cd", "mmse", "mmse-irc"):
    det = m.build_detection_set(method, dims, W, svds=svds, channels=channels,
                                p=pa.p, lambda_reg=sigma2)
    sinrs = m.layer_sinrs(W, channels, det, dims, sigma2)
    eff = [m.geo_mean_eff_sinr(sinrs[dims.layer_slice(k)]) for k in range(dims.K)]
    se = m.spectral_efficiency(eff, dims.L_per_user)
    print(f"{method:>8}: per-layer SINR (dB) = {np.round(m.to_db(sinrs), 1)}, "
          f"SE = {se:.2f} bit/s/Hz")
