"""Scenario configuration and Monte-Carlo ensemble execution.

A scenario fixes the system dimensions, an SNR sweep, a precoder family, a
power-allocation algorithm, a receiver and an effective-SINR policy.  For
every (seed, SNR) pair the harness draws a channel, runs the full pipeline,
scores the sum spectral efficiency, and records it next to the equal-power
baseline computed under the same constraint mode, so the emitted table
directly carries the SE gain of the algorithm under test.

Scenario files are flat ``key = value`` text (lists comma-separated, ``#``
starts a comment).  Results go to CSV or JSON with the fixed column set
``seed, snr_db, algo, se, gain, runtime_us``.  Given one master seed the
output is byte-identical across runs and thread counts; per-record wall
times are only measured (and only then nondeterministic) when explicitly
requested.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .channel import (
    SystemDims,
    generate_correlated,
    generate_rayleigh,
    stack_svds,
    truncated_svd,
)
from .detection import build_detection_set
from .metrics import (
    EesmFixedBeta,
    EesmTableDriven,
    GeometricMean,
    McsTable,
    effective_sinr,
    layer_sinrs,
    load_mcs_table,
    spectral_efficiency,
    to_db,
)
from .power_allocation import (
    PowerAllocation,
    equal_pa_papc_start,
    equal_pa_tpc,
    eesm_tpc_closed_form,
    intersection_method_eesm,
    intersection_method_geo,
    papc_kkt_solve,
)
from .precoding import PrecoderKind, apply_power, build_precoder

__all__ = [
    "PA_ALGOS",
    "DETECTORS",
    "EFF_MODELS",
    "Scenario",
    "RunRecord",
    "ScenarioResult",
    "parse_scenario",
    "load_scenario",
    "run_scenario",
    "emit_results",
]

PA_ALGOS = ("native", "equal_tpc", "equal_papc_start", "im_geo", "im_eesm", "eesm_tpc", "kkt_papc")
DETECTORS = ("cd", "mmse", "mmse-irc")
EFF_MODELS = ("geo", "eesm_fixed", "eesm_table")

# Constraint mode implied by each PA algorithm ("native" follows the
# scenario's explicit constraint key instead).
_ALGO_MODE = {
    "equal_tpc": "tpc",
    "eesm_tpc": "tpc",
    "equal_papc_start": "papc",
    "im_geo": "papc",
    "im_eesm": "papc",
    "kkt_papc": "papc",
}

_ALGO_LABEL = {
    "native": "NATIVE",
    "equal_tpc": "EQ TPC",
    "equal_papc_start": "EQ PAPC",
    "im_geo": "IM CD",
    "im_eesm": "IM MCS",
    "eesm_tpc": "EESM TPC",
    "kkt_papc": "KKT PAPC",
}


@dataclass(frozen=True)
class Scenario:
    dims: SystemDims
    corr: float
    snr_db: tuple[float, ...]
    seeds: int
    precoder: str
    lambda_reg: float | None  # None means sigma2 / P
    pa_algo: str
    detector: str
    eff_model: str
    beta: float
    mcs_table_id: int
    constraint: str
    master_seed: int

    def __post_init__(self):
        if not self.snr_db:
            raise ValueError("snr_db grid must be nonempty")
        if self.seeds < 1:
            raise ValueError("seeds must be >= 1")
        if self.precoder not in ("mrt", "zf", "rzf", "arzf"):
            raise ValueError(f"unknown precoder {self.precoder!r}")
        if self.pa_algo not in PA_ALGOS:
            raise ValueError(f"unknown pa_algo {self.pa_algo!r}")
        if self.detector not in DETECTORS:
            raise ValueError(f"unknown detector {self.detector!r}")
        if self.eff_model not in EFF_MODELS:
            raise ValueError(f"unknown eff_model {self.eff_model!r}")
        if self.mcs_table_id not in (1, 2):
            raise ValueError("mcs_table must be 1 or 2")
        if self.constraint not in ("tpc", "papc"):
            raise ValueError("constraint must be 'tpc' or 'papc'")
        if not 0.0 <= self.corr < 1.0:
            raise ValueError("corr must lie in [0, 1)")


@dataclass(frozen=True)
class RunRecord:
    seed: int
    snr_db: float
    algo: str
    se: float
    gain: float
    layer_sinr_db: tuple[float, ...]
    runtime_us: int


@dataclass(frozen=True)
class ScenarioResult:
    records: tuple[RunRecord, ...]
    errors: tuple[tuple[int, float, str], ...]  # (seed, snr_db, message)

    @property
    def ok(self) -> bool:
        return not self.errors


def _parse_int_list(value: str) -> tuple[int, ...]:
    return tuple(int(tok) for tok in value.split(","))


def parse_scenario(text: str) -> Scenario:
    """Parse the flat key = value scenario format."""
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ValueError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = (part.strip() for part in body.split("=", 1))
        if key in raw:
            raise ValueError(f"line {lineno}: duplicate key {key!r}")
        raw[key] = value

    known = {
        "T", "K", "R", "L", "corr", "snr_db", "seeds", "precoder", "lambda_reg",
        "pa_algo", "detector", "eff_model", "beta", "mcs_table", "constraint", "master_seed",
    }
    unknown = set(raw) - known
    if unknown:
        raise ValueError(f"unknown scenario keys: {sorted(unknown)}")
    required = {"T", "K", "R", "L", "snr_db", "seeds", "precoder", "pa_algo", "detector", "eff_model"}
    missing = required - set(raw)
    if missing:
        raise ValueError(f"missing scenario keys: {sorted(missing)}")

    K = int(raw["K"])
    R = _parse_int_list(raw["R"])
    L = _parse_int_list(raw["L"])
    if len(R) == 1:
        R = R * K
    if len(L) == 1:
        L = L * K
    if len(R) != K or len(L) != K:
        raise ValueError("R and L must list one value per user (or a single uniform value)")
    dims = SystemDims(T=int(raw["T"]), R_per_user=R, L_per_user=L)

    lam_raw = raw.get("lambda_reg", "auto").lower()
    lambda_reg = None if lam_raw == "auto" else float(lam_raw)
    return Scenario(
        dims=dims,
        corr=float(raw.get("corr", "0")),
        snr_db=tuple(float(tok) for tok in raw["snr_db"].split(",")),
        seeds=int(raw["seeds"]),
        precoder=raw["precoder"].lower(),
        lambda_reg=lambda_reg,
        pa_algo=raw["pa_algo"].lower(),
        detector=raw["detector"].lower(),
        eff_model=raw["eff_model"].lower(),
        beta=float(raw.get("beta", "1.6")),
        mcs_table_id=int(raw.get("mcs_table", "1")),
        constraint=raw.get("constraint", "tpc").lower(),
        master_seed=int(raw.get("master_seed", "0")),
    )


def load_scenario(path) -> Scenario:
    with open(path) as fh:
        return parse_scenario(fh.read())


def _precoder_kind(sc: Scenario, sigma2: float, P_total: float) -> PrecoderKind:
    lam = sc.lambda_reg if sc.lambda_reg is not None else sigma2 / P_total
    if sc.precoder == "mrt":
        return PrecoderKind.mrt()
    if sc.precoder == "zf":
        return PrecoderKind.zf()
    if sc.precoder == "rzf":
        return PrecoderKind.rzf(lam)
    return PrecoderKind.arzf(lam)


def _native_pa(pre, P_total: float, mode: str) -> PowerAllocation:
    # Unit powers rescaled so the active constraint binds exactly.
    if mode == "tpc":
        scale = P_total / float(np.sum(pre.col_norms**2))
    else:
        row_power = pre.row_sq.sum(axis=1)
        scale = (P_total / pre.T) / float(row_power.max())
    return PowerAllocation.from_p(pre, np.full(pre.L, scale))


def _eff_model(sc: Scenario, table: McsTable):
    if sc.eff_model == "geo":
        return GeometricMean()
    if sc.eff_model == "eesm_fixed":
        return EesmFixedBeta(sc.beta)
    return EesmTableDriven(table)


def _score(sc, dims, channels, svds, pre, pa, sigma2, model):
    W = apply_power(pre, pa)
    det = build_detection_set(
        sc.detector, dims, W, svds=svds, channels=channels, p=pa.p, lambda_reg=sigma2,
    )
    sinrs = layer_sinrs(W, channels, det, dims, sigma2)
    eff = np.array([effective_sinr(sinrs[dims.layer_slice(k)], model) for k in range(dims.K)])
    se = spectral_efficiency(eff, dims.L_per_user)
    with np.errstate(divide="ignore"):
        sinr_db = tuple(float(x) for x in to_db(sinrs))
    return se, sinr_db


def _allocate(sc, dims, pre, svds, channels, sigma2, P_total, mode, table):
    algo = sc.pa_algo
    if algo == "native":
        return _native_pa(pre, P_total, mode)
    if algo == "equal_tpc":
        return equal_pa_tpc(pre, P_total)
    if algo == "equal_papc_start":
        return equal_pa_papc_start(pre, P_total)
    if algo == "im_geo":
        return intersection_method_geo(pre, P_total)
    beta_source = sc.beta if sc.eff_model == "eesm_fixed" else table
    if algo == "im_eesm":
        start = equal_pa_papc_start(pre, P_total)
        det = build_detection_set(
            sc.detector, dims, apply_power(pre, start),
            svds=svds, channels=channels, p=start.p, lambda_reg=sigma2,
        )
        return intersection_method_eesm(pre, det, beta_source, sigma2, P_total, dims)
    if algo == "eesm_tpc":
        start = equal_pa_tpc(pre, P_total)
        det = build_detection_set(
            sc.detector, dims, apply_power(pre, start),
            svds=svds, channels=channels, p=start.p, lambda_reg=sigma2,
        )
        result = eesm_tpc_closed_form(pre, det, beta_source, sigma2, P_total, dims)
        # The closed form can leave weak layers nonpositive; the equal start
        # is the documented fallback.
        return result.pa if result.feasible else start
    if algo == "kkt_papc":
        return PowerAllocation.from_p(pre, papc_kkt_solve(pre, P_total).p)
    raise ValueError(f"unknown pa_algo {algo!r}")


def _run_cell(sc: Scenario, seed: int, snr_db: float, channels_override, table: McsTable, measure: bool):
    P_total = 1.0
    sigma2 = 10.0 ** (-snr_db / 10.0)
    dims = sc.dims
    if channels_override is not None:
        channels = channels_override
    elif sc.corr == 0.0:
        channels = generate_rayleigh(dims, (sc.master_seed, seed))
    else:
        channels = generate_correlated(dims, sc.corr, (sc.master_seed, seed))
    svds = [truncated_svd(H, dims.L_per_user[k]) for k, H in enumerate(channels)]
    decomp = stack_svds(svds)
    pre = build_precoder(_precoder_kind(sc, sigma2, P_total), decomp)
    mode = _ALGO_MODE.get(sc.pa_algo, sc.constraint)
    model = _eff_model(sc, table)
    kind_label = sc.precoder.upper()

    def timed(fn):
        if not measure:
            return fn(), 0
        t0 = time.perf_counter()
        out = fn()
        return out, int(round((time.perf_counter() - t0) * 1e6))

    baseline_pa = equal_pa_tpc(pre, P_total) if mode == "tpc" else equal_pa_papc_start(pre, P_total)
    (se_base, sinr_db_base), rt_base = timed(
        lambda: _score(sc, dims, channels, svds, pre, baseline_pa, sigma2, model)
    )

    def run_algo():
        pa = _allocate(sc, dims, pre, svds, channels, sigma2, P_total, mode, table)
        return _score(sc, dims, channels, svds, pre, pa, sigma2, model)

    (se, sinr_db), rt = timed(run_algo)
    gain = 0.0 if se == se_base else se / se_base - 1.0
    return [
        RunRecord(seed, snr_db, f"{kind_label} EQ", se_base, 0.0, sinr_db_base, rt_base),
        RunRecord(seed, snr_db, f"{kind_label} {_ALGO_LABEL[sc.pa_algo]}", se, gain, sinr_db, rt),
    ]


def run_scenario(
    sc: Scenario,
    channels: list[np.ndarray] | None = None,
    threads: int = 1,
    measure_runtime: bool = False,
) -> ScenarioResult:
    """Execute the scenario over its seed x SNR grid.

    Per-cell failures are collected, not raised, and the remaining cells
    still run.  Records come back sorted by (seed, snr_db, algo) so serial
    and threaded executions emit identical bytes.  When ``channels`` is
    given the generator is bypassed and every seed sees that channel set.
    """
    table = load_mcs_table(sc.mcs_table_id)
    cells = [(seed, snr) for seed in range(sc.seeds) for snr in sc.snr_db]

    def work(cell):
        seed, snr = cell
        try:
            return _run_cell(sc, seed, snr, channels, table, measure_runtime), None
        except Exception as exc:  # noqa: BLE001 - per-cell isolation is the contract
            return [], (seed, snr, f"{type(exc).__name__}: {exc}")

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(work, cells))
    else:
        outcomes = [work(c) for c in cells]

    records: list[RunRecord] = []
    errors = []
    for recs, err in outcomes:
        records.extend(recs)
        if err is not None:
            errors.append(err)
    records.sort(key=lambda r: (r.seed, r.snr_db, r.algo))
    errors.sort()
    return ScenarioResult(records=tuple(records), errors=tuple(errors))


def emit_results(records, fmt: str, path) -> None:
    """Write records as CSV or JSON with the fixed six-column schema.

    Floats are rendered with shortest round-trip precision, so equal inputs
    produce byte-identical files.
    """
    records = list(records)
    if not records:
        raise ValueError("no records to emit")
    if fmt == "csv":
        lines = ["seed,snr_db,algo,se,gain,runtime_us"]
        for r in records:
            lines.append(f"{r.seed},{r.snr_db!r},{r.algo},{r.se!r},{r.gain!r},{r.runtime_us}")
        payload = "\n".join(lines) + "\n"
    elif fmt == "json":
        payload = json.dumps(
            [
                {
                    "seed": r.seed,
                    "snr_db": r.snr_db,
                    "algo": r.algo,
                    "se": r.se,
                    "gain": r.gain,
                    "runtime_us": r.runtime_us,
                }
                for r in records
            ],
            indent=2,
        ) + "\n"
    else:
        raise ValueError(f"format must be 'csv' or 'json', got {fmt!r}")
    with open(path, "w") as fh:
        fh.write(payload)
