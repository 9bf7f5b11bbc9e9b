"""Link-quality metrics: per-layer SINR, effective SINR and spectral efficiency.

Two effective-SINR policies are supported.  The geometric mean is the
analytically convenient model used by the power-allocation theory; the
exponential (EESM) model is the physical-layer abstraction, parameterized by
a per-MCS ``beta`` so that the effective SINR and the selected MCS form a
fixed point.  MCS ``beta``/spectral-efficiency columns for the two standard
tables ship as a CSV data file and can be overridden from disk.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .channel import SystemDims
from .detection import DetectionSet

__all__ = [
    "NoiseModel",
    "McsTable",
    "GeometricMean",
    "EesmFixedBeta",
    "EesmTableDriven",
    "EffSinrModel",
    "FixedPointResult",
    "load_mcs_table",
    "to_db",
    "from_db",
    "per_layer_sinr",
    "layer_sinrs",
    "geo_mean_eff_sinr",
    "eesm_eff_sinr",
    "eesm_fixed_point",
    "mcs_select",
    "effective_sinr",
    "spectral_efficiency",
    "log_se_leading_term",
]

N_MCS = 28


@dataclass(frozen=True)
class NoiseModel:
    """Receiver noise variance and total transmit power budget."""

    sigma2: float
    P_total: float

    def __post_init__(self):
        if not (np.isfinite(self.sigma2) and self.sigma2 > 0):
            raise ValueError("sigma2 must be positive and finite")
        if not (np.isfinite(self.P_total) and self.P_total > 0):
            raise ValueError("P_total must be positive and finite")

    @property
    def noise_power_ratio(self) -> float:
        return self.sigma2 / self.P_total


@dataclass(frozen=True)
class McsTable:
    """``beta`` and spectral-efficiency columns for MCS indices 0..27."""

    table_id: int
    beta: np.ndarray
    se: np.ndarray

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=float)
        se = np.asarray(self.se, dtype=float)
        if beta.shape != (N_MCS,) or se.shape != (N_MCS,):
            raise ValueError(f"tables must have {N_MCS} entries")
        if np.any(np.diff(beta) <= 0) or np.any(np.diff(se) <= 0):
            raise ValueError("beta and se must be strictly increasing in MCS")
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "se", se)


def load_mcs_table(table_id: int, csv_path=None) -> McsTable:
    """Load MCS table 1 or 2 from the bundled CSV (or an override file).

    The CSV columns are ``mcs, beta1, beta2, se1, se2``.
    """
    if table_id not in (1, 2):
        raise ValueError("table_id must be 1 or 2")
    if csv_path is None:
        text = (resources.files("mimopa") / "data" / "mcs_tables.csv").read_text()
    else:
        with open(csv_path) as fh:
            text = fh.read()
    rows = list(csv.DictReader(text.splitlines()))
    if len(rows) != N_MCS:
        raise ValueError(f"expected {N_MCS} MCS rows, got {len(rows)}")
    beta = np.array([float(r[f"beta{table_id}"]) for r in rows])
    se = np.array([float(r[f"se{table_id}"]) for r in rows])
    return McsTable(table_id=table_id, beta=beta, se=se)


@dataclass(frozen=True)
class GeometricMean:
    """Average per-layer SINRs by their geometric mean."""


@dataclass(frozen=True)
class EesmFixedBeta:
    """Exponential averaging with one fixed beta."""

    beta: float

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("beta must be positive")


@dataclass(frozen=True)
class EesmTableDriven:
    """Exponential averaging with beta resolved through the MCS fixed point."""

    table: McsTable
    max_iters: int = 50
    tol: float = 1e-9

    def __post_init__(self):
        if self.max_iters < 1 or not self.tol > 0:
            raise ValueError("max_iters must be >= 1 and tol positive")


EffSinrModel = GeometricMean | EesmFixedBeta | EesmTableDriven


def to_db(x) -> np.ndarray | float:
    return 10.0 * np.log10(x)


def from_db(x_db) -> np.ndarray | float:
    return 10.0 ** (np.asarray(x_db, dtype=float) / 10.0)


def per_layer_sinr(W: np.ndarray, H_k: np.ndarray, g_l: np.ndarray, sigma2: float, layer: int) -> float:
    """SINR of one layer under detection row ``g_l``.

    Signal power is ``|g_l H_k w_layer|^2``; every other column of the full
    precoder, whichever user it belongs to, counts as interference on top of
    the noise floor ``sigma2 ||g_l||^2``.
    """
    coupling = g_l @ H_k @ W
    powers = np.abs(coupling) ** 2
    signal = powers[layer]
    noise = sigma2 * float(np.sum(np.abs(g_l) ** 2))
    return float(signal / (powers.sum() - signal + noise))


def layer_sinrs(
    W: np.ndarray,
    channels: list[np.ndarray],
    det: DetectionSet,
    dims: SystemDims,
    sigma2: float,
) -> np.ndarray:
    """All L per-layer SINRs of the system, in stacked layer order."""
    out = np.empty(dims.L_total)
    for k, H_k in enumerate(channels):
        sl = dims.layer_slice(k)
        G_k = det.blocks[k]
        for i, l in enumerate(range(sl.start, sl.stop)):
            out[l] = per_layer_sinr(W, H_k, G_k[i], sigma2, l)
    return out


def geo_mean_eff_sinr(layer_sinrs: np.ndarray) -> float:
    """Geometric mean of the per-layer SINRs (0 if any layer is dead)."""
    s = np.asarray(layer_sinrs, dtype=float)
    if np.any(s < 0):
        raise ValueError("SINRs must be nonnegative")
    if np.any(s == 0):
        return 0.0
    return float(np.exp(np.mean(np.log(s))))


def eesm_eff_sinr(layer_sinrs: np.ndarray, beta: float) -> float:
    """Exponential effective SINR ``-beta ln(mean(exp(-SINR_l / beta)))``.

    Evaluated with a max-shift so large SINR/beta ratios cannot underflow to
    a wrong zero.
    """
    if not beta > 0:
        raise ValueError("beta must be positive")
    t = np.asarray(layer_sinrs, dtype=float) / beta
    t_min = t.min()
    return float(beta * (t_min - np.log(np.mean(np.exp(-(t - t_min))))))


def mcs_select(eff_sinr_db: float, table: McsTable) -> int:
    """Largest MCS whose spectral efficiency fits under Shannon capacity.

    Maps the effective SINR (dB) to ``log2(1 + sinr)`` and picks the largest
    index with ``se[m]`` below it, clamped to [0, 27].  Monotone
    nondecreasing in the input; deeply negative inputs pin to MCS 0 and
    anything past the table ceiling pins to 27.
    """
    cap = np.log2(1.0 + from_db(eff_sinr_db))
    idx = int(np.searchsorted(table.se, cap, side="right")) - 1
    return min(max(idx, 0), N_MCS - 1)


@dataclass(frozen=True)
class FixedPointResult:
    eff_sinr: float
    mcs: int
    beta: float
    converged: bool
    iterations: int


def eesm_fixed_point(
    layer_sinrs: np.ndarray,
    table: McsTable,
    max_iters: int = 50,
    tol: float = 1e-9,
    init_eff: float | None = None,
) -> FixedPointResult:
    """Resolve the self-consistent (effective SINR, MCS, beta) triple.

    Simple iteration seeded with the geometric mean (or ``init_eff`` when
    given): map the current effective SINR to an MCS, look up that MCS's
    beta, recompute the exponential average, and stop once the MCS index is
    stable.  When the iteration alternates between two adjacent indices the
    lower one is kept (conservative tie-break) and the result is flagged as
    not converged.  ``tol`` additionally stops on tiny effective-SINR
    changes.
    """
    s = np.asarray(layer_sinrs, dtype=float)
    eff = geo_mean_eff_sinr(s) if init_eff is None else float(init_eff)
    mcs = mcs_select(to_db(eff) if eff > 0 else -np.inf, table)
    prev_mcs = None
    for it in range(1, max_iters + 1):
        beta = float(table.beta[mcs])
        new_eff = eesm_eff_sinr(s, beta)
        new_mcs = mcs_select(to_db(new_eff) if new_eff > 0 else -np.inf, table)
        if new_mcs == mcs or abs(new_eff - eff) <= tol * max(1.0, abs(eff)):
            return FixedPointResult(new_eff, mcs, beta, True, it)
        if prev_mcs is not None and new_mcs == prev_mcs:
            # Two-cycle between adjacent indices: keep the lower one.
            low = min(mcs, new_mcs)
            beta = float(table.beta[low])
            return FixedPointResult(eesm_eff_sinr(s, beta), low, beta, False, it)
        prev_mcs, mcs, eff = mcs, new_mcs, new_eff
    beta = float(table.beta[mcs])
    return FixedPointResult(eesm_eff_sinr(s, beta), mcs, beta, False, max_iters)


def effective_sinr(layer_sinrs: np.ndarray, model: EffSinrModel) -> float:
    """Collapse one user's per-layer SINRs under the chosen policy."""
    if isinstance(model, GeometricMean):
        return geo_mean_eff_sinr(layer_sinrs)
    if isinstance(model, EesmFixedBeta):
        return eesm_eff_sinr(layer_sinrs, model.beta)
    if isinstance(model, EesmTableDriven):
        return eesm_fixed_point(layer_sinrs, model.table, model.max_iters, model.tol).eff_sinr
    raise TypeError(f"unknown effective-SINR model {model!r}")


def spectral_efficiency(eff_sinrs: np.ndarray, L_per_user) -> float:
    """Sum spectral efficiency ``sum_k L_k log2(1 + eff_k)`` in bit/s/Hz."""
    eff = np.asarray(eff_sinrs, dtype=float)
    L = np.asarray(L_per_user, dtype=float)
    if eff.shape != L.shape:
        raise ValueError("one effective SINR per user required")
    if np.any(eff < 0):
        raise ValueError("effective SINRs must be nonnegative")
    return float(np.sum(L * np.log2(1.0 + eff)))


def log_se_leading_term(layer_sinrs: np.ndarray) -> float:
    """High-SINR surrogate ``sum_l log2(SINR_l)`` the PA solvers maximize."""
    s = np.asarray(layer_sinrs, dtype=float)
    if np.any(s <= 0):
        raise ValueError("leading term undefined for zero SINR")
    return float(np.sum(np.log2(s)))
