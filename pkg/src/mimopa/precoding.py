"""Linear precoders built from stacked right singular vectors.

Every precoder here factors as ``W = W' P``: a shape matrix ``W'`` computed
from the stacked singular-vector matrix ``V`` (and, for ARZF, the singular
values), and a diagonal power matrix ``P = diag(sqrt(p))`` applied
afterwards.  The :class:`Precoder` wrapper caches the column norms and the
per-antenna magnitude-squared table that the power-allocation solvers
consume, and :func:`check_constraints` validates both the total and the
per-antenna power budgets.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .channel import StackedDecomposition

__all__ = [
    "PrecoderKind",
    "Precoder",
    "PowerAllocation",
    "ConstraintReport",
    "build_precoder",
    "apply_power",
    "check_constraints",
]

_MAX_ZF_COND = 1e12


@dataclass(frozen=True)
class PrecoderKind:
    """Precoder family plus its regularization weight (where applicable)."""

    name: str  # "mrt" | "zf" | "rzf" | "arzf"
    lambda_reg: float = 0.0

    def __post_init__(self):
        if self.name not in ("mrt", "zf", "rzf", "arzf"):
            raise ValueError(f"unknown precoder kind {self.name!r}")
        if not np.isfinite(self.lambda_reg) or self.lambda_reg < 0:
            raise ValueError("lambda_reg must be finite and nonnegative")

    @classmethod
    def mrt(cls) -> "PrecoderKind":
        return cls("mrt")

    @classmethod
    def zf(cls) -> "PrecoderKind":
        return cls("zf")

    @classmethod
    def rzf(cls, lambda_reg: float) -> "PrecoderKind":
        return cls("rzf", lambda_reg)

    @classmethod
    def arzf(cls, lambda_reg: float) -> "PrecoderKind":
        return cls("arzf", lambda_reg)


@dataclass(frozen=True)
class Precoder:
    """Unnormalized precoding matrix ``W'`` (T x L) with norm caches.

    ``col_norms[l]`` is the Euclidean norm of column l and ``row_sq`` the
    T x L table of entrywise magnitudes squared, i.e. ``row_sq @ p`` gives
    the per-antenna transmit power for layer powers ``p``.
    """

    Wp: np.ndarray
    col_norms: np.ndarray = field(init=False)
    row_sq: np.ndarray = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "col_norms", np.linalg.norm(self.Wp, axis=0))
        object.__setattr__(self, "row_sq", np.abs(self.Wp) ** 2)

    @property
    def T(self) -> int:
        return int(self.Wp.shape[0])

    @property
    def L(self) -> int:
        return int(self.Wp.shape[1])


@dataclass(frozen=True)
class PowerAllocation:
    """Per-layer powers in both coordinate systems.

    ``p[l]`` scales layer l's column (``W = W' diag(sqrt(p))``) while
    ``rho[l] = p[l] * ||w'_l||^2`` is the transmit energy that layer puts on
    the air.  Both vectors are stored to keep constraint checks and solver
    hand-offs cheap.
    """

    p: np.ndarray
    rho: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        rho = np.asarray(self.rho, dtype=float)
        if p.shape != rho.shape or p.ndim != 1:
            raise ValueError("p and rho must be 1-D with matching shapes")
        if np.any(p < 0) or np.any(rho < 0):
            raise ValueError("powers must be nonnegative")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "rho", rho)

    @classmethod
    def from_p(cls, pre: Precoder, p: np.ndarray) -> "PowerAllocation":
        p = np.asarray(p, dtype=float)
        return cls(p=p, rho=p * pre.col_norms**2)

    @classmethod
    def from_rho(cls, pre: Precoder, rho: np.ndarray) -> "PowerAllocation":
        rho = np.asarray(rho, dtype=float)
        sq = pre.col_norms**2
        if np.any(sq <= 0):
            raise ValueError("zero-norm precoder column")
        return cls(p=rho / sq, rho=rho)

    @property
    def total(self) -> float:
        return float(self.rho.sum())


def _solve_hermitian(M: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Solve M X = B for Hermitian positive definite M, with jitter fallback."""
    try:
        return cho_solve(cho_factor(M, lower=True), B)
    except np.linalg.LinAlgError:
        jitter = 1e-12 * np.trace(M).real / M.shape[0]
        return cho_solve(cho_factor(M + jitter * np.eye(M.shape[0]), lower=True), B)


def build_precoder(kind: PrecoderKind, decomp: StackedDecomposition) -> Precoder:
    """Construct the unnormalized precoder ``W'`` for the requested family.

    MRT is the plain conjugate ``V^H``; ZF the pseudo-inverse
    ``V^H (V V^H)^{-1}``; RZF regularizes the Gram matrix with
    ``lambda_reg * I`` and ARZF with ``lambda_reg * diag(S)^{-2}``, which
    damps weak layers harder.  Power comes later via :func:`apply_power`.
    """
    V = decomp.V
    if kind.name == "mrt":
        return Precoder(Wp=V.conj().T.copy())
    gram = V @ V.conj().T
    if kind.name == "zf":
        if np.linalg.cond(gram) >= _MAX_ZF_COND:
            raise ValueError("V V^H is numerically singular; ZF undefined")
        M = gram
    elif kind.name == "rzf":
        M = gram + kind.lambda_reg * np.eye(gram.shape[0])
    elif kind.name == "arzf":
        if np.any(decomp.S <= 0):
            raise ValueError("ARZF requires strictly positive singular values")
        M = gram + kind.lambda_reg * np.diag(decomp.S**-2.0)
    else:  # pragma: no cover - kind is validated at construction
        raise AssertionError(kind.name)
    # W' = V^H M^{-1} = (M^{-1} V)^H since M is Hermitian.
    return Precoder(Wp=_solve_hermitian(M, V).conj().T)


def apply_power(pre: Precoder, pa: PowerAllocation) -> np.ndarray:
    """Scale each column of ``W'`` by sqrt(p_l), returning the final W."""
    if pa.p.shape[0] != pre.L:
        raise ValueError(f"expected {pre.L} layer powers, got {pa.p.shape[0]}")
    if np.any(pa.p < 0):
        raise ValueError("negative layer power")
    return pre.Wp * np.sqrt(pa.p)[None, :]


@dataclass(frozen=True)
class ConstraintReport:
    """Outcome of a power-constraint check.

    ``violations`` lists ``(index, power, budget)`` per offending row; for
    the total-power mode a single pseudo-row with index -1 is used.
    """

    ok: bool
    mode: str
    budget: float
    worst: float
    violations: tuple[tuple[int, float, float], ...]

    def __bool__(self) -> bool:
        return self.ok


def check_constraints(W: np.ndarray, P_total: float, mode: str, tol: float = 1e-9) -> ConstraintReport:
    """Check ``W`` against the total ("tpc") or per-antenna ("papc") budget.

    TPC requires ``||W||_F^2 <= P (1 + tol)``; PAPC requires every row to
    carry at most ``P/T (1 + tol)``.
    """
    if mode not in ("tpc", "papc"):
        raise ValueError(f"mode must be 'tpc' or 'papc', got {mode!r}")
    if mode == "tpc":
        total = float(np.sum(np.abs(W) ** 2))
        ok = total <= P_total * (1.0 + tol)
        violations = () if ok else ((-1, total, P_total),)
        return ConstraintReport(ok=ok, mode=mode, budget=P_total, worst=total, violations=violations)
    T = W.shape[0]
    budget = P_total / T
    row_power = np.sum(np.abs(W) ** 2, axis=1)
    bad = np.flatnonzero(row_power > budget * (1.0 + tol))
    return ConstraintReport(
        ok=bad.size == 0,
        mode=mode,
        budget=budget,
        worst=float(row_power.max()) if T else 0.0,
        violations=tuple((int(t), float(row_power[t]), budget) for t in bad),
    )
