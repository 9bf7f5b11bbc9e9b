"""Power-allocation solvers for total and per-antenna power budgets.

Four families of solutions:

* equal allocation under the total power constraint (each layer gets the
  same air energy ``rho_l = P/L``), which maximizes the product of layer
  powers on the budget simplex;
* a closed form for the EESM objective under the total budget, with the
  per-user beta frozen at the equal-allocation starting point;
* an exact KKT solver for ``max sum(log p)`` under per-antenna budgets,
  enumerating candidate active sets of binding antennas;
* two fast heuristics ("intersection methods") that start from the scaled
  equal allocation, jump to the optimum on the binding antenna's constraint
  hyperplane, and if that jump lands outside the feasible set walk the
  connecting ray back to the first crossing with another antenna's
  hyperplane.

All functions work on the cached column norms and the per-antenna
``row_sq`` matrix of a :class:`~mimopa.precoding.Precoder`, never on the
channel itself.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .channel import SystemDims
from .detection import DetectionSet
from .metrics import McsTable, eesm_fixed_point
from .precoding import Precoder, PowerAllocation

__all__ = [
    "PowerConstraint",
    "KktSolution",
    "EesmPaContext",
    "EesmPaResult",
    "equal_pa_tpc",
    "equal_pa_papc_start",
    "eesm_tpc_closed_form",
    "eesm_lagrangian_gradient",
    "papc_kkt_solve",
    "intersection_method_geo",
    "intersection_method_eesm",
]


@dataclass(frozen=True)
class PowerConstraint:
    """Power budget: mode "tpc" (total) or "papc" (per antenna, P/T each)."""

    mode: str
    P_total: float
    T: int

    def __post_init__(self):
        if self.mode not in ("tpc", "papc"):
            raise ValueError(f"mode must be 'tpc' or 'papc', got {self.mode!r}")
        if not self.P_total > 0 or not self.T > 0:
            raise ValueError("P_total and T must be positive")


@dataclass(frozen=True)
class KktSolution:
    """Certified stationary point of ``max sum(log p)`` under row budgets.

    ``multipliers`` holds one Lagrange multiplier per antenna (zero off the
    active set); ``residuals`` reports the worst stationarity,
    complementarity and primal-feasibility defects of the returned point.
    ``n_certified`` counts how many candidate active sets produced a valid
    KKT point (they all coincide at the optimum of this concave problem).
    """

    p: np.ndarray
    multipliers: np.ndarray
    active_set: tuple[int, ...]
    residuals: dict
    objective: float
    n_certified: int


@dataclass(frozen=True)
class EesmPaContext:
    """Intermediate quantities of the EESM closed form.

    ``beta_k`` is the frozen per-user beta, ``g_norms`` the squared
    detection row norms, ``f`` the per-layer log-imbalance term, ``x`` the
    exponentiated power variables and ``X`` their per-user means.
    """

    beta_k: np.ndarray
    g_norms: np.ndarray
    f: np.ndarray
    x: np.ndarray
    X: np.ndarray


@dataclass(frozen=True)
class EesmPaResult:
    """Closed-form output plus feasibility flag.

    ``p_raw`` always carries the formula value; ``pa`` is populated only
    when every component is positive.  Callers that cannot use an
    infeasible point (the intersection heuristic) fall back to their
    starting point.
    """

    p_raw: np.ndarray
    feasible: bool
    pa: PowerAllocation | None
    context: EesmPaContext
    multiplier: float


def equal_pa_tpc(pre: Precoder, P_total: float) -> PowerAllocation:
    """Equal air energy per layer: ``rho_l = P/L``, meeting TPC exactly."""
    if not P_total > 0:
        raise ValueError("P_total must be positive")
    sq = pre.col_norms**2
    if np.any(sq <= 0):
        raise ValueError("zero-norm precoder column")
    rho = np.full(pre.L, P_total / pre.L)
    return PowerAllocation(p=rho / sq, rho=rho)


def _papc_start(pre: Precoder, P_total: float) -> tuple[np.ndarray, int, float]:
    """Equal-rho point scaled so the worst antenna exactly meets P/T.

    Returns the scaled powers, the binding antenna index (ties break to the
    lowest index) and the per-antenna budget.
    """
    budget = P_total / pre.T
    sq = pre.col_norms**2
    if np.any(sq <= 0):
        raise ValueError("zero-norm precoder column")
    p_raw = budget / sq
    row_power = pre.row_sq @ p_raw
    i = int(np.argmax(row_power))
    return p_raw * (budget / row_power[i]), i, budget


def equal_pa_papc_start(pre: Precoder, P_total: float) -> PowerAllocation:
    """Equal-rho allocation rescaled so the busiest antenna meets P/T."""
    p, _, _ = _papc_start(pre, P_total)
    return PowerAllocation.from_p(pre, p)


# ---------------------------------------------------------------------------
# EESM closed forms
# ---------------------------------------------------------------------------


def _freeze_betas(beta_or_table, p_start: np.ndarray, g_sq: np.ndarray, sigma2: float, dims: SystemDims) -> np.ndarray:
    """Per-user beta, either given directly or resolved at the start point.

    Table-driven betas run the MCS fixed point on the interference-free
    model SINRs ``p_l / (sigma2 ||g_l||^2)`` evaluated at ``p_start``.
    """
    if isinstance(beta_or_table, McsTable):
        betas = np.empty(dims.K)
        for k in range(dims.K):
            sl = dims.layer_slice(k)
            sinrs = p_start[sl] / (sigma2 * g_sq[sl])
            betas[k] = eesm_fixed_point(sinrs, beta_or_table).beta
        return betas
    beta = float(beta_or_table)
    if not beta > 0:
        raise ValueError("beta must be positive")
    return np.full(dims.K, beta)


def _eesm_closed_form(
    weights: np.ndarray,
    budget: float,
    g_sq: np.ndarray,
    sigma2: float,
    betas: np.ndarray,
    dims: SystemDims,
) -> tuple[np.ndarray, EesmPaContext, float]:
    """Stationary point of the frozen-beta EESM objective on one hyperplane.

    Solves ``max sum_k L_k ln(1 - beta_k ln X_k)`` subject to
    ``sum_l weights_l p_l = budget`` with ``X_k`` the per-user mean of
    ``x_l = exp(-p_l / (beta_k sigma2 ||g_l||^2))``.  The same expression
    covers the total-power budget (weights are squared column norms) and a
    single antenna's budget (weights are that antenna's ``|w'_tl|^2`` row).
    Returns the raw powers, the context and the multiplier; components of
    ``p`` may come out nonpositive, which callers must treat as infeasible.
    """
    L = dims.L_total
    gamma = sigma2 * g_sq
    if np.any(gamma <= 0):
        raise ValueError("degenerate detection row norms")
    if np.any(weights <= 0):
        raise ValueError("weights must be strictly positive")
    owner = dims.layer_owner()
    beta_l = betas[owner]
    gw = gamma * weights
    user_mean = np.array([gw[dims.layer_slice(k)].mean() for k in range(dims.K)])
    f = beta_l * np.log(gw / user_mean[owner]) + 1.0
    inv_lambda = (budget + np.sum(weights * gamma * f)) / L
    p = gamma * (inv_lambda / user_mean[owner] - f)
    x = np.exp(-p / (beta_l * gamma))
    X = np.array([x[dims.layer_slice(k)].mean() for k in range(dims.K)])
    ctx = EesmPaContext(beta_k=np.asarray(betas, dtype=float), g_norms=g_sq, f=f, x=x, X=X)
    return p, ctx, 1.0 / inv_lambda


def eesm_tpc_closed_form(
    pre: Precoder,
    det: DetectionSet,
    beta_or_table,
    sigma2: float,
    P_total: float,
    dims: SystemDims,
) -> EesmPaResult:
    """Closed-form EESM allocation under the total power budget.

    Betas are frozen at the equal-allocation starting point (pass a float
    to pin them explicitly, or an :class:`~mimopa.metrics.McsTable` for the
    fixed-point lookup).  A result with any nonpositive power is flagged
    infeasible rather than clipped.
    """
    g_sq = det.row_norms_sq()
    p_start = equal_pa_tpc(pre, P_total).p
    betas = _freeze_betas(beta_or_table, p_start, g_sq, sigma2, dims)
    weights = pre.col_norms**2
    p, ctx, lam = _eesm_closed_form(weights, P_total, g_sq, sigma2, betas, dims)
    feasible = bool(np.all(p > 0))
    pa = PowerAllocation.from_p(pre, p) if feasible else None
    return EesmPaResult(p_raw=p, feasible=feasible, pa=pa, context=ctx, multiplier=lam)


def eesm_lagrangian_gradient(
    p: np.ndarray,
    lam_weights: np.ndarray,
    g_sq: np.ndarray,
    sigma2: float,
    betas: np.ndarray,
    dims: SystemDims,
) -> np.ndarray:
    """Analytic gradient of the frozen-beta EESM Lagrangian.

    ``lam_weights[l]`` is the multiplier-weighted constraint coefficient of
    layer l (``lambda * ||w'_l||^2`` under TPC, ``sum_t lambda_t |w'_tl|^2``
    under per-antenna budgets).  Vanishes at the closed-form solutions.
    """
    p = np.asarray(p, dtype=float)
    gamma = sigma2 * np.asarray(g_sq, dtype=float)
    owner = dims.layer_owner()
    beta_l = np.asarray(betas, dtype=float)[owner]
    x = np.exp(-p / (beta_l * gamma))
    X = np.array([x[dims.layer_slice(k)].mean() for k in range(dims.K)])
    X_l = X[owner]
    denom = (1.0 - beta_l * np.log(X_l)) * X_l
    return -x / (gamma * denom) + np.asarray(lam_weights, dtype=float)


# ---------------------------------------------------------------------------
# Exact KKT solver under per-antenna budgets
# ---------------------------------------------------------------------------

_STATIONARITY_TOL = 1e-8
_COMPLEMENTARITY_TOL = 1e-8
_FEASIBILITY_TOL = 1e-9
_MULTIPLIER_FLOOR = -1e-10


def _candidate_from_active(A: np.ndarray, active: tuple[int, ...], budget: float) -> tuple[np.ndarray, np.ndarray] | None:
    """Solve the KKT system assuming exactly ``active`` antennas bind.

    Returns ``(p, lam_active)`` or None when the case has no valid solution.
    With m = 1 the powers follow in closed form; with m = L the binding rows
    give a square linear system; in between the multipliers solve the
    nonlinear system ``A' (1 / (A'^T lam)) = budget`` by damped Newton.
    """
    m = len(active)
    L = A.shape[1]
    sub = A[list(active)]
    if m == 1:
        row = sub[0]
        if np.any(row <= 0):
            return None
        p = budget / (L * row)
        return p, np.array([L / budget])
    if m == L:
        try:
            p = np.linalg.solve(sub, np.full(L, budget))
        except np.linalg.LinAlgError:
            return None
        if np.any(p <= 0):
            return None
        try:
            lam = np.linalg.solve(sub.T, 1.0 / p)
        except np.linalg.LinAlgError:
            return None
        return p, lam
    # 1 < m < L: Newton on the active multipliers; p = 1 / (A'^T lam) keeps
    # the stationarity equations satisfied by construction.
    lam = None
    p_ls, *_ = np.linalg.lstsq(sub, np.full(m, budget), rcond=None)
    if np.all(p_ls > 0):
        lam_ls, *_ = np.linalg.lstsq(sub.T, 1.0 / p_ls, rcond=None)
        if np.all(lam_ls > 0):
            lam = lam_ls
    if lam is None:
        lam = np.full(m, L / (m * budget))

    def resid(lam_vec):
        s = sub.T @ lam_vec
        if np.any(s <= 0):
            return None, None
        p_vec = 1.0 / s
        return sub @ p_vec - budget, p_vec

    F, p = resid(lam)
    if F is None:
        return None
    target = 1e-11 * budget * math.sqrt(m)
    for _ in range(100):
        if np.linalg.norm(F) <= target:
            break
        J = -sub @ ((p**2)[:, None] * sub.T)
        try:
            delta = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError:
            return None
        step = 1.0
        while step > 2**-30:
            F_new, p_new = resid(lam + step * delta)
            if F_new is not None and np.linalg.norm(F_new) < np.linalg.norm(F):
                lam, F, p = lam + step * delta, F_new, p_new
                break
            step *= 0.5
        else:
            return None
    if np.linalg.norm(F) > target:
        return None
    return p, lam


def papc_kkt_solve(
    pre: Precoder,
    P_total: float,
    max_subsets: int = 10_000,
) -> KktSolution:
    """Maximize ``sum(log p_l)`` under per-antenna budgets by KKT enumeration.

    Candidate active sets are visited by increasing size and lexicographic
    order within each size; sets larger than L are skipped (their binding
    equations are overdetermined).  Each candidate is certified against the
    full first-order system: stationarity ``p_l (A^T lam)_l = 1``,
    nonnegative multipliers, primal feasibility and complementary
    slackness.  The certified point with the largest objective is returned
    (first one encountered on ties).  Raises when the subset count exceeds
    ``max_subsets`` or no candidate certifies.
    """
    if not P_total > 0:
        raise ValueError("P_total must be positive")
    A = pre.row_sq
    T, L = A.shape
    budget = P_total / T
    total_subsets = sum(math.comb(T, m) for m in range(1, min(L, T) + 1))
    if total_subsets > max_subsets:
        raise ValueError(
            f"enumeration budget exceeded: {total_subsets} candidate active sets, limit {max_subsets}"
        )
    best = None
    n_certified = 0
    for m in range(1, min(L, T) + 1):
        for active in itertools.combinations(range(T), m):
            out = _candidate_from_active(A, active, budget)
            if out is None:
                continue
            p, lam_active = out
            if np.any(~np.isfinite(p)) or np.any(p <= 0):
                continue
            if np.any(lam_active < _MULTIPLIER_FLOOR):
                continue
            lam = np.zeros(T)
            lam[list(active)] = lam_active
            row_power = A @ p
            if np.any(row_power > budget * (1.0 + _FEASIBILITY_TOL)):
                continue
            stationarity = float(np.max(np.abs(p * (A.T @ lam) - 1.0)))
            complementarity = float(np.max(np.abs(lam * (row_power - budget))))
            if stationarity > _STATIONARITY_TOL or complementarity > _COMPLEMENTARITY_TOL:
                continue
            n_certified += 1
            objective = float(np.sum(np.log(p)))
            if best is None or objective > best.objective:
                feasibility = float(max(0.0, np.max(row_power - budget) / budget))
                best = KktSolution(
                    p=p,
                    multipliers=lam,
                    active_set=active,
                    residuals={
                        "stationarity": stationarity,
                        "complementarity": complementarity,
                        "feasibility": feasibility,
                    },
                    objective=objective,
                    n_certified=0,
                )
    if best is None:
        raise ValueError("no feasible KKT candidate found")
    return KktSolution(
        p=best.p,
        multipliers=best.multipliers,
        active_set=best.active_set,
        residuals=best.residuals,
        objective=best.objective,
        n_certified=n_certified,
    )


# ---------------------------------------------------------------------------
# Intersection heuristics
# ---------------------------------------------------------------------------


def _walk_ray(pre: Precoder, p1: np.ndarray, p2: np.ndarray, i: int, budget: float) -> np.ndarray:
    """First crossing of the segment p1 -> p2 with a non-selected hyperplane.

    Both endpoints sit on antenna i's budget hyperplane, so the whole
    segment does; the first other antenna whose power grows to its budget
    caps the step.  Without such a crossing the far endpoint p2 is already
    feasible and is returned.
    """
    A = pre.row_sq
    d = p2 - p1
    start = A @ p1
    growth = A @ d
    floor = 1e-14 * max(1.0, float(np.abs(growth).max()))
    alpha_best = None
    for t in range(pre.T):
        if t == i or growth[t] <= floor:
            continue
        alpha = (budget - start[t]) / growth[t]
        if alpha <= 1.0 + 1e-12:
            alpha = max(alpha, 0.0)
            if alpha_best is None or alpha < alpha_best:
                alpha_best = alpha
    if alpha_best is None:
        return p2
    return p1 + alpha_best * d


def intersection_method_geo(pre: Precoder, P_total: float) -> PowerAllocation:
    """Intersection heuristic for the product-of-powers objective.

    Point 1 is the scaled equal-rho start on the binding antenna's
    hyperplane; Point 2 the closed-form optimum of ``sum(log p)`` on that
    hyperplane; Point 3 the first crossing of the connecting ray with
    another antenna's budget when Point 2 is infeasible.  The output always
    satisfies the per-antenna constraints.
    """
    p1, i, budget = _papc_start(pre, P_total)
    a_i = pre.row_sq[i]
    if np.any(a_i <= 1e-15 * a_i.max()):
        # A dead entry on the binding row makes Point 2 blow up; keep Point 1.
        return PowerAllocation.from_p(pre, p1)
    p2 = budget / (pre.L * a_i)
    return PowerAllocation.from_p(pre, _walk_ray(pre, p1, p2, i, budget))


def intersection_method_eesm(
    pre: Precoder,
    det: DetectionSet,
    beta_or_table,
    sigma2: float,
    P_total: float,
    dims: SystemDims,
) -> PowerAllocation:
    """Intersection heuristic for the frozen-beta EESM objective.

    Same ray geometry as :func:`intersection_method_geo`, but Point 2 comes
    from the EESM closed form on the binding antenna's hyperplane, with the
    per-user betas frozen at Point 1 (via the MCS fixed point when a table
    is given).  Whenever the closed form returns a nonpositive component
    the heuristic falls back to Point 1, which is always feasible.
    """
    p1, i, budget = _papc_start(pre, P_total)
    a_i = pre.row_sq[i]
    if np.any(a_i <= 1e-15 * a_i.max()):
        return PowerAllocation.from_p(pre, p1)
    g_sq = det.row_norms_sq()
    betas = _freeze_betas(beta_or_table, p1, g_sq, sigma2, dims)
    p2, _, _ = _eesm_closed_form(a_i, budget, g_sq, sigma2, betas, dims)
    if np.any(p2 <= 0):
        return PowerAllocation.from_p(pre, p1)
    return PowerAllocation.from_p(pre, _walk_ray(pre, p1, p2, i, budget))
