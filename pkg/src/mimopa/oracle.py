"""Brute-force verification tools: grid search, finite differences, and
straight-line re-implementations of the quality metrics.

Everything here exists to check the closed-form solvers from the outside.
The SINR / effective-SINR / spectral-efficiency evaluators are deliberately
written again from their defining formulas, with plain loops and no
numerical stabilization tricks, and must never call into
:mod:`mimopa.metrics` or :mod:`mimopa.power_allocation`: an oracle that
shares code with the thing it certifies certifies nothing.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = [
    "GridSpec",
    "grid_maximize",
    "finite_diff_gradient",
    "direct_layer_sinr",
    "direct_geo_eff_sinr",
    "direct_eesm_eff_sinr",
    "direct_spectral_efficiency",
    "eesm_model_se",
    "eesm_model_lagrangian",
]


@dataclass(frozen=True)
class GridSpec:
    """Axis-aligned evaluation grid: per-dimension bounds and step counts."""

    lower: tuple[float, ...]
    upper: tuple[float, ...]
    steps: tuple[int, ...]

    def __post_init__(self):
        lower = tuple(float(x) for x in self.lower)
        upper = tuple(float(x) for x in self.upper)
        steps = tuple(int(n) for n in self.steps)
        if not len(lower) == len(upper) == len(steps) or not lower:
            raise ValueError("lower, upper and steps must be nonempty and equal length")
        for lo, hi, n in zip(lower, upper, steps):
            if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
                raise ValueError("bounds must be finite with lower < upper")
            if n < 2:
                raise ValueError("need at least 2 steps per dimension")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "steps", steps)

    @property
    def dims(self) -> int:
        return len(self.lower)

    def axes(self) -> list[np.ndarray]:
        return [np.linspace(lo, hi, n) for lo, hi, n in zip(self.lower, self.upper, self.steps)]

    def cell(self) -> np.ndarray:
        """Grid spacing per dimension."""
        return np.array([(hi - lo) / (n - 1) for lo, hi, n in zip(self.lower, self.upper, self.steps)])


def grid_maximize(
    objective: Callable,
    feasible: Callable,
    spec: GridSpec,
    batch: bool = False,
) -> tuple[np.ndarray, float]:
    """Exhaustively maximize ``objective`` over the feasible grid points.

    Points are visited in lexicographic order and exact value ties resolve
    to the earliest (lexicographically smallest) point, so the result is
    deterministic.  With ``batch=True`` both callables receive an (N, dims)
    array and must return length-N arrays, which is vastly faster for
    vectorizable objectives.  Raises ``ValueError`` when no grid point is
    feasible.
    """
    axes = spec.axes()
    if batch:
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([m.reshape(-1) for m in mesh], axis=1)
        mask = np.asarray(feasible(pts), dtype=bool)
        if not mask.any():
            raise ValueError("no feasible grid point")
        vals = np.asarray(objective(pts[mask]), dtype=float)
        best = int(np.argmax(vals))
        idx = np.flatnonzero(mask)[best]
        return pts[idx].copy(), float(vals[best])
    best_pt, best_val = None, -math.inf
    for combo in itertools.product(*axes):
        pt = np.array(combo)
        if not feasible(pt):
            continue
        val = float(objective(pt))
        if val > best_val:
            best_pt, best_val = pt, val
    if best_pt is None:
        raise ValueError("no feasible grid point")
    return best_pt, best_val


def finite_diff_gradient(objective: Callable, point: np.ndarray, h: float) -> np.ndarray:
    """Central-difference gradient of ``objective`` at ``point``."""
    point = np.asarray(point, dtype=float)
    if not h > 0:
        raise ValueError("h must be positive")
    grad = np.empty_like(point)
    for i in range(point.size):
        lo, hi = point.copy(), point.copy()
        lo[i] -= h
        hi[i] += h
        f_lo, f_hi = float(objective(lo)), float(objective(hi))
        if not (math.isfinite(f_lo) and math.isfinite(f_hi)):
            raise ValueError(f"objective non-finite in stencil at coordinate {i}")
        grad[i] = (f_hi - f_lo) / (2.0 * h)
    return grad


# ---------------------------------------------------------------------------
# Direct metric evaluations (independent second route)
# ---------------------------------------------------------------------------


def direct_layer_sinr(W, H_k, g_l, sigma2, layer) -> float:
    """Per-layer SINR evaluated term by term from its definition."""
    row = np.asarray(g_l) @ np.asarray(H_k)
    signal = abs(row @ W[:, layer]) ** 2
    interference = 0.0
    for i in range(W.shape[1]):
        if i != layer:
            interference += abs(row @ W[:, i]) ** 2
    noise = sigma2 * sum(abs(x) ** 2 for x in np.asarray(g_l))
    return signal / (interference + noise)


def direct_geo_eff_sinr(sinrs) -> float:
    prod = 1.0
    for s in sinrs:
        prod *= s
    return prod ** (1.0 / len(sinrs))


def direct_eesm_eff_sinr(sinrs, beta) -> float:
    acc = sum(math.exp(-s / beta) for s in sinrs) / len(sinrs)
    return -beta * math.log(acc)


def direct_spectral_efficiency(eff_sinrs, L_per_user) -> float:
    return sum(l * math.log2(1.0 + e) for l, e in zip(L_per_user, eff_sinrs))


def eesm_model_se(p, g_norms_sq, betas, layer_owner, L_per_user, sigma2) -> float:
    """Interference-free EESM spectral efficiency as a function of powers.

    Uses the model SINR ``p_l / (sigma2 ||g_l||^2)`` per layer and a frozen
    beta per user; this is the objective whose stationary points the EESM
    closed forms claim to hit.  Natural-log units (the constant factor does
    not move the optimum).
    """
    p = np.asarray(p, dtype=float)
    total = 0.0
    for k, L_k in enumerate(L_per_user):
        idx = [l for l in range(p.size) if layer_owner[l] == k]
        beta = betas[k]
        X = sum(math.exp(-p[l] / (sigma2 * g_norms_sq[l] * beta)) for l in idx) / L_k
        total += L_k * math.log(1.0 - beta * math.log(X))
    return total


def eesm_model_lagrangian(p, lam, weights, budget, g_norms_sq, betas, layer_owner, L_per_user, sigma2) -> float:
    """Lagrangian of the EESM power problem: ``-SE + lam (w . p - budget)``."""
    p = np.asarray(p, dtype=float)
    se = eesm_model_se(p, g_norms_sq, betas, layer_owner, L_per_user, sigma2)
    return -se + lam * (float(np.dot(weights, p)) - budget)
