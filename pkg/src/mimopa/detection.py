"""Per-user receive filters: MMSE, MMSE-IRC and conjugate detection.

Each user k applies its own L_k x R_k filter; stacking the blocks gives the
block-diagonal system detection matrix.  MMSE-IRC additionally whitens the
interference arriving from other users' precoder columns, which is why it
needs the full precoder and not just the user's own block.  Conjugate
detection ``G_k = P_k^{-1} S_k^{-1} U_k`` is a virtual receiver that exactly
inverts the user's truncated channel; it is not implementable from pilot
measurements but serves as the analytical reference the power-allocation
solvers are calibrated against.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import block_diag

from .channel import SystemDims, TruncatedSvd

__all__ = [
    "DetectionSet",
    "mmse_detection",
    "mmse_irc_detection",
    "mmse_irc_detection_ruu",
    "conjugate_detection",
    "build_detection_set",
]


@dataclass(frozen=True)
class DetectionSet:
    """Per-user detection blocks; ``blocks[k]`` is L_k x R_k."""

    blocks: tuple[np.ndarray, ...]

    def assemble(self) -> np.ndarray:
        """Block-diagonal L x R detection matrix."""
        return block_diag(*self.blocks)

    def row_norms_sq(self) -> np.ndarray:
        """Length-L vector of squared detection row norms, in layer order."""
        return np.concatenate([np.sum(np.abs(b) ** 2, axis=1) for b in self.blocks])

    def rows(self) -> list[np.ndarray]:
        """Detection rows in layer order, each of its user's R_k width."""
        return [b[i] for b in self.blocks for i in range(b.shape[0])]


def mmse_detection(H_k: np.ndarray, W_k: np.ndarray, lambda_reg: float) -> np.ndarray:
    """MMSE filter ``(A^H A + lambda I)^{-1} A^H`` with ``A = H_k W_k``."""
    if lambda_reg < 0:
        raise ValueError("lambda_reg must be nonnegative")
    A = H_k @ W_k
    M = A.conj().T @ A + lambda_reg * np.eye(A.shape[1])
    if lambda_reg == 0 and np.linalg.cond(M) >= 1e12:
        raise ValueError("singular system at lambda_reg = 0")
    return np.linalg.solve(M, A.conj().T)


def mmse_irc_detection(H_k: np.ndarray, W: np.ndarray, W_k: np.ndarray, lambda_reg: float) -> np.ndarray:
    """MMSE-IRC filter for user k given the full precoder ``W``.

    Computed through the single-inverse form
    ``(H_k W_k)^H ((H_k W)(H_k W)^H + lambda I)^{-1}``, which folds the
    intra-cell interference covariance into one Gram matrix.
    """
    if lambda_reg < 0:
        raise ValueError("lambda_reg must be nonnegative")
    A = H_k @ W_k
    B = H_k @ W
    M = B @ B.conj().T + lambda_reg * np.eye(B.shape[0])
    if lambda_reg == 0 and np.linalg.cond(M) >= 1e12:
        raise ValueError("singular system at lambda_reg = 0")
    # G = A^H M^{-1} = (M^{-1} A)^H for Hermitian M.
    return np.linalg.solve(M, A).conj().T


def mmse_irc_detection_ruu(H_k: np.ndarray, W: np.ndarray, W_k: np.ndarray, lambda_reg: float) -> np.ndarray:
    """MMSE-IRC via the explicit interference covariance.

    Forms ``R_uu = H_k (W W^H - W_k W_k^H) H_k^H`` and inverts
    ``A A^H + R_uu + lambda I``.  Algebraically identical to
    :func:`mmse_irc_detection`; kept as an independent route for
    cross-validation.
    """
    A = H_k @ W_k
    R_uu = H_k @ (W @ W.conj().T - W_k @ W_k.conj().T) @ H_k.conj().T
    M = A @ A.conj().T + R_uu + lambda_reg * np.eye(A.shape[0])
    return np.linalg.solve(M, A).conj().T


def conjugate_detection(svd_k: TruncatedSvd, p_k: np.ndarray) -> np.ndarray:
    """Virtual conjugate detector ``diag(1/(sqrt(p_l) s_l)) U_k``.

    Satisfies ``G_k H_k = diag(1/sqrt(p_l)) V_k`` exactly, including for
    truncated factorizations.  Requires strictly positive layer powers and
    singular values.
    """
    p_k = np.asarray(p_k, dtype=float)
    if p_k.shape != (svd_k.L_k,):
        raise ValueError(f"expected {svd_k.L_k} layer powers, got shape {p_k.shape}")
    if np.any(p_k <= 0):
        raise ValueError("conjugate detection needs strictly positive powers")
    if np.any(svd_k.S <= 0):
        raise ValueError("conjugate detection needs strictly positive singular values")
    return (1.0 / (np.sqrt(p_k) * svd_k.S))[:, None] * svd_k.U


def build_detection_set(
    method: str,
    dims: SystemDims,
    W: np.ndarray,
    *,
    svds: list[TruncatedSvd] | None = None,
    channels: list[np.ndarray] | None = None,
    p: np.ndarray | None = None,
    lambda_reg: float = 0.0,
) -> DetectionSet:
    """Assemble one detection block per user for the chosen receiver.

    ``method`` is one of ``"cd"`` (needs ``svds`` and the layer powers
    ``p``), ``"mmse"`` or ``"mmse-irc"`` (both need ``channels``;
    ``lambda_reg`` is the receiver regularization, conventionally the noise
    variance).
    """
    blocks = []
    if method == "cd":
        if svds is None or p is None:
            raise ValueError("cd detection needs svds and layer powers")
        for k, f in enumerate(svds):
            blocks.append(conjugate_detection(f, p[dims.layer_slice(k)]))
    elif method in ("mmse", "mmse-irc"):
        if channels is None:
            raise ValueError(f"{method} detection needs channels")
        for k, H_k in enumerate(channels):
            W_k = W[:, dims.layer_slice(k)]
            if method == "mmse":
                blocks.append(mmse_detection(H_k, W_k, lambda_reg))
            else:
                blocks.append(mmse_irc_detection(H_k, W, W_k, lambda_reg))
    else:
        raise ValueError(f"unknown detection method {method!r}")
    return DetectionSet(blocks=tuple(blocks))
