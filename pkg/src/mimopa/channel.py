"""Multi-user MIMO channels, truncated SVDs and their stacked assembly.

A downlink cell serves K users from a T-antenna array.  User k has R_k
receive antennas and carries L_k spatial layers (1 <= L_k <= R_k).  The
precoding chain never touches the raw channels directly: it works on the
row stack of every user's dominant right singular vectors.  This module
owns

* dimension bookkeeping (:class:`SystemDims`),
* synthetic channel ensembles (i.i.d. Rayleigh, correlated rows, and
  engineered near-orthogonal users),
* per-user truncated SVDs with a deterministic phase convention,
* the stacked decomposition ``H = U^H S V`` together with the cross-user
  correlation matrix ``C = V V^H - I``,
* a plain-text channel file format (``MPACH1``) for external ensembles.

All channel entries are dimensionless unit-variance gains; the operating
SNR is set downstream through the power budget and the noise variance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import block_diag

__all__ = [
    "RANK_RTOL",
    "SystemDims",
    "TruncatedSvd",
    "StackedDecomposition",
    "generate_rayleigh",
    "generate_correlated",
    "generate_near_orthogonal",
    "truncated_svd",
    "stack_svds",
    "save_channels",
    "load_channels",
]

# A singular value counts as nonzero above RANK_RTOL * s_max.
RANK_RTOL = 1e-12


@dataclass(frozen=True)
class SystemDims:
    """System dimensions: T transmit antennas, per-user antenna/layer counts.

    ``R_per_user[k]`` and ``L_per_user[k]`` are the receive-antenna and layer
    counts of user k.  Valid dimensions satisfy ``1 <= L_k <= R_k`` for every
    user and ``L <= R <= T`` for the totals.
    """

    T: int
    R_per_user: tuple[int, ...]
    L_per_user: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "R_per_user", tuple(int(r) for r in self.R_per_user))
        object.__setattr__(self, "L_per_user", tuple(int(l) for l in self.L_per_user))
        if self.T < 1:
            raise ValueError("T must be positive")
        if len(self.R_per_user) != len(self.L_per_user) or not self.R_per_user:
            raise ValueError("R_per_user and L_per_user must be nonempty and equal length")
        for k, (r, l) in enumerate(zip(self.R_per_user, self.L_per_user)):
            if not 1 <= l <= r:
                raise ValueError(f"user {k}: need 1 <= L_k <= R_k, got L_k={l}, R_k={r}")
        if not self.L_total <= self.R_total <= self.T:
            raise ValueError(
                f"need L <= R <= T, got L={self.L_total}, R={self.R_total}, T={self.T}"
            )

    @classmethod
    def uniform(cls, T: int, K: int, R_k: int, L_k: int) -> "SystemDims":
        """All K users share the same antenna and layer counts."""
        return cls(T, (R_k,) * K, (L_k,) * K)

    @property
    def K(self) -> int:
        return len(self.R_per_user)

    @property
    def R_total(self) -> int:
        return sum(self.R_per_user)

    @property
    def L_total(self) -> int:
        return sum(self.L_per_user)

    def layer_slice(self, k: int) -> slice:
        """Slice selecting user k's layers in any length-L stacking."""
        off = sum(self.L_per_user[:k])
        return slice(off, off + self.L_per_user[k])

    def layer_owner(self) -> np.ndarray:
        """Length-L integer array mapping each layer to its user index."""
        return np.repeat(np.arange(self.K), self.L_per_user)


@dataclass(frozen=True)
class TruncatedSvd:
    """Dominant part of a user channel SVD, ``H_k ~= U^H diag(S) V``.

    ``U`` (L_k x R_k) and ``V`` (L_k x T) hold the leading left/right
    singular vectors as rows; ``S`` holds the corresponding singular values
    in descending order.  Rows of ``V`` are phase-aligned so that their
    largest-magnitude entry is real and positive, which makes the
    factorization reproducible across runs.
    """

    U: np.ndarray
    S: np.ndarray
    V: np.ndarray

    @property
    def L_k(self) -> int:
        return self.S.shape[0]

    @property
    def R_k(self) -> int:
        return self.U.shape[1]

    def reconstruct(self) -> np.ndarray:
        """Rank-L_k approximation ``U^H diag(S) V`` of the original channel."""
        return self.U.conj().T @ (self.S[:, None] * self.V)


@dataclass(frozen=True)
class StackedDecomposition:
    """Row stack of per-user truncated SVDs.

    ``U`` is the L x R block-diagonal stack of the user ``U_k`` blocks, ``S``
    the concatenated singular values, and ``V`` the L x T row stack of right
    singular vectors.  ``V`` is orthonormal within each user block but not
    across users; ``C = V V^H - I`` collects the residual cross-user
    correlation (zero diagonal by construction).
    """

    U: np.ndarray
    S: np.ndarray
    V: np.ndarray
    C: np.ndarray
    L_per_user: tuple[int, ...]
    R_per_user: tuple[int, ...]

    @property
    def L_total(self) -> int:
        return int(self.S.shape[0])

    @property
    def T(self) -> int:
        return int(self.V.shape[1])

    def layer_slice(self, k: int) -> slice:
        off = sum(self.L_per_user[:k])
        return slice(off, off + self.L_per_user[k])


def _draw_iid_blocks(dims: SystemDims, rng: np.random.Generator) -> list[np.ndarray]:
    scale = np.sqrt(0.5)
    out = []
    for r in dims.R_per_user:
        re = rng.standard_normal((r, dims.T))
        im = rng.standard_normal((r, dims.T))
        out.append(scale * (re + 1j * im))
    return out


def generate_rayleigh(dims: SystemDims, seed) -> list[np.ndarray]:
    """Draw independent unit-variance Rayleigh channels, one R_k x T per user.

    Entries are i.i.d. circularly-symmetric complex Gaussian with unit
    variance.  The draw is fully determined by ``seed`` (anything
    ``numpy.random.default_rng`` accepts, typically an int or a tuple of
    ints for derived streams).
    """
    rng = np.random.default_rng(seed)
    return _draw_iid_blocks(dims, rng)


def generate_correlated(dims: SystemDims, corr: float, seed) -> list[np.ndarray]:
    """Rayleigh ensemble with equicorrelated receive rows across the cell.

    All R rows of the stacked channel share pairwise correlation ``corr``
    (coloring with covariance ``(1 - corr) I + corr * ones``).  Because the
    coloring couples rows of different users, raising ``corr`` pushes the
    users' dominant right singular vectors toward a common direction and so
    inflates the cross-user correlation ``C`` of the stacked decomposition;
    ``corr = 0`` reproduces :func:`generate_rayleigh` exactly.
    """
    if not 0.0 <= corr < 1.0:
        raise ValueError(f"corr must lie in [0, 1), got {corr}")
    blocks = generate_rayleigh(dims, seed)
    if corr == 0.0:
        return blocks
    R = dims.R_total
    cov = np.full((R, R), corr)
    np.fill_diagonal(cov, 1.0)
    coloring = np.linalg.cholesky(cov)
    stacked = coloring @ np.vstack(blocks)
    out, off = [], 0
    for r in dims.R_per_user:
        out.append(stacked[off:off + r])
        off += r
    return out


def _orthonormal_rows(X: np.ndarray) -> np.ndarray:
    # QR of X^H gives an orthonormal basis of the row space of X.
    q, _ = np.linalg.qr(X.conj().T)
    return q.conj().T


def generate_near_orthogonal(
    dims: SystemDims,
    c_norm: float,
    seed,
    sv_range: tuple[float, float] = (1.0, 1.0),
) -> list[np.ndarray]:
    """Engineered ensemble whose cross-user correlation norm is ``c_norm``.

    Random Rayleigh draws leave ``||C||`` at an O(sqrt(L/T)) floor, so
    regimes with very weakly coupled users (the operating point a scheduler
    would produce) cannot be reached by tuning a correlation knob.  This
    generator builds them directly: user right-singular-vector blocks start
    from one orthonormal L x T frame, get perturbed by a common random
    direction field, and are re-orthonormalized per user; the perturbation
    is rescaled until the spectral norm of ``C = V V^H - I`` matches
    ``c_norm`` to 0.1%.  Channels are then assembled as ``U_k^H S_k V_k``
    with random orthonormal ``U_k`` and singular values drawn log-uniformly
    from ``sv_range`` (the default gives every layer unit gain).

    Each returned R_k x T channel has rank exactly L_k.
    """
    if c_norm < 0:
        raise ValueError("c_norm must be nonnegative")
    rng = np.random.default_rng(seed)
    L, T = dims.L_total, dims.T
    scale = np.sqrt(0.5)
    base = _orthonormal_rows(scale * (rng.standard_normal((L, T)) + 1j * rng.standard_normal((L, T))))
    drift = scale * (rng.standard_normal((L, T)) + 1j * rng.standard_normal((L, T)))

    def assemble(eps: float) -> np.ndarray:
        rows = []
        for k in range(dims.K):
            sl = dims.layer_slice(k)
            rows.append(_orthonormal_rows(base[sl] + eps * drift[sl]))
        return np.vstack(rows)

    V = base
    if c_norm > 0:
        eps = c_norm
        for _ in range(25):
            V = assemble(eps)
            achieved = np.linalg.norm(V @ V.conj().T - np.eye(L), 2)
            if abs(achieved - c_norm) <= 1e-3 * c_norm:
                break
            eps *= c_norm / achieved

    lo, hi = sv_range
    if not 0 < lo <= hi:
        raise ValueError("sv_range must satisfy 0 < lo <= hi")
    channels = []
    for k in range(dims.K):
        L_k, R_k = dims.L_per_user[k], dims.R_per_user[k]
        if lo == hi:
            s = np.full(L_k, float(hi))
        else:
            s = np.sort(np.exp(rng.uniform(np.log(lo), np.log(hi), L_k)))[::-1]
        q, _ = np.linalg.qr(scale * (rng.standard_normal((R_k, L_k)) + 1j * rng.standard_normal((R_k, L_k))))
        U_k = q.conj().T
        channels.append(U_k.conj().T @ (s[:, None] * V[dims.layer_slice(k)]))
    return channels


def _canonical_phases(V: np.ndarray) -> np.ndarray:
    # Phase per row that turns its largest-magnitude entry real positive.
    idx = np.argmax(np.abs(V), axis=1)
    lead = V[np.arange(V.shape[0]), idx]
    mag = np.abs(lead)
    safe = np.where(mag > 0, mag, 1.0)
    return np.where(mag > 0, lead / safe, 1.0)


def truncated_svd(H_k: np.ndarray, L_k: int) -> TruncatedSvd:
    """Leading-L_k SVD of one user channel with canonical row phases.

    Raises ``ValueError`` when the kept block is rank deficient, i.e. when
    the L_k-th singular value falls below ``RANK_RTOL`` times the largest.
    """
    H_k = np.asarray(H_k, dtype=complex)
    if H_k.ndim != 2:
        raise ValueError("H_k must be a 2-D matrix")
    if not np.all(np.isfinite(H_k)):
        raise ValueError("H_k contains non-finite entries")
    if not 1 <= L_k <= min(H_k.shape):
        raise ValueError(f"L_k must lie in [1, min(R_k, T)], got {L_k}")
    u_full, s_full, vh_full = np.linalg.svd(H_k, full_matrices=False)
    if s_full[L_k - 1] <= RANK_RTOL * s_full[0]:
        raise ValueError(
            f"rank deficient: singular value {L_k} is {s_full[L_k - 1]:.3e} "
            f"(threshold {RANK_RTOL * s_full[0]:.3e})"
        )
    V = vh_full[:L_k].copy()
    U = u_full[:, :L_k].conj().T.copy()
    phases = _canonical_phases(V)
    V *= phases.conj()[:, None]
    U *= phases.conj()[:, None]
    return TruncatedSvd(U=U, S=s_full[:L_k].copy(), V=V)


def stack_svds(svds: list[TruncatedSvd]) -> StackedDecomposition:
    """Assemble per-user truncated SVDs into the stacked L x T decomposition."""
    if not svds:
        raise ValueError("need at least one user SVD")
    T = svds[0].V.shape[1]
    for k, f in enumerate(svds):
        if f.V.shape[1] != T:
            raise ValueError(f"inconsistent T: user {k} has {f.V.shape[1]}, expected {T}")
    U = block_diag(*[f.U for f in svds])
    S = np.concatenate([f.S for f in svds])
    V = np.vstack([f.V for f in svds])
    C = V @ V.conj().T - np.eye(V.shape[0])
    return StackedDecomposition(
        U=U,
        S=S,
        V=V,
        C=C,
        L_per_user=tuple(f.L_k for f in svds),
        R_per_user=tuple(f.R_k for f in svds),
    )


# ---------------------------------------------------------------------------
# MPACH1 channel files
#
# Line 1:  "MPACH1 K T R_1,...,R_K"
# Then, for each user, R_k lines with T "re,im" pairs joined by ';'.
# Floats are written with shortest round-trip precision, so save/load is
# bit-exact.
# ---------------------------------------------------------------------------

_MAGIC = "MPACH1"


def save_channels(path, channels: list[np.ndarray]) -> None:
    """Write a channel set to ``path`` in the MPACH1 text format."""
    if not channels:
        raise ValueError("empty channel set")
    T = channels[0].shape[1]
    lines = [f"{_MAGIC} {len(channels)} {T} {','.join(str(h.shape[0]) for h in channels)}"]
    for k, H in enumerate(channels):
        if H.ndim != 2 or H.shape[1] != T:
            raise ValueError(f"dimension mismatch: user {k} has shape {H.shape}, expected (*, {T})")
        for i in range(H.shape[0]):
            row = H[i]
            if not np.all(np.isfinite(row)):
                j = int(np.flatnonzero(~np.isfinite(row))[0])
                raise ValueError(f"non-finite value at ({k},{i},{j})")
            lines.append(";".join(f"{float(z.real)!r},{float(z.imag)!r}" for z in row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_channels(path) -> tuple[SystemDims, list[np.ndarray]]:
    """Read an MPACH1 channel file back into per-user matrices.

    The file carries no layer counts, so the returned dimensions assume the
    full-rank assignment ``L_k = R_k``; callers that want fewer layers per
    user should rebuild :class:`SystemDims` themselves.
    """
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    lines = [ln for ln in lines if ln.strip()]
    if not lines:
        raise ValueError("malformed header: empty file")
    head = lines[0].split()
    if len(head) != 4 or head[0] != _MAGIC:
        raise ValueError(f"malformed header: {lines[0]!r}")
    try:
        K, T = int(head[1]), int(head[2])
        R_per_user = tuple(int(tok) for tok in head[3].split(","))
    except ValueError as exc:
        raise ValueError(f"malformed header: {lines[0]!r}") from exc
    if len(R_per_user) != K or K < 1 or T < 1 or any(r < 1 for r in R_per_user):
        raise ValueError(f"malformed header: {lines[0]!r}")
    expected = 1 + sum(R_per_user)
    if len(lines) != expected:
        raise ValueError(f"malformed channel file: expected {expected - 1} data lines, got {len(lines) - 1}")
    channels, cursor = [], 1
    for k, r in enumerate(R_per_user):
        H = np.empty((r, T), dtype=complex)
        for i in range(r):
            cells = lines[cursor].split(";")
            if len(cells) != T:
                raise ValueError(f"dimension mismatch: user {k} row {i} has {len(cells)} entries, expected {T}")
            for j, cell in enumerate(cells):
                try:
                    re_s, im_s = cell.split(",")
                    z = complex(float(re_s), float(im_s))
                except ValueError as exc:
                    raise ValueError(f"malformed entry at ({k},{i},{j}): {cell!r}") from exc
                if not (np.isfinite(z.real) and np.isfinite(z.imag)):
                    raise ValueError(f"non-finite value at ({k},{i},{j})")
                H[i, j] = z
            cursor += 1
        channels.append(H)
    dims = SystemDims(T=T, R_per_user=R_per_user, L_per_user=R_per_user)
    return dims, channels
