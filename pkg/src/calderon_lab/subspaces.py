"""Frames, orthogonal projectors and distances between subspaces."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Frame",
    "RankError",
    "as_columns",
    "orthonormalize",
    "projector_from_frame",
    "gap_distance",
    "principal_angles",
    "lagrangian_residual",
    "check_projector",
    "numerical_rank",
]

RANK_TOL = 1e-12


class RankError(ValueError):
    """Frame columns are numerically linearly dependent."""

    def __init__(self, message: str, rank: int):
        super().__init__(message)
        self.rank = rank


def numerical_rank(A: np.ndarray, rtol: float = RANK_TOL) -> int:
    if A.shape[1] == 0:
        return 0
    s = np.linalg.svd(A, compute_uv=False)
    if s[0] == 0:
        return 0
    return int(np.sum(s > rtol * s[0]))


@dataclass(frozen=True, eq=False)
class Frame:
    """Full-rank ``n x k`` array whose columns span a subspace of C^n."""

    columns: np.ndarray
    orthonormal: bool = False

    def __post_init__(self):
        F = np.asarray(self.columns, dtype=complex)
        if F.ndim == 1:
            F = F[:, None]
        if F.ndim != 2:
            raise ValueError(f"frame must be a 2-d array, got {F.ndim} dimensions")
        n, k = F.shape
        if k > n:
            raise RankError(f"frame has more columns ({k}) than rows ({n})", rank=numerical_rank(F))
        rank = numerical_rank(F)
        if rank < k:
            raise RankError(f"frame is rank deficient: numerical rank {rank} < {k} columns", rank=rank)
        if self.orthonormal and k and np.linalg.norm(F.conj().T @ F - np.eye(k), 2) > 1e-10:
            raise ValueError("frame flagged orthonormal but F^* F != I")
        object.__setattr__(self, "columns", F)

    @property
    def n(self) -> int:
        return self.columns.shape[0]

    @property
    def k(self) -> int:
        return self.columns.shape[1]

    @classmethod
    def empty(cls, n: int) -> "Frame":
        return cls(np.zeros((n, 0), dtype=complex), orthonormal=True)


def as_columns(F) -> np.ndarray:
    """Column array of a Frame or array-like (1-d input is one column)."""
    if isinstance(F, Frame):
        return F.columns
    A = np.asarray(F, dtype=complex)
    return A[:, None] if A.ndim == 1 else A


def _qr_positive(A: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Thin QR with a real positive R diagonal."""
    Q, R = np.linalg.qr(A)
    d = np.diagonal(R)
    phase = np.where(d == 0, 1.0, d / np.where(d == 0, 1.0, np.abs(d)))
    return Q * phase, R * phase.conj()[:, None]


def orthonormalize(F) -> Frame:
    """Orthonormal frame with the same span (QR, sign-fixed)."""
    A = as_columns(F)
    if A.shape[1] == 0:
        return Frame(A.copy(), orthonormal=True)
    rank = numerical_rank(A)
    if rank < A.shape[1]:
        raise RankError(f"cannot orthonormalize: numerical rank {rank} < {A.shape[1]} columns", rank=rank)
    Q, _ = _qr_positive(A)
    return Frame(Q, orthonormal=True)


def projector_from_frame(F) -> np.ndarray:
    """Orthogonal projector onto the column span of ``F``."""
    Q = F.columns if isinstance(F, Frame) and F.orthonormal else orthonormalize(F).columns
    return Q @ Q.conj().T


def gap_distance(P: np.ndarray, Q: np.ndarray) -> float:
    """Operator-norm distance ``||P - Q||_2``."""
    P = np.asarray(P)
    Q = np.asarray(Q)
    if P.shape != Q.shape:
        raise ValueError(f"dimension mismatch: {P.shape} vs {Q.shape}")
    return float(np.linalg.norm(P - Q, 2))


def principal_angles(F1, F2) -> np.ndarray:
    """Ascending principal angles between two column spans.

    Cosines are the singular values of ``Q1^* Q2``.  Angles whose cosine
    exceeds ``1/sqrt(2)`` are recovered from the matching sines instead,
    since ``arccos`` cannot resolve angles below ~1e-8.
    """
    Q1 = orthonormalize(F1).columns
    Q2 = orthonormalize(F2).columns
    if Q1.shape[0] != Q2.shape[0]:
        raise ValueError("frames live in spaces of different dimension")
    if Q1.shape[1] < Q2.shape[1]:
        Q1, Q2 = Q2, Q1
    k = Q2.shape[1]
    if k == 0:
        return np.zeros(0)
    M = Q1.conj().T @ Q2
    cos = np.clip(np.linalg.svd(M, compute_uv=False), 0.0, 1.0)
    sin = np.clip(np.linalg.svd(Q2 - Q1 @ M, compute_uv=False), 0.0, 1.0)[::-1]
    angles = np.arccos(cos)
    small = cos**2 > 0.5
    angles[small] = np.arcsin(sin[small])
    return np.sort(angles)


def lagrangian_residual(F, G: np.ndarray) -> float:
    """``||P_{G F} - (I - P_F)||``; vanishes iff span(F) is Lagrangian for ``<., G .>``."""
    A = as_columns(F)
    G = np.asarray(G, dtype=complex)
    n = A.shape[0]
    if G.shape != (n, n):
        raise ValueError(f"G has shape {G.shape}, frame lives in C^{n}")
    if np.linalg.norm(G.conj().T @ G - np.eye(n), 2) > 1e-10:
        raise ValueError("G is not unitary")
    P = projector_from_frame(A)
    PG = projector_from_frame(G @ A)
    return float(np.linalg.norm(PG - (np.eye(n) - P), 2))


def check_projector(P: np.ndarray, hermitian: bool = True, idem_tol: float = 1e-9,
                    herm_tol: float = 1e-10) -> int:
    """Validate projector invariants and return the rank; raise ``ValueError`` otherwise."""
    P = np.asarray(P)
    idem = np.linalg.norm(P @ P - P, 2)
    if idem > idem_tol:
        raise ValueError(f"not idempotent: ||P^2 - P|| = {idem:.3e}")
    if hermitian:
        herm = np.linalg.norm(P - P.conj().T, 2)
        if herm > herm_tol:
            raise ValueError(f"not Hermitian: ||P - P^*|| = {herm:.3e}")
    tr = np.trace(P).real
    if abs(tr - round(tr)) > 1e-6:
        raise ValueError(f"trace {tr} is not within 1e-6 of an integer")
    return int(round(tr))
