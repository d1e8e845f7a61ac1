"""Calderon projector of the truncated cylinder and its APS limit object."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .cylinder_flow import FlowConfig, eigen_echelon, propagate_ode_path, propagate_product, spectral_data_for
from .operator_model import BoundarySymbolSpec, SpectralData, spectral_projectors
from .subspaces import Frame, as_columns, orthonormalize, principal_angles, projector_from_frame

__all__ = [
    "APSData",
    "ResonanceReport",
    "ProjectorError",
    "calderon_projector",
    "calderon_projectors",
    "orthogonalize_projector",
    "scattering_lagrangian",
    "aps_projector",
    "check_nonresonance",
    "graded_limit",
    "lagrangian_graph_frame",
    "random_frame",
]

NULL_TOL = 1e-10


class ProjectorError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class APSData:
    pi_plus: np.ndarray
    pi_zero: np.ndarray
    scattering_frame: Frame
    pi_aps: np.ndarray


@dataclass(frozen=True)
class ResonanceReport:
    min_angle: float
    resonant: bool
    threshold: float

    def as_dict(self) -> dict:
        return {"min_angle": self.min_angle, "resonant": self.resonant, "threshold": self.threshold}


def calderon_projectors(spec: BoundarySymbolSpec, N: int, H0, xs, cfg: FlowConfig | None = None,
                        S: SpectralData | None = None) -> list[np.ndarray]:
    """Calderon projectors ``C(x)`` for several ``x in (0, 1]`` (one flow pass)."""
    xs = [float(x) for x in xs]
    for x in xs:
        if not 0.0 < x <= 1.0:
            raise ValueError(f"x must lie in (0, 1]; the x -> 0 limit is reached by sweeping, got {x}")
    A = as_columns(H0)
    if spec.is_product:
        S = S if S is not None else spectral_data_for(spec, N)
        return [propagate_product(S, A, math.log(x)).projector for x in xs]
    frames = propagate_ode_path(spec, N, A, [math.log(x) for x in xs], cfg)
    return [pf.projector for pf in frames]


def calderon_projector(spec: BoundarySymbolSpec, N: int, H0, x: float, cfg: FlowConfig | None = None) -> np.ndarray:
    """Orthogonal projector onto the Cauchy data space at ``u = log x``.

    Product specs use the closed-form flow; x-dependent specs integrate the
    frame ODE.
    """
    return calderon_projectors(spec, N, H0, [x], cfg)[0]


def orthogonalize_projector(P: np.ndarray) -> np.ndarray:
    """Orthogonal projector onto ``range(P)`` for an idempotent ``P``.

    Computes ``P P^* [P P^* + (I - P^*)(I - P)]^{-1}``.  The inner operator
    is positive definite for a true idempotent and commutes with ``P P^*``.
    """
    P = np.asarray(P, dtype=complex)
    n = P.shape[0]
    if P.shape != (n, n):
        raise ValueError(f"expected a square matrix, got {P.shape}")
    if np.linalg.norm(P @ P - P, 2) > 1e-8 * max(1.0, np.linalg.norm(P, 2)):
        raise ProjectorError("input is not idempotent to 1e-8")
    I = np.eye(n)
    PPs = P @ P.conj().T
    inner = PPs + (I - P.conj().T) @ (I - P)
    cond = np.linalg.cond(inner)
    if not cond < 1e12:
        raise ProjectorError(f"inner operator is numerically singular (condition {cond:.3e})")
    # inner commutes with P P^*, so the solve can be applied from the left
    return np.linalg.solve(inner, PPs)


def scattering_lagrangian(S: SpectralData, H0) -> Frame:
    """Kernel part of the limiting Cauchy data space.

    ``L = Pi_0 (span(H0) ∩ (ker D0 ⊕ L_<))``, where the intersection is the
    null space of ``Pi_>`` restricted to ``span(H0)``.
    """
    Q0 = orthonormalize(H0).columns
    V = S.eigenvectors
    Vpos, Vzero = V[:, S.positive], V[:, S.zero]
    n = S.dim
    if Vzero.shape[1] == 0 or Q0.shape[1] == 0:
        return Frame.empty(n)
    A = Vpos.conj().T @ Q0
    if A.shape[0] == 0:
        null = np.eye(Q0.shape[1], dtype=complex)
    else:
        _, s, Wh = np.linalg.svd(A, full_matrices=True)
        rank = int(np.sum(s > NULL_TOL))
        null = Wh[rank:].conj().T
    if null.shape[1] == 0:
        return Frame.empty(n)
    coords = Vzero.conj().T @ (Q0 @ null)
    U, s, _ = np.linalg.svd(coords, full_matrices=False)
    keep = s > NULL_TOL
    return Frame(Vzero @ U[:, keep], orthonormal=True)


def aps_projector(S: SpectralData, L) -> APSData:
    """``Pi_APS = Pi_> + P_L`` for a frame ``L`` inside ``ker D0``."""
    _, pi0, pi_plus = spectral_projectors(S)
    Lf = orthonormalize(L) if as_columns(L).shape[1] else Frame.empty(S.dim)
    Lc = Lf.columns
    if Lc.shape[0] != S.dim:
        raise ValueError("scattering frame dimension does not match the spectral data")
    resid = np.linalg.norm(Lc - pi0 @ Lc, 2) if Lc.shape[1] else 0.0
    if resid > 1e-8:
        raise ProjectorError(f"scattering frame is not inside ker D0 (residual {resid:.3e})")
    PL = Lc @ Lc.conj().T
    return APSData(pi_plus=pi_plus, pi_zero=pi0, scattering_frame=Lf, pi_aps=pi_plus + PL)


def check_nonresonance(S: SpectralData, H0, threshold: float = 1e-7) -> ResonanceReport:
    """Smallest principal angle between ``span(H0)`` and the negative spectral space."""
    Vneg = S.eigenvectors[:, S.negative]
    A = as_columns(H0)
    if Vneg.shape[1] == 0 or A.shape[1] == 0:
        return ResonanceReport(min_angle=math.pi / 2, resonant=False, threshold=threshold)
    angle = float(principal_angles(A, Vneg)[0])
    return ResonanceReport(min_angle=angle, resonant=angle < threshold, threshold=threshold)


def _clusters(values: np.ndarray, tol: float) -> list[np.ndarray]:
    """Index groups of consecutive values (in the given order) closer than ``tol``."""
    groups: list[list[int]] = []
    for i, v in enumerate(values):
        if groups and abs(values[groups[-1][-1]] - v) <= tol:
            groups[-1].append(i)
        else:
            groups.append([i])
    return [np.array(g) for g in groups]


def graded_limit(S: SpectralData, H0) -> Frame:
    """``lim_{r -> -inf} span(e^{-r D0} H0)``.

    For each eigenvalue cluster (descending) the limit contains the spectral
    component of ``span(H0) ∩ (sum of eigenspaces at or below it)``.
    """
    A = as_columns(H0)
    if A.shape[1] == 0:
        return Frame.empty(S.dim)
    E, order, pivots = eigen_echelon(S, A)
    lam = S.eigenvalues[order]
    cluster_of = np.empty(S.dim, dtype=int)
    groups = _clusters(lam, S.zero_tol)
    for c, g in enumerate(groups):
        cluster_of[g] = c
    limit = np.zeros_like(E)
    for j, p in enumerate(pivots):
        rows = groups[cluster_of[p]]
        limit[rows, j] = E[rows, j]
    return orthonormalize(S.eigenvectors[:, order] @ limit)


# -- Cauchy data generators ---------------------------------------------------

def random_frame(n: int, k: int | None = None, seed: int = 0) -> Frame:
    """Seeded complex Gaussian frame with ``k`` columns (default ``n // 2``)."""
    rng = np.random.default_rng(seed)
    k = n // 2 if k is None else k
    A = rng.standard_normal((n, k)) + 1j * rng.standard_normal((n, k))
    return orthonormalize(A)


def _haar_unitary(k: int, rng: np.random.Generator) -> np.ndarray:
    Z = (rng.standard_normal((k, k)) + 1j * rng.standard_normal((k, k))) / np.sqrt(2)
    Q, R = np.linalg.qr(Z)
    d = np.diagonal(R)
    return Q * (d / np.abs(d))


def lagrangian_graph_frame(G_full: np.ndarray, U: np.ndarray | None = None, seed: int = 0) -> Frame:
    """Lagrangian subspace ``{v + U v : v in V_+}`` for the pairing ``<., G .>``.

    ``V_±`` are the ``±1`` eigenspaces of the Hermitian involution ``iG``
    (requires ``G^* = -G``, ``G^2 = -I``); ``U: V_+ -> V_-`` is unitary,
    Haar-random from ``seed`` when not given (in the eigenbasis coordinates).
    """
    G = np.asarray(G_full, dtype=complex)
    n = G.shape[0]
    if np.abs(G.conj().T + G).max() > 1e-12 or np.abs(G @ G + np.eye(n)).max() > 1e-12:
        raise ValueError("graph generator requires G^* = -G and G^2 = -I")
    w, V = np.linalg.eigh(1j * G)
    Vm, Vp = V[:, w < 0], V[:, w > 0]
    if Vm.shape[1] != Vp.shape[1]:
        raise ValueError("iG does not split the space into equal halves")
    k = Vp.shape[1]
    if U is None:
        U = _haar_unitary(k, np.random.default_rng(seed))
    U = np.asarray(U, dtype=complex)
    if U.shape != (k, k) or np.linalg.norm(U.conj().T @ U - np.eye(k), 2) > 1e-10:
        raise ValueError(f"U must be a {k}x{k} unitary matrix")
    return orthonormalize(Vp + Vm @ U)


def warn_if_not_half(H0, n: int) -> None:
    k = as_columns(H0).shape[1]
    if 2 * k != n:
        warnings.warn(f"Cauchy data frame has {k} columns in dimension {n}; "
                      "APS limit claims only apply to Lagrangian (half-dimensional) data",
                      stacklevel=2)
