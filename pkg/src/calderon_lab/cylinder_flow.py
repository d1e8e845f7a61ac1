"""Propagation of Cauchy data frames along the cylinder ``u in (-inf, 0]``.

Solutions of ``D phi = 0`` on the cylinder satisfy ``d phi/du = -D0(e^u) phi``.
We integrate in ``s = -u >= 0`` so that the frame ODE reads
``dY/ds = D0(e^{-s}) Y``.  Positive eigenvalues of D0 grow, which is handled
by re-orthonormalizing the frame (continuous QR) rather than by implicitness.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .operator_model import BoundarySymbolSpec, SpectralData, assemble, assemble_powers, eigendecompose
from .subspaces import Frame, RankError, _qr_positive, as_columns, numerical_rank, orthonormalize

__all__ = [
    "FlowConfig",
    "PropagatedFrame",
    "FlowError",
    "eigen_echelon",
    "propagate_product",
    "propagate_ode",
    "propagate_ode_path",
    "symplectic_pairing_drift",
    "spectral_data_for",
]

ECHELON_TOL = 1e-12


class FlowError(RuntimeError):
    """Frame propagation failed (step underflow, overflow or rank collapse)."""

    def __init__(self, message: str, u: float | None = None):
        super().__init__(message)
        self.u = u


@dataclass(frozen=True)
class FlowConfig:
    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    renorm_every: int = 10
    max_step: float = 0.1
    # renormalize early when a column norm leaves [1/growth_limit, growth_limit]
    growth_limit: float = 1e3

    def __post_init__(self):
        for name in ("rel_tol", "abs_tol", "max_step", "growth_limit"):
            if not getattr(self, name) > 0:
                raise ValueError(f"FlowConfig.{name} must be positive")
        if int(self.renorm_every) < 1:
            raise ValueError("FlowConfig.renorm_every must be >= 1")


@dataclass(frozen=True, eq=False)
class PropagatedFrame:
    frame: Frame
    u: float
    log_scale: np.ndarray

    @property
    def projector(self) -> np.ndarray:
        Q = self.frame.columns
        return Q @ Q.conj().T


# -- product case --------------------------------------------------------------

def eigen_echelon(S: SpectralData, F, tol: float = ECHELON_TOL):
    """Column-echelon form of ``span(F)`` in eigen-coordinates ordered by descending eigenvalue.

    Returns ``(E, order, pivots)``: ``E[:, j]`` has exact zeros above row
    ``pivots[j]`` and ``S.eigenvectors[:, order] @ E`` spans ``span(F)``.
    Row components below ``tol`` (columns are unit-norm) are treated as
    round-off and cleared.
    """
    Q0 = orthonormalize(F).columns
    order = np.arange(S.dim)[::-1]
    E = S.eigenvectors[:, order].conj().T @ Q0
    n, k = E.shape
    pivots: list[int] = []
    j = 0
    for i in range(n):
        if j == k:
            break
        v = E[i, j:]
        if np.linalg.norm(v) <= tol:
            E[i, j:] = 0.0
            continue
        # unitary H with v @ H = ||v|| e_1
        H, _ = np.linalg.qr(v.conj()[:, None], mode="complete")
        E[:, j:] = E[:, j:] @ H
        E[i, j + 1:] = 0.0
        pivots.append(i)
        j += 1
    if j < k:
        raise RankError(f"echelon reduction found only {j} pivots for {k} columns", rank=j)
    return E, order, pivots


def propagate_product(S: SpectralData, F0, r: float) -> PropagatedFrame:
    """``span(e^{-r D0} F0)`` for constant D0 with spectral data ``S`` and ``r <= 0``.

    Each echelon column is scaled by its own largest growth factor before the
    final QR, so no entry exceeds one and the span is exact up to rounding.
    """
    if r > 0:
        raise ValueError(f"propagation target must satisfy r <= 0, got {r}")
    A = as_columns(F0)
    if A.shape[0] != S.dim:
        raise ValueError(f"frame dimension {A.shape[0]} does not match operator dimension {S.dim}")
    if r == 0 or A.shape[1] == 0:
        Q = orthonormalize(A)
        return PropagatedFrame(Q, 0.0, np.zeros(A.shape[1]))
    E, order, _ = eigen_echelon(S, A)
    lam = S.eigenvalues[order]
    with np.errstate(divide="ignore"):
        logmag = np.log(np.abs(E)) + (-r) * lam[:, None]
    shift = logmag.max(axis=0)
    with np.errstate(invalid="ignore", over="ignore", under="ignore"):
        phase = np.where(E == 0, 0.0, E / np.where(E == 0, 1.0, np.abs(E)))
        scaled = phase * np.exp(logmag - shift[None, :])
    if not np.all(np.isfinite(scaled)):
        raise FlowError(
            "overflow while rescaling the propagated frame; increase zero_tol or reduce |r|", u=r
        )
    rank = numerical_rank(scaled)
    if rank < scaled.shape[1]:
        raise FlowError(f"propagated frame collapsed to rank {rank}", u=r)
    Q, R = _qr_positive(scaled)
    log_scale = shift + np.log(np.abs(np.diagonal(R)))
    return PropagatedFrame(Frame(S.eigenvectors[:, order] @ Q, orthonormal=True), float(r), log_scale)


# -- asymptotically cylindrical case --------------------------------------------

# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B = np.array(_A[6] + [0.0])
_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])
ORDER = 5

_SAFETY = 0.9
_BETA = 0.04
_ALPHA = 1.0 / ORDER - 0.75 * _BETA
_FAC_MIN, _FAC_MAX = 0.2, 5.0


class _LinearField:
    """``s -> D0(e^{-s})`` from the per-power matrices."""

    def __init__(self, mats: list[np.ndarray]):
        self.mats = [M for M in mats]
        self.constant = all(not np.any(M) for M in self.mats[1:])

    def __call__(self, s: float) -> np.ndarray:
        if self.constant:
            return self.mats[0]
        x = math.exp(-s)
        out = self.mats[0].copy()
        xp = 1.0
        for M in self.mats[1:]:
            xp *= x
            out += xp * M
        return out


def _integrate(field, F0, s_targets, cfg: FlowConfig, pairing: np.ndarray | None = None):
    """Integrate ``dY/ds = field(s) Y`` from ``s = 0`` through ascending ``s_targets``.

    Returns a list of ``(Q, log_scale)`` at the targets, plus the pairing drift
    when ``pairing`` (a matrix G) is supplied.
    """
    A = as_columns(F0)
    Y, R0 = _qr_positive(A)
    log_scale = np.log(np.abs(np.diagonal(R0))).copy()
    k = A.shape[1]
    tinv = np.linalg.inv(R0) if pairing is not None else None
    W0 = A.conj().T @ pairing @ A if pairing is not None else None
    drift = 0.0

    results = []
    s = 0.0
    D = field(s)
    h = min(cfg.max_step, 0.1 / max(np.abs(D).sum(axis=1).max(), 1e-12))
    err_prev = 1e-4
    since_renorm = 0
    ks = [None] * 7
    ks[0] = D @ Y

    def renormalize():
        nonlocal Y, tinv, log_scale
        Qn, R = _qr_positive(Y)
        d = np.abs(np.diagonal(R))
        if d.min() <= 1e-12 * d.max():
            raise FlowError("frame rank collapsed during integration; tighten the tolerances", u=-s)
        Y = Qn
        log_scale = log_scale + np.log(d)
        if tinv is not None:
            tinv = tinv @ np.linalg.inv(R)

    def pairing_error():
        M = Y.conj().T @ pairing @ Y
        ref = tinv.conj().T @ W0 @ tinv
        return float(np.abs(M - ref).max())

    for target in s_targets:
        if target < s:
            raise ValueError("integration targets must be ascending in s = -u")
        while s < target:
            step = min(h, target - s)
            last = step >= target - s
            for i in range(1, 7):
                Yi = Y + step * sum(_A[i][j] * ks[j] for j in range(i) if _A[i][j] != 0.0)
                ks[i] = field(s + _C[i] * step) @ Yi
            Ynew = Y + step * sum(_B[j] * ks[j] for j in range(6) if _B[j] != 0.0)
            errmat = step * sum(_E[j] * ks[j] for j in range(7) if _E[j] != 0.0)
            scale = cfg.abs_tol + cfg.rel_tol * np.maximum(np.abs(Y), np.abs(Ynew))
            err = float(np.sqrt(np.mean(np.abs(errmat / scale) ** 2))) if k else 0.0
            if not np.isfinite(err):
                raise FlowError("non-finite error estimate during integration", u=-s)
            if err <= 1.0:
                s = target if last else s + step
                Y = Ynew
                ks[0] = ks[6]
                since_renorm += 1
                fac = _SAFETY * max(err, 1e-10) ** (-_ALPHA) * err_prev**_BETA
                h = min(cfg.max_step, step * min(_FAC_MAX, max(_FAC_MIN, fac)))
                err_prev = max(err, 1e-4)
                norms = np.linalg.norm(Y, axis=0) if k else np.ones(1)
                if (since_renorm >= cfg.renorm_every or norms.max() > cfg.growth_limit
                        or norms.min() < 1.0 / cfg.growth_limit):
                    renormalize()
                    since_renorm = 0
                    ks[0] = field(s) @ Y
                if pairing is not None:
                    drift = max(drift, pairing_error())
            else:
                fac = _SAFETY * err ** (-_ALPHA)
                h = step * min(1.0, max(_FAC_MIN, fac))
            if h < 1e-12 * max(1.0, s):
                raise FlowError(f"step size underflow at u = {-s:.6g} (h = {h:.3e})", u=-s)
        if k:
            renormalize()
            since_renorm = 0
            ks[0] = field(s) @ Y
        results.append((Y.copy(), log_scale.copy()))
    return results, drift


def _field_for(spec: BoundarySymbolSpec, N: int) -> _LinearField:
    return _LinearField(assemble_powers(spec, N))


def propagate_ode_path(spec: BoundarySymbolSpec, N: int, F0, rs, cfg: FlowConfig | None = None):
    """Frames at every ``r`` in ``rs`` (each ``<= 0``) from one integration pass.

    Results are returned in the order of ``rs``.
    """
    cfg = cfg or FlowConfig()
    rs = [float(r) for r in rs]
    if any(r > 0 or not np.isfinite(r) for r in rs):
        raise ValueError("propagation targets must be finite and <= 0")
    A = as_columns(F0)
    if A.shape[0] != spec.dim(N):
        raise ValueError(f"frame dimension {A.shape[0]} does not match truncation dimension {spec.dim(N)}")
    orthonormalize(A)  # rank check
    order = sorted(range(len(rs)), key=lambda i: -rs[i])
    targets = [-rs[i] for i in order]
    raw, _ = _integrate(_field_for(spec, N), A, targets, cfg)
    out: list[PropagatedFrame | None] = [None] * len(rs)
    for i, (Q, ls) in zip(order, raw):
        out[i] = PropagatedFrame(Frame(Q, orthonormal=True), rs[i], ls)
    return out


def propagate_ode(spec: BoundarySymbolSpec, N: int, F0, r: float, cfg: FlowConfig | None = None) -> PropagatedFrame:
    """Integrate ``d phi/du = -D0(e^u) phi`` for a frame from ``u = 0`` down to ``u = r``."""
    return propagate_ode_path(spec, N, F0, [r], cfg)[0]


def symplectic_pairing_drift(spec: BoundarySymbolSpec, N: int, G_full: np.ndarray, F0, r: float,
                             cfg: FlowConfig | None = None) -> float:
    """Largest deviation of ``<phi_i(u), G phi_j(u)>`` from its initial value along the flow.

    The pairing is conserved for anticommuting ``G``.  It is evaluated in the
    renormalized frame: with ``Phi = Y T`` (``T`` the accumulated triangular
    renormalization factor) we compare ``Y^* G Y`` against
    ``T^{-*} (F0^* G F0) T^{-1}``, which equals the unrenormalized pairing
    deviation transported back by ``T``.
    """
    if not spec.symplectic:
        raise ValueError("pairing drift requires a spec flagged symplectic")
    cfg = cfg or FlowConfig()
    if r > 0:
        raise ValueError(f"propagation target must satisfy r <= 0, got {r}")
    G_full = np.asarray(G_full, dtype=complex)
    n = spec.dim(N)
    if G_full.shape != (n, n) or np.linalg.norm(G_full.conj().T @ G_full - np.eye(n), 2) > 1e-10:
        raise ValueError("G_full must be a unitary matrix on the truncated space")
    if r == 0:
        return 0.0
    _, drift = _integrate(_field_for(spec, N), as_columns(F0), [-r], cfg, pairing=G_full)
    return drift


def spectral_data_for(spec: BoundarySymbolSpec, N: int, zero_tol: float | None = None) -> SpectralData:
    """Spectral data of the x -> 0 operator D0(0)."""
    return eigendecompose(assemble(spec, N, 0.0), zero_tol)
