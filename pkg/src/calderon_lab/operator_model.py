"""Fourier-truncated boundary operators on the circle.

The boundary operator of the cylinder is

    D0(x) = sum_p x**p * sum_l [ e^{ily} A_{l,p} (-i d/dy) + e^{ily} B_{l,p} ]

acting on C^m-valued functions of y in S^1.  It is realized on the span of
``e^{iky} (x) e_j`` for ``|k| <= N``; row ``(k + N) * m + j`` of every
assembled matrix belongs to mode ``k`` and fiber index ``j``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

__all__ = [
    "BoundarySymbolSpec",
    "TruncatedOperator",
    "SpectralData",
    "SpecError",
    "assemble",
    "assemble_powers",
    "eigendecompose",
    "spectral_projectors",
    "lift_fiber_matrix",
    "mode_rows",
    "dirac_circle_spec",
    "constant_spec",
    "STANDARD_G",
]

STANDARD_G = np.array([[0.0, -1.0], [1.0, 0.0]], dtype=complex)

HERMITIAN_TOL = 1e-12
UNITARY_TOL = 1e-12


class SpecError(ValueError):
    """Invalid boundary symbol data."""


def _as_matrix(a, m: int, where: str) -> np.ndarray:
    arr = np.asarray(a, dtype=complex)
    if arr.ndim == 0 and m == 1:
        arr = arr.reshape(1, 1)
    if arr.shape != (m, m):
        raise SpecError(f"{where}: expected a {m}x{m} matrix, got shape {arr.shape}")
    return arr


def _normalize_coeffs(coeffs, m: int, name: str) -> dict[tuple[int, int], np.ndarray]:
    out: dict[tuple[int, int], np.ndarray] = {}
    for key, mat in dict(coeffs or {}).items():
        l, p = (int(key[0]), int(key[1]))
        if p < 0:
            raise SpecError(f"{name}{(l, p)}: negative x-power")
        arr = _as_matrix(mat, m, f"{name}{(l, p)}")
        if (l, p) in out:
            arr = out[(l, p)] + arr
        out[(l, p)] = arr
    return out


@dataclass(frozen=True, eq=False)
class BoundarySymbolSpec:
    """Coefficient data of D0(x) together with the bundle map G.

    Parameters
    ----------
    rank : int
        Fiber dimension m.
    derivative_coeffs, potential_coeffs : mapping
        ``(harmonic l, x_power p) -> m x m`` matrix.  Both must satisfy
        ``coeff(-l, p) == coeff(l, p)^*``.
    G : (m, m) array_like, optional
        Unitary bundle map in ``D = G (x d/dx + D0(x))``.  Defaults to
        ``[[0, -1], [1, 0]]`` for ``m = 2`` and the identity otherwise.
    max_x_power : int, optional
        Truncation order of the x-expansion; inferred when omitted.
    symplectic : bool
        Require ``G^* = -G``, ``G^2 = -I`` and ``G D0(x) = -D0(x) G``.
    """

    rank: int
    derivative_coeffs: Mapping = field(default_factory=dict)
    potential_coeffs: Mapping = field(default_factory=dict)
    G: np.ndarray | None = None
    max_x_power: int | None = None
    symplectic: bool = False

    def __post_init__(self):
        m = int(self.rank)
        if m < 1:
            raise SpecError(f"rank must be positive, got {self.rank}")
        object.__setattr__(self, "rank", m)
        der = _normalize_coeffs(self.derivative_coeffs, m, "derivative_coeffs")
        pot = _normalize_coeffs(self.potential_coeffs, m, "potential_coeffs")
        object.__setattr__(self, "derivative_coeffs", der)
        object.__setattr__(self, "potential_coeffs", pot)

        if self.G is None:
            G = STANDARD_G.copy() if m == 2 else np.eye(m, dtype=complex)
        else:
            G = _as_matrix(self.G, m, "G")
        if np.linalg.norm(G.conj().T @ G - np.eye(m), 2) > UNITARY_TOL * 10:
            raise SpecError("G is not unitary")
        object.__setattr__(self, "G", G)

        powers = [p for (_, p) in list(der) + list(pot)]
        inferred = max(powers, default=0)
        if self.max_x_power is None:
            object.__setattr__(self, "max_x_power", inferred)
        elif inferred > self.max_x_power:
            raise SpecError(
                f"coefficient with x-power {inferred} exceeds max_x_power={self.max_x_power}"
            )

        for name, coeffs in (("derivative_coeffs", der), ("potential_coeffs", pot)):
            for (l, p), a in coeffs.items():
                partner = coeffs.get((-l, p), np.zeros_like(a))
                scale = max(1.0, np.abs(a).max())
                if np.abs(partner - a.conj().T).max() > HERMITIAN_TOL * scale:
                    raise SpecError(
                        f"{name}: coefficient at (l={l}, p={p}) violates "
                        f"coeff(-l, p) = coeff(l, p)^*"
                    )

        if self.symplectic:
            I = np.eye(m)
            if np.abs(G.conj().T + G).max() > UNITARY_TOL or np.abs(G @ G + I).max() > UNITARY_TOL:
                raise SpecError("symplectic spec requires G^* = -G and G^2 = -I")
            for name, coeffs in (("derivative_coeffs", der), ("potential_coeffs", pot)):
                for (l, p), a in coeffs.items():
                    if np.abs(G @ a + a @ G).max() > HERMITIAN_TOL * max(1.0, np.abs(a).max()):
                        raise SpecError(
                            f"symplectic spec: {name} at (l={l}, p={p}) does not anticommute with G"
                        )

    @property
    def max_harmonic(self) -> int:
        keys = list(self.derivative_coeffs) + list(self.potential_coeffs)
        return max((abs(l) for (l, _) in keys), default=0)

    @property
    def is_product(self) -> bool:
        """True when D0 does not depend on x."""
        for coeffs in (self.derivative_coeffs, self.potential_coeffs):
            for (_, p), a in coeffs.items():
                if p > 0 and np.any(a != 0):
                    return False
        return True

    def product_part(self) -> "BoundarySymbolSpec":
        """The x -> 0 limit operator as a spec of its own."""
        return BoundarySymbolSpec(
            rank=self.rank,
            derivative_coeffs={k: v for k, v in self.derivative_coeffs.items() if k[1] == 0},
            potential_coeffs={k: v for k, v in self.potential_coeffs.items() if k[1] == 0},
            G=self.G,
            max_x_power=0,
            symplectic=self.symplectic,
        )

    def dim(self, N: int) -> int:
        return self.rank * (2 * N + 1)


@dataclass(frozen=True, eq=False)
class TruncatedOperator:
    N: int
    rank: int
    entries: np.ndarray

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @property
    def modes(self) -> np.ndarray:
        """Mode number k of every row."""
        return np.repeat(np.arange(-self.N, self.N + 1), self.rank)

    def mode_index(self, row: int) -> tuple[int, int]:
        block, j = divmod(int(row), self.rank)
        return block - self.N, j

    def block(self, k: int, kp: int) -> np.ndarray:
        a = mode_rows(self.N, self.rank, k)
        b = mode_rows(self.N, self.rank, kp)
        return self.entries[np.ix_(a, b)]


def mode_rows(N: int, m: int, k: int) -> np.ndarray:
    """Row indices of mode ``k`` in a truncation of cutoff ``N`` and rank ``m``."""
    if abs(k) > N:
        raise IndexError(f"mode {k} outside truncation |k| <= {N}")
    start = (k + N) * m
    return np.arange(start, start + m)


def lift_fiber_matrix(a: np.ndarray, N: int) -> np.ndarray:
    """Block-diagonal lift of a fiber map to the truncated space."""
    return np.kron(np.eye(2 * N + 1), np.asarray(a, dtype=complex))


def _assemble_power(spec: BoundarySymbolSpec, N: int, p: int) -> np.ndarray:
    m = spec.rank
    n = m * (2 * N + 1)
    out = np.zeros((n, n), dtype=complex)
    ks = np.arange(-N, N + 1)
    # -i d/dy is applied in its symmetrized (Weyl) form: block (k, k') of
    # a(y) (-i d/dy) is A_{k-k'} (k + k') / 2, which equals k when a is constant.
    for (l, pp), a in spec.derivative_coeffs.items():
        if pp != p:
            continue
        for i, k in enumerate(ks):
            kp = k - l
            if -N <= kp <= N:
                j = kp + N
                out[i * m:(i + 1) * m, j * m:(j + 1) * m] += a * (0.5 * (k + kp))
    for (l, pp), b in spec.potential_coeffs.items():
        if pp != p:
            continue
        for i, k in enumerate(ks):
            kp = k - l
            if -N <= kp <= N:
                j = kp + N
                out[i * m:(i + 1) * m, j * m:(j + 1) * m] += b
    return out


def assemble_powers(spec: BoundarySymbolSpec, N: int) -> list[np.ndarray]:
    """Matrices M_p with D0(x) = sum_p x**p M_p on the truncation."""
    if N < spec.max_harmonic:
        raise ValueError(f"mode cutoff N={N} is below the largest harmonic {spec.max_harmonic}")
    return [_assemble_power(spec, N, p) for p in range(spec.max_x_power + 1)]


def assemble(spec: BoundarySymbolSpec, N: int, x: float = 0.0) -> TruncatedOperator:
    """Truncated matrix of D0(x) in the Fourier basis ``{e^{iky} e_j}``."""
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x must lie in [0, 1], got {x}")
    mats = assemble_powers(spec, N)
    A = mats[0].copy()
    for p, M in enumerate(mats[1:], start=1):
        A += x**p * M
    return TruncatedOperator(N=N, rank=spec.rank, entries=A)


@dataclass(frozen=True, eq=False)
class SpectralData:
    """Ascending eigenvalues, paired unitary eigenvectors, zero tolerance."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    zero_tol: float

    def __post_init__(self):
        lam = np.asarray(self.eigenvalues, dtype=float)
        V = np.asarray(self.eigenvectors, dtype=complex)
        if V.shape != (lam.size, lam.size):
            raise ValueError("eigenvector matrix does not match the eigenvalue count")
        if np.any(np.diff(lam) < 0):
            raise ValueError("eigenvalues must be sorted ascending")
        if not self.zero_tol > 0:
            raise ValueError("zero_tol must be positive")
        object.__setattr__(self, "eigenvalues", lam)
        object.__setattr__(self, "eigenvectors", V)

    @property
    def dim(self) -> int:
        return self.eigenvalues.size

    @property
    def negative(self) -> np.ndarray:
        return self.eigenvalues < -self.zero_tol

    @property
    def zero(self) -> np.ndarray:
        return np.abs(self.eigenvalues) <= self.zero_tol

    @property
    def positive(self) -> np.ndarray:
        return self.eigenvalues > self.zero_tol

    def operator(self) -> np.ndarray:
        V = self.eigenvectors
        return (V * self.eigenvalues) @ V.conj().T

    def smallest_nonzero(self) -> float:
        nz = np.abs(self.eigenvalues[~self.zero])
        return float(nz.min()) if nz.size else float("inf")

    @classmethod
    def from_diagonal(cls, values, zero_tol: float = 1e-9) -> "SpectralData":
        """Spectral data of ``diag(values)`` on the standard basis."""
        values = np.asarray(values, dtype=float)
        order = np.argsort(values, kind="stable")
        return cls(values[order], np.eye(values.size, dtype=complex)[:, order], zero_tol)


def eigendecompose(T, zero_tol: float | None = None) -> SpectralData:
    """Hermitian eigendecomposition with ascending, deterministically ordered output.

    ``zero_tol`` defaults to ``1e-9 * ||T||``.
    """
    A = T.entries if isinstance(T, TruncatedOperator) else np.asarray(T, dtype=complex)
    A = np.asarray(A, dtype=complex)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    scale = np.linalg.norm(A, 2) if A.size else 0.0
    if np.linalg.norm(A - A.conj().T, 2) > HERMITIAN_TOL * max(scale, 1.0):
        raise ValueError("operator is not Hermitian within tolerance")
    try:
        lam, V = np.linalg.eigh(A)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(
            f"Hermitian eigensolver did not converge on a {A.shape[0]}x{A.shape[0]} matrix: {exc}"
        ) from exc
    order = np.argsort(lam, kind="stable")
    lam, V = lam[order], V[:, order]
    if zero_tol is None:
        zero_tol = 1e-9 * (scale if scale > 0 else 1.0)
    return SpectralData(lam, V, float(zero_tol))


def spectral_projectors(S: SpectralData) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Orthogonal projectors ``(Pi_<, Pi_0, Pi_>)``.

    An eigenvalue is classified as zero when it lies in the closed interval
    ``[-zero_tol, zero_tol]``.
    """
    V = S.eigenvectors
    out = []
    for mask in (S.negative, S.zero, S.positive):
        W = V[:, mask]
        out.append(W @ W.conj().T)
    return tuple(out)


# -- canonical model builders ------------------------------------------------

SIGMA1 = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA3 = np.array([[1, 0], [0, -1]], dtype=complex)


def dirac_circle_spec(
    mass: float = 0.0,
    cos_sigma1: float = 0.0,
    cos_sigma3: float = 0.0,
    perturbation: float = 0.0,
    symplectic: bool = True,
) -> BoundarySymbolSpec:
    """Rank-2 Dirac-type model ``sigma3 (-i d/dy) + sigma1 (mass + 2 a cos y) + 2 b cos(y) sigma3``.

    ``perturbation`` adds ``x * perturbation * (sigma1 + sigma3 cos y) / ||.||``,
    an x-power-1 term of operator norm ``perturbation`` on the potential part.
    """
    der = {(0, 0): SIGMA3}
    pot: dict[tuple[int, int], np.ndarray] = {}
    if mass:
        pot[(0, 0)] = mass * SIGMA1
    if cos_sigma1:
        pot[(1, 0)] = cos_sigma1 * SIGMA1
        pot[(-1, 0)] = cos_sigma1 * SIGMA1
    if cos_sigma3:
        pot[(1, 0)] = pot.get((1, 0), 0) + cos_sigma3 * SIGMA3
        pot[(-1, 0)] = pot.get((-1, 0), 0) + cos_sigma3 * SIGMA3
    if perturbation:
        # sup_y ||sigma1 + sigma3 cos y|| = sqrt(2)
        c = perturbation / np.sqrt(2.0)
        pot[(0, 1)] = c * SIGMA1
        pot[(1, 1)] = 0.5 * c * SIGMA3
        pot[(-1, 1)] = 0.5 * c * SIGMA3
    return BoundarySymbolSpec(rank=2, derivative_coeffs=der, potential_coeffs=pot, symplectic=symplectic)


def constant_spec(matrix, G=None, symplectic: bool = False) -> BoundarySymbolSpec:
    """x- and y-independent zeroth-order model; with ``N = 0`` it is just ``matrix``."""
    A = np.atleast_2d(np.asarray(matrix, dtype=complex))
    return BoundarySymbolSpec(rank=A.shape[0], potential_coeffs={(0, 0): A}, G=G, symplectic=symplectic)
