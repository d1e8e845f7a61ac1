"""Residue calculus for rational b-symbols ``p(tau) / (tau^2 + rho^2)^j``.

The inverse Fourier transform ``(2 pi)^{-1} lim_{phi -> 0+} int e^{i phi tau} a(tau) dtau``
of such a term closes in the upper half plane, leaving the single pole
``tau = i rho`` of order ``j``:

    i / (j-1)! * (d/dtau)^{j-1} [ p(tau) / (tau + i rho)^j ]  at  tau = i rho.

The derivative is expanded exactly with the Leibniz rule, so no quadrature
is involved.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import integrate

from .calderon_core import calderon_projector
from .operator_model import BoundarySymbolSpec, mode_rows

__all__ = [
    "MatPoly",
    "RationalSymbolTerm",
    "residue_term",
    "inverse_principal_symbol",
    "principal_calderon_symbol",
    "principal_symbol_at",
    "symbol_vs_numerics",
    "fourier_quadrature",
]


class MatPoly:
    """Polynomial in ``tau`` with ``m x m`` complex matrix coefficients.

    ``coefficients[d]`` multiplies ``tau**d``.  Trailing zero coefficients are
    dropped, so the zero polynomial has an empty coefficient list.
    """

    def __init__(self, coefficients: Sequence, m: int | None = None):
        coeffs = [np.atleast_2d(np.asarray(c, dtype=complex)) for c in coefficients]
        if m is None:
            m = coeffs[0].shape[0] if coeffs else 1
        for c in coeffs:
            if c.shape != (m, m):
                raise ValueError(f"coefficient of shape {c.shape} in a {m}x{m} matrix polynomial")
        while coeffs and not np.any(coeffs[-1]):
            coeffs.pop()
        self.coefficients = coeffs
        self.m = m

    @classmethod
    def scalar(cls, coefficients: Sequence[complex], m: int = 1) -> "MatPoly":
        return cls([c * np.eye(m) for c in coefficients], m)

    @property
    def degree(self) -> int:
        return len(self.coefficients) - 1

    def __call__(self, tau: complex) -> np.ndarray:
        out = np.zeros((self.m, self.m), dtype=complex)
        for c in reversed(self.coefficients):
            out = out * tau + c
        return out

    def derivative(self, order: int = 1) -> "MatPoly":
        coeffs = self.coefficients
        for _ in range(order):
            coeffs = [d * c for d, c in enumerate(coeffs)][1:]
        return MatPoly(coeffs, self.m)

    def __add__(self, other: "MatPoly") -> "MatPoly":
        n = max(len(self.coefficients), len(other.coefficients))
        z = np.zeros((self.m, self.m), dtype=complex)
        a = self.coefficients + [z] * (n - len(self.coefficients))
        b = other.coefficients + [z] * (n - len(other.coefficients))
        return MatPoly([x + y for x, y in zip(a, b)], self.m)

    def __rmul__(self, alpha: complex) -> "MatPoly":
        return MatPoly([alpha * c for c in self.coefficients], self.m)

    def __matmul__(self, other: "MatPoly") -> "MatPoly":
        if not self.coefficients or not other.coefficients:
            return MatPoly([], self.m)
        out = [np.zeros((self.m, self.m), dtype=complex)
               for _ in range(len(self.coefficients) + len(other.coefficients) - 1)]
        for i, a in enumerate(self.coefficients):
            for j, b in enumerate(other.coefficients):
                out[i + j] = out[i + j] + a @ b
        return MatPoly(out, self.m)

    def __repr__(self) -> str:
        return f"MatPoly(degree={self.degree}, m={self.m})"


@dataclass(frozen=True, eq=False)
class RationalSymbolTerm:
    """``numerator(tau) / (tau^2 + pole_rho^2)^power``."""

    numerator: MatPoly
    pole_rho: float
    power: int

    def __post_init__(self):
        if not self.pole_rho > 0:
            raise ValueError(f"pole_rho must be positive, got {self.pole_rho}")
        if int(self.power) < 1:
            raise ValueError(f"power must be >= 1, got {self.power}")
        if self.numerator.degree > 2 * self.power - 1:
            raise ValueError(
                f"numerator degree {self.numerator.degree} > 2*power - 1 = {2 * self.power - 1}: "
                "the Fourier integral does not converge"
            )

    def __call__(self, tau: complex) -> np.ndarray:
        return self.numerator(tau) / (tau * tau + self.pole_rho**2) ** self.power


def residue_term(t: RationalSymbolTerm) -> np.ndarray:
    """Upper-half-plane residue contribution ``i * Res_{tau = i rho} t``."""
    j, rho, p = int(t.power), float(t.pole_rho), t.numerator
    pole = 1j * rho
    base = 2j * rho  # tau + i rho at the pole
    n = j - 1
    total = np.zeros((p.m, p.m), dtype=complex)
    for q in range(n + 1):
        dq = p.derivative(q)
        if not dq.coefficients:
            break
        # (d/dtau)^{n-q} (tau + i rho)^{-j} = (-j)(-j-1)...(-j-n+q+1) (tau + i rho)^{-j-n+q}
        falling = 1.0
        for t_ in range(n - q):
            falling *= -j - t_
        total += math.comb(n, q) * falling * base ** (-j - n + q) * dq(pole)
    return 1j * total / math.factorial(n)


def inverse_principal_symbol(sigma: np.ndarray, rho: float) -> RationalSymbolTerm:
    """``(i tau + sigma)^{-1} = (-i tau + sigma) / (tau^2 + rho^2)`` for a Dirac-type ``sigma``."""
    sigma = np.atleast_2d(np.asarray(sigma, dtype=complex))
    m = sigma.shape[0]
    if not rho > 0:
        raise ValueError(f"rho must be positive, got {rho}")
    if np.linalg.norm(sigma @ sigma - rho**2 * np.eye(m), 2) > 1e-10 * rho**2:
        raise ValueError("sigma^2 != rho^2 I: operator is not Dirac-type at this covector")
    return RationalSymbolTerm(MatPoly([sigma, -1j * np.eye(m)], m), rho, 1)


def principal_calderon_symbol(sigma: np.ndarray, rho: float) -> np.ndarray:
    """``(I + sigma / rho) / 2``: projector onto the positive eigenspace of ``sigma``."""
    sigma = np.atleast_2d(np.asarray(sigma, dtype=complex))
    inverse_principal_symbol(sigma, rho)  # validation
    return 0.5 * (np.eye(sigma.shape[0]) + sigma / rho)


def principal_symbol_at(spec: BoundarySymbolSpec, eta: float) -> np.ndarray:
    """``sigma(D0)(eta)`` from the constant (harmonic 0, x-power 0) derivative coefficient."""
    A = spec.derivative_coeffs.get((0, 0))
    if A is None:
        raise ValueError("spec has no constant first-order term")
    return eta * A


def symbol_vs_numerics(spec: BoundarySymbolSpec, N: int, H0, x: float, K: int, cfg=None,
                       C: np.ndarray | None = None) -> float:
    """``||C(x)[K, K] - (I + sigma(K)/|K|)/2||`` for the diagonal mode-``K`` block.

    ``C`` may be passed to reuse a projector already computed for this ``x``.
    """
    if K == 0 or abs(K) > N - spec.max_harmonic:
        raise ValueError(f"mode K={K} must satisfy 0 < |K| <= N - {spec.max_harmonic}")
    if C is None:
        C = calderon_projector(spec, N, H0, x, cfg)
    rows = mode_rows(N, spec.rank, K)
    block = C[np.ix_(rows, rows)]
    target = principal_calderon_symbol(principal_symbol_at(spec, K), abs(K))
    return float(np.linalg.norm(block - target, 2))


def fourier_quadrature(t: RationalSymbolTerm, phis: Sequence[float] | None = None) -> np.ndarray:
    """Independent check of :func:`residue_term` by numerical Fourier integration.

    Evaluates ``(2 pi)^{-1} int e^{i phi tau} t(tau) dtau`` with QUADPACK's
    Fourier-weighted rule at each small ``phi`` and extrapolates the
    polynomial fit to ``phi = 0``.  The default ``phi`` values are
    ``(0.04, 0.02, 0.01, 0.005) / pole_rho``, since the integral varies on the
    scale ``1 / pole_rho``.
    """
    m = t.numerator.m
    rho2, j = t.pole_rho**2, int(t.power)
    if phis is None:
        phis = np.array([0.04, 0.02, 0.01, 0.005]) / t.pole_rho
    phis = np.asarray(phis, dtype=float)
    # highest power first, as np.polyval expects
    coeffs = np.array(t.numerator.coefficients[::-1]) if t.numerator.coefficients else np.zeros((1, m, m))
    vals = np.zeros((phis.size, m, m), dtype=complex)
    for a in range(m):
        for b in range(m):
            c = coeffs[:, a, b]
            even_c = np.where(np.arange(c.size)[::-1] % 2 == 0, c, 0)
            odd_c = c - even_c
            # t(tau) + t(-tau) keeps the even powers, t(tau) - t(-tau) the odd ones
            parts = []
            for poly, weight in ((even_c, "cos"), (odd_c, "sin")):
                if not np.any(poly):
                    parts.append(np.zeros(phis.size, dtype=complex))
                    continue
                re_c, im_c = 2 * poly.real, 2 * poly.imag
                col = []
                for phi in phis:
                    re = integrate.quad(lambda s: np.polyval(re_c, s) / (s * s + rho2) ** j, 0, np.inf,
                                        weight=weight, wvar=phi, limlst=200)[0] if np.any(re_c) else 0.0
                    im = integrate.quad(lambda s: np.polyval(im_c, s) / (s * s + rho2) ** j, 0, np.inf,
                                        weight=weight, wvar=phi, limlst=200)[0] if np.any(im_c) else 0.0
                    col.append(re + 1j * im)
                parts.append(np.array(col))
            vals[:, a, b] = (parts[0] + 1j * parts[1]) / (2 * np.pi)
    deg = phis.size - 1
    out = np.zeros((m, m), dtype=complex)
    for a in range(m):
        for b in range(m):
            cr = np.polyfit(phis, vals[:, a, b].real, deg)
            ci = np.polyfit(phis, vals[:, a, b].imag, deg)
            out[a, b] = cr[-1] + 1j * ci[-1]
    return out
