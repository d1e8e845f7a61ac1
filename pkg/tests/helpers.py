"""Model builders and random generators shared by the test modules."""

import numpy as np

from calderon_lab.operator_model import BoundarySymbolSpec, dirac_circle_spec, mode_rows
from calderon_lab.subspaces import orthonormalize

# product model used by the general-model and perturbed-model checks
DIRAC_MASS = 1.5
DIRAC_COS = 0.3


def dirac_model(perturbation=0.0):
    return dirac_circle_spec(mass=DIRAC_MASS, cos_sigma1=DIRAC_COS, perturbation=perturbation)


def scalar_model():
    """m = 1, D0 = -i d/dy: eigenvalue k on mode k."""
    return BoundarySymbolSpec(rank=1, derivative_coeffs={(0, 0): [[1.0]]})


def mode_pair_frame(N):
    """Cauchy data ``e_0`` plus ``(e_k + e_{-k})/sqrt 2`` for k = 1..N in the scalar model."""
    n = 2 * N + 1
    cols = [np.eye(n)[:, mode_rows(N, 1, 0)[0]]]
    for k in range(1, N + 1):
        v = np.zeros(n)
        v[mode_rows(N, 1, k)[0]] = 1.0
        v[mode_rows(N, 1, -k)[0]] = 1.0
        cols.append(v / np.sqrt(2))
    return np.array(cols, dtype=complex).T


def random_complex(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def random_hermitian(rng, n):
    A = random_complex(rng, n, n)
    return (A + A.conj().T) / 2


def random_idempotent(rng, n, k):
    """Oblique projector ``X (Y^* X)^{-1} Y^*`` of rank k."""
    X = random_complex(rng, n, k)
    Y = random_complex(rng, n, k)
    return X @ np.linalg.solve(Y.conj().T @ X, Y.conj().T)


def random_dirac_sigma(rng, rho, m=2):
    """Hermitian sigma with sigma^2 = rho^2 I: rho times a random unitary conjugate of a signature."""
    Q, _ = np.linalg.qr(random_complex(rng, m, m))
    signs = np.ones(m)
    signs[: m // 2] = -1
    return rho * (Q * signs) @ Q.conj().T


def qr_range_projector(P, rank):
    """Oracle: orthogonal projector onto range(P) from an SVD of P."""
    U, _, _ = np.linalg.svd(P)
    Q = orthonormalize(U[:, :rank]).columns
    return Q @ Q.conj().T
