"""Success probability of the typical user as a Toeplitz-matrix norm.

The success probability with M antennas is the L1 induced norm of the
lower-triangular Toeplitz matrix

    T_M = (1/p_a) [(k_0 + 1/p_a) I - Q_M]^(-1)

where ``Q_M`` is strictly lower triangular with ``k_1, k_2, ...`` on its
sub-diagonals.  ``T_M`` is itself lower-triangular Toeplitz with a positive,
decreasing first column ``t_0, t_1, ...``, so ``p_s = sum(t)``.

The production path is the O(M^2) recurrence in :func:`t_sequence`.
:func:`matrix_success_profile` and :func:`t_closed_form` are independent
routes kept for verification.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .errors import UnsupportedSizeError

CLOSED_FORM_MAX_N = 12


def _check_pa(p_a):
    if not 0 < p_a <= 1:
        raise ValueError(f"activity probability must lie in (0, 1], got {p_a}")


@dataclass(frozen=True)
class SuccessProfile:
    coeffs: object
    p_a: float
    t: np.ndarray
    p_s: float
    lower_bound: float
    upper_bound: float

    @property
    def p_out(self):
        return 1.0 - self.p_s


def t_sequence(coeffs, p_a, M=None):
    """First column of T_M via ``t_n = c * sum_{i<n} k_{n-i} t_i``.

    Args:
        coeffs: A :class:`~smallcell.coeffs.CoefficientTable`.
        p_a: BS activity probability in (0, 1].
        M: Number of terms; defaults to the table length.

    Returns:
        Array ``[t_0, ..., t_{M-1}]``.
    """
    _check_pa(p_a)
    k = np.asarray(coeffs.k, dtype=float)
    M = len(k) if M is None else int(M)
    if M > len(k):
        raise ValueError(f"coefficient table has {len(k)} entries, {M} requested")
    denom = 1.0 + k[0] * p_a
    c = p_a / denom
    t = np.empty(M)
    t[0] = 1.0 / denom
    for n in range(1, M):
        # k[n:0:-1] = k_n, k_{n-1}, ..., k_1 paired with t_0 ... t_{n-1}
        t[n] = c * np.dot(k[n:0:-1], t[:n])
    return t


def ps_bounds(coeffs, p_a, M=None):
    """``(1/(1 + p_a B_l), 1/(1 + p_a B_u))`` bracketing the success probability."""
    _check_pa(p_a)
    B_l, B_u = bound_constants(coeffs, M)
    return 1.0 / (1.0 + p_a * B_l), 1.0 / (1.0 + p_a * B_u)


def bound_constants(coeffs, M=None):
    """Density-independent constants ``(B_l, B_u)``; equal to k_0 when M = 1."""
    k = np.asarray(coeffs.k, dtype=float)
    M = len(k) if M is None else int(M)
    i = np.arange(1, M)
    tail = k[1:M]
    B_u = k[0] - tail.sum()
    B_l = k[0] - np.sum((1.0 - i / M) * tail)
    return float(B_l), float(B_u)


def success_profile(coeffs, p_a, M=None):
    """Recurrence-based :class:`SuccessProfile` (the production path)."""
    t = t_sequence(coeffs, p_a, M)
    lo, hi = ps_bounds(coeffs, p_a, len(t))
    return SuccessProfile(coeffs, p_a, t, float(t.sum()), lo, hi)


def toeplitz_lower(first_col):
    """Dense lower-triangular Toeplitz matrix with the given first column."""
    col = np.asarray(first_col, dtype=float)
    M = len(col)
    idx = np.subtract.outer(np.arange(M), np.arange(M))
    out = np.zeros((M, M))
    mask = idx >= 0
    out[mask] = col[idx[mask]]
    return out


def q_matrix(coeffs, M=None):
    k = np.asarray(coeffs.k, dtype=float)
    M = len(k) if M is None else int(M)
    col = np.concatenate(([0.0], k[1:M]))
    return toeplitz_lower(col)


def induced_l1_norm(A):
    """Maximum absolute column sum."""
    return float(np.abs(A).sum(axis=0).max())


def matrix_success_profile(coeffs, p_a, M=None):
    """Success profile by explicitly inverting ``(k_0 + 1/p_a) I - Q_M``.

    Test oracle only.  The triangular system is solved by forward
    substitution against the identity; the norm is the true max column sum,
    which for this matrix must coincide with the first-column sum.
    """
    _check_pa(p_a)
    Q = q_matrix(coeffs, M)
    M = Q.shape[0]
    diag = coeffs.k[0] + 1.0 / p_a
    assert diag > 0, "diagonal of the Toeplitz system must be positive"
    A = diag * np.eye(M) - Q
    T = solve_triangular(A, np.eye(M), lower=True) / p_a
    t = T[:, 0].copy()
    lo, hi = ps_bounds(coeffs, p_a, M)
    return SuccessProfile(coeffs, p_a, t, induced_l1_norm(T), lo, hi)


def _partitions(n, max_part=None):
    # Yields partitions of n as {part: multiplicity}, largest parts first.
    if max_part is None:
        max_part = n
    if n == 0:
        yield {}
        return
    for part in range(min(n, max_part), 0, -1):
        for rest in _partitions(n - part, part):
            out = dict(rest)
            out[part] = out.get(part, 0) + 1
            yield out


def t_closed_form(n, coeffs, p_a):
    """t_n from the explicit multinomial sum over integer partitions of n.

    Each partition with multiplicities ``i_j`` (``sum j*i_j = n``) and
    ``i = sum i_j`` parts contributes
    ``multinomial(i; i_1..i_n) * (k_0 c)^i * prod (k_j/k_0)^(i_j)``
    with ``c = p_a / (1 + k_0 p_a)``.  Exact integer multinomials; the
    enumeration is exponential so n is capped at 12.
    """
    _check_pa(p_a)
    if int(n) != n or n < 0:
        raise ValueError(f"index must be a non-negative integer, got {n}")
    n = int(n)
    if n > CLOSED_FORM_MAX_N:
        raise UnsupportedSizeError(
            f"closed form enumerates partitions; n={n} exceeds {CLOSED_FORM_MAX_N}")
    k = np.asarray(coeffs.k, dtype=float)
    if n >= len(k):
        raise ValueError(f"need k_{n} but the table has {len(k)} entries")
    k0 = k[0]
    t0 = 1.0 / (1.0 + k0 * p_a)
    if n == 0:
        return t0
    scaled_c = k0 * p_a / (1.0 + k0 * p_a)
    total = 0.0
    for mult in _partitions(n):
        i = sum(mult.values())
        coef = math.factorial(i)
        for m in mult.values():
            coef //= math.factorial(m)
        term = coef * scaled_c**i
        for j, m in mult.items():
            term *= (k[j] / k0) ** m
        total += term
    return t0 * total


def toeplitz_square_first_column(t):
    """First column of T^2 for lower-triangular Toeplitz T (truncated convolution)."""
    t = np.asarray(t, dtype=float)
    return np.convolve(t, t)[: len(t)]


def norm_derivative_wrt_pa(coeffs, p_a, M=None):
    """d p_s / d p_a through ``(||T^2||_1 - ||T||_1) / p_a``. Never positive."""
    _check_pa(p_a)
    t = t_sequence(coeffs, p_a, M)
    sq = toeplitz_square_first_column(t)
    return float((sq.sum() - t.sum()) / p_a)
