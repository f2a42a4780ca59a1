"""
Dense linear-algebra kernels shared by every other module.

All functions are pure: they take array-likes, validate them and return new
``numpy`` arrays. The heavy lifting is delegated to ``scipy.linalg`` and
``numpy.linalg``; this module adds the checks, the error reporting and the
few compositions (Van Loan moments, Newton-Kleinman, Ackermann) the toolkit
needs.
"""

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from delaycomp.errors import (
    ControllabilityError,
    ConvergenceError,
    DimensionError,
    DomainError,
    NotHurwitzError,
    SingularMatrixError,
)

PIVOT_TOL = 1e-13
HURWITZ_TOL = 1e-10
RANK_TOL = 1e-10
CARE_TOL = 1e-9
CARE_MAX_ITER = 50


@dataclass(frozen=True)
class SymEigResult:
    """
    Spectral decomposition of a symmetric matrix.

    Attributes
    ----------
    eigenvalues : np.ndarray
        Real eigenvalues sorted ascending.
    eigenvectors : np.ndarray
        Orthogonal matrix whose columns are the matching eigenvectors.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def as_matrix(A, name: str = "matrix") -> np.ndarray:
    """
    Convert an array-like to a finite 2-D float array.

    Parameters
    ----------
    A : array_like
        Scalar, vector or matrix. Scalars become 1x1 and vectors become
        columns.
    name : str
        Name used in error messages.

    Returns
    -------
    np.ndarray
        The validated matrix.
    """
    M = np.array(A, dtype=float)
    if M.ndim == 0:
        M = M.reshape(1, 1)
    elif M.ndim == 1:
        M = M.reshape(-1, 1)
    elif M.ndim != 2:
        msg = f"{name} must be 2-D, got {M.ndim} dimensions"
        raise DimensionError(msg)
    if M.size == 0:
        msg = f"{name} must have at least one row and one column"
        raise DimensionError(msg)
    if not np.all(np.isfinite(M)):
        msg = f"{name} has non-finite entries"
        raise DomainError(msg)
    return M


def _as_square(A, name: str = "matrix") -> np.ndarray:
    M = as_matrix(A, name)
    if M.shape[0] != M.shape[1]:
        msg = f"{name} must be square, got shape {M.shape}"
        raise DimensionError(msg)
    return M


def mat_exp(A, t: float = 1.0) -> np.ndarray:
    """
    Matrix exponential e^{At}.

    Uses ``scipy.linalg.expm``: scaling and squaring with a diagonal Pade
    approximant of order up to 13 (Al-Mohy and Higham theta table).

    Parameters
    ----------
    A : array_like
        Square matrix.
    t : float
        Time scaling.

    Returns
    -------
    np.ndarray
        e^{At}.
    """
    M = _as_square(A, "A")
    if not np.isfinite(t):
        msg = f"t must be finite, got {t}"
        raise DomainError(msg)
    return scipy.linalg.expm(M * t)


def expm_moment_integrals(A, h: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Exponential and its first two moment integrals over [0, h].

    The three outputs come from a single exponential of the block matrix

        [[A, I, 0],
         [0, 0, I],
         [0, 0, 0]] * h

    whose (1,2) block is G1 and whose (1,3) block is h*G1 - G2.

    Parameters
    ----------
    A : array_like
        Square matrix.
    h : float
        Positive interval length.

    Returns
    -------
    F : np.ndarray
        e^{Ah}.
    G1 : np.ndarray
        Integral of e^{As} over [0, h].
    G2 : np.ndarray
        Integral of s e^{As} over [0, h].
    """
    M = _as_square(A, "A")
    if not (np.isfinite(h) and h > 0):
        msg = f"h must be positive, got {h}"
        raise DomainError(msg)
    n = M.shape[0]
    eye = np.eye(n)
    zero = np.zeros((n, n))
    block = np.block(
        [
            [M, eye, zero],
            [zero, zero, eye],
            [zero, zero, zero],
        ]
    )
    E = scipy.linalg.expm(block * h)
    F = E[:n, :n]
    G1 = E[:n, n : 2 * n]
    G2 = h * G1 - E[:n, 2 * n :]
    return F, G1, G2


def sym_eig(S) -> SymEigResult:
    """
    Spectral decomposition of a symmetric matrix.

    The input is symmetrized as (S + S^T)/2 and decomposed with LAPACK
    (``numpy.linalg.eigh``).

    Parameters
    ----------
    S : array_like
        Symmetric matrix.

    Returns
    -------
    SymEigResult
        Ascending eigenvalues and orthogonal eigenvectors.
    """
    M = _as_square(S, "S")
    eigenvalues, eigenvectors = np.linalg.eigh(0.5 * (M + M.T))
    return SymEigResult(eigenvalues=eigenvalues, eigenvectors=eigenvectors)


def factorize(A) -> tuple[np.ndarray, np.ndarray]:
    """
    Partial-pivot LU factorization with a singularity check.

    Parameters
    ----------
    A : array_like
        Square matrix.

    Returns
    -------
    tuple
        The ``(lu, piv)`` pair of ``scipy.linalg.lu_factor``.

    Raises
    ------
    SingularMatrixError
        If a pivot magnitude is below ``PIVOT_TOL * ||A||``.
    """
    M = _as_square(A, "A")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(M, check_finite=False)
    threshold = PIVOT_TOL * max(np.linalg.norm(M, ord=np.inf), np.finfo(float).tiny)
    small = np.flatnonzero(np.abs(np.diag(lu)) < threshold)
    if small.size:
        pivot = int(small[0])
        msg = f"Matrix is singular to working precision (pivot {pivot})"
        raise SingularMatrixError(msg, pivot=pivot)
    return lu, piv


def solve_factored(lu_piv: tuple[np.ndarray, np.ndarray], B) -> np.ndarray:
    """
    Solve with a factorization returned by `factorize`.

    Parameters
    ----------
    lu_piv : tuple
        Output of `factorize`.
    B : array_like
        Right-hand side (vector or matrix).

    Returns
    -------
    np.ndarray
        The solution with the shape of ``B``.
    """
    return scipy.linalg.lu_solve(lu_piv, np.asarray(B, dtype=float), check_finite=False)


def solve_linear(A, B) -> np.ndarray:
    """
    Solve A X = B by partial-pivot LU.

    Parameters
    ----------
    A : array_like
        Square nonsingular matrix.
    B : array_like
        Right-hand side with as many rows as ``A``.

    Returns
    -------
    np.ndarray
        The solution X.
    """
    M = _as_square(A, "A")
    rhs = as_matrix(B, "B")
    if rhs.shape[0] != M.shape[0]:
        msg = f"A is {M.shape} but B has {rhs.shape[0]} rows"
        raise DimensionError(msg)
    return solve_factored(factorize(M), rhs)


def spectral_abscissa(A) -> float:
    """
    Largest real part of the eigenvalues of A.

    Parameters
    ----------
    A : array_like
        Square matrix.

    Returns
    -------
    float
        max Re(lambda).
    """
    return float(np.max(np.linalg.eigvals(_as_square(A, "A")).real))


def is_hurwitz(A, tol: float = HURWITZ_TOL) -> bool:
    """
    Check that every eigenvalue of A has real part below -tol.

    Parameters
    ----------
    A : array_like
        Square matrix.
    tol : float
        Stability margin.

    Returns
    -------
    bool
        True when A is Hurwitz with the given margin.
    """
    return spectral_abscissa(A) < -tol


def solve_lyapunov(F, W) -> np.ndarray:
    """
    Solve F^T X + X F + W = 0 for Hurwitz F.

    Parameters
    ----------
    F : array_like
        Hurwitz matrix.
    W : array_like
        Symmetric matrix of the same size.

    Returns
    -------
    np.ndarray
        The symmetric solution X.
    """
    Fm = _as_square(F, "F")
    Wm = _as_square(W, "W")
    if Fm.shape != Wm.shape:
        msg = f"F is {Fm.shape} but W is {Wm.shape}"
        raise DimensionError(msg)
    if not is_hurwitz(Fm):
        msg = f"F is not Hurwitz (spectral abscissa {spectral_abscissa(Fm):.3e})"
        raise NotHurwitzError(msg)
    X = scipy.linalg.solve_continuous_lyapunov(Fm.T, -0.5 * (Wm + Wm.T))
    return 0.5 * (X + X.T)


def controllability_matrix(A, B) -> np.ndarray:
    """
    Controllability matrix [B, AB, ..., A^{n-1}B].

    Parameters
    ----------
    A : array_like
        State matrix.
    B : array_like
        Input matrix.

    Returns
    -------
    np.ndarray
        The n x (n m) controllability matrix.
    """
    Am = _as_square(A, "A")
    Bm = as_matrix(B, "B")
    if Bm.shape[0] != Am.shape[0]:
        msg = f"A is {Am.shape} but B has {Bm.shape[0]} rows"
        raise DimensionError(msg)
    blocks = [Bm]
    for _ in range(1, Am.shape[0]):
        blocks.append(Am @ blocks[-1])
    return np.hstack(blocks)


def is_controllable(A, B, tol: float = RANK_TOL) -> bool:
    """
    Rank test of the controllability matrix by pivoted QR.

    Parameters
    ----------
    A : array_like
        State matrix.
    B : array_like
        Input matrix.
    tol : float
        Relative threshold on the diagonal of R.

    Returns
    -------
    bool
        True when (A, B) is controllable.
    """
    ctrb = controllability_matrix(A, B)
    _, R, _ = scipy.linalg.qr(ctrb, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    if diag.size == 0 or diag[0] == 0:
        return False
    rank = int(np.sum(diag > tol * diag[0]))
    return rank == ctrb.shape[0]


def pole_place_siso(A, B, poles) -> np.ndarray:
    """
    Single-input pole placement by Ackermann's formula.

    The gain is returned with the convention u = K x, so the eigenvalues of
    A + B K are the requested poles.

    Parameters
    ----------
    A : array_like
        n x n state matrix.
    B : array_like
        n x 1 input column.
    poles : sequence of complex
        n poles, closed under complex conjugation.

    Returns
    -------
    np.ndarray
        The 1 x n gain row K.
    """
    Am = _as_square(A, "A")
    Bm = as_matrix(B, "B")
    n = Am.shape[0]
    if Bm.shape != (n, 1):
        msg = f"B must be a {n}x1 column, got shape {Bm.shape}"
        raise DimensionError(msg)

    poles = np.asarray(poles, dtype=complex).ravel()
    if poles.size != n:
        msg = f"Expected {n} poles, got {poles.size}"
        raise DomainError(msg)
    if not np.allclose(np.sort_complex(poles), np.sort_complex(poles.conj())):
        msg = f"Poles {poles} are not closed under conjugation"
        raise DomainError(msg)
    if not is_controllable(Am, Bm):
        msg = "Pair (A, B) is not controllable; pole placement is impossible"
        raise ControllabilityError(msg)

    # Real characteristic polynomial, evaluated at A by Horner's rule
    coeffs = np.real(np.poly(poles))
    p_of_A = np.zeros((n, n))
    for c in coeffs:
        p_of_A = p_of_A @ Am + c * np.eye(n)

    ctrb = controllability_matrix(Am, Bm)
    return -solve_linear(ctrb, p_of_A)[-1:, :]


def care_residual(A, B, Qw, Rw, P) -> np.ndarray:
    """
    Residual A^T P + P A - P B Rw^{-1} B^T P + Qw of the Riccati equation.

    Parameters
    ----------
    A, B, Qw, Rw, P : array_like
        Riccati data and candidate solution.

    Returns
    -------
    np.ndarray
        The residual matrix.
    """
    Bm = as_matrix(B, "B")
    gain_term = Bm @ solve_linear(Rw, Bm.T)
    return A.T @ P + P @ A - P @ gain_term @ P + Qw


def solve_care(
    A,
    B,
    Qw,
    Rw,
    tol: float = CARE_TOL,
    max_iter: int = CARE_MAX_ITER,
) -> tuple[np.ndarray, np.ndarray]:
    """
    Stabilizing solution of the continuous algebraic Riccati equation.

    Newton-Kleinman iteration: each step solves a Lyapunov equation for the
    current closed loop and updates the gain K = -Rw^{-1} B^T P. The initial
    gain is zero when A is already Hurwitz, and otherwise the Ackermann gain
    placing the closed-loop poles at -1, -2, ..., -n.

    Parameters
    ----------
    A : array_like
        n x n state matrix.
    B : array_like
        n x m input matrix.
    Qw : array_like
        Symmetric positive semidefinite state weight.
    Rw : array_like
        Symmetric positive definite input weight.
    tol : float
        Residual tolerance (Frobenius norm, relative to max(1, ||P||)).
    max_iter : int
        Iteration budget.

    Returns
    -------
    P : np.ndarray
        Symmetric positive semidefinite solution.
    K : np.ndarray
        The gain row -Rw^{-1} B^T P, with A + B K Hurwitz.
    """
    Am = _as_square(A, "A")
    Bm = as_matrix(B, "B")
    Qm = _as_square(Qw, "Qw")
    Rm = _as_square(Rw, "Rw")
    n, m = Bm.shape
    if Bm.shape[0] != Am.shape[0] or Qm.shape != Am.shape or Rm.shape != (m, m):
        msg = (
            f"Inconsistent Riccati data: A {Am.shape}, B {Bm.shape}, "
            f"Qw {Qm.shape}, Rw {Rm.shape}"
        )
        raise DimensionError(msg)

    if is_hurwitz(Am):
        K = np.zeros((m, n))
    else:
        K = pole_place_siso(Am, Bm, -np.arange(1, n + 1, dtype=float))

    P = np.zeros((n, n))
    for _ in range(max_iter):
        closed = Am + Bm @ K
        P = solve_lyapunov(closed, Qm + K.T @ Rm @ K)
        K = -solve_linear(Rm, Bm.T @ P)
        residual = np.linalg.norm(care_residual(Am, Bm, Qm, Rm, P))
        if residual < tol * max(1.0, np.linalg.norm(P)):
            return P, K

    msg = f"Newton-Kleinman did not converge in {max_iter} steps (residual {residual:.3e})"
    raise ConvergenceError(msg)


def gauss_legendre(n_points: int) -> tuple[np.ndarray, np.ndarray]:
    """
    Gauss-Legendre nodes and weights mapped to [0, 1].

    Parameters
    ----------
    n_points : int
        Number of nodes.

    Returns
    -------
    nodes : np.ndarray
        Nodes in (0, 1).
    weights : np.ndarray
        Weights summing to one.
    """
    x, w = np.polynomial.legendre.leggauss(n_points)
    return 0.5 * (x + 1.0), 0.5 * w
