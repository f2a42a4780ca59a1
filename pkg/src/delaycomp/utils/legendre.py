"""
Shifted Legendre polynomials on [0, D] and the matrices built from them.

L_k(zeta) = (-1)^k sum_i p_i^k (zeta/D)^i with
p_i^k = (-1)^i C(k, i) C(k+i, i), so that L_k(D) = 1 and L_k(0) = (-1)^k.
"""

from dataclasses import dataclass
from functools import lru_cache
from math import comb

import numpy as np
from numpy.polynomial import Polynomial

from delaycomp.errors import DomainError


@dataclass(frozen=True)
class LegendreBlock:
    """
    Legendre data entering the projection dynamics of Omega.

    Attributes
    ----------
    l : int
        Number of projections.
    D : float
        Delay.
    M : np.ndarray
        l x l strictly lower triangular derivative matrix, dL/dzeta = M L / D.
    LD : np.ndarray
        L(D), all ones.
    L0 : np.ndarray
        L(0), alternating signs.
    Q : np.ndarray
        diag(1, 3, ..., 2l - 1).
    """

    l: int
    D: float
    M: np.ndarray
    LD: np.ndarray
    L0: np.ndarray
    Q: np.ndarray


@lru_cache(maxsize=64)
def _unit_polynomial(k: int) -> Polynomial:
    """L_k as a polynomial in x = zeta / D."""
    coeffs = [(-1) ** k * (-1) ** i * comb(k, i) * comb(k + i, i) for i in range(k + 1)]
    return Polynomial(np.array(coeffs, dtype=float))


def _check(k: int, zeta, D: float) -> np.ndarray:
    if k < 0:
        msg = f"Legendre index must be >= 0, got {k}"
        raise DomainError(msg)
    if not D > 0:
        msg = f"D must be positive, got {D}"
        raise DomainError(msg)
    z = np.asarray(zeta, dtype=float)
    slack = 1e-12 * D
    if np.any(z < -slack) or np.any(z > D + slack):
        msg = f"zeta must lie in [0, {D}]"
        raise DomainError(msg)
    return z


def legendre_eval(k: int, zeta, D: float):
    """
    Evaluate the shifted Legendre polynomial L_k.

    Parameters
    ----------
    k : int
        Degree.
    zeta : float or array_like
        Position(s) in [0, D].
    D : float
        Interval length.

    Returns
    -------
    float or np.ndarray
        L_k(zeta).
    """
    z = _check(k, zeta, D)
    return _unit_polynomial(k)(z / D)


def legendre_derivative(k: int, zeta, D: float):
    """
    Analytic derivative dL_k/dzeta.

    Parameters
    ----------
    k : int
        Degree.
    zeta : float or array_like
        Position(s) in [0, D].
    D : float
        Interval length.

    Returns
    -------
    float or np.ndarray
        The derivative of the series.
    """
    z = _check(k, zeta, D)
    return _unit_polynomial(k).deriv()(z / D) / D


def legendre_vector(l: int, zeta, D: float) -> np.ndarray:
    """
    Column L(zeta) = (L_0, ..., L_{l-1}) at one or several positions.

    Parameters
    ----------
    l : int
        Number of polynomials.
    zeta : float or array_like
        Position(s) in [0, D].
    D : float
        Interval length.

    Returns
    -------
    np.ndarray
        Shape (l,) for a scalar position, (q, l) for q positions.
    """
    values = [legendre_eval(k, zeta, D) for k in range(l)]
    return np.stack(values, axis=-1)


def build_legendre_block(l: int, D: float) -> LegendreBlock:
    """
    Build M, L(D), L(0) and Q for l projections.

    Parameters
    ----------
    l : int
        Number of projections, at least 1.
    D : float
        Delay.

    Returns
    -------
    LegendreBlock
        The Legendre data.
    """
    if int(l) != l or l < 1:
        msg = f"l must be an integer >= 1, got {l}"
        raise DomainError(msg)
    if not D > 0:
        msg = f"D must be positive, got {D}"
        raise DomainError(msg)
    l = int(l)

    k, i = np.indices((l, l))
    M = np.where(i < k, (2 * i + 1) * (1 - (-1.0) ** (k + i)), 0.0)

    return LegendreBlock(
        l=l,
        D=float(D),
        M=M,
        LD=np.ones(l),
        L0=(-1.0) ** np.arange(l),
        Q=np.diag(2.0 * np.arange(l) + 1.0),
    )
