"""
Structure-preserving finite-element approximation of the transport equation.

The transport equation u_t = u_zeta on [0, D] with inflow u(D, t) = U(t) is
projected on equidistant piecewise-linear (hat) functions. The resulting ODE

    E_d d/dt u_d = A_d u_d + B_d U

keeps the scattering structure of the PDE, A_d + A_d^T = -e_1 e_1^T - e_N e_N^T,
so it is stable for every order N.
"""

from collections.abc import Callable
from dataclasses import dataclass

import numpy as np

from delaycomp.errors import DimensionError, DomainError, SingularMatrixError
from delaycomp.utils.densela import gauss_legendre, solve_linear

GAUSS_POINTS_PER_ELEMENT = 8


@dataclass(frozen=True)
class BasisConfig:
    """
    Equidistant hat basis on [0, D].

    Parameters
    ----------
    N : int
        Number of basis functions (nodes), at least 2.
    D : float
        Length of the spatial domain, i.e. the input delay in seconds.

    Attributes
    ----------
    h : float
        Element length D / (N - 1), computed once.
    """

    N: int
    D: float

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 2:
            msg = f"N must be an integer >= 2, got {self.N}"
            raise DomainError(msg)
        if not (np.isfinite(self.D) and self.D > 0):
            msg = f"D must be positive, got {self.D}"
            raise DomainError(msg)
        object.__setattr__(self, "N", int(self.N))
        object.__setattr__(self, "D", float(self.D))

    @property
    def h(self) -> float:
        return self.D / (self.N - 1)


@dataclass(frozen=True)
class FemMatrices:
    """
    Matrices of the finite-element transport ODE.

    Attributes
    ----------
    E_d : np.ndarray
        N x N symmetric positive definite mass matrix.
    A_d : np.ndarray
        N x N transport matrix.
    B_d : np.ndarray
        N x 1 inflow column phi(D).
    """

    E_d: np.ndarray
    A_d: np.ndarray
    B_d: np.ndarray


def node_positions(cfg: BasisConfig) -> np.ndarray:
    """
    Node positions j*h, j = 0, ..., N-1.

    Parameters
    ----------
    cfg : BasisConfig
        Basis configuration.

    Returns
    -------
    np.ndarray
        The N node positions.
    """
    return np.arange(cfg.N) * cfg.h


def _check_position(cfg: BasisConfig, zeta: np.ndarray) -> np.ndarray:
    zeta = np.asarray(zeta, dtype=float)
    slack = 1e-12 * cfg.D
    if np.any(zeta < -slack) or np.any(zeta > cfg.D + slack):
        msg = f"zeta must lie in [0, {cfg.D}]"
        raise DomainError(msg)
    return np.clip(zeta, 0.0, cfg.D)


def _element_of(cfg: BasisConfig, zeta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Element index and local coordinate in [0, 1] of each position."""
    scaled = zeta / cfg.h
    element = np.minimum(np.floor(scaled).astype(int), cfg.N - 2)
    return element, scaled - element


def hat_basis_eval(cfg: BasisConfig, zeta: float) -> np.ndarray:
    """
    Evaluate the hat basis phi(zeta).

    Parameters
    ----------
    cfg : BasisConfig
        Basis configuration.
    zeta : float
        Position in [0, D].

    Returns
    -------
    np.ndarray
        The N values phi_j(zeta); nonnegative, at most two nonzero, summing
        to one.
    """
    z = _check_position(cfg, zeta)
    element, local = _element_of(cfg, np.atleast_1d(z))
    phi = np.zeros(cfg.N)
    phi[element[0]] = 1.0 - local[0]
    phi[element[0] + 1] = local[0]
    return phi


def build_fem_matrices(cfg: BasisConfig) -> FemMatrices:
    """
    Assemble E_d, A_d and B_d for the hat basis.

    E_d = integral of phi phi^T, A_d = -integral of phi' phi^T - phi(0) phi(0)^T
    and B_d = phi(D), in closed form.

    Parameters
    ----------
    cfg : BasisConfig
        Basis configuration.

    Returns
    -------
    FemMatrices
        The three matrices.
    """
    N, h = cfg.N, cfg.h

    main = np.full(N, 4.0)
    main[0] = main[-1] = 2.0
    off = np.ones(N - 1)
    E_d = h / 6.0 * (np.diag(main) + np.diag(off, 1) + np.diag(off, -1))

    A_d = 0.5 * (np.diag(off, 1) - np.diag(off, -1))
    A_d[0, 0] = -0.5
    A_d[-1, -1] = -0.5

    B_d = np.zeros((N, 1))
    B_d[-1, 0] = 1.0
    return FemMatrices(E_d=E_d, A_d=A_d, B_d=B_d)


def moment_matrix(
    cfg: BasisConfig,
    f: Callable[[np.ndarray], np.ndarray],
    n_points: int = GAUSS_POINTS_PER_ELEMENT,
) -> np.ndarray:
    """
    Integral of f(zeta) phi(zeta)^T over [0, D].

    Composite Gauss-Legendre quadrature, ``n_points`` per element.

    Parameters
    ----------
    cfg : BasisConfig
        Basis configuration.
    f : callable
        Vectorized function mapping an array of q positions to an array of
        shape (q,) or (q, p).
    n_points : int
        Gauss points per element.

    Returns
    -------
    np.ndarray
        Array of shape (p, N) (p = 1 for scalar f).
    """
    nodes, weights = gauss_legendre(n_points)
    h = cfg.h
    starts = node_positions(cfg)[:-1]
    zeta = (starts[:, None] + h * nodes[None, :]).ravel()
    values = np.asarray(f(zeta), dtype=float).reshape(zeta.size, -1)
    values = values.reshape(cfg.N - 1, n_points, -1)

    w = h * weights
    # Left node gets (1 - s), right node gets s on every element
    left = np.einsum("q,eqp->pe", w * (1.0 - nodes), values)
    right = np.einsum("q,eqp->pe", w * nodes, values)

    out = np.zeros((values.shape[2], cfg.N))
    out[:, :-1] += left
    out[:, 1:] += right
    return out


def weighted_mass_matrix(
    cfg: BasisConfig,
    weight: Callable[[np.ndarray], np.ndarray],
    n_points: int = GAUSS_POINTS_PER_ELEMENT,
) -> np.ndarray:
    """
    Integral of w(zeta) phi(zeta) phi(zeta)^T over [0, D].

    Parameters
    ----------
    cfg : BasisConfig
        Basis configuration.
    weight : callable
        Vectorized scalar weight function.
    n_points : int
        Gauss points per element.

    Returns
    -------
    np.ndarray
        The N x N tridiagonal weighted mass matrix.
    """
    nodes, weights = gauss_legendre(n_points)
    h = cfg.h
    out = np.zeros((cfg.N, cfg.N))
    for e, start in enumerate(node_positions(cfg)[:-1]):
        wq = h * weights * np.asarray(weight(start + h * nodes), dtype=float)
        local = np.array([1.0 - nodes, nodes])
        out[e : e + 2, e : e + 2] += (local * wq) @ local.T
    return out


def project_initial(cfg: BasisConfig, u0) -> np.ndarray:
    """
    Galerkin projection of an initial profile on the hat basis.

    Computes u_d0 = E_d^{-1} integral of phi u0.

    Parameters
    ----------
    cfg : BasisConfig
        Basis configuration.
    u0 : callable, float or array_like
        Vectorized callable on [0, D], a constant, or N nodal samples.

    Returns
    -------
    np.ndarray
        The N coefficients u_d0.
    """
    if callable(u0):
        profile = u0
    elif np.ndim(u0) == 0:
        constant = float(u0)
        return np.full(cfg.N, constant)
    else:
        samples = np.asarray(u0, dtype=float).ravel()
        if samples.size != cfg.N:
            msg = f"Expected {cfg.N} nodal samples, got {samples.size}"
            raise DimensionError(msg)
        return samples.copy()

    load = moment_matrix(cfg, lambda z: np.broadcast_to(profile(z), z.shape))[0]
    try:
        return solve_linear(build_fem_matrices(cfg).E_d, load).ravel()
    except SingularMatrixError as err:
        msg = f"Mass matrix is singular for {cfg}"
        raise RuntimeError(msg) from err


def reconstruct(cfg: BasisConfig, u_d, zeta: float) -> float:
    """
    Evaluate the reconstruction phi(zeta)^T u_d.

    Parameters
    ----------
    cfg : BasisConfig
        Basis configuration.
    u_d : array_like
        N coefficients.
    zeta : float
        Position in [0, D].

    Returns
    -------
    float
        The reconstructed value.
    """
    coeffs = np.asarray(u_d, dtype=float).ravel()
    if coeffs.size != cfg.N:
        msg = f"Expected {cfg.N} coefficients, got {coeffs.size}"
        raise DimensionError(msg)
    return float(hat_basis_eval(cfg, zeta) @ coeffs)
