"""
Synthesis of the finite-dimensional dynamic controller.

The predictor law

    U(t) = int_0^D K e^{A(D - zeta)} B u(zeta, t) dzeta + K e^{AD} X(t)

is implemented by replacing the transport state u with its hat-basis
reconstruction phi^T u_d. The controller is then the ODE

    d/dt u_d = A_tilde u_d + B_tilde X,    U = K1 u_d + K2 X

with K1 = int K e^{A(D - zeta)} B phi^T dzeta, K2 = K e^{AD},
A_tilde = E_d^{-1}(A_d + B_d K1) and B_tilde = E_d^{-1} B_d K2.
"""

from dataclasses import dataclass

import numpy as np

from delaycomp.errors import (
    ControllabilityError,
    DesignError,
    DimensionError,
    DomainError,
    FeedforwardError,
    HistoryError,
    SingularMatrixError,
)
from delaycomp.utils.densela import (
    as_matrix,
    expm_moment_integrals,
    factorize,
    is_controllable,
    mat_exp,
    pole_place_siso,
    solve_care,
    solve_factored,
    solve_linear,
    spectral_abscissa,
)
from delaycomp.utils.fem_transport import (
    BasisConfig,
    FemMatrices,
    build_fem_matrices,
    moment_matrix,
)
from delaycomp.utils.history import InputHistory

DESIGN_HURWITZ_TOL = 1e-9


@dataclass(frozen=True)
class PlantModel:
    """
    Linear plant with a constant input delay, dX/dt = A X + B U(t - D).

    Parameters
    ----------
    A : array_like
        n x n state matrix.
    B : array_like
        n x 1 input column.
    C : array_like
        1 x n output row.
    D : float
        Input delay in seconds.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: float

    def __post_init__(self):
        A = as_matrix(self.A, "A")
        n = A.shape[0]
        if A.shape != (n, n):
            msg = f"A must be square, got shape {A.shape}"
            raise DimensionError(msg)
        B = as_matrix(self.B, "B").reshape(-1, 1) if np.size(self.B) == n else None
        if B is None:
            msg = f"B must be an {n}x1 column (single input)"
            raise DimensionError(msg)
        C = as_matrix(self.C, "C").reshape(1, -1) if np.size(self.C) == n else None
        if C is None:
            msg = f"C must be a 1x{n} row (single output)"
            raise DimensionError(msg)
        if not (np.isfinite(self.D) and self.D > 0):
            msg = f"Delay D must be positive, got {self.D}"
            raise DomainError(msg)
        if not is_controllable(A, B):
            msg = "Pair (A, B) is not controllable"
            raise ControllabilityError(msg)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "D", float(self.D))

    @property
    def n(self) -> int:
        return self.A.shape[0]


@dataclass(frozen=True)
class DynamicController:
    """
    Finite-dimensional implementation of the predictor law.

    Attributes
    ----------
    A_tilde : np.ndarray
        N x N controller state matrix.
    B_tilde : np.ndarray
        N x n controller input matrix.
    K1 : np.ndarray
        1 x N output gain on the controller state.
    K2 : np.ndarray
        1 x n output gain on the plant state.
    H : float
        Reference feedforward gain.
    cfg : BasisConfig
        Basis used for the transport approximation.
    K : np.ndarray
        1 x n nominal gain with A + B K Hurwitz.
    fem : FemMatrices
        E_d, A_d, B_d of the basis.
    """

    A_tilde: np.ndarray
    B_tilde: np.ndarray
    K1: np.ndarray
    K2: np.ndarray
    H: float
    cfg: BasisConfig
    K: np.ndarray
    fem: FemMatrices

    @property
    def N(self) -> int:
        return self.cfg.N

    @property
    def n(self) -> int:
        return self.K.shape[1]

    def reference_input(self) -> np.ndarray:
        """Column E_d^{-1} B_d H multiplying r(t) in the controller ODE."""
        return solve_linear(self.fem.E_d, self.fem.B_d) * self.H


def _gain_row(plant: PlantModel, K) -> np.ndarray:
    row = as_matrix(K, "K").reshape(1, -1)
    if row.shape[1] != plant.n:
        msg = f"K must have {plant.n} entries, got {row.shape[1]}"
        raise DimensionError(msg)
    return row


def galerkin_kernel(plant: PlantModel, K, cfg: BasisConfig) -> np.ndarray:
    """
    Exact integral of K e^{A(D - zeta)} B phi(zeta)^T over [0, D].

    On element [e h, (e+1) h], with sigma = (e+1) h - zeta, the kernel is
    K e^{A c_e} e^{A sigma} B with c_e = (N - 2 - e) h and the two hat
    functions are sigma/h and 1 - sigma/h. Each entry is therefore a
    combination of the moments G1, G2 of e^{As} over [0, h], propagated by
    powers of e^{Ah}.

    Parameters
    ----------
    plant : PlantModel
        Plant (A, B, D).
    K : array_like
        1 x n gain row.
    cfg : BasisConfig
        Basis on [0, D].

    Returns
    -------
    np.ndarray
        The 1 x N row K1.
    """
    row = _gain_row(plant, K)
    h = cfg.h
    F, G1, G2 = expm_moment_integrals(plant.A, h)
    left_moment = G2 @ plant.B / h
    right_moment = (G1 - G2 / h) @ plant.B

    K1 = np.zeros((1, cfg.N))
    propagated = row
    for e in range(cfg.N - 2, -1, -1):
        K1[0, e] += (propagated @ left_moment).item()
        K1[0, e + 1] += (propagated @ right_moment).item()
        propagated = propagated @ F
    return K1


def feedforward_gain(plant: PlantModel, K) -> float:
    """
    Static reference gain H = -(C (A + B K)^{-1} B)^{-1}.

    Parameters
    ----------
    plant : PlantModel
        Plant (A, B, C).
    K : array_like
        1 x n gain row.

    Returns
    -------
    float
        H, giving unity DC gain from r to y in the undelayed loop.
    """
    row = _gain_row(plant, K)
    closed = plant.A + plant.B @ row
    try:
        dc_gain = (plant.C @ solve_linear(closed, plant.B)).item()
    except SingularMatrixError as err:
        msg = "A + B K is singular; no static feedforward exists"
        raise FeedforwardError(msg) from err
    scale = np.linalg.norm(plant.C) * np.linalg.norm(plant.B) / np.linalg.norm(closed)
    if abs(dc_gain) <= 1e-14 * max(scale, np.finfo(float).tiny):
        msg = "C (A + B K)^{-1} B is zero; the output cannot track a reference"
        raise FeedforwardError(msg)
    return -1.0 / dc_gain


def synth_controller(
    plant: PlantModel, K, N: int, *, require_hurwitz: bool = True
) -> DynamicController:
    """
    Synthesize the dynamic controller of order N.

    Parameters
    ----------
    plant : PlantModel
        Plant (A, B, C, D).
    K : array_like
        1 x n nominal gain with A + B K Hurwitz.
    N : int
        Number of hat functions, at least 2.
    require_hurwitz : bool
        Reject gains with A + B K not Hurwitz. Only disabled to build
        deliberately destabilized test fixtures.

    Returns
    -------
    DynamicController
        The controller matrices.
    """
    row = _gain_row(plant, K)
    cfg = BasisConfig(N=N, D=plant.D)

    abscissa = spectral_abscissa(plant.A + plant.B @ row)
    if require_hurwitz and abscissa >= -DESIGN_HURWITZ_TOL:
        msg = f"A + B K is not Hurwitz (max real part {abscissa:.4g})"
        raise DesignError(msg)

    fem = build_fem_matrices(cfg)
    K1 = galerkin_kernel(plant, row, cfg)
    K2 = row @ mat_exp(plant.A, plant.D)

    mass = factorize(fem.E_d)
    A_tilde = solve_factored(mass, fem.A_d + fem.B_d @ K1)
    B_tilde = solve_factored(mass, fem.B_d @ K2)

    return DynamicController(
        A_tilde=A_tilde,
        B_tilde=B_tilde,
        K1=K1,
        K2=K2,
        H=feedforward_gain(plant, row),
        cfg=cfg,
        K=row,
        fem=fem,
    )


def design_gain(plant: PlantModel, K=None, poles=None, lqr=None) -> np.ndarray:
    """
    Nominal gain from exactly one design mode.

    Parameters
    ----------
    plant : PlantModel
        Plant (A, B).
    K : array_like, optional
        Explicit gain row.
    poles : sequence of complex, optional
        Closed-loop poles for Ackermann placement.
    lqr : tuple, optional
        (Qw, Rw) weights of the LQR design.

    Returns
    -------
    np.ndarray
        The 1 x n gain row.
    """
    modes = [mode is not None for mode in (K, poles, lqr)]
    if sum(modes) != 1:
        msg = "Exactly one of K, poles or lqr must be given"
        raise DomainError(msg)
    if K is not None:
        return _gain_row(plant, K)
    if poles is not None:
        return pole_place_siso(plant.A, plant.B, poles)
    Qw, Rw = lqr
    _, gain = solve_care(plant.A, plant.B, Qw, Rw)
    return gain


def lumped_closed_loop_matrix(plant: PlantModel, ctrl: DynamicController) -> np.ndarray:
    """
    Closed loop when the input delay itself is the order-N FEM transport.

    The plant receives phi(0)^T u_d = (u_d)_1, and u_d follows the controller
    ODE, giving the (n + N) square matrix [[A, B e_1^T], [B_tilde, A_tilde]].

    Parameters
    ----------
    plant : PlantModel
        Plant.
    ctrl : DynamicController
        Controller synthesized for the plant.

    Returns
    -------
    np.ndarray
        The lumped closed-loop state matrix.
    """
    outflow = np.zeros((1, ctrl.N))
    outflow[0, 0] = 1.0
    return np.block(
        [
            [plant.A, plant.B @ outflow],
            [ctrl.B_tilde, ctrl.A_tilde],
        ]
    )


def exact_predictor_input(
    plant: PlantModel, K, X, history: InputHistory, t: float
) -> float:
    """
    Ideal infinite-dimensional control value at time t.

    The transport state is the exact solution u(zeta, t) = U(t - D + zeta)
    read from the history record; the integral is evaluated by composite
    8-point Gauss quadrature over the history grid.

    Parameters
    ----------
    plant : PlantModel
        Plant (A, B, D).
    K : array_like
        1 x n gain row.
    X : array_like
        Plant state at time t.
    history : InputHistory
        Input record covering [t - D, t], on a grid with D/dt integral.
    t : float
        Grid time.

    Returns
    -------
    float
        U(t) of the predictor law.
    """
    row = _gain_row(plant, K)
    state = np.asarray(X, dtype=float).reshape(-1, 1)
    if state.shape[0] != plant.n:
        msg = f"X must have {plant.n} entries, got {state.shape[0]}"
        raise DimensionError(msg)
    if abs(history.delay - plant.D) > 1e-9 * plant.D:
        msg = f"History delay {history.delay} does not match plant delay {plant.D}"
        raise HistoryError(msg)

    window = history.window(t)
    grid = BasisConfig(N=window.size, D=plant.D)

    def kernel(zeta: np.ndarray) -> np.ndarray:
        return np.array(
            [(row @ mat_exp(plant.A, plant.D - z) @ plant.B).item() for z in zeta]
        )

    integral = (moment_matrix(grid, kernel) @ window).item()
    return integral + (row @ mat_exp(plant.A, plant.D) @ state).item()
