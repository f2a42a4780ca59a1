"""
Time-domain simulation of the delayed closed loop.

Two loops are integrated on the same uniform grid of step dt with D = m dt:

- the plant with exact input delay driven by the dynamic controller, and
- the ideal loop driven by the predictor law evaluated on the exact
  transport state read from the input record.

Both use the implicit midpoint rule. Since every block is linear and the
delayed input within a step is known data, each step is one solve with a
matrix factorized once per simulation.
"""

import math
import warnings
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from delaycomp.controller import (
    DynamicController,
    PlantModel,
    feedforward_gain,
    galerkin_kernel,
)
from delaycomp.errors import ComparisonError, DimensionError, DomainError
from delaycomp.lmi_cert import Certificate, LmiBlocks
from delaycomp.utils.densela import factorize, mat_exp, solve_factored
from delaycomp.utils.fem_transport import (
    BasisConfig,
    moment_matrix,
    project_initial,
    weighted_mass_matrix,
)
from delaycomp.utils.history import InputHistory
from delaycomp.utils.legendre import LegendreBlock, legendre_vector

DIVERGENCE_THRESHOLD = 1e12
MIN_STEPS_PER_DELAY = 10
DEFAULT_STEPS_PER_DELAY = 100


@dataclass(frozen=True)
class SimConfig:
    """
    Simulation settings.

    Parameters
    ----------
    t_end : float
        Final time.
    dt : float, optional
        Requested step; defaults to D/100. It is reduced so that D/dt is an
        integer not smaller than 10.
    reference : tuple of (float, float)
        Piecewise-constant reference schedule: r(t) is the value of the last
        pair whose time is <= t, and 0 before the first one.
    X0 : array_like, optional
        Initial plant state, zero by default.
    u0 : float or callable
        Initial transport profile u(zeta, 0) on [0, D]; the input history is
        U(s) = u0(s + D) for s in [-D, 0).
    ud0 : float or array_like, optional
        Initial controller state; defaults to the projection of u0.
    """

    t_end: float
    dt: float | None = None
    reference: tuple = ()
    X0: np.ndarray | None = None
    u0: float | Callable = 0.0
    ud0: np.ndarray | float | None = None

    def __post_init__(self):
        if not (np.isfinite(self.t_end) and self.t_end > 0):
            msg = f"t_end must be positive, got {self.t_end}"
            raise DomainError(msg)
        if self.dt is not None and not self.dt > 0:
            msg = f"dt must be positive, got {self.dt}"
            raise DomainError(msg)
        schedule = tuple((float(t), float(v)) for t, v in self.reference)
        if any(b[0] < a[0] for a, b in zip(schedule, schedule[1:])):
            msg = "Reference schedule times must be nondecreasing"
            raise DomainError(msg)
        object.__setattr__(self, "reference", schedule)

    def reference_at(self, t: float) -> float:
        """Value of the piecewise-constant reference at time t."""
        value = 0.0
        for time, level in self.reference:
            if t >= time - 1e-12 * max(1.0, abs(time)):
                value = level
        return value


@dataclass
class Trajectory:
    """
    Sampled closed-loop response.

    Attributes
    ----------
    times : np.ndarray
        Sample times k dt.
    X : np.ndarray
        Plant states, one row per sample.
    ud : np.ndarray
        Controller states, one row per sample (no column for the ideal loop).
    U : np.ndarray
        Applied inputs.
    y : np.ndarray
        Outputs C X.
    history : InputHistory
        Record of U from -D to the last sample.
    diverged : bool
        Integration stopped on a non-finite or exploding state.
    blowup_time : float or None
        Time of the first rejected sample.
    """

    times: np.ndarray
    X: np.ndarray
    ud: np.ndarray
    U: np.ndarray
    y: np.ndarray
    history: InputHistory
    diverged: bool = False
    blowup_time: float | None = None

    @property
    def dt(self) -> float:
        return self.history.dt


@dataclass(frozen=True)
class CompareMetrics:
    """
    Deviation of a response from the ideal one.

    Attributes
    ----------
    sup_deviation : float
        max |y - y_ideal|.
    l2_deviation : float
        sum of dt (y - y_ideal)^2.
    """

    sup_deviation: float
    l2_deviation: float


@dataclass
class _Grid:
    dt: float
    delay_steps: int
    n_steps: int
    times: np.ndarray = field(init=False)

    def __post_init__(self):
        self.times = np.arange(self.n_steps + 1) * self.dt


def time_grid(D: float, cfg: SimConfig) -> _Grid:
    """
    Uniform grid with D/dt an integer of at least 10.

    Parameters
    ----------
    D : float
        Delay.
    cfg : SimConfig
        Simulation settings.

    Returns
    -------
    _Grid
        Step, steps per delay and number of steps to cover t_end.
    """
    requested = cfg.dt if cfg.dt is not None else D / DEFAULT_STEPS_PER_DELAY
    m = max(MIN_STEPS_PER_DELAY, math.ceil(D / requested - 1e-9))
    dt = D / m
    if cfg.dt is not None and abs(dt - cfg.dt) > 1e-12 * cfg.dt:
        warnings.warn(
            f"dt reduced from {cfg.dt:.6g} to {dt:.6g} so that D/dt = {m}",
            stacklevel=3,
        )
    n_steps = math.ceil(cfg.t_end / dt - 1e-9)
    return _Grid(dt=dt, delay_steps=m, n_steps=n_steps)


def _initial_state(plant: PlantModel, cfg: SimConfig) -> np.ndarray:
    if cfg.X0 is None:
        return np.zeros(plant.n)
    X0 = np.asarray(cfg.X0, dtype=float).ravel()
    if X0.size != plant.n:
        msg = f"X0 must have {plant.n} entries, got {X0.size}"
        raise DimensionError(msg)
    return X0


def _initial_controller_state(ctrl: DynamicController, cfg: SimConfig) -> np.ndarray:
    if cfg.ud0 is None:
        return project_initial(ctrl.cfg, cfg.u0)
    return project_initial(ctrl.cfg, cfg.ud0)


def _march(
    plant: PlantModel,
    F: np.ndarray,
    reference_input: np.ndarray,
    control: Callable[[float, np.ndarray], float],
    z0: np.ndarray,
    history: InputHistory,
    grid: _Grid,
    cfg: SimConfig,
) -> tuple[np.ndarray, np.ndarray, float | None]:
    """
    Implicit midpoint rule for dz/dt = F z + B U(t - D) + g r(t).

    ``control(t_k, z_k)`` returns U_k, which is appended to the history
    before the next step.
    """
    size = F.shape[0]
    dt = grid.dt
    # One factorization for the whole run
    eye = np.eye(size)
    implicit = factorize(eye - 0.5 * dt * F)
    explicit = eye + 0.5 * dt * F

    inflow = np.zeros(size)
    inflow[: plant.n] = plant.B.ravel()

    # Initial sample
    states = np.zeros((grid.n_steps + 1, size))
    inputs = np.zeros(grid.n_steps + 1)
    z = np.asarray(z0, dtype=float)
    states[0] = z
    inputs[0] = control(0.0, z)
    history.append(inputs[0])

    for k in range(grid.n_steps):
        t, t_next = grid.times[k], grid.times[k + 1]
        # Delayed input at the step midpoint
        delayed = history.value_at(t + 0.5 * dt - history.delay)
        r_mid = cfg.reference_at(t + 0.5 * dt)
        rhs = explicit @ z + dt * (inflow * delayed + reference_input * r_mid)
        z = solve_factored(implicit, rhs)
        # Stop at the first blow-up
        if not np.all(np.isfinite(z)) or np.linalg.norm(z) > DIVERGENCE_THRESHOLD:
            return states[: k + 1], inputs[: k + 1], float(t_next)
        states[k + 1] = z
        inputs[k + 1] = control(t_next, z)
        history.append(inputs[k + 1])

    return states, inputs, None


def simulate_closed_loop(
    plant: PlantModel, ctrl: DynamicController, cfg: SimConfig
) -> Trajectory:
    """
    Plant with exact input delay driven by the dynamic controller.

    The state z = (X, u_d) follows
    dX/dt = A X + B U(t - D) and du_d/dt = A_tilde u_d + B_tilde X + E_d^{-1} B_d H r,
    with U = K1 u_d + K2 X + H r.

    Parameters
    ----------
    plant : PlantModel
        Plant.
    ctrl : DynamicController
        Controller synthesized for the plant.
    cfg : SimConfig
        Simulation settings.

    Returns
    -------
    Trajectory
        The response; ``diverged`` is set instead of raising when the state
        blows up.
    """
    n, N = plant.n, ctrl.N
    if ctrl.K2.shape[1] != n:
        msg = f"Controller built for order {ctrl.K2.shape[1]}, plant has order {n}"
        raise DimensionError(msg)
    grid = time_grid(plant.D, cfg)
    history = InputHistory(grid.dt, grid.delay_steps, grid.n_steps)
    history.seed(cfg.u0)

    F = np.block(
        [
            [plant.A, np.zeros((n, N))],
            [ctrl.B_tilde, ctrl.A_tilde],
        ]
    )
    reference_input = np.concatenate([np.zeros(n), ctrl.reference_input().ravel()])
    gain = np.concatenate([ctrl.K2.ravel(), ctrl.K1.ravel()])

    def control(t: float, z: np.ndarray) -> float:
        # z = (X, u_d), gain = (K2, K1)
        return float(gain @ z) + ctrl.H * cfg.reference_at(t)

    z0 = np.concatenate([_initial_state(plant, cfg), _initial_controller_state(ctrl, cfg)])
    states, inputs, blowup = _march(
        plant, F, reference_input, control, z0, history, grid, cfg
    )
    X = states[:, :n]
    return Trajectory(
        times=grid.times[: states.shape[0]],
        X=X,
        ud=states[:, n:],
        U=inputs,
        y=X @ plant.C.ravel(),
        history=history,
        diverged=blowup is not None,
        blowup_time=blowup,
    )


def simulate_ideal(plant: PlantModel, K, cfg: SimConfig) -> Trajectory:
    """
    Ideal loop U(t) = int_0^D K e^{A(D - zeta)} B u(zeta, t) dzeta + K e^{AD} X + H r.

    The transport state is the recorded input over [t - D, t], taken
    piecewise linear, and the integral is evaluated exactly on it. The
    newest sample U(t) enters its own integral, which is solved for.

    Parameters
    ----------
    plant : PlantModel
        Plant.
    K : array_like
        1 x n nominal gain.
    cfg : SimConfig
        Simulation settings.

    Returns
    -------
    Trajectory
        The desired response; ``ud`` has no columns.
    """
    grid = time_grid(plant.D, cfg)
    m = grid.delay_steps
    history = InputHistory(grid.dt, m, grid.n_steps)
    history.seed(cfg.u0)

    row = np.asarray(K, dtype=float).reshape(1, -1)
    weights = galerkin_kernel(plant, row, BasisConfig(N=m + 1, D=plant.D)).ravel()
    own_weight = 1.0 - weights[m]
    if abs(own_weight) < 1e-12:
        msg = "Predictor is singular on this grid; reduce dt"
        raise DomainError(msg)
    K2 = (row @ mat_exp(plant.A, plant.D)).ravel()
    H = feedforward_gain(plant, row)

    def control(t: float, X: np.ndarray) -> float:
        start = history.index_of(t) - m
        past = history.values[start : start + m]
        return (weights[:m] @ past + K2 @ X + H * cfg.reference_at(t)) / own_weight

    states, inputs, blowup = _march(
        plant,
        plant.A,
        np.zeros(plant.n),
        control,
        _initial_state(plant, cfg),
        history,
        grid,
        cfg,
    )
    return Trajectory(
        times=grid.times[: states.shape[0]],
        X=states,
        ud=np.zeros((states.shape[0], 0)),
        U=inputs,
        y=states @ plant.C.ravel(),
        history=history,
        diverged=blowup is not None,
        blowup_time=blowup,
    )


def lyapunov_trace(
    traj: Trajectory,
    cert: Certificate,
    blocks: LmiBlocks,
    lb: LegendreBlock | None = None,
) -> np.ndarray:
    """
    Lyapunov functional V = eta^T P eta + alpha int_0^D (1 + zeta) u^2 dzeta.

    eta = (X, u_d, Omega) with Omega_k = int_0^D L_k(zeta) u(zeta, t) dzeta,
    where u(zeta, t) = U(t - D + zeta) is read from the input record.

    Parameters
    ----------
    traj : Trajectory
        Closed-loop response.
    cert : Certificate
        Certificate (P, alpha).
    blocks : LmiBlocks
        LMI data the certificate was computed for.
    lb : LegendreBlock, optional
        Legendre data; only its size is checked.

    Returns
    -------
    np.ndarray
        V at every sample.
    """
    n, N, l = blocks.n, blocks.N, blocks.l
    if cert.P.shape != (blocks.size, blocks.size):
        msg = f"Certificate of size {cert.P.shape[0]} does not match n+N+l = {blocks.size}"
        raise DimensionError(msg)
    if traj.X.shape[1] != n or traj.ud.shape[1] != N:
        msg = f"Trajectory has (n, N) = {traj.X.shape[1], traj.ud.shape[1]}, expected {n, N}"
        raise DimensionError(msg)
    if lb is not None and lb.l != l:
        msg = f"Legendre block has l = {lb.l}, certificate has l = {l}"
        raise DimensionError(msg)

    history = traj.history
    m = history.delay_steps
    grid = BasisConfig(N=m + 1, D=history.delay)
    # Both integrals are exact for the piecewise-linear record
    projections = moment_matrix(grid, lambda z: legendre_vector(l, z, grid.D))
    weighted = weighted_mass_matrix(grid, lambda z: 1.0 + z)

    # Raises HistoryError when the record does not cover both ends
    history.window(traj.times[0])
    history.window(traj.times[-1])
    first = history.index_of(traj.times[0]) - m
    last = history.index_of(traj.times[-1])
    windows = sliding_window_view(history.values[first : last + 1], m + 1)

    omega = windows @ projections.T
    eta = np.hstack([traj.X, traj.ud, omega])
    quadratic = np.einsum("ki,ij,kj->k", eta, cert.P, eta)
    transport = np.einsum("ki,ij,kj->k", windows, weighted, windows)
    return quadratic + cert.alpha * transport


def compare_metrics(traj: Trajectory, ideal: Trajectory) -> CompareMetrics:
    """
    Deviation of the output from the ideal output.

    Parameters
    ----------
    traj : Trajectory
        Response of the dynamic controller.
    ideal : Trajectory
        Ideal response on the same grid.

    Returns
    -------
    CompareMetrics
        Sup and integral-squared deviations of y.
    """
    if traj.times.shape != ideal.times.shape or not np.allclose(
        traj.times, ideal.times, rtol=0.0, atol=1e-12 * max(1.0, traj.times[-1])
    ):
        msg = (
            f"Time grids differ ({traj.times.size} vs {ideal.times.size} samples); "
            "both runs must share dt and t_end and neither may diverge"
        )
        raise ComparisonError(msg)
    deviation = traj.y - ideal.y
    return CompareMetrics(
        sup_deviation=float(np.max(np.abs(deviation))),
        l2_deviation=float(traj.dt * np.sum(deviation**2)),
    )


def measured_order(errors) -> np.ndarray:
    """
    Observed convergence orders of a step-halving study.

    Parameters
    ----------
    errors : array_like
        Errors for successively halved steps.

    Returns
    -------
    np.ndarray
        log2(e_i / e_{i+1}) for consecutive pairs.
    """
    e = np.asarray(errors, dtype=float)
    if e.size < 2 or np.any(e <= 0):
        msg = "Need at least two positive errors"
        raise DomainError(msg)
    return np.log2(e[:-1] / e[1:])
