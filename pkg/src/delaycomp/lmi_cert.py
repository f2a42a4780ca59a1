"""
LMI certificate of closed-loop stability.

The closed loop is described by eta = (X, u_d, Omega), where Omega holds the
first l Legendre projections of the transport state. A symmetric P > 0 and a
scalar alpha > 0 with Lambda(P, alpha) < 0 certify asymptotic stability of the
plant with exact delay driven by the dynamic controller.

The search is posed as a margin problem: maximize t such that P >= tI,
alpha >= t and Lambda(P, alpha) <= -tI, with P <= I and alpha <= 1 to fix the
scale of the homogeneous problem. It is solved with cvxpy. The raw t depends
on that scale and on the balancing, so a candidate is judged by its own
eigenvalue margins relative to its magnitude, then rescaled and re-checked.
"""

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import cvxpy as cp
import numpy as np
import scipy.linalg
from tqdm import tqdm

from delaycomp.controller import DynamicController, PlantModel
from delaycomp.errors import AssemblyError, DelayCompError, LmiSolverError
from delaycomp.utils.densela import sym_eig
from delaycomp.utils.legendre import build_legendre_block

CHECK_TOL = 1e-8
RELATIVE_TOL = 1e3 * np.finfo(float).eps
THREADS_ENV = "DELAYCOMP_THREADS"


@dataclass(frozen=True)
class LmiBlocks:
    """
    Constant matrices of the stability LMI.

    Attributes
    ----------
    n, N, l : int
        Plant order, controller order and number of projections.
    D : float
        Delay.
    Kbar : np.ndarray
        1 x (n+N+l) row [K2, K1, 0].
    Acal : np.ndarray
        Block diagonal-ish state matrix [[A, 0, 0], [B_tilde, A_tilde, 0],
        [0, 0, -M/D]].
    B1 : np.ndarray
        Column (0; 0; L(D)).
    B2 : np.ndarray
        Column (B; 0; -L(0)).
    Qbar : np.ndarray
        Zero except Q in the lower-right l x l block.
    """

    n: int
    N: int
    l: int
    D: float
    Kbar: np.ndarray
    Acal: np.ndarray
    B1: np.ndarray
    B2: np.ndarray
    Qbar: np.ndarray

    @property
    def size(self) -> int:
        return self.n + self.N + self.l


@dataclass(frozen=True)
class Margins:
    """
    Verified margins of a candidate certificate.

    Attributes
    ----------
    min_eig_P : float
        Smallest eigenvalue of P.
    max_eig_Lambda : float
        Largest eigenvalue of Lambda(P, alpha).
    alpha : float
        The scalar alpha.
    passed : bool
        All three conditions hold with the checking tolerance.
    """

    min_eig_P: float
    max_eig_Lambda: float
    alpha: float
    passed: bool


@dataclass(frozen=True)
class Certificate:
    """
    Verified (P, alpha) pair.

    Attributes
    ----------
    P : np.ndarray
        Symmetric positive definite matrix of size n+N+l.
    alpha : float
        Positive scalar.
    margins : Margins
        Independently verified margins.
    l : int
        Number of Legendre projections.
    solver_margin : float
        Margin t reported by the solver in scaled coordinates.
    """

    P: np.ndarray
    alpha: float
    margins: Margins
    l: int
    solver_margin: float


@dataclass(frozen=True)
class NotFound:
    """
    No certificate within the solver budget.

    This is not a proof of infeasibility: the LMI is only sufficient.

    Attributes
    ----------
    l : int
        Number of Legendre projections.
    margin : float
        Best margin reached.
    reason : str
        Why the candidate was rejected.
    """

    l: int
    margin: float
    reason: str


@dataclass(frozen=True)
class SolverOptions:
    """
    Options of `solve_feasibility`.

    Attributes
    ----------
    max_iter : int
        Interior-point iteration budget.
    tol : float
        Minimum relative margin of a candidate: the smallest of
        lambda_min(P), alpha and -lambda_max(Lambda) over the largest
        eigenvalue magnitude involved.
    scaling : bool
        Apply diagonal balancing before solving.
    solver : str
        cvxpy solver name; SCS is used when it is not installed.
    """

    max_iter: int = 200
    tol: float = RELATIVE_TOL
    scaling: bool = True
    solver: str = "CLARABEL"


@dataclass(frozen=True)
class LOutcome:
    """
    Result of the feasibility test for one l.

    Attributes
    ----------
    l : int
        Number of projections.
    status : str
        "certificate", "not_found" or "error".
    margin : float
        Solver margin (NaN on error).
    certificate : Certificate or None
        The certificate when found.
    error : str or None
        Error message when the solver failed.
    """

    l: int
    status: str
    margin: float
    certificate: Certificate | None = None
    error: str | None = None


@dataclass(frozen=True)
class SweepReport:
    """
    Outcomes of `find_min_l`, ordered by l.

    Attributes
    ----------
    outcomes : list of LOutcome
        One entry per tested l.
    min_l : int or None
        Smallest l with a certificate.
    """

    outcomes: list = field(default_factory=list)
    min_l: int | None = None

    @property
    def certificate(self) -> Certificate | None:
        """Certificate at the smallest feasible l."""
        for outcome in self.outcomes:
            if outcome.l == self.min_l:
                return outcome.certificate
        return None


def assemble_blocks(plant: PlantModel, ctrl: DynamicController, l: int) -> LmiBlocks:
    """
    Assemble Kbar, Acal, B1, B2 and Qbar.

    Parameters
    ----------
    plant : PlantModel
        Plant (A, B, D).
    ctrl : DynamicController
        Controller synthesized for the plant.
    l : int
        Number of Legendre projections, at least 1.

    Returns
    -------
    LmiBlocks
        The LMI data.
    """
    n, N = plant.n, ctrl.N
    if ctrl.B_tilde.shape != (N, n) or ctrl.K2.shape != (1, n):
        msg = f"Controller of order {N} does not match a plant of order {n}"
        raise AssemblyError(msg)
    if abs(ctrl.cfg.D - plant.D) > 1e-12 * plant.D:
        msg = f"Controller delay {ctrl.cfg.D} differs from plant delay {plant.D}"
        raise AssemblyError(msg)

    lb = build_legendre_block(l, plant.D)
    size = n + N + lb.l

    Acal = np.zeros((size, size))
    Acal[:n, :n] = plant.A
    Acal[n : n + N, :n] = ctrl.B_tilde
    Acal[n : n + N, n : n + N] = ctrl.A_tilde
    Acal[n + N :, n + N :] = -lb.M / plant.D

    B1 = np.zeros((size, 1))
    B1[n + N :, 0] = lb.LD
    B2 = np.zeros((size, 1))
    B2[:n] = plant.B
    B2[n + N :, 0] = -lb.L0

    Kbar = np.zeros((1, size))
    Kbar[0, :n] = ctrl.K2
    Kbar[0, n : n + N] = ctrl.K1

    Qbar = np.zeros((size, size))
    Qbar[n + N :, n + N :] = lb.Q

    return LmiBlocks(
        n=n, N=N, l=lb.l, D=plant.D, Kbar=Kbar, Acal=Acal, B1=B1, B2=B2, Qbar=Qbar
    )


def _lambda_blocks(blocks: LmiBlocks, P, alpha) -> list:
    """Block rows of Lambda; works for numpy arrays and cvxpy expressions."""
    D = blocks.D
    Psi = (
        blocks.Acal.T @ P
        + P @ blocks.Acal
        + alpha * (1.0 + D) * (blocks.Kbar.T @ blocks.Kbar)
        - (alpha / D) * blocks.Qbar
        + P @ blocks.B1 @ blocks.Kbar
        + blocks.Kbar.T @ blocks.B1.T @ P
    )
    PB2 = P @ blocks.B2
    return [[Psi, PB2], [PB2.T, -alpha * np.ones((1, 1))]]


def lambda_operator(blocks: LmiBlocks, P, alpha: float) -> np.ndarray:
    """
    Evaluate Lambda(P, alpha) = [[Psi, P B2], [B2^T P, -alpha]].

    Parameters
    ----------
    blocks : LmiBlocks
        LMI data.
    P : array_like
        Symmetric matrix of size n+N+l.
    alpha : float
        Scalar.

    Returns
    -------
    np.ndarray
        The symmetric (n+N+l+1) square matrix, affine in (P, alpha).
    """
    Pm = np.asarray(P, dtype=float)
    if Pm.shape != (blocks.size, blocks.size):
        msg = f"P must be {blocks.size}x{blocks.size}, got {Pm.shape}"
        raise AssemblyError(msg)
    Lam = np.block(_lambda_blocks(blocks, Pm, float(alpha)))
    return 0.5 * (Lam + Lam.T)


def check_certificate(
    blocks: LmiBlocks, P, alpha: float, tol: float = CHECK_TOL
) -> Margins:
    """
    Independently verify the three conditions of the stability theorem.

    Parameters
    ----------
    blocks : LmiBlocks
        LMI data.
    P : array_like
        Candidate symmetric matrix.
    alpha : float
        Candidate scalar.
    tol : float
        Margin required on each condition.

    Returns
    -------
    Margins
        lambda_min(P), lambda_max(Lambda), alpha and the verdict.
    """
    min_eig_P = float(sym_eig(P).eigenvalues[0])
    max_eig_Lambda = float(sym_eig(lambda_operator(blocks, P, alpha)).eigenvalues[-1])
    passed = min_eig_P > tol and alpha > tol and max_eig_Lambda < -tol
    return Margins(
        min_eig_P=min_eig_P,
        max_eig_Lambda=max_eig_Lambda,
        alpha=float(alpha),
        passed=bool(passed),
    )


def transform_blocks(blocks: LmiBlocks, T: np.ndarray) -> LmiBlocks:
    """
    Express the LMI in coordinates xi with eta = T xi.

    The map P -> T^T P T sends solutions of the original LMI to solutions of
    the transformed one (a congruence of Lambda), so feasibility is
    unchanged.

    Parameters
    ----------
    blocks : LmiBlocks
        LMI data.
    T : np.ndarray
        Invertible change of coordinates.

    Returns
    -------
    LmiBlocks
        The transformed data.
    """
    T_inv = np.linalg.inv(T)
    return replace(
        blocks,
        Kbar=blocks.Kbar @ T,
        Acal=T_inv @ blocks.Acal @ T,
        B1=T_inv @ blocks.B1,
        B2=T_inv @ blocks.B2,
        Qbar=T.T @ blocks.Qbar @ T,
    )


def _solve_margin_problem(
    blocks: LmiBlocks, opts: SolverOptions
) -> tuple[float, np.ndarray, float]:
    size = blocks.size
    P = cp.Variable((size, size), symmetric=True)
    alpha = cp.Variable()
    t = cp.Variable()

    Lam = cp.bmat(_lambda_blocks(blocks, P, alpha))
    Lam = 0.5 * (Lam + Lam.T)
    eye = np.eye(size)
    constraints = [
        P - t * eye >> 0,
        eye - P >> 0,
        alpha >= t,
        alpha <= 1.0,
        -Lam - t * np.eye(size + 1) >> 0,
    ]
    problem = cp.Problem(cp.Maximize(t), constraints)

    solver = opts.solver if opts.solver in cp.installed_solvers() else cp.SCS
    iteration_key = "max_iters" if solver == cp.SCS else "max_iter"
    try:
        problem.solve(solver=solver, **{iteration_key: opts.max_iter})
    except cp.error.SolverError as err:
        msg = f"{solver} failed on the margin problem: {err}"
        raise LmiSolverError(msg) from err

    if problem.status not in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE) or t.value is None:
        msg = f"{solver} returned status {problem.status}"
        raise LmiSolverError(msg)
    return float(t.value), np.asarray(P.value), float(alpha.value)


def solve_feasibility(
    blocks: LmiBlocks, opts: SolverOptions | None = None
) -> Certificate | NotFound:
    """
    Search a certificate (P, alpha) by maximizing the feasibility margin.

    Parameters
    ----------
    blocks : LmiBlocks
        LMI data.
    opts : SolverOptions, optional
        Solver options.

    Returns
    -------
    Certificate or NotFound
        A certificate verified by `check_certificate`, or NotFound when the
        relative margin of the mapped-back candidate is not above
        ``opts.tol`` or the check rejects it. A returned certificate is
        scaled so that its smallest margin is one.
    """
    opts = opts or SolverOptions()

    if opts.scaling:
        _, (scale, _) = scipy.linalg.matrix_balance(
            blocks.Acal, permute=False, separate=True
        )
        T = np.diag(scale)
    else:
        T = np.eye(blocks.size)

    margin, P_scaled, alpha = _solve_margin_problem(transform_blocks(blocks, T), opts)

    # Back to the original coordinates
    T_inv = np.linalg.inv(T)
    P = T_inv.T @ P_scaled @ T_inv
    P = 0.5 * (P + P.T)

    # The raw margin depends on the scaling; judge the candidate itself
    eig_P = sym_eig(P).eigenvalues
    eig_Lam = sym_eig(lambda_operator(blocks, P, alpha)).eigenvalues
    smallest = min(float(eig_P[0]), alpha, -float(eig_Lam[-1]))
    norm = max(float(np.max(np.abs(eig_Lam))), float(eig_P[-1]), alpha)
    relative = smallest / norm if norm > 0 else 0.0
    if not relative > opts.tol:
        return NotFound(
            l=blocks.l,
            margin=margin,
            reason=f"relative margin {relative:.3e} not above {opts.tol:.1e}",
        )

    # Homogeneous in (P, alpha): the smallest of the three margins becomes one
    P, alpha = P / smallest, alpha / smallest

    margins = check_certificate(blocks, P, alpha)
    if not margins.passed:
        return NotFound(
            l=blocks.l,
            margin=margin,
            reason=(
                "independent check rejected the candidate "
                f"(min eig P {margins.min_eig_P:.3e}, "
                f"max eig Lambda {margins.max_eig_Lambda:.3e})"
            ),
        )
    return Certificate(P=P, alpha=alpha, margins=margins, l=blocks.l, solver_margin=margin)


def _test_l(
    plant: PlantModel, ctrl: DynamicController, l: int, opts: SolverOptions
) -> LOutcome:
    try:
        result = solve_feasibility(assemble_blocks(plant, ctrl, l), opts)
    except DelayCompError as err:
        return LOutcome(l=l, status="error", margin=float("nan"), error=str(err))
    if isinstance(result, Certificate):
        return LOutcome(
            l=l, status="certificate", margin=result.solver_margin, certificate=result
        )
    return LOutcome(l=l, status="not_found", margin=result.margin, error=result.reason)


def sweep_threads() -> int:
    """Worker count from the DELAYCOMP_THREADS environment variable."""
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def find_min_l(
    plant: PlantModel,
    ctrl: DynamicController,
    l_max: int,
    opts: SolverOptions | None = None,
    *,
    progress: bool = False,
    l_min: int = 1,
    workers: int | None = None,
) -> SweepReport:
    """
    Test l = l_min, ..., l_max and report the smallest certified l.

    The tests are independent and run on a thread pool capped by
    DELAYCOMP_THREADS; results are merged in l order. Solver errors are
    recorded per l without aborting the sweep.

    Parameters
    ----------
    plant : PlantModel
        Plant.
    ctrl : DynamicController
        Controller synthesized for the plant.
    l_max : int
        Largest l tested, at least 1.
    opts : SolverOptions, optional
        Solver options.
    progress : bool
        Show a tqdm progress bar.
    l_min : int
        Smallest l tested.
    workers : int, optional
        Pool size; DELAYCOMP_THREADS by default.

    Returns
    -------
    SweepReport
        Per-l outcomes and the smallest feasible l.
    """
    if l_min < 1 or l_max < l_min:
        msg = f"Need 1 <= l_min <= l_max, got l_min={l_min}, l_max={l_max}"
        raise AssemblyError(msg)
    opts = opts or SolverOptions()
    ls = range(int(l_min), int(l_max) + 1)

    with ThreadPoolExecutor(max_workers=workers or sweep_threads()) as executor:
        futures = executor.map(lambda l: _test_l(plant, ctrl, l, opts), ls)
        outcomes = list(
            tqdm(futures, total=len(ls), desc="Certifying", disable=not progress)
        )

    feasible = [o.l for o in outcomes if o.status == "certificate"]
    return SweepReport(outcomes=outcomes, min_l=feasible[0] if feasible else None)
