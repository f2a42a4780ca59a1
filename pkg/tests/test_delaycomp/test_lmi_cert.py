from unittest.mock import patch

import numpy as np
import pytest

from delaycomp.controller import PlantModel, design_gain, synth_controller
from delaycomp.errors import AssemblyError, LmiSolverError
from delaycomp.lmi_cert import (
    Certificate,
    Margins,
    NotFound,
    SolverOptions,
    assemble_blocks,
    check_certificate,
    find_min_l,
    lambda_operator,
    solve_feasibility,
    sweep_threads,
    transform_blocks,
)
from delaycomp.run_spec import load_run_spec
from extra.documents import scenario_path

EXAMPLE_1 = PlantModel(A=[[1.0]], B=[[1.0]], C=[[1.0]], D=1.0)
EXAMPLE_2 = PlantModel(
    A=[[2.0, 0.0, 1.0], [1.0, -2.0, -2.0], [0.0, 1.0, -1.0]],
    B=[[0.0], [0.0], [1.0]],
    C=[[1.0, 0.0, 0.0]],
    D=0.5,
)


def _example_1_controller(N: int = 2):
    return synth_controller(EXAMPLE_1, [[-2.0]], N)


def _fake_certificate(l: int) -> Certificate:
    margins = Margins(min_eig_P=0.1, max_eig_Lambda=-0.1, alpha=0.5, passed=True)
    return Certificate(P=np.eye(3), alpha=0.5, margins=margins, l=l, solver_margin=0.01)


def test_assemble_blocks_structure():
    """
    Check the placement of every block for the scalar example.
    """
    ctrl = _example_1_controller()

    blocks = assemble_blocks(EXAMPLE_1, ctrl, 3)

    assert blocks.size == 6
    assert blocks.Acal[0, 0] == 1.0
    np.testing.assert_array_equal(blocks.Acal[0, 1:], np.zeros(5))
    np.testing.assert_array_equal(blocks.Acal[1:3, :1], ctrl.B_tilde)
    np.testing.assert_array_equal(blocks.Acal[1:3, 1:3], ctrl.A_tilde)
    np.testing.assert_array_equal(
        blocks.Acal[3:, 3:], -np.array([[0, 0, 0], [2, 0, 0], [0, 6, 0]])
    )
    np.testing.assert_array_equal(blocks.B1[:, 0], [0, 0, 0, 1, 1, 1])
    np.testing.assert_array_equal(blocks.B2[:, 0], [1, 0, 0, -1, 1, -1])
    np.testing.assert_array_equal(blocks.Kbar[0, :3], np.hstack([ctrl.K2, ctrl.K1])[0])
    np.testing.assert_array_equal(blocks.Kbar[0, 3:], np.zeros(3))
    np.testing.assert_array_equal(blocks.Qbar[3:, 3:], np.diag([1.0, 3.0, 5.0]))
    assert np.count_nonzero(blocks.Qbar[:3]) == 0


def test_assemble_blocks_mismatch():
    """
    Check that a controller for another plant is rejected.
    """
    K = design_gain(EXAMPLE_2, lqr=(np.eye(3), np.eye(1)))
    ctrl = synth_controller(EXAMPLE_2, K, 2)
    with pytest.raises(AssemblyError):
        assemble_blocks(EXAMPLE_1, ctrl, 2)

    slower = PlantModel(A=[[1.0]], B=[[1.0]], C=[[1.0]], D=2.0)
    with pytest.raises(AssemblyError):
        assemble_blocks(slower, _example_1_controller(), 2)


def test_lambda_operator_linear_and_symmetric():
    """
    Check that Lambda is symmetric and linear in (P, alpha).
    """
    blocks = assemble_blocks(EXAMPLE_1, _example_1_controller(3), 2)
    rng = np.random.default_rng(3)
    P1 = rng.normal(size=(6, 6))
    P1 = P1 + P1.T
    P2 = np.eye(6)

    L1 = lambda_operator(blocks, P1, 0.3)
    L2 = lambda_operator(blocks, P2, 1.1)

    assert L1.shape == (7, 7)
    np.testing.assert_allclose(L1, L1.T)
    np.testing.assert_allclose(
        lambda_operator(blocks, 2.0 * P1 - P2, 0.6 - 1.1), 2.0 * L1 - L2, atol=1e-10
    )
    np.testing.assert_allclose(lambda_operator(blocks, np.zeros((6, 6)), 0.0), 0.0)
    assert L2[-1, -1] == -1.1

    with pytest.raises(AssemblyError):
        lambda_operator(blocks, np.eye(5), 1.0)


def test_transform_blocks_congruence():
    """
    Check that a change of coordinates acts on Lambda as a congruence.
    """
    blocks = assemble_blocks(EXAMPLE_1, _example_1_controller(), 2)
    T = np.diag([2.0, 0.5, 3.0, 1.0, 0.25])
    rng = np.random.default_rng(5)
    P = rng.normal(size=(5, 5))
    P = P + P.T

    transformed = transform_blocks(blocks, T)

    T_full = np.eye(6)
    T_full[:5, :5] = T
    np.testing.assert_allclose(
        lambda_operator(transformed, T.T @ P @ T, 0.7),
        T_full.T @ lambda_operator(blocks, P, 0.7) @ T_full,
        atol=1e-10,
    )


def test_check_certificate_rejects_indefinite():
    """
    Check that a candidate with a non-positive P fails the independent check.
    """
    blocks = assemble_blocks(EXAMPLE_1, _example_1_controller(), 2)

    margins = check_certificate(blocks, -np.eye(5), 1.0)

    assert not margins.passed
    assert margins.min_eig_P == pytest.approx(-1.0)


@pytest.mark.parametrize(
    ("N", "l"),
    [(2, 4), (3, 4), (10, 7)],
)
def test_solve_feasibility_example_1(N, l):
    """
    Check that the published feasible (N, l) pairs of the scalar example are certified.
    """
    ctrl = _example_1_controller(N)
    blocks = assemble_blocks(EXAMPLE_1, ctrl, l)

    result = solve_feasibility(blocks)

    assert isinstance(result, Certificate)
    assert result.margins.passed
    assert check_certificate(blocks, result.P, result.alpha).passed
    smallest = min(
        result.margins.min_eig_P, result.alpha, -result.margins.max_eig_Lambda
    )
    assert smallest == pytest.approx(1.0, rel=1e-3)


@pytest.mark.parametrize(
    ("example", "N", "l"),
    [(2, 2, 5), (2, 3, 6), (2, 4, 5), (3, 4, 5), (3, 5, 5), (3, 6, 7)],
)
def test_solve_feasibility_examples_2_and_3(example, N, l):
    """
    Check the published feasible (N, l) pairs of the LQR and reactor examples.
    """
    spec = load_run_spec(scenario_path(example))
    ctrl = synth_controller(spec.plant, spec.gain.design(spec.plant), N)
    blocks = assemble_blocks(spec.plant, ctrl, l)

    result = solve_feasibility(blocks)

    assert isinstance(result, Certificate), result.reason
    assert result.l == l
    assert check_certificate(blocks, result.P, result.alpha).passed


def test_solve_feasibility_ignores_candidate_scale():
    """
    Check that a valid candidate returned at a tiny scale is still accepted
    and rescaled so that its smallest margin is one.
    """
    blocks = assemble_blocks(EXAMPLE_1, _example_1_controller(), 4)
    cert = solve_feasibility(blocks)
    assert isinstance(cert, Certificate)

    with patch(
        "delaycomp.lmi_cert._solve_margin_problem",
        return_value=(2e-9, 1e-9 * cert.P, 1e-9 * cert.alpha),
    ):
        result = solve_feasibility(blocks, SolverOptions(scaling=False))

    assert isinstance(result, Certificate)
    assert result.solver_margin == 2e-9
    assert result.margins.passed
    np.testing.assert_allclose(result.P, cert.P, rtol=1e-6)
    assert result.alpha == pytest.approx(cert.alpha, rel=1e-6)

    with patch(
        "delaycomp.lmi_cert._solve_margin_problem",
        return_value=(0.0, np.eye(blocks.size), 0.0),
    ):
        rejected = solve_feasibility(blocks, SolverOptions(scaling=False))

    assert isinstance(rejected, NotFound)
    assert "relative margin" in rejected.reason


def test_solve_feasibility_destabilized_loop():
    """
    Check that an unstable closed loop never gets a certificate.
    """
    ctrl = synth_controller(EXAMPLE_1, [[0.0]], 2, require_hurwitz=False)

    result = solve_feasibility(assemble_blocks(EXAMPLE_1, ctrl, 4))

    assert isinstance(result, NotFound)
    assert result.margin <= 1e-7


def test_find_min_l_merges_outcomes():
    """
    Check that `find_min_l` keeps l order, records errors and picks the smallest l.
    """

    def fake_solve(blocks, opts=None):
        if blocks.l == 2:
            raise LmiSolverError("solver crashed")
        if blocks.l >= 3:
            return _fake_certificate(blocks.l)
        return NotFound(l=blocks.l, margin=-0.5, reason="margin not positive")

    with patch("delaycomp.lmi_cert.solve_feasibility", side_effect=fake_solve) as mock_solve:
        report = find_min_l(EXAMPLE_1, _example_1_controller(), 5)

    assert mock_solve.call_count == 5
    assert [o.l for o in report.outcomes] == [1, 2, 3, 4, 5]
    assert [o.status for o in report.outcomes] == [
        "not_found",
        "error",
        "certificate",
        "certificate",
        "certificate",
    ]
    assert report.outcomes[1].error == "solver crashed"
    assert np.isnan(report.outcomes[1].margin)
    assert report.min_l == 3
    assert report.certificate.l == 3


def test_find_min_l_threads_and_range(monkeypatch):
    """
    Check the thread count variable and the tested range.
    """
    monkeypatch.setenv("DELAYCOMP_THREADS", "3")

    with patch(
        "delaycomp.lmi_cert.solve_feasibility",
        side_effect=lambda blocks, opts=None: NotFound(
            l=blocks.l, margin=0.0, reason="margin not positive"
        ),
    ):
        report = find_min_l(EXAMPLE_1, _example_1_controller(), 6, l_min=4)

    assert sweep_threads() == 3
    assert [o.l for o in report.outcomes] == [4, 5, 6]
    assert report.min_l is None
    assert report.certificate is None

    with pytest.raises(AssemblyError):
        find_min_l(EXAMPLE_1, _example_1_controller(), 2, l_min=3)


def test_sweep_threads_parsing(monkeypatch):
    """
    Check that invalid thread counts fall back to one worker.
    """
    monkeypatch.delenv("DELAYCOMP_THREADS", raising=False)
    assert sweep_threads() == 1
    monkeypatch.setenv("DELAYCOMP_THREADS", "zero")
    assert sweep_threads() == 1
    monkeypatch.setenv("DELAYCOMP_THREADS", "0")
    assert sweep_threads() == 1
