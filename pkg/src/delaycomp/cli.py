"""
Command-line front end.

    delaycomp synth|certify|simulate|sweep|reproduce --spec <file>
        [--out <dir>] [--n <N>] [--l-max <l>] [--dt <s>]

Exit codes: 0 success, 2 invalid input, 3 no certificate found, 4 numerical
failure or a reproduction mismatch.
"""

import argparse
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import pandas as pd
from tqdm import tqdm

from delaycomp.controller import DynamicController, synth_controller
from delaycomp.errors import DelayCompError, SpecError
from delaycomp.lmi_cert import (
    Certificate,
    SweepReport,
    assemble_blocks,
    find_min_l,
    solve_feasibility,
    sweep_threads,
)
from delaycomp.run_spec import RunSpec, load_run_spec, parse_poles, with_overrides
from delaycomp.simulate import (
    CompareMetrics,
    SimConfig,
    Trajectory,
    compare_metrics,
    lyapunov_trace,
    simulate_closed_loop,
    simulate_ideal,
)
from extra.documents import (
    read_certificate,
    scenario_path,
    sweep_table,
    write_certificate,
    write_controller,
    write_document,
)
from extra.trajectories import trajectory_frame, write_trajectory_csv

EXIT_OK = 0
EXIT_NOT_FOUND = 3
EXIT_MISMATCH = 4
REPRODUCE_ATOL = 1e-3
SPECTRUM_ATOL = 1e-6


@dataclass
class RunResult:
    """Artifacts of one synth + certify + simulate run at a given N."""

    N: int
    ctrl: DynamicController
    report: SweepReport | None = None
    traj: Trajectory | None = None
    metrics: CompareMetrics | None = None


def _synthesize(spec: RunSpec, N: int | None = None) -> DynamicController:
    N = spec.N if N is None else N
    K = spec.gain.design(spec.plant)
    return synth_controller(
        spec.plant, K, N, require_hurwitz=spec.gain.require_hurwitz
    )


def _certify(
    spec: RunSpec,
    ctrl: DynamicController,
    *,
    progress: bool = True,
    workers: int | None = None,
) -> SweepReport:
    l_min, l_max = spec.l_range
    return find_min_l(
        spec.plant, ctrl, l_max, progress=progress, l_min=l_min, workers=workers
    )


def _simulation_config(spec: RunSpec) -> SimConfig:
    if spec.simulation is not None:
        return spec.simulation
    return SimConfig(t_end=20.0 * spec.plant.D)


def _simulate(
    spec: RunSpec,
    ctrl: DynamicController,
    cert: Certificate | None = None,
    ideal: Trajectory | None = None,
) -> tuple[Trajectory, CompareMetrics | None, Path]:
    """Closed-loop run, optional V(t) and comparison, written as CSV."""
    cfg = _simulation_config(spec)
    traj = simulate_closed_loop(spec.plant, ctrl, cfg)
    if ideal is None and spec.compare_ideal:
        ideal = simulate_ideal(spec.plant, ctrl.K, cfg)

    metrics = None
    if ideal is not None and not traj.diverged:
        metrics = compare_metrics(traj, ideal)

    V = None
    if cert is not None:
        blocks = assemble_blocks(spec.plant, ctrl, cert.l)
        V = lyapunov_trace(traj, cert, blocks)

    path = write_trajectory_csv(
        trajectory_frame(traj, ideal=ideal, V=V),
        spec.out / f"{spec.name}_trajectory_N{ctrl.N}.csv",
    )
    return traj, metrics, path


def _print_simulation(traj: Trajectory, metrics: CompareMetrics | None) -> None:
    if traj.diverged:
        print(f"Diverged at t = {traj.blowup_time:.6g}")
    if metrics is not None:
        print(
            f"Deviation from ideal: sup {metrics.sup_deviation:.6g}, "
            f"integral squared {metrics.l2_deviation:.6g}"
        )


def _print_report(report: SweepReport) -> None:
    for outcome in report.outcomes:
        detail = f"margin {outcome.margin:.3e}"
        if outcome.error:
            detail += f" ({outcome.error})"
        print(f"  l = {outcome.l}: {outcome.status}, {detail}")


def cmd_synth(spec: RunSpec) -> int:
    """
    Synthesize the controller and write its document.

    Parameters
    ----------
    spec : RunSpec
        Run specification.

    Returns
    -------
    int
        Exit code.
    """
    print(f"Synthesizing controller (N={spec.N}, D={spec.plant.D:g})...")
    ctrl = _synthesize(spec)
    path = write_controller(spec.out / f"{spec.name}_controller_N{ctrl.N}.yaml", spec.plant, ctrl)
    with np.printoptions(precision=4, suppress=True):
        print(f"K1 = {ctrl.K1}")
        print(f"K2 = {ctrl.K2}")
        print(f"A_tilde =\n{ctrl.A_tilde}")
        print(f"B_tilde =\n{ctrl.B_tilde}")
        print(f"H = {ctrl.H:.4f}")
    print(f"Done. Controller written to {path}")
    return EXIT_OK


def cmd_certify(spec: RunSpec) -> int:
    """
    Search the smallest l with a stability certificate.

    Parameters
    ----------
    spec : RunSpec
        Run specification.

    Returns
    -------
    int
        0 when a verified certificate exists, 3 otherwise.
    """
    print(f"Synthesizing controller (N={spec.N})...")
    ctrl = _synthesize(spec)
    l_min, l_max = spec.l_range
    print(f"Certifying l = {l_min}..{l_max}...")
    report = _certify(spec, ctrl)
    _print_report(report)

    cert = report.certificate
    if cert is None:
        path = write_document(
            spec.out / f"{spec.name}_certify_N{ctrl.N}.yaml",
            {"kind": "delaycomp/certify-report", "N": ctrl.N, "sweep": sweep_table(report)},
        )
        print(f"No certificate found for l <= {l_max}. Report written to {path}")
        return EXIT_NOT_FOUND

    path = write_certificate(
        spec.out / f"{spec.name}_certificate_N{ctrl.N}.yaml",
        cert,
        spec.plant.n,
        ctrl.N,
        report,
    )
    print(f"Done. Certificate at l = {cert.l} written to {path}")
    return EXIT_OK


def cmd_simulate(spec: RunSpec, certificate: Path | None = None) -> int:
    """
    Simulate the closed loop and write the trajectory CSV.

    Divergence is reported, not treated as a failure.

    Parameters
    ----------
    spec : RunSpec
        Run specification.
    certificate : Path, optional
        Certificate document; adds V(t) to the CSV.

    Returns
    -------
    int
        Exit code.
    """
    print(f"Synthesizing controller (N={spec.N})...")
    ctrl = _synthesize(spec)
    cert = read_certificate(certificate) if certificate is not None else None
    print("Simulating closed loop...")
    traj, metrics, path = _simulate(spec, ctrl, cert)
    _print_simulation(traj, metrics)
    print(f"Done. Trajectory written to {path}")
    return EXIT_OK


def _sweep_one(spec: RunSpec, N: int, ideal: Trajectory | None) -> RunResult:
    ctrl = _synthesize(spec, N)
    write_controller(spec.out / f"{spec.name}_controller_N{N}.yaml", spec.plant, ctrl)
    # The outer pool over N already uses every DELAYCOMP_THREADS worker
    report = _certify(spec, ctrl, progress=False, workers=1)
    cert = report.certificate
    if cert is not None:
        write_certificate(
            spec.out / f"{spec.name}_certificate_N{N}.yaml", cert, spec.plant.n, N, report
        )
    traj, metrics, _ = _simulate(spec, ctrl, cert, ideal)
    return RunResult(N=N, ctrl=ctrl, report=report, traj=traj, metrics=metrics)


def cmd_sweep(spec: RunSpec) -> int:
    """
    Synthesize, certify and simulate for every N of the sweep.

    Parameters
    ----------
    spec : RunSpec
        Run specification; ``sweep_N`` lists the orders.

    Returns
    -------
    int
        0 when every order is certified, 3 otherwise.
    """
    orders = spec.sweep_N or (spec.N,)
    # One ideal response shared by every order
    ideal = None
    if spec.compare_ideal:
        print("Simulating ideal loop...")
        K = spec.gain.design(spec.plant)
        ideal = simulate_ideal(spec.plant, K, _simulation_config(spec))

    with ThreadPoolExecutor(max_workers=sweep_threads()) as executor:
        results = list(
            tqdm(
                executor.map(lambda N: _sweep_one(spec, N, ideal), orders),
                total=len(orders),
                desc="Sweeping N",
            )
        )

    # Metrics table
    table = pd.DataFrame(
        {
            "N": [r.N for r in results],
            "min_l": [r.report.min_l for r in results],
            "sup_deviation": [
                r.metrics.sup_deviation if r.metrics else np.nan for r in results
            ],
            "l2_deviation": [
                r.metrics.l2_deviation if r.metrics else np.nan for r in results
            ],
            "diverged": [r.traj.diverged for r in results],
        }
    )
    spec.out.mkdir(parents=True, exist_ok=True)
    table.to_csv(spec.out / "sweep.csv", index=False, float_format="%.17g")
    print(table.to_string(index=False))
    print(f"Done. Sweep written to {spec.out / 'sweep.csv'}")

    certified = all(r.report.min_l is not None for r in results)
    return EXIT_OK if certified else EXIT_NOT_FOUND


def _compare_entries(name: str, got, expected, atol: float) -> list[str]:
    got = np.atleast_2d(np.asarray(got, dtype=float))
    expected = np.atleast_2d(np.asarray(expected, dtype=float))
    if expected.size == got.size:
        expected = expected.reshape(got.shape)
    else:
        return [f"{name}: shape {got.shape}, expected {expected.shape}"]
    offending = np.argwhere(np.abs(got - expected) > atol)
    return [
        f"{name}[{i},{j}]: got {got[i, j]:.6g}, expected {expected[i, j]:.6g}"
        for i, j in offending
    ]


def reproduce_mismatches(spec: RunSpec, ctrl: DynamicController) -> list[str]:
    """
    Compare a synthesized controller with the expected values of a scenario.

    Parameters
    ----------
    spec : RunSpec
        Scenario with an ``expected`` block.
    ctrl : DynamicController
        Controller synthesized at ``spec.N``.

    Returns
    -------
    list of str
        One line per offending entry.
    """
    expected = spec.expected
    mismatches = []
    for name in ("K", "K1", "K2", "A_tilde", "B_tilde", "H"):
        if name in expected:
            got = ctrl.H if name == "H" else getattr(ctrl, name)
            mismatches += _compare_entries(name, got, expected[name], REPRODUCE_ATOL)

    if "spectrum" in expected:
        closed = spec.plant.A + spec.plant.B @ ctrl.K
        got = np.sort_complex(np.linalg.eigvals(closed))
        want = np.sort_complex(np.array(parse_poles(expected["spectrum"])))
        if got.size != want.size or np.max(np.abs(got - want)) > SPECTRUM_ATOL:
            mismatches.append(f"spectrum: got {np.round(got, 6)}, expected {want}")
    return mismatches


def cmd_reproduce(spec: RunSpec) -> int:
    """
    Rerun a literature scenario and check the published values.

    Parameters
    ----------
    spec : RunSpec
        Scenario with an ``expected`` block (printed matrices, closed-loop
        spectrum and feasible (N, l) rows).

    Returns
    -------
    int
        0 when everything matches, 4 otherwise.
    """
    print(f"Reproducing {spec.name}...")
    # Printed matrices and spectrum
    ctrl = _synthesize(spec)
    mismatches = reproduce_mismatches(spec, ctrl)
    write_controller(spec.out / f"{spec.name}_controller_N{ctrl.N}.yaml", spec.plant, ctrl)

    # Published (N, l) rows
    rows = spec.expected.get("table", [])
    table = []
    for row in tqdm(rows, desc="Certifying table rows"):
        row_ctrl = _synthesize(spec, int(row["N"]))
        result = solve_feasibility(assemble_blocks(spec.plant, row_ctrl, int(row["l"])))
        found = isinstance(result, Certificate)
        table.append({"N": int(row["N"]), "l": int(row["l"]), "certified": found})
        if not found:
            mismatches.append(
                f"table: no certificate at N = {row['N']}, l = {row['l']} ({result.reason})"
            )

    # Reference run next to the ideal loop
    print("Simulating closed loop...")
    traj, metrics, path = _simulate(spec, ctrl)
    _print_simulation(traj, metrics)

    # Report
    report = write_document(
        spec.out / f"{spec.name}_reproduce.yaml",
        {"kind": "delaycomp/reproduce-report", "table": table, "mismatches": mismatches},
    )
    if mismatches:
        print("Mismatches:")
        for line in mismatches:
            print(f"  {line}")
        print(f"Report written to {report}")
        return EXIT_MISMATCH
    print(f"Done. All values reproduced. Report written to {report}")
    return EXIT_OK


def _parse_args(argv: list[str] | None = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(
        prog="delaycomp",
        description="Dynamic controllers for input-delay systems with LMI certificates.",
    )
    parser.add_argument(
        "command", choices=["synth", "certify", "simulate", "sweep", "reproduce"]
    )
    parser.add_argument("--spec", type=Path, help="Run-spec YAML file.")
    parser.add_argument(
        "--example", type=int, choices=[1, 2, 3], help="Bundled scenario (reproduce)."
    )
    parser.add_argument("--out", type=Path, help="Output directory.")
    parser.add_argument(
        "--n", dest="N", type=int, action="append", help="Controller order (repeatable for sweep)."
    )
    parser.add_argument("--l-max", dest="l_max", type=int, help="Largest l to test.")
    parser.add_argument("--dt", type=float, help="Simulation step.")
    parser.add_argument("--certificate", type=Path, help="Certificate for V(t) (simulate).")
    return parser.parse_args(argv)


def _load_spec(args: argparse.Namespace) -> RunSpec:
    if args.spec is not None:
        spec = load_run_spec(args.spec)
    elif args.example is not None:
        # Bundled scenarios write below the working directory
        spec = load_run_spec(scenario_path(args.example), base_dir=Path())
    else:
        msg = "Either --spec or --example is required"
        raise SpecError(msg)

    N = args.N[-1] if args.N else None
    spec = with_overrides(spec, N=N, l_max=args.l_max, dt=args.dt, out=args.out)
    if args.command == "sweep" and args.N:
        spec = replace(spec, sweep_N=tuple(args.N))
    return spec


def main(argv: list[str] | None = None) -> int:
    """
    Run one command.

    Parameters
    ----------
    argv : list of str, optional
        Arguments; ``sys.argv[1:]`` by default.

    Returns
    -------
    int
        The exit code.
    """
    args = _parse_args(argv)
    commands = {
        "synth": cmd_synth,
        "certify": cmd_certify,
        "simulate": lambda spec: cmd_simulate(spec, args.certificate),
        "sweep": cmd_sweep,
        "reproduce": cmd_reproduce,
    }
    try:
        return commands[args.command](_load_spec(args))
    except DelayCompError as err:
        print(f"Error: {err}", file=sys.stderr)
        return err.exit_code


if __name__ == "__main__":
    raise SystemExit(main())
