from pathlib import Path

import numpy as np
import yaml

from delaycomp.controller import DynamicController, PlantModel
from delaycomp.errors import SpecError
from delaycomp.lmi_cert import Certificate, Margins, SweepReport
from delaycomp.utils.fem_transport import BasisConfig, build_fem_matrices

CONTROLLER_KIND = "delaycomp/controller"
CERTIFICATE_KIND = "delaycomp/certificate"


def project_root() -> Path:
    """Root of the repository, holding the bundled scenarios."""
    return Path(__file__).resolve().parents[2]


def scenario_path(example: int) -> Path:
    """
    Path of a bundled literature scenario.

    Parameters
    ----------
    example : int
        Example number (1, 2 or 3).

    Returns
    -------
    Path
        scenarios/example<k>.yaml under the project root.
    """
    path = project_root() / "scenarios" / f"example{int(example)}.yaml"
    if not path.is_file():
        msg = f"No bundled scenario for example {example} ({path})"
        raise SpecError(msg)
    return path


def read_document(path) -> dict:
    """
    Load a YAML document.

    Parameters
    ----------
    path : str or Path
        Document path.

    Returns
    -------
    dict
        The parsed mapping.
    """
    try:
        with open(path, "r") as file:
            document = yaml.safe_load(file)
    except (OSError, yaml.YAMLError) as err:
        msg = f"Cannot read {path}: {err}"
        raise SpecError(msg) from err
    if not isinstance(document, dict):
        msg = f"{path} does not hold a mapping"
        raise SpecError(msg)
    return document


def write_document(path, document: dict) -> Path:
    """
    Write a YAML document, matrices as row-major flow lists.

    Floats are rendered with their shortest round-trip representation, so
    reading the file back gives bit-equal values.

    Parameters
    ----------
    path : str or Path
        Output path; parent directories are created.
    document : dict
        Plain data (lists, floats, ints, strings).

    Returns
    -------
    Path
        The written path.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as file:
        yaml.safe_dump(document, file, sort_keys=False, default_flow_style=None)
    return path


def _matrix(value, name: str) -> np.ndarray:
    try:
        return np.array(value, dtype=float, ndmin=2)
    except (TypeError, ValueError) as err:
        msg = f"Entry '{name}' is not a numeric matrix"
        raise SpecError(msg) from err


def _require(document: dict, keys: list, kind: str) -> None:
    missing = [key for key in keys if key not in document]
    if document.get("kind") != kind or missing:
        msg = f"Not a {kind} document (missing {missing or ['kind']})"
        raise SpecError(msg)


def controller_document(plant: PlantModel, ctrl: DynamicController) -> dict:
    """
    Controller matrices as plain data.

    Parameters
    ----------
    plant : PlantModel
        Plant the controller was synthesized for.
    ctrl : DynamicController
        The controller.

    Returns
    -------
    dict
        A_tilde, B_tilde, K1, K2, H, N, D, K and the plant matrices.
    """
    return {
        "kind": CONTROLLER_KIND,
        "N": ctrl.N,
        "D": ctrl.cfg.D,
        "K": ctrl.K.tolist(),
        "A_tilde": ctrl.A_tilde.tolist(),
        "B_tilde": ctrl.B_tilde.tolist(),
        "K1": ctrl.K1.tolist(),
        "K2": ctrl.K2.tolist(),
        "H": float(ctrl.H),
        "plant": {
            "A": plant.A.tolist(),
            "B": plant.B.tolist(),
            "C": plant.C.tolist(),
            "D": plant.D,
        },
    }


def controller_from_document(document: dict) -> DynamicController:
    """
    Rebuild a DynamicController from `controller_document` data.

    Parameters
    ----------
    document : dict
        Parsed controller document.

    Returns
    -------
    DynamicController
        The controller, entries bit-equal to the written ones.
    """
    keys = ["N", "D", "K", "A_tilde", "B_tilde", "K1", "K2", "H"]
    _require(document, keys, CONTROLLER_KIND)
    cfg = BasisConfig(N=document["N"], D=document["D"])
    return DynamicController(
        A_tilde=_matrix(document["A_tilde"], "A_tilde"),
        B_tilde=_matrix(document["B_tilde"], "B_tilde"),
        K1=_matrix(document["K1"], "K1"),
        K2=_matrix(document["K2"], "K2"),
        H=float(document["H"]),
        cfg=cfg,
        K=_matrix(document["K"], "K"),
        fem=build_fem_matrices(cfg),
    )


def write_controller(path, plant: PlantModel, ctrl: DynamicController) -> Path:
    """Write the controller document."""
    return write_document(path, controller_document(plant, ctrl))


def read_controller(path) -> DynamicController:
    """Read a controller document."""
    return controller_from_document(read_document(path))


def certificate_document(
    cert: Certificate, n: int, N: int, report: SweepReport | None = None
) -> dict:
    """
    Certificate (P, alpha) with its verified margins.

    Parameters
    ----------
    cert : Certificate
        The certificate.
    n, N : int
        Plant and controller orders.
    report : SweepReport, optional
        Per-l outcomes of the search, stored as a table.

    Returns
    -------
    dict
        Plain data.
    """
    document = {
        "kind": CERTIFICATE_KIND,
        "n": int(n),
        "N": int(N),
        "l": cert.l,
        "alpha": float(cert.alpha),
        "P": cert.P.tolist(),
        "solver_margin": float(cert.solver_margin),
        "margins": {
            "min_eig_P": cert.margins.min_eig_P,
            "max_eig_Lambda": cert.margins.max_eig_Lambda,
            "alpha": cert.margins.alpha,
            "passed": cert.margins.passed,
        },
    }
    if report is not None:
        document["sweep"] = sweep_table(report)
    return document


def sweep_table(report: SweepReport) -> list:
    """Per-l rows (l, status, margin, error) of a search."""
    return [
        {
            "l": outcome.l,
            "status": outcome.status,
            "margin": float(outcome.margin),
            "error": outcome.error,
        }
        for outcome in report.outcomes
    ]


def certificate_from_document(document: dict) -> Certificate:
    """
    Rebuild a Certificate from `certificate_document` data.

    Parameters
    ----------
    document : dict
        Parsed certificate document.

    Returns
    -------
    Certificate
        The certificate.
    """
    _require(document, ["l", "alpha", "P", "margins"], CERTIFICATE_KIND)
    margins = document["margins"]
    return Certificate(
        P=_matrix(document["P"], "P"),
        alpha=float(document["alpha"]),
        margins=Margins(
            min_eig_P=float(margins["min_eig_P"]),
            max_eig_Lambda=float(margins["max_eig_Lambda"]),
            alpha=float(margins["alpha"]),
            passed=bool(margins["passed"]),
        ),
        l=int(document["l"]),
        solver_margin=float(document.get("solver_margin", float("nan"))),
    )


def write_certificate(
    path, cert: Certificate, n: int, N: int, report: SweepReport | None = None
) -> Path:
    """Write the certificate document."""
    return write_document(path, certificate_document(cert, n, N, report))


def read_certificate(path) -> Certificate:
    """Read a certificate document."""
    return certificate_from_document(read_document(path))
