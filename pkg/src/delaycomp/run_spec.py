"""
Run specifications read from YAML scenario files.

A run spec bundles the plant, one gain-design mode, the controller order,
the certification range, the simulation settings and, for the bundled
literature scenarios, the values the run is expected to reproduce.
"""

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from delaycomp.controller import PlantModel, design_gain
from delaycomp.errors import SpecError
from delaycomp.simulate import SimConfig
from extra.documents import read_document

GAIN_MODES = ("K", "poles", "lqr")


@dataclass(frozen=True)
class GainSpec:
    """
    One of the three gain-design modes.

    Attributes
    ----------
    K : np.ndarray, optional
        Explicit gain row.
    poles : tuple of complex, optional
        Closed-loop poles for pole placement.
    lqr : tuple, optional
        (Q, R) weights.
    require_hurwitz : bool
        Reject gains with A + B K not Hurwitz; disabled only for
        destabilized test scenarios.
    """

    K: np.ndarray | None = None
    poles: tuple | None = None
    lqr: tuple | None = None
    require_hurwitz: bool = True

    def __post_init__(self):
        given = [mode for mode in GAIN_MODES if getattr(self, mode) is not None]
        if len(given) != 1:
            msg = f"Exactly one gain mode of {GAIN_MODES} is required, got {given}"
            raise SpecError(msg)

    @property
    def mode(self) -> str:
        return next(mode for mode in GAIN_MODES if getattr(self, mode) is not None)

    def design(self, plant: PlantModel) -> np.ndarray:
        """Nominal gain row for the plant."""
        return design_gain(plant, K=self.K, poles=self.poles, lqr=self.lqr)


@dataclass(frozen=True)
class RunSpec:
    """
    Parsed run specification.

    Attributes
    ----------
    name : str
        Scenario name, used in output file names.
    plant : PlantModel
        Plant (A, B, C, D).
    gain : GainSpec
        Gain design.
    N : int
        Controller order.
    l : int or None
        Single number of Legendre projections to test.
    l_max : int or None
        Largest l of the search; used when ``l`` is not given.
    simulation : SimConfig or None
        Simulation settings.
    compare_ideal : bool
        Also simulate the ideal loop and report deviations.
    sweep_N : tuple of int
        Orders of the sweep command.
    out : Path
        Output directory.
    expected : dict
        Reference values for the reproduce command.
    """

    name: str
    plant: PlantModel
    gain: GainSpec
    N: int
    l: int | None = None
    l_max: int | None = None
    simulation: SimConfig | None = None
    compare_ideal: bool = True
    sweep_N: tuple = ()
    out: Path = field(default_factory=lambda: Path("results"))
    expected: dict = field(default_factory=dict)

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 2:
            msg = f"N must be an integer >= 2, got {self.N}"
            raise SpecError(msg)
        for name in ("l", "l_max"):
            value = getattr(self, name)
            if value is not None and (int(value) != value or value < 1):
                msg = f"{name} must be an integer >= 1, got {value}"
                raise SpecError(msg)

    @property
    def l_range(self) -> tuple[int, int]:
        """First and last l to test."""
        if self.l is not None:
            return self.l, self.l
        return 1, self.l_max if self.l_max is not None else 1


def parse_poles(values) -> tuple:
    """Complex poles from numbers or strings such as "-0.5+1i"."""
    try:
        return tuple(complex(str(v).replace(" ", "").replace("i", "j")) for v in values)
    except (TypeError, ValueError) as err:
        msg = f"Cannot parse poles {values}"
        raise SpecError(msg) from err


def _section(document: dict, key: str) -> dict:
    section = document.get(key) or {}
    if not isinstance(section, dict):
        msg = f"Section '{key}' must be a mapping"
        raise SpecError(msg)
    return section


def _parse_gain(document: dict) -> GainSpec:
    section = _section(document, "gain")
    unknown = set(section) - {*GAIN_MODES, "require_hurwitz"}
    if unknown:
        msg = f"Unknown gain modes {sorted(unknown)}"
        raise SpecError(msg)
    lqr = None
    if "lqr" in section:
        weights = section["lqr"]
        if not isinstance(weights, dict) or set(weights) != {"Q", "R"}:
            msg = "gain.lqr needs exactly the weights Q and R"
            raise SpecError(msg)
        lqr = (
            np.array(weights["Q"], dtype=float, ndmin=2),
            np.array(weights["R"], dtype=float, ndmin=2),
        )
    return GainSpec(
        K=np.array(section["K"], dtype=float, ndmin=2) if "K" in section else None,
        poles=parse_poles(section["poles"]) if "poles" in section else None,
        lqr=lqr,
        require_hurwitz=bool(section.get("require_hurwitz", True)),
    )


def _parse_simulation(document: dict) -> tuple[SimConfig | None, bool]:
    if "simulation" not in document:
        return None, True
    section = dict(_section(document, "simulation"))
    compare_ideal = bool(section.pop("compare_ideal", True))
    allowed = {"t_end", "dt", "reference", "X0", "u0", "ud0"}
    unknown = set(section) - allowed
    if unknown:
        msg = f"Unknown simulation settings {sorted(unknown)}"
        raise SpecError(msg)
    if "t_end" not in section:
        msg = "simulation.t_end is required"
        raise SpecError(msg)
    reference = tuple(tuple(pair) for pair in section.get("reference") or ())
    if any(len(pair) != 2 for pair in reference):
        msg = "simulation.reference must hold [time, value] pairs"
        raise SpecError(msg)
    u0 = section.get("u0", 0.0)
    if not np.isscalar(u0):
        msg = "simulation.u0 must be a constant in a spec file"
        raise SpecError(msg)
    config = SimConfig(
        t_end=float(section["t_end"]),
        dt=None if section.get("dt") is None else float(section["dt"]),
        reference=reference,
        X0=None if section.get("X0") is None else np.array(section["X0"], dtype=float),
        u0=float(u0),
        ud0=None if section.get("ud0") is None else np.array(section["ud0"], dtype=float),
    )
    return config, compare_ideal


def parse_run_spec(document: dict, base_dir: Path | None = None) -> RunSpec:
    """
    Validate a run-spec mapping.

    Parameters
    ----------
    document : dict
        Parsed YAML document.
    base_dir : Path, optional
        Directory relative output paths are resolved against.

    Returns
    -------
    RunSpec
        The validated spec.

    Raises
    ------
    SpecError
        On a malformed document. Plant and design errors keep their own
        types.
    """
    plant_section = _section(document, "plant")
    missing = [key for key in ("A", "B", "C", "D") if key not in plant_section]
    if missing:
        msg = f"plant is missing {missing}"
        raise SpecError(msg)
    try:
        plant = PlantModel(
            A=np.array(plant_section["A"], dtype=float, ndmin=2),
            B=np.array(plant_section["B"], dtype=float, ndmin=2),
            C=np.array(plant_section["C"], dtype=float, ndmin=2),
            D=float(plant_section["D"]),
        )
    except (TypeError, ValueError) as err:
        msg = f"plant matrices are not numeric: {err}"
        raise SpecError(msg) from err

    certify = _section(document, "certify")
    simulation, compare_ideal = _parse_simulation(document)
    sweep = _section(document, "sweep")

    out = Path(document.get("out", "results"))
    if base_dir is not None and not out.is_absolute():
        out = base_dir / out

    if "N" not in document:
        msg = "N is required"
        raise SpecError(msg)

    return RunSpec(
        name=str(document.get("name", "run")),
        plant=plant,
        gain=_parse_gain(document),
        N=document["N"],
        l=certify.get("l"),
        l_max=certify.get("l_max"),
        simulation=simulation,
        compare_ideal=compare_ideal,
        sweep_N=tuple(int(n) for n in sweep.get("N", ())),
        out=out,
        expected=_section(document, "expected"),
    )


def load_run_spec(path, base_dir: Path | None = None) -> RunSpec:
    """
    Read and validate a run-spec file.

    Parameters
    ----------
    path : str or Path
        YAML file.
    base_dir : Path, optional
        Directory a relative ``out`` is resolved against; the directory of
        the file by default.

    Returns
    -------
    RunSpec
        The validated spec.
    """
    path = Path(path)
    base_dir = path.parent if base_dir is None else base_dir
    return parse_run_spec(read_document(path), base_dir=base_dir)


def with_overrides(
    spec: RunSpec,
    N: int | None = None,
    l_max: int | None = None,
    dt: float | None = None,
    out=None,
) -> RunSpec:
    """
    Apply command-line overrides.

    Parameters
    ----------
    spec : RunSpec
        Spec read from file.
    N : int, optional
        Controller order.
    l_max : int, optional
        Largest l; replaces a single ``l`` of the file.
    dt : float, optional
        Time step.
    out : str or Path, optional
        Output directory.

    Returns
    -------
    RunSpec
        The updated spec.
    """
    changes = {}
    if N is not None:
        changes["N"] = N
    if l_max is not None:
        changes["l"] = None
        changes["l_max"] = l_max
    if out is not None:
        changes["out"] = Path(out)
    if dt is not None:
        simulation = spec.simulation or SimConfig(t_end=20.0 * spec.plant.D)
        changes["simulation"] = replace(simulation, dt=dt)
    return replace(spec, **changes) if changes else spec
