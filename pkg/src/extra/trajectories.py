from pathlib import Path

import numpy as np
import pandas as pd

from delaycomp.errors import ComparisonError
from delaycomp.simulate import Trajectory

FLOAT_FORMAT = "%.17g"


def trajectory_frame(
    traj: Trajectory, ideal: Trajectory | None = None, V=None
) -> pd.DataFrame:
    """
    Tabulate a trajectory for export.

    Columns are t, y, y_ideal, U, X_1..X_n, ud_1..ud_N, V. Missing ideal
    output or Lyapunov values are left as NaN.

    Parameters
    ----------
    traj : Trajectory
        Closed-loop response.
    ideal : Trajectory, optional
        Ideal response on the same grid.
    V : array_like, optional
        Lyapunov functional along ``traj``.

    Returns
    -------
    pd.DataFrame
        One row per sample.
    """
    samples = traj.times.size
    y_ideal = np.full(samples, np.nan)
    if ideal is not None:
        # A diverged run is shorter than the ideal one
        if ideal.times.size < samples or not np.allclose(
            ideal.times[:samples], traj.times
        ):
            msg = "Ideal trajectory does not share the time grid"
            raise ComparisonError(msg)
        y_ideal = ideal.y[:samples]

    values = np.full(samples, np.nan) if V is None else np.asarray(V, dtype=float)
    if values.size != samples:
        msg = f"V has {values.size} samples, trajectory has {samples}"
        raise ComparisonError(msg)

    frame = pd.DataFrame({"t": traj.times, "y": traj.y, "y_ideal": y_ideal, "U": traj.U})
    states = pd.DataFrame(
        traj.X, columns=[f"X_{i + 1}" for i in range(traj.X.shape[1])]
    )
    controller = pd.DataFrame(
        traj.ud, columns=[f"ud_{i + 1}" for i in range(traj.ud.shape[1])]
    )
    frame = pd.concat([frame, states, controller], axis=1)
    frame["V"] = values
    return frame


def write_trajectory_csv(frame: pd.DataFrame, path) -> Path:
    """
    Write a trajectory table with 17 significant digits.

    Parameters
    ----------
    frame : pd.DataFrame
        Output of `trajectory_frame`.
    path : str or Path
        CSV path; parent directories are created.

    Returns
    -------
    Path
        The written path.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    return path
