import numpy as np
import pandas as pd
import pytest

from delaycomp.controller import PlantModel, synth_controller
from delaycomp.errors import ComparisonError
from delaycomp.simulate import SimConfig, simulate_closed_loop, simulate_ideal
from extra.trajectories import trajectory_frame, write_trajectory_csv

PLANT = PlantModel(A=[[1.0]], B=[[1.0]], C=[[1.0]], D=1.0)


def _runs(t_end: float = 2.0):
    ctrl = synth_controller(PLANT, [[-2.0]], 3)
    cfg = SimConfig(t_end=t_end, dt=0.1, X0=np.array([1.0]))
    return simulate_closed_loop(PLANT, ctrl, cfg), simulate_ideal(PLANT, [[-2.0]], cfg)


def test_trajectory_frame_columns():
    """
    Check the column layout and the NaN placeholders.
    """
    traj, ideal = _runs()

    frame = trajectory_frame(traj)
    full = trajectory_frame(traj, ideal=ideal, V=np.arange(traj.times.size))

    assert list(frame.columns) == ["t", "y", "y_ideal", "U", "X_1", "ud_1", "ud_2", "ud_3", "V"]
    assert len(frame) == 21
    assert frame["y_ideal"].isna().all() and frame["V"].isna().all()
    np.testing.assert_array_equal(full["y_ideal"], ideal.y)
    np.testing.assert_array_equal(full["V"], np.arange(21))
    np.testing.assert_array_equal(full["ud_2"], traj.ud[:, 1])


def test_trajectory_frame_mismatch():
    """
    Check that runs on different grids or wrong V lengths are rejected.
    """
    traj, _ = _runs()
    _, longer = _runs(t_end=3.0)
    ideal_fine = simulate_ideal(PLANT, [[-2.0]], SimConfig(t_end=2.0, dt=0.05))

    frame = trajectory_frame(traj, ideal=longer)
    assert frame["y_ideal"].notna().all()

    with pytest.raises(ComparisonError):
        trajectory_frame(traj, ideal=ideal_fine)
    with pytest.raises(ComparisonError):
        trajectory_frame(traj, V=np.zeros(3))


def test_write_trajectory_csv(tmp_path):
    """
    Check that the CSV keeps full precision.
    """
    traj, ideal = _runs()
    frame = trajectory_frame(traj, ideal=ideal)

    path = write_trajectory_csv(frame, tmp_path / "out" / "traj.csv")
    stored = pd.read_csv(path, float_precision="round_trip")

    pd.testing.assert_frame_equal(stored, frame, check_exact=True)
