import numpy as np
import pytest

from delaycomp.errors import DomainError, HistoryError
from delaycomp.utils.history import InputHistory


def _filled_history() -> InputHistory:
    history = InputHistory(dt=0.25, delay_steps=4, n_steps=8)
    history.seed(lambda zeta: zeta)
    for k in range(5):
        history.append(10.0 + k)
    return history


def test_history_seed_and_window():
    """
    Check that seeding maps u0(zeta) to U(zeta - D) and windows follow the grid.
    """
    history = _filled_history()

    assert history.delay == 1.0
    assert history.latest_time == 1.0
    np.testing.assert_allclose(history.window(0.0), [0.0, 0.25, 0.5, 0.75, 10.0])
    np.testing.assert_allclose(history.window(1.0), [10.0, 11.0, 12.0, 13.0, 14.0])


def test_history_value_at_grid_times():
    """
    Check that grid times return the recorded samples exactly.
    """
    history = _filled_history()

    assert history.value_at(-1.0) == 0.0
    assert history.value_at(-0.5) == 0.5
    assert history.value_at(0.0) == 10.0
    assert history.value_at(1.0) == 14.0

    with pytest.raises(HistoryError):
        history.value_at(1.25)
    with pytest.raises(HistoryError):
        history.value_at(-1.25)


def test_history_grid_checks():
    """
    Check off-grid times and windows beyond the record.
    """
    history = _filled_history()

    assert history.index_of(0.5) == 6
    with pytest.raises(HistoryError):
        history.index_of(0.3)
    with pytest.raises(HistoryError):
        history.window(1.25)
    with pytest.raises(HistoryError):
        history.window(-0.25)


def test_history_value_at():
    """
    Check piecewise-linear interpolation and the covered range.
    """
    history = _filled_history()

    assert np.isclose(history.value_at(-0.875), 0.125)
    assert np.isclose(history.value_at(0.125), 10.5)
    with pytest.raises(HistoryError):
        history.value_at(1.5)


def test_history_capacity_and_constant_seed():
    """
    Check a constant seed and the full-record error.
    """
    history = InputHistory(dt=0.5, delay_steps=2, n_steps=1)
    history.seed(3.0)
    history.append(1.0)
    history.append(2.0)

    assert history.filled == 4
    np.testing.assert_allclose(history.values, [3.0, 3.0, 1.0, 2.0])
    assert history.value_at(0.5) == 2.0
    with pytest.raises(HistoryError):
        history.append(4.0)


def test_history_invalid_grid():
    """
    Check that invalid grids are rejected.
    """
    with pytest.raises(DomainError):
        InputHistory(dt=0.0, delay_steps=4, n_steps=1)
    with pytest.raises(DomainError):
        InputHistory(dt=0.1, delay_steps=0, n_steps=1)
