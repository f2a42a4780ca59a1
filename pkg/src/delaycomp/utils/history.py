"""
Record of the applied input on a uniform time grid.

The exact solution of the transport block is u(zeta, t) = U(t - D + zeta), so
the record of U over [t - D, t] is the PDE state at time t. Grid index i
holds U((i - m) dt), where m = D / dt is the number of steps in one delay.
"""

import numpy as np

from delaycomp.errors import DomainError, HistoryError

GRID_TOL = 1e-9


class InputHistory:
    """
    Uniform-grid record of U(t) starting at t = -D.

    Samples are interpreted as a piecewise-linear signal, the shape the
    midpoint integrator assumes between grid points.

    Parameters
    ----------
    dt : float
        Grid step.
    delay_steps : int
        m = D / dt.
    n_steps : int
        Number of steps after t = 0 the record can hold.

    Attributes
    ----------
    values : np.ndarray
        The recorded samples, index i at time (i - m) dt.
    filled : int
        Number of valid samples.
    """

    def __init__(self, dt: float, delay_steps: int, n_steps: int):
        if not dt > 0 or delay_steps < 1 or n_steps < 0:
            msg = f"Invalid history grid: dt={dt}, m={delay_steps}, steps={n_steps}"
            raise DomainError(msg)
        self.dt = float(dt)
        self.delay_steps = int(delay_steps)
        self.values = np.zeros(self.delay_steps + n_steps + 1)
        self.filled = 0

    @property
    def delay(self) -> float:
        return self.delay_steps * self.dt

    @property
    def latest_time(self) -> float:
        """Time of the last valid sample."""
        return (self.filled - 1 - self.delay_steps) * self.dt

    def seed(self, u0) -> None:
        """
        Fill [-D, 0) from the transport initial profile.

        Parameters
        ----------
        u0 : callable or float
            Initial profile u(zeta, 0), zeta in [0, D]; U(s) = u0(s + D).
        """
        zeta = np.arange(self.delay_steps) * self.dt
        if callable(u0):
            samples = np.broadcast_to(np.asarray(u0(zeta), dtype=float), zeta.shape)
        else:
            samples = np.full(zeta.shape, float(u0))
        self.values[: self.delay_steps] = samples
        self.filled = self.delay_steps

    def append(self, value: float) -> None:
        """Record the next grid sample."""
        if self.filled >= self.values.size:
            msg = "History record is full"
            raise HistoryError(msg)
        self.values[self.filled] = value
        self.filled += 1

    def index_of(self, t: float) -> int:
        """
        Grid index of time t.

        Raises
        ------
        HistoryError
            If t is not on the grid.
        """
        position = t / self.dt + self.delay_steps
        index = int(round(position))
        if abs(position - index) > GRID_TOL * max(1.0, abs(position)):
            msg = f"t={t} is not on the history grid of step {self.dt}"
            raise HistoryError(msg)
        return index

    def window(self, t: float) -> np.ndarray:
        """
        Samples of u(., t) at zeta = 0, dt, ..., D.

        Parameters
        ----------
        t : float
            Grid time whose window [t - D, t] is requested.

        Returns
        -------
        np.ndarray
            The m + 1 samples.
        """
        end = self.index_of(t)
        start = end - self.delay_steps
        if start < 0 or end >= self.filled:
            msg = (
                f"History covers [{-self.delay:.6g}, {self.latest_time:.6g}], "
                f"window [{t - self.delay:.6g}, {t:.6g}] requested"
            )
            raise HistoryError(msg)
        return self.values[start : end + 1].copy()

    def value_at(self, s: float) -> float:
        """
        Piecewise-linear value U(s).

        Parameters
        ----------
        s : float
            Time in the covered range.

        Returns
        -------
        float
            The interpolated input.
        """
        position = s / self.dt + self.delay_steps
        last = self.filled - 1
        if last < 0 or position < -GRID_TOL or position > last + GRID_TOL:
            msg = f"U({s}) is outside the recorded history"
            raise HistoryError(msg)
        # Neighbouring samples of s
        left = min(max(int(np.floor(position)), 0), max(last - 1, 0))
        right = min(left + 1, last)
        weight = min(max(position - left, 0.0), 1.0)
        return float((1.0 - weight) * self.values[left] + weight * self.values[right])
