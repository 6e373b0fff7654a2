"""Containers for curves observed on a common age grid, one curve per year."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import InvalidInputError


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class AgeGrid:
    """Strictly ascending grid of age labels.

    Integer single-year ages 0..100 in the reference dataset; arbitrary
    ascending reals are accepted.
    """

    ages: np.ndarray

    def __post_init__(self):
        ages = np.asarray(self.ages, dtype=float)
        if ages.ndim != 1 or ages.size < 2:
            raise InvalidInputError("age grid needs at least 2 ascending labels")
        if not np.all(np.isfinite(ages)):
            raise InvalidInputError("age labels must be finite")
        if np.any(np.diff(ages) <= 0):
            raise InvalidInputError("age labels must be strictly increasing")
        object.__setattr__(self, "ages", _readonly(ages))

    @property
    def n_points(self) -> int:
        return self.ages.size

    def quad_weights(self) -> np.ndarray:
        """Trapezoid quadrature weights for the discretized L2 inner product.

        On a unit-spaced grid this is 1 everywhere except 1/2 at both ends.
        """
        u = self.ages
        w = np.empty_like(u)
        w[0] = (u[1] - u[0]) / 2.0
        w[-1] = (u[-1] - u[-2]) / 2.0
        if u.size > 2:
            w[1:-1] = (u[2:] - u[:-2]) / 2.0
        return w

    @classmethod
    def unit(cls, n_points: int) -> "AgeGrid":
        return cls(np.arange(n_points, dtype=float))


@dataclass(frozen=True)
class FunctionalSeries:
    """A functional time series: one curve per consecutive year.

    ``values`` is an (n_years, n_ages) matrix of finite reals; in the mortality
    application the entries are natural-log rates.
    """

    grid: AgeGrid
    years: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        years = np.asarray(self.years, dtype=int)
        values = np.asarray(self.values, dtype=float)
        if years.ndim != 1 or years.size == 0:
            raise InvalidInputError("need at least one year label")
        if years.size > 1 and np.any(np.diff(years) != 1):
            raise InvalidInputError("year labels must be consecutive integers")
        if values.shape != (years.size, self.grid.n_points):
            raise InvalidInputError(
                f"values shape {values.shape} does not match "
                f"{years.size} years x {self.grid.n_points} ages"
            )
        if not np.all(np.isfinite(values)):
            raise InvalidInputError("all values must be finite")
        object.__setattr__(self, "years", _readonly(years))
        object.__setattr__(self, "values", _readonly(values))

    @property
    def n_years(self) -> int:
        return self.years.size

    @property
    def n_ages(self) -> int:
        return self.grid.n_points

    @property
    def first_year(self) -> int:
        return int(self.years[0])

    @property
    def last_year(self) -> int:
        return int(self.years[-1])

    def curve(self, year: int) -> np.ndarray:
        """Return the curve observed in ``year``."""
        idx = int(year) - self.first_year
        if idx < 0 or idx >= self.n_years:
            raise InvalidInputError(f"year {year} not in series")
        return self.values[idx]

    def window(self, start_year: int, end_year: int) -> "FunctionalSeries":
        """Sub-series covering ``start_year..end_year`` inclusive."""
        if start_year < self.first_year or end_year > self.last_year or start_year > end_year:
            raise InvalidInputError(
                f"window {start_year}:{end_year} outside {self.first_year}:{self.last_year}"
            )
        i = start_year - self.first_year
        j = end_year - self.first_year + 1
        return FunctionalSeries(self.grid, self.years[i:j], self.values[i:j])
