"""Time-series containers, detrending, differencing and VECM regressor blocks.

Everything downstream (estimation, bootstrap, Monte Carlo) consumes the
matrices produced here, so the alignment conventions are fixed in one place:
rows are time, columns are variables, and calendar time runs t = 1..T.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import DataError

__all__ = [
    "DetrendMode",
    "TimeSeriesData",
    "DetrendedSeries",
    "VecmRegressors",
    "detrend",
    "difference",
    "build_vecm_regressors",
]


class DetrendMode(str, Enum):
    """Deterministic component removed before estimation."""

    NONE = "none"
    CONSTANT = "constant"
    CONSTANT_AND_TREND = "constant_and_trend"


def _check_finite(values: np.ndarray, names=None) -> None:
    if np.isfinite(values).all():
        return
    bad = np.argwhere(~np.isfinite(values))
    row, col = bad[0]
    label = names[col] if names else f"column {col + 1}"
    raise DataError(
        f"non-finite value at row {row + 1}, {label} "
        f"({values[row, col]!r}); clean the input before estimation"
    )


@dataclass(frozen=True)
class TimeSeriesData:
    """A T x K observation matrix with variable names.

    Parameters
    ----------
    values : ndarray, shape (T, K)
        Observations, rows are time points.
    names : tuple of str, optional
        Variable labels; generated as ``y1..yK`` when omitted.
    frequency : str, optional
        Free-form sampling label, metadata only.
    """

    values: np.ndarray
    names: tuple = ()
    frequency: str | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2:
            raise DataError(f"expected a 2-d observation matrix, got ndim={values.ndim}")
        if values.shape[0] < 1 or values.shape[1] < 1:
            raise DataError(f"empty observation matrix with shape {values.shape}")
        names = tuple(self.names) if self.names else tuple(
            f"y{i + 1}" for i in range(values.shape[1])
        )
        if len(names) != values.shape[1]:
            raise DataError(
                f"{len(names)} names given for {values.shape[1]} columns"
            )
        if len(set(names)) != len(names):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise DataError(f"duplicate variable names: {', '.join(dupes)}")
        _check_finite(values, names)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "names", names)

    @property
    def n_obs(self) -> int:
        return self.values.shape[0]

    @property
    def n_vars(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class DetrendedSeries:
    """OLS-detrended observations together with the removed deterministics.

    ``tilde_values[t] + mu0 + mu1 * (t + 1)`` reproduces the input row t
    (0-based row index, calendar time t + 1).
    """

    tilde_values: np.ndarray
    mu0: np.ndarray
    mu1: np.ndarray
    mode: DetrendMode

    @property
    def n_obs(self) -> int:
        return self.tilde_values.shape[0]

    @property
    def n_vars(self) -> int:
        return self.tilde_values.shape[1]

    def retrend(self) -> np.ndarray:
        """Add the removed deterministic components back."""
        t = np.arange(1, self.n_obs + 1)[:, None]
        return self.tilde_values + self.mu0[None, :] + t * self.mu1[None, :]


def _as_values(data) -> np.ndarray:
    if isinstance(data, TimeSeriesData):
        return data.values
    if isinstance(data, DetrendedSeries):
        return data.tilde_values
    values = np.asarray(data, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    if values.ndim != 2:
        raise DataError(f"expected a 2-d observation matrix, got ndim={values.ndim}")
    _check_finite(values)
    return values


def detrend(data, mode: DetrendMode | str) -> DetrendedSeries:
    """Remove a constant and optionally a linear trend by per-column OLS.

    The regression uses the time index t = 1..T, so ``mu0`` is the intercept
    at t = 0 (not the column mean) when a trend is included.

    Parameters
    ----------
    data : TimeSeriesData or array_like, shape (T, K)
    mode : DetrendMode
        ``none`` is the identity map; ``constant`` removes per-column means;
        ``constant_and_trend`` removes an OLS line in t.

    Returns
    -------
    DetrendedSeries
    """
    values = _as_values(data)
    mode = DetrendMode(mode)
    n_obs, n_vars = values.shape
    if n_obs < 3:
        raise DataError(f"need at least 3 observations to detrend, got {n_obs}")

    if mode is DetrendMode.NONE:
        return DetrendedSeries(values.copy(), np.zeros(n_vars), np.zeros(n_vars), mode)

    t = np.arange(1.0, n_obs + 1.0)
    if mode is DetrendMode.CONSTANT:
        design = np.ones((n_obs, 1))
    else:
        design = np.column_stack([np.ones(n_obs), t])
    coef, *_ = np.linalg.lstsq(design, values, rcond=None)
    tilde = values - design @ coef
    mu0 = coef[0].copy()
    mu1 = coef[1].copy() if mode is DetrendMode.CONSTANT_AND_TREND else np.zeros(n_vars)
    return DetrendedSeries(tilde, mu0, mu1, mode)


def difference(data) -> np.ndarray:
    """First differences along time: row t equals x[t] - x[t-1]."""
    values = _as_values(data)
    if values.shape[0] < 2:
        raise DataError("need at least 2 observations to difference")
    return np.diff(values, axis=0)


@dataclass(frozen=True)
class VecmRegressors:
    """Aligned regressor blocks for the error-correction regression.

    Row s of every block corresponds to calendar time t = start + s + 1,
    where ``start = p`` by default and ``start = p + 1`` under the
    alternative sample convention (one more presample row dropped).

    Z0 holds the differenced observations, Z1 the lagged levels and Z2 the
    stacked lagged differences with K(p-1) columns (empty when p = 1).
    """

    Z0: np.ndarray
    Z1: np.ndarray
    Z2: np.ndarray
    p: int
    n_obs: int
    paper_convention: bool = False

    @property
    def n_vars(self) -> int:
        return self.Z0.shape[1]

    @property
    def t_eff(self) -> int:
        return self.Z0.shape[0]


def build_vecm_regressors(
    data, p: int, paper_convention: bool = False
) -> VecmRegressors:
    """Build the aligned (Z0, Z1, Z2) regression blocks for lag order p.

    Parameters
    ----------
    data : DetrendedSeries or array_like, shape (T, K)
        Series to difference and lag; detrend first if deterministics are
        to be removed.
    p : int
        VAR lag order in levels; the regression uses p - 1 lagged
        differences.
    paper_convention : bool
        When True, drop one additional presample row so the effective
        sample has T - p - 1 rows instead of the minimal T - p.

    Returns
    -------
    VecmRegressors
    """
    values = _as_values(data)
    n_obs, n_vars = values.shape
    if p < 1:
        raise DataError(f"lag order must be >= 1, got {p}")
    extra = 1 if paper_convention else 0
    if n_obs < p + n_vars + 2 + extra:
        raise DataError(
            f"need at least {p + n_vars + 2 + extra} observations for p={p}, K={n_vars}; got {n_obs}"
        )
    dy = np.diff(values, axis=0)  # row j is the difference at calendar time j + 2
    start = p - 1 + extra
    z0 = dy[start:]
    z1 = values[start : n_obs - 1]
    if p > 1:
        blocks = [dy[start - lag : n_obs - 1 - lag] for lag in range(1, p)]
        z2 = np.hstack(blocks)
    else:
        z2 = np.empty((z0.shape[0], 0))
    return VecmRegressors(z0, z1, z2, p, n_obs, paper_convention)
