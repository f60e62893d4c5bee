"""Reduced-rank VECM estimation, VAR conversion and impulse responses.

The estimator follows the classical reduced-rank regression recipe: partial
the lagged differences out of the differenced and lagged-level blocks, form
the moment matrices of the partialled residuals and solve the resulting
generalized symmetric eigenvalue problem by Cholesky whitening.  One
decomposition serves every rank, so fitting all K+1 ranks on the same data
is essentially free after the first fit.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError, EstimationError
from .timeseries import DetrendedSeries, DetrendMode, VecmRegressors, build_vecm_regressors, detrend

__all__ = [
    "VecmFit",
    "VarLevels",
    "IrfArray",
    "IrfQuery",
    "JohansenDecomposition",
    "johansen_decomposition",
    "johansen_fit",
    "fit_vecm",
    "trace_statistics",
    "trace_stats_from_eigenvalues",
    "vecm_to_var",
    "var_to_vecm",
    "companion_matrix",
    "companion_roots",
    "irf_reduced",
    "cholesky_factor",
    "irf_structural",
    "evaluate_zeta",
]

# Squared canonical correlations above this bound indicate a (numerically)
# perfect fit and break the log-likelihood identities.
_EIG_CEIL = 1.0 - 1e-12
_EIG_FLOOR = -1e-10

REDUCED_FORM = "reduced_form"
STRUCTURAL_CHOLESKY = "structural_cholesky"


@dataclass(frozen=True)
class VecmFit:
    """Rank-r error-correction fit.

    ``Pi = alpha @ beta.T`` has rank at most ``rank``; ``eigenvalues`` holds
    all K squared canonical correlations (identical across requested ranks
    on the same data) in descending order.
    """

    rank: int
    alpha: np.ndarray
    beta: np.ndarray
    Pi: np.ndarray
    Gammas: tuple
    Sigma_u: np.ndarray
    residuals: np.ndarray
    eigenvalues: np.ndarray
    p: int
    t_eff: int

    @property
    def n_vars(self) -> int:
        return self.Pi.shape[0]


@dataclass(frozen=True)
class VarLevels:
    """Levels VAR(p) coefficient matrices A1..Ap."""

    A: tuple

    @property
    def p(self) -> int:
        return len(self.A)

    @property
    def n_vars(self) -> int:
        return self.A[0].shape[0]


@dataclass(frozen=True)
class IrfArray:
    """Impulse responses for horizons 0..h_max as an (h_max+1, K, K) stack."""

    values: np.ndarray
    kind: str = REDUCED_FORM

    @property
    def h_max(self) -> int:
        return self.values.shape[0] - 1

    @property
    def n_vars(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class IrfQuery:
    """One impulse-response object of interest.

    ``a`` is the responding variable and ``b`` the shock, both 1-based.
    ``functional="element"`` picks the response at ``horizon``;
    ``functional="max_over_horizons"`` takes the maximum over horizons
    0..h_max for the same (a, b) pair.
    """

    a: int
    b: int
    horizon: int = 0
    h_max: int = 0
    functional: str = "element"
    kind: str = REDUCED_FORM

    def __post_init__(self):
        if self.kind not in (REDUCED_FORM, STRUCTURAL_CHOLESKY):
            raise ConfigError(f"unknown impulse-response kind {self.kind!r}")
        if self.functional not in ("element", "max_over_horizons"):
            raise ConfigError(f"unknown functional {self.functional!r}")
        if self.a < 1 or self.b < 1:
            raise ConfigError("response and shock indices are 1-based and must be >= 1")
        if self.horizon < 0 or self.h_max < 0:
            raise ConfigError("horizons must be non-negative")

    @property
    def needed_horizon(self) -> int:
        return self.horizon if self.functional == "element" else self.h_max


@dataclass(frozen=True)
class JohansenDecomposition:
    """Shared pieces of the reduced-rank regression, valid for every rank."""

    eigenvalues: np.ndarray  # descending, length K
    vectors: np.ndarray  # K x K, columns normalized V' S11 V = I
    S00: np.ndarray
    S01: np.ndarray
    R0: np.ndarray  # partialled differenced block, t_eff x K
    R1: np.ndarray  # partialled lagged-level block, t_eff x K
    P20: np.ndarray  # (Z2'Z2)^{-1} Z2'Z0, empty when p = 1
    P21: np.ndarray  # (Z2'Z2)^{-1} Z2'Z1, empty when p = 1
    ln_det_s00: float
    p: int
    t_eff: int

    @property
    def n_vars(self) -> int:
        return self.S00.shape[0]


def _solve_pd(mat: np.ndarray, rhs: np.ndarray, what: str) -> np.ndarray:
    try:
        return np.linalg.solve(mat, rhs)
    except np.linalg.LinAlgError as exc:
        raise EstimationError(
            f"singular {what}; try a smaller lag order or more observations"
        ) from exc


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    # Deterministic output across platforms: first non-negligible
    # coordinate of each column made positive.
    v = vectors.copy()
    scale = np.abs(v).max(axis=0)
    scale[scale == 0] = 1.0
    for col in range(v.shape[1]):
        nz = np.nonzero(np.abs(v[:, col]) > 1e-12 * scale[col])[0]
        if nz.size and v[nz[0], col] < 0:
            v[:, col] = -v[:, col]
    return v


def johansen_decomposition(reg: VecmRegressors) -> JohansenDecomposition:
    """Solve the rank-generic part of the reduced-rank regression.

    Partials Z2 out of Z0 and Z1, forms the moment matrices and solves the
    generalized eigenproblem ``lam * S11 v = S10 S00^{-1} S01 v`` by
    reducing it with a Cholesky factor of S11 to an ordinary symmetric
    problem.

    Raises
    ------
    EstimationError
        If a moment matrix is singular or an eigenvalue reaches 1.
    DataError
        If the sample is shorter than K*p + 10 observations.
    """
    n_vars, p = reg.n_vars, reg.p
    if reg.n_obs < n_vars * p + 10:
        raise DataError(
            f"need at least K*p + 10 = {n_vars * p + 10} observations, got {reg.n_obs}"
        )
    t_eff = reg.t_eff
    z0, z1, z2 = reg.Z0, reg.Z1, reg.Z2

    if z2.shape[1]:
        a22 = z2.T @ z2
        p20 = _solve_pd(a22, z2.T @ z0, "lagged-difference moment matrix")
        p21 = _solve_pd(a22, z2.T @ z1, "lagged-difference moment matrix")
        r0 = z0 - z2 @ p20
        r1 = z1 - z2 @ p21
    else:
        p20 = np.empty((0, n_vars))
        p21 = np.empty((0, n_vars))
        r0, r1 = z0, z1

    s00 = r0.T @ r0 / t_eff
    s01 = r0.T @ r1 / t_eff
    s11 = r1.T @ r1 / t_eff

    try:
        chol = np.linalg.cholesky(s11)
    except np.linalg.LinAlgError as exc:
        raise EstimationError(
            "singular S11 moment matrix; try a smaller lag order or more data"
        ) from exc
    sign, ln_det_s00 = np.linalg.slogdet(s00)
    if sign <= 0 or not np.isfinite(ln_det_s00):
        raise EstimationError("singular S00 moment matrix; residual variance degenerate")

    # Whiten: M = C^{-1} S10 S00^{-1} S01 C^{-T} is symmetric PSD with the
    # same eigenvalues as the generalized problem.
    x = _solve_pd(s00, s01, "S00 moment matrix")
    inner = s01.T @ x
    m = np.linalg.solve(chol, np.linalg.solve(chol, inner).T).T
    m = (m + m.T) / 2.0
    lam, w = np.linalg.eigh(m)
    lam = lam[::-1]
    w = w[:, ::-1]

    if lam.size and lam[0] >= _EIG_CEIL:
        raise EstimationError(
            f"largest squared canonical correlation {lam[0]:.15g} is at or above 1; "
            "the regression fits (numerically) perfectly"
        )
    if lam.size and lam[-1] < _EIG_FLOOR:
        raise EstimationError(
            f"eigenvalue {lam[-1]:.3g} below the numerical floor; moment matrices inconsistent"
        )
    lam = np.clip(lam, 0.0, _EIG_CEIL)

    vectors = _fix_signs(np.linalg.solve(chol.T, w))
    return JohansenDecomposition(
        eigenvalues=lam,
        vectors=vectors,
        S00=s00,
        S01=s01,
        R0=r0,
        R1=r1,
        P20=p20,
        P21=p21,
        ln_det_s00=float(ln_det_s00),
        p=p,
        t_eff=t_eff,
    )


def johansen_fit_from(jd: JohansenDecomposition, rank: int) -> VecmFit:
    """Extract the rank-`rank` fit from a shared decomposition."""
    n_vars = jd.n_vars
    if rank < 0 or rank > n_vars:
        raise ConfigError(f"rank must lie in 0..{n_vars}, got {rank}")
    beta = jd.vectors[:, :rank]
    alpha = jd.S01 @ beta
    pi = alpha @ beta.T if rank else np.zeros((n_vars, n_vars))

    if jd.P20.shape[0]:
        gamma_stack = jd.P20 - jd.P21 @ pi.T  # K(p-1) x K, rows grouped by lag
        gammas = tuple(
            gamma_stack[lag * n_vars : (lag + 1) * n_vars].T.copy()
            for lag in range(jd.p - 1)
        )
    else:
        gammas = ()
    residuals = jd.R0 - jd.R1 @ pi.T
    sigma = residuals.T @ residuals / jd.t_eff
    return VecmFit(
        rank=rank,
        alpha=alpha,
        beta=beta,
        Pi=pi,
        Gammas=gammas,
        Sigma_u=sigma,
        residuals=residuals,
        eigenvalues=jd.eigenvalues,
        p=jd.p,
        t_eff=jd.t_eff,
    )


def johansen_fit(reg: VecmRegressors, rank: int) -> VecmFit:
    """Reduced-rank quasi-ML fit of the error-correction regression.

    Parameters
    ----------
    reg : VecmRegressors
        Aligned regressor blocks from :func:`build_vecm_regressors`.
    rank : int
        Imposed cointegration rank, 0..K.

    Returns
    -------
    VecmFit
        Rank K reproduces the unrestricted OLS fit; rank 0 sets Pi to zero
        and regresses the differences on the lagged differences alone.
    """
    return johansen_fit_from(johansen_decomposition(reg), rank)


def fit_vecm(
    data,
    p: int,
    rank: int,
    mode: DetrendMode | str = DetrendMode.NONE,
    paper_convention: bool = False,
) -> VecmFit:
    """Convenience wrapper: detrend, build regressors and fit at `rank`."""
    tilde = data if isinstance(data, DetrendedSeries) else detrend(data, mode)
    return johansen_fit(build_vecm_regressors(tilde, p, paper_convention), rank)


def trace_stats_from_eigenvalues(eigenvalues: np.ndarray, t_eff: int) -> np.ndarray:
    """Trace statistics J[r] = -T * sum_{i>r} ln(1 - lam_i), r = 0..K.

    The returned vector has K+1 entries with J[K] = 0 exactly (empty sum).
    """
    lam = np.asarray(eigenvalues, dtype=float)
    if lam.size and (lam.min() < 0 or lam.max() >= 1):
        raise ValueError("eigenvalues must lie in [0, 1)")
    terms = np.log1p(-lam)
    tails = np.concatenate([np.cumsum(terms[::-1])[::-1], [0.0]])
    return -t_eff * tails + 0.0  # normalize -0.0 so J[K] is exactly zero


def trace_statistics(fit: VecmFit) -> np.ndarray:
    """Trace statistics of a fit; see :func:`trace_stats_from_eigenvalues`."""
    return trace_stats_from_eigenvalues(fit.eigenvalues, fit.t_eff)


def vecm_to_var(fit) -> VarLevels:
    """Convert error-correction parameters to levels VAR matrices.

    A1 = I + Pi + Gamma_1, A_j = Gamma_j - Gamma_{j-1} for 1 < j < p,
    A_p = -Gamma_{p-1}; for p = 1 simply A1 = I + Pi.
    """
    pi = fit.Pi if hasattr(fit, "Pi") else np.asarray(fit[0])
    gammas = fit.Gammas if hasattr(fit, "Gammas") else tuple(fit[1])
    n_vars = pi.shape[0]
    p = len(gammas) + 1
    eye = np.eye(n_vars)
    if p == 1:
        return VarLevels((eye + pi,))
    mats = [eye + pi + gammas[0]]
    for j in range(1, p - 1):
        mats.append(gammas[j] - gammas[j - 1])
    mats.append(-gammas[p - 2])
    return VarLevels(tuple(mats))


def var_to_vecm(var: VarLevels):
    """Inverse of :func:`vecm_to_var`: returns (Pi, Gammas)."""
    mats = var.A
    p = len(mats)
    pi = sum(mats) - np.eye(var.n_vars)
    gammas = tuple(-sum(mats[i] for i in range(j, p)) for j in range(1, p))
    return pi, gammas


def companion_matrix(var: VarLevels) -> np.ndarray:
    """Kp x Kp companion form of the levels VAR."""
    n_vars, p = var.n_vars, var.p
    top = np.hstack(var.A)
    if p == 1:
        return top
    lower = np.hstack([np.eye(n_vars * (p - 1)), np.zeros((n_vars * (p - 1), n_vars))])
    return np.vstack([top, lower])


def companion_roots(var: VarLevels) -> np.ndarray:
    """Moduli of the companion-matrix eigenvalues, sorted descending."""
    moduli = np.abs(np.linalg.eigvals(companion_matrix(var)))
    return np.sort(moduli)[::-1]


def irf_reduced(var: VarLevels, h_max: int) -> IrfArray:
    """Forecast-error impulse responses Psi_0..Psi_h of the levels VAR.

    Psi_0 = I and Psi_j = sum_{i=1..min(j,p)} A_i Psi_{j-i}.
    """
    if h_max < 0:
        raise ConfigError(f"h_max must be >= 0, got {h_max}")
    n_vars, p = var.n_vars, var.p
    psi = np.zeros((h_max + 1, n_vars, n_vars))
    psi[0] = np.eye(n_vars)
    for j in range(1, h_max + 1):
        acc = np.zeros((n_vars, n_vars))
        for i in range(1, min(j, p) + 1):
            acc += var.A[i - 1] @ psi[j - i]
        psi[j] = acc
    return IrfArray(psi, REDUCED_FORM)


def cholesky_factor(sigma: np.ndarray) -> np.ndarray:
    """Lower-triangular P with P P' = sigma and positive diagonal."""
    sigma = np.asarray(sigma, dtype=float)
    sym = (sigma + sigma.T) / 2.0
    floor = 1e-12 * np.trace(sym) / sym.shape[0]
    try:
        p = np.linalg.cholesky(sym)
    except np.linalg.LinAlgError as exc:
        raise EstimationError("covariance matrix is not positive definite") from exc
    if np.any(np.diag(p) ** 2 <= floor):
        raise EstimationError("covariance matrix is numerically singular")
    return p


def irf_structural(irf: IrfArray, chol: np.ndarray) -> IrfArray:
    """Structural responses Phi_j = Psi_j P for a given impact factor P."""
    if irf.kind != REDUCED_FORM:
        raise ConfigError("structural responses are built from reduced-form ones")
    return IrfArray(irf.values @ chol, STRUCTURAL_CHOLESKY)


def evaluate_zeta(irf: IrfArray, query: IrfQuery) -> float:
    """Evaluate one impulse-response functional on an IRF stack."""
    if query.kind != irf.kind:
        raise ConfigError(
            f"query kind {query.kind!r} does not match responses of kind {irf.kind!r}"
        )
    n_vars = irf.n_vars
    if query.a > n_vars or query.b > n_vars:
        raise ConfigError(
            f"indices (a={query.a}, b={query.b}) out of range for K={n_vars}"
        )
    if query.needed_horizon > irf.h_max:
        raise ConfigError(
            f"query needs horizon {query.needed_horizon} but responses stop at {irf.h_max}"
        )
    series = irf.values[:, query.a - 1, query.b - 1]
    if query.functional == "element":
        return float(series[query.horizon])
    return float(series[: query.h_max + 1].max())
