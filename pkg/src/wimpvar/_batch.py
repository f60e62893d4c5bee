"""Batched (vectorized across bootstrap replications) estimation kernels.

These mirror the single-sample routines in :mod:`wimpvar.vecm` but operate
on stacks of samples at once, which is what makes the resampling loops and
the Monte Carlo harness fast on a single core.  Replications that fail
numerically are flagged in an ``ok`` mask instead of raising, so one bad
sample cannot abort a batch.

Shapes use B for the batch axis, T for time, K for variables.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ranks import RankSelector, trace_critical_value
from .timeseries import DetrendMode

_EIG_CEIL = 1.0 - 1e-12
_EIG_FLOOR = -1e-10


def detrend_batch(y: np.ndarray, mode: DetrendMode) -> np.ndarray:
    """Per-sample OLS detrending of a (B, T, K) stack."""
    if mode is DetrendMode.NONE:
        return y
    n_obs = y.shape[1]
    t = np.arange(1.0, n_obs + 1.0)
    if mode is DetrendMode.CONSTANT:
        design = np.ones((n_obs, 1))
    else:
        design = np.column_stack([np.ones(n_obs), t])
    proj = np.linalg.solve(design.T @ design, design.T)  # (d, T)
    coef = proj @ y  # broadcasts to (B, d, K)
    return y - design @ coef


def regressors_batch(tilde: np.ndarray, p: int, paper_convention: bool = False):
    """Batched version of the (Z0, Z1, Z2) block construction."""
    n_obs = tilde.shape[1]
    dy = np.diff(tilde, axis=1)
    start = p - 1 + (1 if paper_convention else 0)
    z0 = dy[:, start:]
    z1 = tilde[:, start : n_obs - 1]
    if p > 1:
        blocks = [dy[:, start - lag : n_obs - 1 - lag] for lag in range(1, p)]
        z2 = np.concatenate(blocks, axis=2)
    else:
        z2 = np.empty((tilde.shape[0], z0.shape[1], 0))
    return z0, z1, z2


def _spd_mask(mats: np.ndarray, floor: float = 1e-12) -> np.ndarray:
    """True where a stack of symmetric matrices is safely positive definite.

    Non-finite matrices are marked False without being fed to the
    eigensolver, so one bad sample cannot abort the whole batch.
    """
    finite = np.isfinite(mats).all(axis=(-2, -1))
    safe = np.where(finite[..., None, None], mats, 0.0)
    ev = np.linalg.eigvalsh((safe + np.swapaxes(safe, -1, -2)) / 2.0)
    scale = np.maximum(ev[..., -1], np.finfo(float).tiny)
    return finite & (ev[..., 0] > floor * scale)


def _masked(mats: np.ndarray, ok: np.ndarray) -> np.ndarray:
    """Replace failed samples with the identity so batched solves never raise."""
    if ok.all():
        return mats
    out = mats.copy()
    out[~ok] = np.eye(mats.shape[-1])
    return out


@dataclass
class BatchSweep:
    """Rank-generic reduced-rank regression pieces for a batch of samples."""

    eigenvalues: np.ndarray  # (B, K) descending, clipped to [0, 1)
    vectors: np.ndarray  # (B, K, K)
    S00: np.ndarray  # (B, K, K)
    S01: np.ndarray  # (B, K, K)
    R0: np.ndarray  # (B, T_eff, K)
    R1: np.ndarray  # (B, T_eff, K)
    P20: np.ndarray  # (B, K(p-1), K)
    P21: np.ndarray  # (B, K(p-1), K)
    ln_det_s00: np.ndarray  # (B,)
    p: int
    t_eff: int
    ok: np.ndarray  # (B,) bool

    @property
    def n_vars(self) -> int:
        return self.S00.shape[-1]


def sweep_batch(z0: np.ndarray, z1: np.ndarray, z2: np.ndarray, p: int) -> BatchSweep:
    """Batched reduced-rank regression sweep with per-sample failure masking."""
    n_batch, t_eff, n_vars = z0.shape
    ok = (
        np.isfinite(z0).all(axis=(1, 2))
        & np.isfinite(z1).all(axis=(1, 2))
        & np.isfinite(z2).all(axis=(1, 2))
    )

    if z2.shape[2]:
        a22 = np.swapaxes(z2, 1, 2) @ z2
        ok &= _spd_mask(a22)
        a22 = _masked(a22, ok)
        p20 = np.linalg.solve(a22, np.swapaxes(z2, 1, 2) @ z0)
        p21 = np.linalg.solve(a22, np.swapaxes(z2, 1, 2) @ z1)
        r0 = z0 - z2 @ p20
        r1 = z1 - z2 @ p21
    else:
        p20 = np.empty((n_batch, 0, n_vars))
        p21 = np.empty((n_batch, 0, n_vars))
        r0, r1 = z0, z1

    s00 = np.swapaxes(r0, 1, 2) @ r0 / t_eff
    s01 = np.swapaxes(r0, 1, 2) @ r1 / t_eff
    s11 = np.swapaxes(r1, 1, 2) @ r1 / t_eff

    ok &= _spd_mask(s00) & _spd_mask(s11)
    chol = np.linalg.cholesky(_masked(s11, ok))
    x = np.linalg.solve(_masked(s00, ok), s01)
    inner = np.swapaxes(s01, 1, 2) @ x
    m = np.linalg.solve(chol, np.swapaxes(np.linalg.solve(chol, inner), 1, 2))
    m = np.swapaxes(m, 1, 2)
    m = (m + np.swapaxes(m, 1, 2)) / 2.0
    lam, w = np.linalg.eigh(m)
    lam = lam[:, ::-1]
    w = w[:, :, ::-1]

    ok &= np.isfinite(lam).all(axis=1) & (lam[:, 0] < _EIG_CEIL) & (lam[:, -1] > _EIG_FLOOR)
    lam = np.clip(lam, 0.0, _EIG_CEIL)

    vectors = np.linalg.solve(np.swapaxes(chol, 1, 2), w)
    # Sign convention: make the first coordinate exceeding the tolerance
    # positive, matching the single-sample estimator.
    scale = np.abs(vectors).max(axis=1, keepdims=True)
    big = np.abs(vectors) > 1e-12 * np.maximum(scale, np.finfo(float).tiny)
    first = np.argmax(big, axis=1)  # (B, K) column-wise first index
    lead = np.take_along_axis(vectors, first[:, None, :], axis=1)[:, 0, :]
    signs = np.where(lead < 0, -1.0, 1.0)
    vectors = vectors * signs[:, None, :]

    sign, ln_det = np.linalg.slogdet(s00)
    ok &= (sign > 0) & np.isfinite(ln_det)

    return BatchSweep(
        eigenvalues=lam,
        vectors=vectors,
        S00=s00,
        S01=s01,
        R0=r0,
        R1=r1,
        P20=p20,
        P21=p21,
        ln_det_s00=ln_det,
        p=p,
        t_eff=t_eff,
        ok=ok,
    )


def rank_fit_batch(sweep: BatchSweep, rank: int):
    """Pi and Gamma stacks for one imposed rank.

    Returns (Pi (B, K, K), Gammas (B, p-1, K, K)).
    """
    n_batch, n_vars = sweep.eigenvalues.shape
    if rank == 0:
        pi = np.zeros((n_batch, n_vars, n_vars))
    else:
        beta = sweep.vectors[:, :, :rank]
        alpha = sweep.S01 @ beta
        pi = alpha @ np.swapaxes(beta, 1, 2)
    if sweep.p > 1:
        stack = sweep.P20 - sweep.P21 @ np.swapaxes(pi, 1, 2)  # (B, K(p-1), K)
        gammas = np.swapaxes(
            stack.reshape(n_batch, sweep.p - 1, n_vars, n_vars), 2, 3
        )
    else:
        gammas = np.empty((n_batch, 0, n_vars, n_vars))
    return pi, gammas


def residuals_batch(sweep: BatchSweep, pi: np.ndarray) -> np.ndarray:
    """Error-correction residuals implied by a Pi stack, (B, T_eff, K)."""
    return sweep.R0 - sweep.R1 @ np.swapaxes(pi, 1, 2)


def sigma_batch(sweep: BatchSweep, rank: int) -> np.ndarray:
    """Residual covariance S00 - alpha alpha' for one imposed rank."""
    if rank == 0:
        return sweep.S00.copy()
    beta = sweep.vectors[:, :, :rank]
    alpha = sweep.S01 @ beta
    return sweep.S00 - alpha @ np.swapaxes(alpha, 1, 2)


def var_matrices_batch(pi: np.ndarray, gammas: np.ndarray) -> np.ndarray:
    """Levels VAR matrices (B, p, K, K) from error-correction parameters."""
    n_batch, n_vars = pi.shape[0], pi.shape[1]
    p = gammas.shape[1] + 1
    eye = np.eye(n_vars)
    mats = np.empty((n_batch, p, n_vars, n_vars))
    if p == 1:
        mats[:, 0] = eye + pi
        return mats
    mats[:, 0] = eye + pi + gammas[:, 0]
    for j in range(1, p - 1):
        mats[:, j] = gammas[:, j] - gammas[:, j - 1]
    mats[:, p - 1] = -gammas[:, p - 2]
    return mats


def irf_batch(mats: np.ndarray, h_max: int) -> np.ndarray:
    """Reduced-form responses (B, h_max+1, K, K) of a levels VAR stack."""
    n_batch, p, n_vars, _ = mats.shape
    psi = np.empty((n_batch, h_max + 1, n_vars, n_vars))
    psi[:, 0] = np.eye(n_vars)
    for j in range(1, h_max + 1):
        acc = mats[:, 0] @ psi[:, j - 1]
        for i in range(2, min(j, p) + 1):
            acc += mats[:, i - 1] @ psi[:, j - i]
        psi[:, j] = acc
    return psi


def rebuild_vecm_batch(
    pi: np.ndarray, gammas: np.ndarray, errors: np.ndarray, init: np.ndarray
) -> np.ndarray:
    """Recursive error-correction resampling paths.

    Parameters
    ----------
    pi : (K, K) or (B, K, K)
    gammas : (p-1, K, K) or (B, p-1, K, K)
    errors : (B, n, K) innovations for times p+2..T
    init : (p+1, K) shared initial rows, or (B, p+1, K) per-sample rows.

    Returns
    -------
    (B, T, K) with T = p + 1 + n.
    """
    n_batch, n_steps, n_vars = errors.shape
    if pi.ndim == 2:
        pi = np.broadcast_to(pi, (n_batch, n_vars, n_vars))
    if gammas.ndim == 3:
        gammas = np.broadcast_to(
            gammas, (n_batch,) + gammas.shape
        )
    p = gammas.shape[1] + 1
    n_obs = p + 1 + n_steps
    out = np.empty((n_batch, n_obs, n_vars))
    out[:, : p + 1] = init if init.ndim == 3 else init[None]
    growth = np.eye(n_vars) + pi  # (B, K, K)
    for t in range(p + 1, n_obs):
        acc = np.einsum("bij,bj->bi", growth, out[:, t - 1])
        for lag in range(1, p):
            acc += np.einsum(
                "bij,bj->bi", gammas[:, lag - 1], out[:, t - lag] - out[:, t - lag - 1]
            )
        out[:, t] = acc + errors[:, t - p - 1]
    return out


def rebuild_levels_batch(mats: np.ndarray, errors: np.ndarray, init: np.ndarray) -> np.ndarray:
    """Recursive levels-VAR resampling paths; arguments mirror the VECM case."""
    n_batch, n_steps, n_vars = errors.shape
    if mats.ndim == 3:
        mats = np.broadcast_to(mats, (n_batch,) + mats.shape)
    p = mats.shape[1]
    n_obs = init.shape[-2] + n_steps
    out = np.empty((n_batch, n_obs, n_vars))
    out[:, : init.shape[-2]] = init if init.ndim == 3 else init[None]
    for t in range(init.shape[-2], n_obs):
        acc = errors[:, t - init.shape[-2]].copy()
        for lag in range(1, p + 1):
            acc += np.einsum("bij,bj->bi", mats[:, lag - 1], out[:, t - lag])
        out[:, t] = acc
    return out


def ols_var_levels_batch(y: np.ndarray, p: int):
    """Levels VAR(p) OLS without deterministics on a (B, T, K) stack.

    Returns (mats (B, p, K, K), residuals (B, T-p, K), ok (B,)).
    """
    n_batch, n_obs, n_vars = y.shape
    target = y[:, p:]
    design = np.concatenate([y[:, p - lag : n_obs - lag] for lag in range(1, p + 1)], axis=2)
    gram = np.swapaxes(design, 1, 2) @ design
    ok = np.isfinite(y).all(axis=(1, 2)) & _spd_mask(gram)
    coef = np.linalg.solve(_masked(gram, ok), np.swapaxes(design, 1, 2) @ target)
    resid = target - design @ coef
    mats = np.swapaxes(coef.reshape(n_batch, p, n_vars, n_vars), 2, 3)
    return mats, resid, ok


def trace_stats_batch(eigenvalues: np.ndarray, t_eff: int) -> np.ndarray:
    """Trace statistics (B, K+1) with the zero statistic appended."""
    terms = np.log1p(-eigenvalues)
    tails = np.cumsum(terms[:, ::-1], axis=1)[:, ::-1]
    return -t_eff * np.concatenate([tails, np.zeros((eigenvalues.shape[0], 1))], axis=1)


def ic_select_batch(sweep: BatchSweep, criterion: str) -> np.ndarray:
    """Information-criterion rank selection per sample, (B,) ints."""
    n_vars = sweep.n_vars
    c_t = 2.0 if criterion == "aic" else float(np.log(sweep.t_eff))
    cum = np.concatenate(
        [
            np.zeros((sweep.eigenvalues.shape[0], 1)),
            np.cumsum(np.log1p(-sweep.eigenvalues), axis=1),
        ],
        axis=1,
    )
    ranks = np.arange(n_vars + 1)
    penalty = c_t * (2 * n_vars * ranks - ranks**2 + n_vars**2 * (sweep.p - 1)) / sweep.t_eff
    values = sweep.ln_det_s00[:, None] + cum + penalty[None, :]
    return np.argmin(values, axis=1)


def seq_select_batch(sweep: BatchSweep, level: float) -> np.ndarray:
    """Sequential trace-test rank selection per sample, (B,) ints."""
    n_vars = sweep.n_vars
    stats = trace_stats_batch(sweep.eigenvalues, sweep.t_eff)
    crit = np.array([trace_critical_value(n_vars - r, level) for r in range(n_vars)])
    below = stats[:, :n_vars] < crit[None, :]
    any_below = below.any(axis=1)
    first = np.argmax(below, axis=1)
    return np.where(any_below, first, n_vars)


def select_batch(sweep: BatchSweep, selector: RankSelector) -> np.ndarray:
    if selector.method in ("aic", "bic"):
        return ic_select_batch(sweep, selector.method)
    if selector.method == "sequential_trace":
        return seq_select_batch(sweep, selector.level)
    return np.full(sweep.eigenvalues.shape[0], selector.rank, dtype=int)


def weights_batch(
    trace_stats: np.ndarray, t_eff: int, c1: float, c2: float
) -> np.ndarray:
    """Normalized plausibility weights per sample, (B, K+1)."""
    shrink = c1 * float(t_eff) ** (-c2)
    survivals = np.exp(-shrink * trace_stats)
    raw = np.empty_like(survivals)
    raw[:, 0] = survivals[:, 0]
    raw[:, 1:] = survivals[:, 1:] - survivals[:, :-1]
    raw = np.maximum(raw, 0.0)
    return raw / raw.sum(axis=1, keepdims=True)
