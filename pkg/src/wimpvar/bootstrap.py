"""Resampling-based confidence intervals for impulse-response functionals.

Implements the shared recursive-residual bootstrap and, on top of it, the
five interval constructions: fixed rank, endogenous rank re-selection,
model averaging, fast-double-bootstrap bagging and the lag-augmented
levels variant.  All of them share the Hall percentile machinery: with
q*(g) the g-quantile of the centered bootstrap statistics, the interval is
[point - q*(1 - gamma/2), point - q*(gamma/2)].

Randomness is counter-based: every bootstrap replication draws from a
stream keyed by (seed, level, DGP code, replication index), so results are
bit-identical regardless of scheduling or of which other methods run.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _batch
from .errors import ConfigError, DataError, EstimationError
from .ranks import (
    RankSelector,
    ic_values_from_eigenvalues,
    plausibility_weights,
    trace_critical_value,
)
from .timeseries import (
    DetrendedSeries,
    DetrendMode,
    TimeSeriesData,
    build_vecm_regressors,
    detrend,
)
from .vecm import (
    IrfQuery,
    JohansenDecomposition,
    REDUCED_FORM,
    STRUCTURAL_CHOLESKY,
    VecmFit,
    cholesky_factor,
    irf_reduced,
    irf_structural,
    johansen_decomposition,
    johansen_fit_from,
    trace_stats_from_eigenvalues,
    vecm_to_var,
)
from .wimp import wimp_bounds

__all__ = [
    "BootstrapConfig",
    "IntervalEstimate",
    "IntervalSet",
    "hall_quantile",
    "resample_residuals",
    "rebuild_sample",
    "fixed_rank_interval",
    "bers_interval",
    "ma_interval",
    "fdbb_interval",
    "lag_augmented_interval",
    "per_rank_fan",
    "wimp_interval",
]

_LAVAR_CODE = 1001
_SELECTOR_CODES = {"aic": 1, "bic": 2, "sequential_trace": 3, "fixed": 4}


@dataclass(frozen=True)
class BootstrapConfig:
    """Replication count, nominal miscoverage and determinism settings."""

    n_boot: int = 399
    gamma: float = 0.05
    seed: int = 0
    resampling: str = "iid_centered"
    initial_values: str = "observed_prefix"
    detrend_bootstrap: bool = True
    max_failure_share: float = 0.05
    paper_sample_convention: bool = False

    def __post_init__(self):
        if self.n_boot < 39:
            raise ConfigError(f"need at least 39 bootstrap replications, got {self.n_boot}")
        if not 0 < self.gamma < 1:
            raise ConfigError(f"gamma must lie in (0, 1), got {self.gamma}")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must be a non-negative 64-bit integer")
        if self.resampling != "iid_centered":
            raise ConfigError(f"unsupported resampling scheme {self.resampling!r}")
        if self.initial_values != "observed_prefix":
            raise ConfigError(f"unsupported initialization {self.initial_values!r}")


@dataclass(frozen=True)
class IntervalEstimate:
    lower: float
    upper: float
    point: float

    def __post_init__(self):
        if self.lower > self.upper:
            raise EstimationError(
                f"interval bounds out of order: [{self.lower}, {self.upper}]"
            )


@dataclass
class IntervalSet:
    """Per-query interval estimates from one bootstrap run."""

    method: str
    gamma: float
    rank: int | None
    entries: dict
    n_boot: int
    n_failed: int
    rank_counts: dict | None = None
    model_fit_count: int = 0

    @property
    def n_success(self) -> int:
        return self.n_boot - self.n_failed


def hall_quantile(centered_stats, gamma_point: float) -> float:
    """Order statistic ceil((B+1) * g), clamped to 1..B, of the sorted stats."""
    stats = np.asarray(centered_stats, dtype=float).ravel()
    if stats.size == 0:
        raise ValueError("cannot take a quantile of zero bootstrap statistics")
    if not np.isfinite(stats).all():
        raise ValueError("bootstrap statistics must be finite")
    if not 0 < gamma_point < 1:
        raise ValueError(f"quantile point must lie in (0, 1), got {gamma_point}")
    n = stats.size
    idx = int(np.ceil((n + 1) * gamma_point))
    idx = min(max(idx, 1), n)
    return float(np.sort(stats)[idx - 1])


def _hall_bounds(centered: np.ndarray, points: np.ndarray, gamma: float):
    """Vectorized Hall interval bounds per query column."""
    n = centered.shape[0]
    lo_idx = min(max(int(np.ceil((n + 1) * gamma / 2.0)), 1), n)
    hi_idx = min(max(int(np.ceil((n + 1) * (1.0 - gamma / 2.0))), 1), n)
    ordered = np.sort(centered, axis=0)
    q_lo = ordered[lo_idx - 1]
    q_hi = ordered[hi_idx - 1]
    return points - q_hi, points - q_lo


def resample_residuals(residuals: np.ndarray, rng, n_rows: int | None = None) -> np.ndarray:
    """Draw rows i.i.d. with replacement from the column-centered residuals."""
    resid = np.asarray(residuals, dtype=float)
    if resid.ndim != 2 or resid.shape[0] < 1:
        raise ValueError("residuals must be a non-empty T x K matrix")
    centered = resid - resid.mean(axis=0)
    n = n_rows if n_rows is not None else resid.shape[0]
    return centered[rng.integers(0, resid.shape[0], size=n)]


def rebuild_sample(fit: VecmFit, bootstrap_errors: np.ndarray, initial_values: np.ndarray) -> np.ndarray:
    """Rebuild one sample path from error-correction parameters.

    The recursion y*_t = y*_{t-1} + Pi y*_{t-1} + sum_j Gamma_j (y*_{t-j} -
    y*_{t-j-1}) + u*_t starts after the p+1 supplied initial rows, so the
    output has p + 1 + len(bootstrap_errors) rows.
    """
    errors = np.asarray(bootstrap_errors, dtype=float)
    init = np.asarray(initial_values, dtype=float)
    p = fit.p
    if init.shape != (p + 1, fit.n_vars):
        raise ConfigError(
            f"initial values must be the first p+1 = {p + 1} rows, got shape {init.shape}"
        )
    out = _batch.rebuild_vecm_batch(
        fit.Pi,
        np.stack(fit.Gammas) if fit.Gammas else np.empty((0, fit.n_vars, fit.n_vars)),
        errors[None],
        init,
    )[0]
    if not np.isfinite(out).all():
        raise EstimationError("bootstrap path diverged; the fitted model is explosive")
    return out


# ---------------------------------------------------------------------------
# query compilation


@dataclass(frozen=True)
class _CompiledQueries:
    queries: tuple
    h_need: int
    need_structural: bool
    n_vars: int

    def evaluate(self, psi: np.ndarray, phi: np.ndarray | None) -> np.ndarray:
        """Evaluate all queries on (B, H+1, K, K) stacks, returns (B, Q)."""
        out = np.empty(psi.shape[:-3] + (len(self.queries),))
        for pos, query in enumerate(self.queries):
            stack = psi if query.kind == REDUCED_FORM else phi
            series = stack[..., :, query.a - 1, query.b - 1]
            if query.functional == "element":
                out[..., pos] = series[..., query.horizon]
            else:
                out[..., pos] = series[..., : query.h_max + 1].max(axis=-1)
        return out


def _compile_queries(queries, n_vars: int) -> _CompiledQueries:
    queries = tuple(queries)
    if not queries:
        raise ConfigError("at least one impulse-response query is required")
    for query in queries:
        if not isinstance(query, IrfQuery):
            raise ConfigError(f"queries must be IrfQuery instances, got {type(query)!r}")
        if query.a > n_vars or query.b > n_vars:
            raise ConfigError(
                f"query indices (a={query.a}, b={query.b}) out of range for K={n_vars}"
            )
    return _CompiledQueries(
        queries=queries,
        h_need=max(q.needed_horizon for q in queries),
        need_structural=any(q.kind == STRUCTURAL_CHOLESKY for q in queries),
        n_vars=n_vars,
    )


# ---------------------------------------------------------------------------
# shared preparation of the observed sample


@dataclass
class _Prepared:
    raw: np.ndarray
    tilde: DetrendedSeries
    jd: JohansenDecomposition
    p: int
    mode: DetrendMode
    cfg: BootstrapConfig
    _fits: dict = field(default_factory=dict)

    @property
    def n_vars(self) -> int:
        return self.raw.shape[1]

    @property
    def n_obs(self) -> int:
        return self.raw.shape[0]

    def fit(self, rank: int) -> VecmFit:
        if rank not in self._fits:
            self._fits[rank] = johansen_fit_from(self.jd, rank)
        return self._fits[rank]

    def point_zetas(self, rank: int, cq: _CompiledQueries) -> np.ndarray:
        fit = self.fit(rank)
        psi = irf_reduced(vecm_to_var(fit), cq.h_need)
        phi = None
        if cq.need_structural:
            phi = irf_structural(psi, cholesky_factor(fit.Sigma_u))
        return cq.evaluate(
            psi.values[None], phi.values[None] if phi is not None else None
        )[0]

    def select_rank(self, selector: RankSelector) -> int:
        if selector.method == "fixed":
            return int(selector.rank)
        if selector.method in ("aic", "bic"):
            values = ic_values_from_eigenvalues(
                self.jd.eigenvalues,
                self.jd.ln_det_s00,
                self.jd.t_eff,
                self.jd.p,
                selector.method,
            )
            return int(np.argmin(values))
        stats = trace_stats_from_eigenvalues(self.jd.eigenvalues, self.jd.t_eff)
        for rank in range(self.n_vars):
            if stats[rank] < trace_critical_value(self.n_vars - rank, selector.level):
                return rank
        return self.n_vars


def _prepare(data, p: int, mode, cfg: BootstrapConfig) -> _Prepared:
    if isinstance(data, TimeSeriesData):
        raw = data.values
    elif isinstance(data, DetrendedSeries):
        raise ConfigError("pass raw observations; detrending happens inside the bootstrap")
    else:
        raw = np.asarray(data, dtype=float)
        if raw.ndim == 1:
            raw = raw[:, None]
    mode = DetrendMode(mode)
    tilde = detrend(raw, mode)
    jd = johansen_decomposition(
        build_vecm_regressors(tilde, p, cfg.paper_sample_convention)
    )
    return _Prepared(raw=raw, tilde=tilde, jd=jd, p=p, mode=mode, cfg=cfg)


# ---------------------------------------------------------------------------
# counter-based streams


def _stream(seed: int, level: int, code: int, rep: int):
    key = (int(seed) << 64) | (level << 48) | (code << 32) | int(rep)
    return np.random.Generator(np.random.Philox(key=key))


def _draw_index_matrix(seed, level, code, n_boot, pool_size, n_draw):
    idx = np.empty((n_boot, n_draw), dtype=np.int64)
    for rep in range(n_boot):
        idx[rep] = _stream(seed, level, code, rep).integers(0, pool_size, size=n_draw)
    return idx


# ---------------------------------------------------------------------------
# level-1 bootstrap batches


@dataclass
class _BootBatch:
    samples: np.ndarray  # (B, T, K) rebuilt level paths
    sweep: _batch.BatchSweep
    dgp_rank: int


def _level1_batch(prep: _Prepared, dgp_rank: int) -> _BootBatch:
    cfg = prep.cfg
    fit = prep.fit(dgp_rank)
    resid = fit.residuals
    centered = resid - resid.mean(axis=0)
    n_draw = prep.n_obs - prep.p - 1
    idx = _draw_index_matrix(cfg.seed, 1, dgp_rank, cfg.n_boot, resid.shape[0], n_draw)
    errors = centered[idx]
    init = prep.raw[: prep.p + 1]
    gammas = (
        np.stack(fit.Gammas) if fit.Gammas else np.empty((0, prep.n_vars, prep.n_vars))
    )
    samples = _batch.rebuild_vecm_batch(fit.Pi, gammas, errors, init)
    finite = np.isfinite(samples).all(axis=(1, 2))
    use_mode = prep.mode if cfg.detrend_bootstrap else DetrendMode.NONE
    tilde = _batch.detrend_batch(np.where(finite[:, None, None], samples, 0.0), use_mode)
    z0, z1, z2 = _batch.regressors_batch(tilde, prep.p, cfg.paper_sample_convention)
    sweep = _batch.sweep_batch(z0, z1, z2, prep.p)
    sweep.ok &= finite
    return _BootBatch(samples=samples, sweep=sweep, dgp_rank=dgp_rank)


def _chol_batch(sigmas: np.ndarray):
    ok = _batch._spd_mask(sigmas)
    chol = np.linalg.cholesky(_batch._masked(sigmas, ok))
    return chol, ok


def _zeta_at_rank(sweep: _batch.BatchSweep, rank: int, cq: _CompiledQueries):
    """Per-sample query values at one imposed rank; returns ((B, Q), ok)."""
    pi, gammas = _batch.rank_fit_batch(sweep, rank)
    mats = _batch.var_matrices_batch(pi, gammas)
    psi = _batch.irf_batch(mats, cq.h_need)
    ok = sweep.ok.copy()
    phi = None
    if cq.need_structural:
        chol, chol_ok = _chol_batch(_batch.sigma_batch(sweep, rank))
        ok &= chol_ok
        phi = psi @ chol[:, None]
    return cq.evaluate(psi, phi), ok


def _zeta_at_selected(sweep: _batch.BatchSweep, ranks: np.ndarray, cq: _CompiledQueries):
    """Per-sample query values at per-sample ranks; returns ((B, Q), ok)."""
    n_batch = ranks.shape[0]
    out = np.full((n_batch, len(cq.queries)), np.nan)
    ok = sweep.ok.copy()
    for rank in np.unique(ranks):
        mask = ranks == rank
        sub = _take_sweep(sweep, mask)
        values, sub_ok = _zeta_at_rank(sub, int(rank), cq)
        out[mask] = values
        ok[mask] &= sub_ok
    return out, ok


def _take_sweep(sweep: _batch.BatchSweep, mask: np.ndarray) -> _batch.BatchSweep:
    return _batch.BatchSweep(
        eigenvalues=sweep.eigenvalues[mask],
        vectors=sweep.vectors[mask],
        S00=sweep.S00[mask],
        S01=sweep.S01[mask],
        R0=sweep.R0[mask],
        R1=sweep.R1[mask],
        P20=sweep.P20[mask],
        P21=sweep.P21[mask],
        ln_det_s00=sweep.ln_det_s00[mask],
        p=sweep.p,
        t_eff=sweep.t_eff,
        ok=sweep.ok[mask],
    )


def _census(ok: np.ndarray, cfg: BootstrapConfig, what: str) -> int:
    n_failed = int(ok.size - ok.sum())
    if n_failed >= cfg.max_failure_share * ok.size or n_failed == ok.size:
        raise EstimationError(
            f"{n_failed} of {ok.size} bootstrap replications failed during {what}; "
            "the fitted model is too unstable for resampling"
        )
    return n_failed


def _finalize(center, zeta_star, ok, points, cfg, what):
    """Drop failed replications, apply the failure budget, take Hall bounds."""
    finite = np.isfinite(zeta_star).all(axis=1)
    ok = ok & finite
    n_failed = _census(ok, cfg, what)
    centered = zeta_star[ok] - center[None, :]
    lower, upper = _hall_bounds(centered, points, cfg.gamma)
    return lower, upper, n_failed


def _to_interval_set(method, rank, cq, lower, upper, points, cfg, n_failed, **extra):
    entries = {
        query: IntervalEstimate(float(lower[i]), float(upper[i]), float(points[i]))
        for i, query in enumerate(cq.queries)
    }
    return IntervalSet(
        method=method,
        gamma=cfg.gamma,
        rank=rank,
        entries=entries,
        n_boot=cfg.n_boot,
        n_failed=n_failed,
        **extra,
    )


# ---------------------------------------------------------------------------
# the five interval constructions


def fixed_rank_interval(
    data,
    p: int,
    rank: int,
    queries,
    cfg: BootstrapConfig,
    mode: DetrendMode | str = DetrendMode.NONE,
    _prep: _Prepared | None = None,
    _batch_cache: dict | None = None,
) -> IntervalSet:
    """Hall percentile interval with the rank imposed throughout.

    Fits the error-correction model at ``rank``, rebuilds ``cfg.n_boot``
    samples recursively from the centered residuals, re-detrends and refits
    each at the same rank, and inverts the centered bootstrap distribution.
    """
    prep = _prep if _prep is not None else _prepare(data, p, mode, cfg)
    cq = _compile_queries(queries, prep.n_vars)
    if rank < 0 or rank > prep.n_vars:
        raise ConfigError(f"rank must lie in 0..{prep.n_vars}, got {rank}")
    points = prep.point_zetas(rank, cq)
    boot = _cached_level1(prep, rank, _batch_cache)
    zeta_star, ok = _zeta_at_rank(boot.sweep, rank, cq)
    lower, upper, n_failed = _finalize(
        points, zeta_star, ok, points, cfg, f"the rank-{rank} bootstrap"
    )
    return _to_interval_set(
        "fixed_rank", rank, cq, lower, upper, points, cfg, n_failed,
        model_fit_count=cfg.n_boot + 1,
    )


def _cached_level1(prep, dgp_rank, cache):
    if cache is None:
        return _level1_batch(prep, dgp_rank)
    if dgp_rank not in cache:
        cache[dgp_rank] = _level1_batch(prep, dgp_rank)
    return cache[dgp_rank]


def _rank_census(ranks: np.ndarray, ok: np.ndarray, n_boot: int) -> dict:
    counts = {int(r): int(((ranks == r) & ok).sum()) for r in np.unique(ranks[ok])}
    n_failed = int(n_boot - ok.sum())
    if n_failed:
        counts[-1] = n_failed
    return counts


def bers_interval(
    data,
    p: int,
    selector: RankSelector,
    queries,
    cfg: BootstrapConfig,
    mode: DetrendMode | str = DetrendMode.NONE,
    dgp_rank_mode: str = "estimated",
    _prep: _Prepared | None = None,
    _batch_cache: dict | None = None,
) -> IntervalSet:
    """Bootstrap with the rank re-selected inside every replication.

    The bootstrap process is built at the selected rank (``estimated``) or
    at the full rank K (``full_K``); every replication re-runs the selector
    and refits at its own rank.  The interval centers at the point estimate
    under the rank selected on the observed data.
    """
    if dgp_rank_mode not in ("estimated", "full_K"):
        raise ConfigError(f"dgp_rank_mode must be 'estimated' or 'full_K', got {dgp_rank_mode!r}")
    prep = _prep if _prep is not None else _prepare(data, p, mode, cfg)
    cq = _compile_queries(queries, prep.n_vars)
    r_hat = prep.select_rank(selector)
    dgp_rank = r_hat if dgp_rank_mode == "estimated" else prep.n_vars
    points = prep.point_zetas(r_hat, cq)
    boot = _cached_level1(prep, dgp_rank, _batch_cache)
    ranks_star = _batch.select_batch(boot.sweep, selector)
    zeta_star, ok = _zeta_at_selected(boot.sweep, ranks_star, cq)
    lower, upper, n_failed = _finalize(
        points, zeta_star, ok, points, cfg, "the rank re-selection bootstrap"
    )
    return _to_interval_set(
        f"bers_{selector.label}", r_hat, cq, lower, upper, points, cfg, n_failed,
        rank_counts=_rank_census(ranks_star, ok & np.isfinite(zeta_star).all(axis=1), cfg.n_boot),
        model_fit_count=cfg.n_boot + 1,
    )


def ma_interval(
    data,
    p: int,
    queries,
    cfg: BootstrapConfig,
    mode: DetrendMode | str = DetrendMode.NONE,
    weights_mode: str = "endogenous",
    c1: float = 1.0,
    c2: float = 0.5,
    _prep: _Prepared | None = None,
    _batch_cache: dict | None = None,
) -> IntervalSet:
    """Interval for the plausibility-weighted average across all ranks.

    The point estimate averages the K+1 fixed-rank estimates with the
    trace-based weights; the bootstrap statistic is the same average on
    each replication, with weights recomputed per replication when
    ``weights_mode="endogenous"`` and frozen at the observed-data weights
    otherwise.  The bootstrap process is built at the reference rank.
    """
    if weights_mode not in ("endogenous", "fixed"):
        raise ConfigError(f"weights_mode must be 'endogenous' or 'fixed', got {weights_mode!r}")
    prep = _prep if _prep is not None else _prepare(data, p, mode, cfg)
    cq = _compile_queries(queries, prep.n_vars)
    n_vars = prep.n_vars
    data_weights = plausibility_weights(
        trace_stats_from_eigenvalues(prep.jd.eigenvalues, prep.jd.t_eff),
        prep.jd.t_eff,
        c1,
        c2,
    )
    per_rank_points = np.stack([prep.point_zetas(r, cq) for r in range(n_vars + 1)])
    points = data_weights.normalized @ per_rank_points

    boot = _cached_level1(prep, data_weights.reference_rank, _batch_cache)
    zeta_by_rank = np.empty((cfg.n_boot, n_vars + 1, len(cq.queries)))
    ok = boot.sweep.ok.copy()
    for rank in range(n_vars + 1):
        values, rank_ok = _zeta_at_rank(boot.sweep, rank, cq)
        zeta_by_rank[:, rank] = values
        ok &= rank_ok
    if weights_mode == "endogenous":
        stats = _batch.trace_stats_batch(boot.sweep.eigenvalues, boot.sweep.t_eff)
        weights_star = _batch.weights_batch(stats, boot.sweep.t_eff, c1, c2)
    else:
        weights_star = np.broadcast_to(
            data_weights.normalized, (cfg.n_boot, n_vars + 1)
        )
    zeta_star = np.einsum("br,brq->bq", weights_star, zeta_by_rank)
    lower, upper, n_failed = _finalize(
        points, zeta_star, ok, points, cfg, "the model-averaging bootstrap"
    )
    return _to_interval_set(
        "ma" if weights_mode == "endogenous" else "ma_fixed",
        data_weights.reference_rank,
        cq, lower, upper, points, cfg, n_failed,
        model_fit_count=cfg.n_boot + 1,
    )


def fdbb_interval(
    data,
    p: int,
    selector: RankSelector,
    queries,
    cfg: BootstrapConfig,
    mode: DetrendMode | str = DetrendMode.NONE,
    dgp_rank_mode: str = "estimated",
    _prep: _Prepared | None = None,
    _batch_cache: dict | None = None,
) -> IntervalSet:
    """Fast-double-bootstrap bagging interval.

    Level one matches the rank re-selection bootstrap.  From every level-one
    sample exactly one second-level sample is rebuilt under that sample's
    selected rank; the interval centers at the bagged (averaged) level-one
    estimate and inverts the distribution of the level-two minus level-one
    statistics.
    """
    if dgp_rank_mode not in ("estimated", "full_K"):
        raise ConfigError(f"dgp_rank_mode must be 'estimated' or 'full_K', got {dgp_rank_mode!r}")
    prep = _prep if _prep is not None else _prepare(data, p, mode, cfg)
    cq = _compile_queries(queries, prep.n_vars)
    r_hat = prep.select_rank(selector)
    dgp_rank = r_hat if dgp_rank_mode == "estimated" else prep.n_vars

    boot = _cached_level1(prep, dgp_rank, _batch_cache)
    ranks_star = _batch.select_batch(boot.sweep, selector)
    zeta_star, ok1 = _zeta_at_selected(boot.sweep, ranks_star, cq)

    # Level two: one sample per level-one sample, rebuilt under its own
    # selected rank, with the same centered-residual resampling scheme.
    n_vars, n_boot = prep.n_vars, cfg.n_boot
    pi_star = np.empty((n_boot, n_vars, n_vars))
    gam_star = np.empty((n_boot, max(prep.p - 1, 0), n_vars, n_vars))
    for rank in np.unique(ranks_star):
        mask = ranks_star == rank
        pi_r, gam_r = _batch.rank_fit_batch(_take_sweep(boot.sweep, mask), int(rank))
        pi_star[mask] = pi_r
        gam_star[mask] = gam_r
    resid_star = _batch.residuals_batch(boot.sweep, pi_star)
    centered = resid_star - resid_star.mean(axis=1, keepdims=True)
    n_draw = prep.n_obs - prep.p - 1
    idx = _draw_index_matrix(
        cfg.seed, 2, _SELECTOR_CODES[selector.method], n_boot,
        centered.shape[1], n_draw,
    )
    errors2 = np.take_along_axis(centered, idx[:, :, None], axis=1)
    init2 = boot.samples[:, : prep.p + 1]
    samples2 = _batch.rebuild_vecm_batch(pi_star, gam_star, errors2, init2)
    finite2 = np.isfinite(samples2).all(axis=(1, 2))
    use_mode = prep.mode if cfg.detrend_bootstrap else DetrendMode.NONE
    tilde2 = _batch.detrend_batch(np.where(finite2[:, None, None], samples2, 0.0), use_mode)
    z0, z1, z2 = _batch.regressors_batch(tilde2, prep.p, cfg.paper_sample_convention)
    sweep2 = _batch.sweep_batch(z0, z1, z2, prep.p)
    sweep2.ok &= finite2
    ranks_2 = _batch.select_batch(sweep2, selector)
    zeta_2, ok2 = _zeta_at_selected(sweep2, ranks_2, cq)

    ok = ok1 & ok2 & np.isfinite(zeta_star).all(axis=1) & np.isfinite(zeta_2).all(axis=1)
    n_failed = _census(ok, cfg, "the double bootstrap")
    bagged = zeta_star[ok].mean(axis=0)
    lower, upper = _hall_bounds(zeta_2[ok] - zeta_star[ok], bagged, cfg.gamma)
    return _to_interval_set(
        f"fdbb_{selector.label}", r_hat, cq, lower, upper, bagged, cfg, n_failed,
        rank_counts=_rank_census(ranks_star, ok, n_boot),
        model_fit_count=2 * cfg.n_boot + 1,
    )


def lag_augmented_interval(
    data,
    p: int,
    queries,
    cfg: BootstrapConfig,
    mode: DetrendMode | str = DetrendMode.NONE,
    _prep: _Prepared | None = None,
) -> IntervalSet:
    """Levels bootstrap with one extra estimation lag.

    The bootstrap process is a levels VAR(p) fitted by OLS; both the point
    estimate and every bootstrap estimate come from a VAR(p+1) in levels of
    which only the first p coefficient matrices feed the responses.
    """
    prep = _prep if _prep is not None else _prepare(data, p, mode, cfg)
    cq = _compile_queries(queries, prep.n_vars)
    n_vars = prep.n_vars
    if prep.n_obs < n_vars * (p + 1) + 10:
        raise DataError(
            f"lag augmentation needs at least K*(p+1) + 10 = {n_vars * (p + 1) + 10} observations"
        )
    tilde = prep.tilde.tilde_values

    mats_aug, resid_aug, ok_point = _batch.ols_var_levels_batch(tilde[None], p + 1)
    if not ok_point[0]:
        raise EstimationError("singular design in the lag-augmented levels regression")
    psi_point = _batch.irf_batch(mats_aug[:, :p], cq.h_need)
    phi_point = None
    if cq.need_structural:
        sigma = resid_aug[0].T @ resid_aug[0] / resid_aug.shape[1]
        phi_point = psi_point @ cholesky_factor(sigma)
    points = cq.evaluate(psi_point, phi_point)[0]

    mats_dgp, resid_dgp, ok_dgp = _batch.ols_var_levels_batch(tilde[None], p)
    if not ok_dgp[0]:
        raise EstimationError("singular design in the levels bootstrap regression")
    centered = resid_dgp[0] - resid_dgp[0].mean(axis=0)
    n_draw = prep.n_obs - p - 1
    idx = _draw_index_matrix(cfg.seed, 1, _LAVAR_CODE, cfg.n_boot, centered.shape[0], n_draw)
    errors = centered[idx]
    samples = _batch.rebuild_levels_batch(mats_dgp[0], errors, prep.raw[: p + 1])
    finite = np.isfinite(samples).all(axis=(1, 2))
    use_mode = prep.mode if cfg.detrend_bootstrap else DetrendMode.NONE
    tilde_star = _batch.detrend_batch(np.where(finite[:, None, None], samples, 0.0), use_mode)
    mats_star, resid_star, ok = _batch.ols_var_levels_batch(tilde_star, p + 1)
    ok &= finite
    psi_star = _batch.irf_batch(mats_star[:, :p], cq.h_need)
    phi_star = None
    if cq.need_structural:
        sigmas = np.swapaxes(resid_star, 1, 2) @ resid_star / resid_star.shape[1]
        chol, chol_ok = _chol_batch(sigmas)
        ok &= chol_ok
        phi_star = psi_star @ chol[:, None]
    zeta_star = cq.evaluate(psi_star, phi_star)
    lower, upper, n_failed = _finalize(
        points, zeta_star, ok, points, cfg, "the lag-augmented bootstrap"
    )
    return _to_interval_set(
        "lavar", None, cq, lower, upper, points, cfg, n_failed,
        model_fit_count=cfg.n_boot + 1,
    )


# ---------------------------------------------------------------------------
# fan and combined interval


def per_rank_fan(
    data,
    p: int,
    queries,
    cfg: BootstrapConfig,
    mode: DetrendMode | str = DetrendMode.NONE,
    _prep: _Prepared | None = None,
    _batch_cache: dict | None = None,
) -> dict:
    """Fixed-rank intervals for every rank 0..K on shared data."""
    prep = _prep if _prep is not None else _prepare(data, p, mode, cfg)
    return {
        rank: fixed_rank_interval(
            data, p, rank, queries, cfg, mode, _prep=prep, _batch_cache=_batch_cache
        )
        for rank in range(prep.n_vars + 1)
    }


def wimp_interval(
    data,
    p: int,
    queries,
    cfg: BootstrapConfig,
    mode: DetrendMode | str = DetrendMode.NONE,
    c1: float = 1.0,
    c2: float = 0.5,
    transform=None,
    fan: dict | None = None,
    _prep: _Prepared | None = None,
    _batch_cache: dict | None = None,
):
    """Plausibility-weighted combination of the full per-rank fan.

    Returns (interval set, weights, fan).  The reported point estimate is
    the weighted average of the fixed-rank estimates, the natural companion
    estimator; the interval itself is anchored at the reference rank and
    does not depend on it.
    """
    prep = _prep if _prep is not None else _prepare(data, p, mode, cfg)
    cq = _compile_queries(queries, prep.n_vars)
    if fan is None:
        fan = per_rank_fan(data, p, queries, cfg, mode, _prep=prep, _batch_cache=_batch_cache)
    if sorted(fan) != list(range(prep.n_vars + 1)):
        raise ConfigError("the fan must contain every rank 0..K; partial combination is refused")
    weights = plausibility_weights(
        trace_stats_from_eigenvalues(prep.jd.eigenvalues, prep.jd.t_eff),
        prep.jd.t_eff,
        c1,
        c2,
    )
    lowers = np.array(
        [[fan[r].entries[q].lower for q in cq.queries] for r in range(prep.n_vars + 1)]
    )
    uppers = np.array(
        [[fan[r].entries[q].upper for q in cq.queries] for r in range(prep.n_vars + 1)]
    )
    points = weights.normalized @ np.array(
        [[fan[r].entries[q].point for q in cq.queries] for r in range(prep.n_vars + 1)]
    )
    lower, upper = wimp_bounds(lowers, uppers, weights, transform)
    n_failed = max(fan[r].n_failed for r in fan)
    result = _to_interval_set(
        "wimp", weights.reference_rank, cq, lower, upper, points, cfg, n_failed,
        model_fit_count=sum(fan[r].model_fit_count for r in fan),
    )
    return result, weights, fan
