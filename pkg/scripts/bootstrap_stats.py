"""
Vote-Share Toolkit — Bootstrap and Summary Statistics

Bootstrap uncertainty for any of the nine models, boxplot quartiles,
Pearson correlation and zero-sum residuals between regional distributions.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import stats as scipy_stats
from tqdm import tqdm

from scripts.election_models import AltBounds, model_scope, prepare_records, run_model
from scripts.errors import (
    DegenerateBootstrapError,
    GeoDataError,
    UndefinedCorrelationError,
    UndefinedEstimateError,
)

logger = logging.getLogger(__name__)

DEFAULT_RESAMPLES = 1000


@dataclass
class BootstrapResult:
    n_resamples: int
    shares: np.ndarray
    median: float
    q1: float
    q3: float
    seed: int
    n_undefined: int = 0
    model_id: str | None = None
    month: str | None = None
    state_frequencies: dict | None = None

    def __post_init__(self):
        if len(self.shares) != self.n_resamples:
            raise ValueError("one share per resample is required")
        if not self.q1 <= self.median <= self.q3:
            raise ValueError("quartiles out of order")

    @property
    def precision_pp(self) -> float:
        """Interquartile width in percentage points."""
        return (self.q3 - self.q1) * 100.0

    def to_dict(self) -> dict:
        return {
            "model": self.model_id,
            "month": self.month,
            "median": self.median,
            "q1": self.q1,
            "q3": self.q3,
            "precision_pp": self.precision_pp,
            "n_resamples": self.n_resamples,
            "n_undefined": self.n_undefined,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class CorrelationReport:
    r: float
    p_value: float
    labels: tuple
    n: int

    def to_dict(self) -> dict:
        return {"r": self.r, "p_value": self.p_value, "x": self.labels[0], "y": self.labels[1], "n": self.n}


def replicate_rng(seed: int, i: int) -> np.random.Generator:
    """PCG64 stream for replicate i."""
    if seed < 0:
        raise ValueError(f"seed must be >= 0, got {seed}")
    return np.random.default_rng(seed ^ i)


def precision_pp(result: BootstrapResult) -> float:
    return result.precision_pp


def boxplot_summary(values) -> dict:
    """Median and quartiles by linear interpolation between order statistics; NaNs ignored."""
    arr = np.asarray(values, dtype=float)
    arr = arr[~np.isnan(arr)]
    if arr.size == 0:
        raise ValueError("boxplot_summary needs at least one value")
    q1, median, q3 = np.percentile(arr, [25, 50, 75], method="linear")
    return {"median": float(median), "q1": float(q1), "q3": float(q3)}


def summarize_replicates(shares, seed: int, model_id: str | None = None,
                         month: str | None = None) -> BootstrapResult:
    """Build a BootstrapResult; more than half undefined replicates is degenerate."""
    shares = np.asarray(shares, dtype=float)
    n_undefined = int(np.isnan(shares).sum())
    if shares.size == 0 or n_undefined * 2 > shares.size:
        raise DegenerateBootstrapError(
            f"{model_id or 'model'}: {n_undefined}/{shares.size} resamples undefined"
        )
    if n_undefined:
        logger.warning("%s %s: %d undefined resamples ignored", model_id, month or "", n_undefined)
    summary = boxplot_summary(shares)
    return BootstrapResult(
        n_resamples=int(shares.size),
        shares=shares,
        median=summary["median"],
        q1=summary["q1"],
        q3=summary["q3"],
        seed=seed,
        n_undefined=n_undefined,
        model_id=model_id,
        month=month,
    )


def bootstrap_share(
    records,
    model_id: str,
    n_resamples: int = DEFAULT_RESAMPLES,
    seed: int = 0,
    bounds: AltBounds | None = None,
    month: str | None = None,
    workers: int = 1,
    progress: bool = False,
) -> BootstrapResult:
    """
    Resample records with replacement and recompute the model share.

    Geo-scoped models resample the geolocated subset; the others resample the
    whole record set. User statistics are recomputed per resample. Replicate i
    draws from replicate_rng(seed, i) and results are reduced in index order.
    """
    if n_resamples < 1:
        raise ValueError("n_resamples must be >= 1")
    prep = prepare_records(records, month)
    if model_scope(model_id) == "geo":
        prep = prep.subset(prep.geo)
    n = prep.n_records
    if n == 0:
        raise DegenerateBootstrapError(f"{model_id}: no records in scope")

    def replicate(i: int) -> float:
        rng = replicate_rng(seed, i)
        weights = np.bincount(rng.integers(0, n, size=n), minlength=n).astype(float)
        try:
            return run_model(model_id, prep, bounds, weights=weights).ruling_share
        except UndefinedEstimateError:
            return np.nan

    indices = range(n_resamples)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            shares = list(tqdm(pool.map(replicate, indices), total=n_resamples,
                               desc=f"Bootstrap {model_id}", disable=not progress))
    else:
        shares = [replicate(i) for i in tqdm(indices, desc=f"Bootstrap {model_id}", disable=not progress)]

    return summarize_replicates(shares, seed, model_id=model_id, month=month or prep.month)


def pearson_r(x, y, labels: tuple = ("x", "y")) -> CorrelationReport:
    """Product-moment correlation between two equal-length series."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("pearson_r needs two one-dimensional series of equal length")
    if x.size < 2:
        raise UndefinedCorrelationError("pearson_r needs at least two points")
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        raise UndefinedCorrelationError(f"zero variance in {labels[0] if np.ptp(x) == 0 else labels[1]}")
    result = scipy_stats.pearsonr(x, y)
    r = float(np.clip(result.statistic, -1.0, 1.0))
    return CorrelationReport(r=r, p_value=float(result.pvalue), labels=tuple(labels), n=int(x.size))


def _percentages(distribution) -> dict:
    return dict(getattr(distribution, "percentages", distribution))


def residuals(reference, observed) -> dict:
    """Per-state reference% minus observed%, in the reference's state order."""
    ref = _percentages(reference)
    obs = _percentages(observed)
    if set(ref) != set(obs):
        raise GeoDataError("Distributions cover different state sets")
    for name, dist in (("reference", ref), ("observed", obs)):
        if abs(sum(dist.values()) - 100.0) > 1e-6:
            raise ValueError(f"{name} distribution does not sum to 100%")
    return {state: ref[state] - obs[state] for state in ref}


# =============================================================================
# ALT bounds sweep
# =============================================================================

# Bound ranges explored by the accuracy / precision / volume study.
SWEEP_X_LOW_RANGE = (0.1, 0.7)
SWEEP_X_UPP_RANGE = (0.7, 1.0)


@dataclass(frozen=True)
class SweepCell:
    x_low: float
    x_upp: float
    valid: bool
    share: float | None = None
    n_users: int = 0
    precision_pp: float | None = None
    median: float | None = None
    detail: str = ""

    def to_dict(self) -> dict:
        return {
            "x_low": self.x_low,
            "x_upp": self.x_upp,
            "valid": self.valid,
            "share": self.share,
            "n_users": self.n_users,
            "precision_pp": self.precision_pp,
            "median": self.median,
            "detail": self.detail,
        }


def _check_grid(name: str, grid, allowed: tuple) -> list[float]:
    values = [float(v) for v in grid]
    if not values:
        raise ValueError(f"{name} grid is empty")
    outside = [v for v in values if not allowed[0] - 1e-12 <= v <= allowed[1] + 1e-12]
    if outside:
        logger.warning("%s grid values outside the studied range %s: %s", name, allowed, outside)
    return values


def alt_grid_sweep(
    records,
    x_low_grid,
    x_upp_grid,
    n_resamples: int = DEFAULT_RESAMPLES,
    seed: int = 0,
    month: str | None = None,
    workers: int = 1,
    progress: bool = False,
) -> list[SweepCell]:
    """
    One ALT sub-model per (x_low, x_upp) pair, in x_low-major order.

    Each valid cell reports the point share, its unique-user volume and, when
    n_resamples > 0, the bootstrap interquartile precision. Cells with
    x_low > x_upp are returned with valid=False.
    """
    lows = _check_grid("x_low", x_low_grid, SWEEP_X_LOW_RANGE)
    upps = _check_grid("x_upp", x_upp_grid, SWEEP_X_UPP_RANGE)
    prep = prepare_records(records, month)

    cells = []
    for x_low in lows:
        for x_upp in upps:
            if x_low > x_upp:
                cells.append(SweepCell(x_low, x_upp, valid=False, detail="x_low > x_upp"))
                continue
            bounds = AltBounds(x_low, x_upp)
            try:
                estimate = run_model("ALT", prep, bounds)
            except UndefinedEstimateError as e:
                cells.append(SweepCell(x_low, x_upp, valid=True, detail=str(e)))
                continue

            precision = median = None
            detail = ""
            if n_resamples > 0:
                try:
                    result = bootstrap_share(prep, "ALT", n_resamples, seed, bounds=bounds,
                                             month=month, workers=workers, progress=progress)
                    precision, median = result.precision_pp, result.median
                except DegenerateBootstrapError as e:
                    detail = str(e)
            cells.append(SweepCell(
                x_low, x_upp, valid=True,
                share=estimate.ruling_share,
                n_users=estimate.n_users,
                precision_pp=precision,
                median=median,
                detail=detail,
            ))
    return cells
