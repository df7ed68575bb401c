"""
Vote-Share Toolkit — Geographic Representativeness

Regional user distributions, census comparison, the Greater Mexico City
merge and population-matched panel resampling of the geolocated models.
"""

import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np
import pandas as pd
from tqdm import tqdm

from scripts.bootstrap_stats import (
    BootstrapResult,
    CorrelationReport,
    pearson_r,
    replicate_rng,
    residuals,
    summarize_replicates,
)
from scripts.election_models import AltBounds, model_scope, prepare_records, run_model
from scripts.errors import GeoDataError, UndefinedEstimateError
from scripts.mexico_states import (
    GREATER_MEXICO_CITY,
    GREATER_MEXICO_CITY_CODE,
    STATE_CODES,
    STATES,
    resolve_state,
)

logger = logging.getLogger(__name__)

CENSUS_PATH = Path(__file__).parent / "data" / "census_2020.csv"
CENSUS_COLUMNS = ["state_code", "population", "internet_users"]

__all__ = [
    "STATES", "STATE_CODES", "resolve_state", "CensusRow", "RegionDistribution",
    "RepresentativenessReport", "load_census", "census_distribution", "assign_user_states",
    "aggregate_users_by_state", "merge_greater_mexico_city", "largest_remainder_quotas",
    "total_variation", "population_weighted_resample", "representativeness_report",
]


@dataclass(frozen=True)
class CensusRow:
    state: str
    population: int
    internet_users: int

    def __post_init__(self):
        if self.state not in STATES:
            raise GeoDataError(f"Unknown state code in census: {self.state!r}")
        if self.population < 0 or self.internet_users < 0:
            raise GeoDataError(f"{self.state}: negative census count")
        if self.internet_users > self.population:
            raise GeoDataError(f"{self.state}: more internet users than inhabitants")


@dataclass(frozen=True)
class RegionDistribution:
    """State code -> percentage, summing to 100."""

    percentages: dict
    kind: str = "observed"

    def __post_init__(self):
        if any(v < 0 for v in self.percentages.values()):
            raise GeoDataError(f"{self.kind}: negative percentage")
        total = sum(self.percentages.values())
        if abs(total - 100.0) > 1e-9:
            raise GeoDataError(f"{self.kind}: percentages sum to {total}, not 100")

    @classmethod
    def from_counts(cls, counts: Mapping, kind: str = "observed", states=STATE_CODES) -> "RegionDistribution":
        """Normalize counts over a fixed state universe; absent states get 0%."""
        values = np.array([float(counts.get(s, 0)) for s in states])
        total = values.sum()
        if total <= 0:
            raise GeoDataError(f"{kind}: no counts to normalize")
        return cls(dict(zip(states, (values / total * 100.0).tolist())), kind=kind)

    @property
    def states(self) -> tuple:
        return tuple(self.percentages)

    def series(self, states=None) -> np.ndarray:
        return np.array([self.percentages[s] for s in (states or self.states)])


@dataclass
class RepresentativenessReport:
    correlations: dict
    merged_correlations: dict
    residuals: dict
    outside_gmc_max_residual: dict
    distributions: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "correlations": {k: v.to_dict() for k, v in self.correlations.items()},
            "merged_correlations": {k: v.to_dict() for k, v in self.merged_correlations.items()},
            "residuals": self.residuals,
            "outside_gmc_max_residual": self.outside_gmc_max_residual,
            "distributions": {k: v.percentages for k, v in self.distributions.items()},
        }


# =============================================================================
# Census
# =============================================================================

def load_census(path=CENSUS_PATH) -> list[CensusRow]:
    """Load `state_code,population,internet_users` rows for all 32 entities."""
    try:
        frame = pd.read_csv(path, dtype={"state_code": str}, comment="#", keep_default_na=False)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise GeoDataError(f"Cannot read census table {path}: {e}") from e
    missing = [c for c in CENSUS_COLUMNS if c not in frame.columns]
    if missing:
        raise GeoDataError(f"Census table lacks columns: {', '.join(missing)}")

    rows = [
        CensusRow(str(r.state_code).strip().upper(), int(r.population), int(r.internet_users))
        for r in frame.itertuples(index=False)
    ]
    codes = [r.state for r in rows]
    if len(set(codes)) != len(codes) or set(codes) != set(STATE_CODES):
        raise GeoDataError("Census table must list each of the 32 federal entities exactly once")
    return rows


def census_distribution(rows: list[CensusRow], column: str = "population") -> RegionDistribution:
    counts = {r.state: getattr(r, column) for r in rows}
    return RegionDistribution.from_counts(counts, kind=column)


# =============================================================================
# Users by state
# =============================================================================

def assign_user_states(records) -> pd.Series:
    """
    Modal state per geolocated user.

    Ties go to the state of the user's most recent record among the tied states.
    """
    table = records.table if hasattr(records, "table") else records
    geo = table[table["region"].notna()]
    if geo.empty:
        raise GeoDataError("No geolocated users")
    geo = geo.assign(_ts=pd.to_datetime(geo["date"], utc=True, format="ISO8601"))
    grouped = (
        geo.groupby(["user_id", "region"])
        .agg(n=("tweet_id", "size"), last=("_ts", "max"))
        .reset_index()
        .sort_values(["user_id", "n", "last", "region"], ascending=[True, False, False, True], kind="mergesort")
    )
    return grouped.drop_duplicates("user_id").set_index("user_id")["region"]


def aggregate_users_by_state(records) -> RegionDistribution:
    """Unique geolocated users per state, as percentages over all 32 entities."""
    user_states = assign_user_states(records)
    return RegionDistribution.from_counts(Counter(user_states.values), kind="twitter")


def merge_greater_mexico_city(d: RegionDistribution) -> RegionDistribution:
    """Collapse MX, HG and MC into one Greater Mexico City entry (31 entries)."""
    pct = d.percentages
    if GREATER_MEXICO_CITY_CODE in pct:
        raise GeoDataError("Distribution is already merged")
    missing = [s for s in GREATER_MEXICO_CITY if s not in pct]
    if missing or set(pct) != set(STATE_CODES):
        raise GeoDataError("Merge needs all 32 federal entities")

    merged = {GREATER_MEXICO_CITY_CODE: sum(pct[s] for s in GREATER_MEXICO_CITY)}
    merged.update({s: v for s, v in pct.items() if s not in GREATER_MEXICO_CITY})
    return RegionDistribution(merged, kind=f"{d.kind}_merged")


# =============================================================================
# Panel resampling
# =============================================================================

def largest_remainder_quotas(weights: Mapping, k: int) -> dict:
    """Integer quotas proportional to weights that sum to exactly k."""
    states = list(weights)
    w = np.array([max(float(weights[s]), 0.0) for s in states])
    if w.sum() <= 0:
        raise GeoDataError("Target distribution has no mass")
    raw = w / w.sum() * k
    quotas = np.floor(raw).astype(int)
    remainder = k - quotas.sum()
    # stable sort keeps state order among equal fractions
    order = np.argsort(-(raw - quotas), kind="stable")
    quotas[order[:remainder]] += 1
    return dict(zip(states, quotas.tolist()))


def total_variation(p: Mapping, q: Mapping) -> float:
    keys = set(p) | set(q)
    p_total = sum(p.values()) or 1.0
    q_total = sum(q.values()) or 1.0
    return 0.5 * sum(abs(p.get(s, 0.0) / p_total - q.get(s, 0.0) / q_total) for s in keys)


def population_weighted_resample(
    records,
    target: RegionDistribution,
    k: int = 1000,
    reps: int = 1000,
    model_id: str = "GVU",
    seed: int = 0,
    bounds: AltBounds | None = None,
    month: str | None = None,
    progress: bool = False,
) -> BootstrapResult:
    """
    Re-run a model on panels of k users drawn to follow a target state distribution.

    Each repetition fills per-state quotas (largest remainder) by drawing users
    without replacement from that state's pool, then evaluates the model on the
    panel's records. Target states with no available users lose their weight,
    which the remaining states absorb proportionally.
    """
    if k < 1 or reps < 1:
        raise ValueError("k and reps must be >= 1")
    prep = prepare_records(records, month)
    user_states = assign_user_states(prep)
    user_codes = pd.Index(prep.user_ids).get_indexer(user_states.index)
    pools = {s: np.sort(user_codes[user_states.to_numpy() == s]) for s in STATE_CODES}

    weights = dict(target.percentages)
    unknown = set(weights) - set(STATE_CODES)
    if unknown:
        raise GeoDataError(f"Target has entries that are not states: {', '.join(sorted(unknown))}")
    empty = [s for s, w in weights.items() if w > 0 and pools[s].size == 0]
    if empty:
        logger.warning("No users available in %s; their target weight is redistributed", ", ".join(empty))
        for s in empty:
            weights[s] = 0.0
    quotas = largest_remainder_quotas(weights, k)

    short = {s: q - pools[s].size for s, q in quotas.items() if q > pools[s].size}
    if short:
        logger.warning("State pools smaller than their quota (panel shortfall): %s", short)

    model_scope(model_id)
    drawn = Counter()
    shares = []
    for rep in tqdm(range(reps), desc=f"Panels {model_id}", disable=not progress):
        rng = replicate_rng(seed, rep)
        panel = np.zeros(prep.n_users, dtype=bool)
        for state in STATE_CODES:
            take = min(quotas.get(state, 0), pools[state].size)
            if take == 0:
                continue
            panel[rng.choice(pools[state], size=take, replace=False)] = True
            drawn[state] += take
        weights_per_record = panel[prep.user_codes].astype(float)
        try:
            shares.append(run_model(model_id, prep, bounds, weights=weights_per_record).ruling_share)
        except UndefinedEstimateError:
            shares.append(np.nan)

    result = summarize_replicates(shares, seed, model_id=model_id, month=month or prep.month)
    total_drawn = sum(drawn.values())
    result.state_frequencies = {s: drawn[s] / total_drawn for s in STATE_CODES}
    return result


# =============================================================================
# Report
# =============================================================================

def _correlations(population, internet, twitter) -> dict:
    states = population.states
    series = {name: d.series(states) for name, d in
              (("population", population), ("internet", internet), ("twitter", twitter))}
    pairs = (("population", "internet"), ("population", "twitter"), ("internet", "twitter"))
    return {f"{a}_{b}": pearson_r(series[a], series[b], labels=(a, b)) for a, b in pairs}


def representativeness_report(census: list[CensusRow], observed: RegionDistribution) -> RepresentativenessReport:
    """Pairwise correlations (plain and merged), residuals and outside-GMC residual bounds."""
    population = census_distribution(census, "population")
    internet = census_distribution(census, "internet_users")

    correlations: dict[str, CorrelationReport] = _correlations(population, internet, observed)
    merged = _correlations(
        merge_greater_mexico_city(population),
        merge_greater_mexico_city(internet),
        merge_greater_mexico_city(observed),
    )
    residual_series = {
        "internet": residuals(population, internet),
        "twitter": residuals(population, observed),
    }
    outside = {
        name: max(abs(v) for s, v in series.items() if s not in GREATER_MEXICO_CITY)
        for name, series in residual_series.items()
    }
    return RepresentativenessReport(
        correlations=correlations,
        merged_correlations=merged,
        residuals=residual_series,
        outside_gmc_max_residual=outside,
        distributions={"population": population, "internet": internet, "twitter": observed},
    )
