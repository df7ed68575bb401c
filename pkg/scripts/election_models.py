"""
Vote-Share Toolkit — Election Models

Nine ruling-coalition vote-share models over AllegianceRecords:

    C/G prefix   complete data set / geolocated subset
    VT, VU       volumetric, tweet-based / user-based
    AT, AU       allegiance-based, tweet-based / user-based
    ALT          positive-allegiance model over unique users (complete data)

Every model takes an optional per-record multiplicity vector so that
bootstrap and panel resampling reuse one prepared record set.
"""

import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd

from scripts.errors import InputError, UndefinedEstimateError
from scripts.mexico_states import STATE_CODES
from scripts.parties import OPPOSITION, PARTY_COALITION, RULING

logger = logging.getLogger(__name__)

MODEL_IDS = ("CVT", "CVU", "CAT", "CAU", "GVT", "GVU", "GAT", "GAU", "ALT")
RECORD_COLUMNS = ["tweet_id", "user_id", "region", "country", "party", "allegiance", "date", "coalition"]

_CSV_DTYPES = {
    "tweet_id": str, "user_id": str, "region": str, "country": str, "party": str, "date": str, "text": str,
}


@dataclass(frozen=True)
class AltBounds:
    x_low: float = 0.6
    x_upp: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.x_low <= self.x_upp <= 1.0:
            raise ValueError(f"ALT bounds must satisfy 0 <= x_low <= x_upp <= 1, got {self.x_low}, {self.x_upp}")


@dataclass(frozen=True)
class UserAllegiance:
    user_id: str
    mean_ruling: float | None
    mean_opposition: float | None
    n_ruling: int
    n_opposition: int


@dataclass(frozen=True)
class VoteShareEstimate:
    model_id: str
    ruling_share: float
    n_records: int
    n_users: int
    month: str | None = None
    ruling_voters: int | None = None
    opposition_voters: int | None = None

    @property
    def opposition_share(self) -> float:
        return 1.0 - self.ruling_share

    def to_dict(self) -> dict:
        row = {
            "model": self.model_id,
            "month": self.month,
            "share": self.ruling_share,
            "opposition_share": self.opposition_share,
            "n_records": self.n_records,
            "n_users": self.n_users,
        }
        if self.ruling_voters is not None:
            row["ruling_voters"] = self.ruling_voters
            row["opposition_voters"] = self.opposition_voters
        return row


@dataclass
class PreparedRecords:
    """Canonically ordered record arrays shared by all models."""

    table: pd.DataFrame
    user_ids: np.ndarray
    user_codes: np.ndarray
    coalition: np.ndarray
    allegiance: np.ndarray
    geo: np.ndarray
    month: str | None = None

    @property
    def n_records(self) -> int:
        return len(self.user_codes)

    @property
    def n_users(self) -> int:
        return len(self.user_ids)

    @property
    def is_ruling(self) -> np.ndarray:
        return self.coalition == RULING

    def subset(self, mask: np.ndarray) -> "PreparedRecords":
        return prepare_records(self.table[mask], month=self.month)


# =============================================================================
# Record tables
# =============================================================================

def validate_records(table: pd.DataFrame, require_scores: bool = False) -> None:
    """Check the AllegianceRecord schema; raise InputError on the first violation."""
    missing = [c for c in RECORD_COLUMNS if c not in table.columns]
    if missing:
        raise InputError(f"Record table is missing columns: {', '.join(missing)}")
    if table.empty:
        return

    unknown = set(table["party"].unique()) - set(PARTY_COALITION)
    if unknown:
        raise InputError(f"Unknown parties in records: {', '.join(sorted(map(str, unknown)))}")
    expected = table["party"].map(PARTY_COALITION)
    if (expected != table["coalition"].astype(int)).any():
        raise InputError("Coalition labels disagree with the party map")

    scores = pd.to_numeric(table["allegiance"], errors="coerce")
    if require_scores and scores.isna().any():
        raise InputError("Records are not scored (allegiance missing)")
    if ((scores < 0.0) | (scores > 1.0)).any():
        raise InputError("Allegiance outside [0, 1]")

    regions = table["region"].dropna()
    bad = set(regions.unique()) - set(STATE_CODES)
    if bad:
        raise InputError(f"Region values are not state codes: {', '.join(sorted(map(str, bad)))}")


def read_records(path) -> pd.DataFrame:
    try:
        table = pd.read_csv(path, dtype=_CSV_DTYPES, keep_default_na=False, na_values=[""])
    except pd.errors.EmptyDataError:
        return pd.DataFrame(columns=RECORD_COLUMNS)
    except (OSError, pd.errors.ParserError) as e:
        raise InputError(f"Cannot read records from {path}: {e}") from e
    validate_records(table)
    return table


def write_records(table: pd.DataFrame, path, extra_columns: tuple = ()) -> None:
    columns = RECORD_COLUMNS + [c for c in extra_columns if c in table.columns]
    table[columns].to_csv(path, index=False)


def prepare_records(records, month: str | None = None) -> PreparedRecords:
    """Sort records canonically and factorise users so outputs ignore input order."""
    if isinstance(records, PreparedRecords):
        return records
    table = records if isinstance(records, pd.DataFrame) else pd.DataFrame(records, columns=RECORD_COLUMNS)
    validate_records(table)
    table = table.sort_values(["user_id", "tweet_id", "party"], kind="mergesort").reset_index(drop=True)
    codes, uniques = pd.factorize(table["user_id"], sort=True)
    return PreparedRecords(
        table=table,
        user_ids=np.asarray(uniques, dtype=object),
        user_codes=codes.astype(np.int64),
        coalition=table["coalition"].to_numpy(dtype=np.int8),
        allegiance=pd.to_numeric(table["allegiance"], errors="coerce").to_numpy(dtype=float),
        geo=table["region"].notna().to_numpy(),
        month=month,
    )


# =============================================================================
# Internals
# =============================================================================

def _weights(prep: PreparedRecords, scope: str, weights) -> np.ndarray:
    w = np.ones(prep.n_records) if weights is None else np.asarray(weights, dtype=float)
    if scope == "geo":
        w = w * prep.geo
    elif scope != "complete":
        raise ValueError(f"Unknown scope: {scope!r}")
    return w


def _scored(prep: PreparedRecords, w: np.ndarray) -> np.ndarray:
    """Allegiance times weight, zero outside the scope."""
    used = w > 0
    if np.isnan(prep.allegiance[used]).any():
        raise InputError("Allegiance models need scored records")
    return np.where(used, prep.allegiance, 0.0) * w


def _user_counts(prep: PreparedRecords, w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    ruling = prep.is_ruling
    n0 = np.bincount(prep.user_codes, weights=w * ruling, minlength=prep.n_users)
    n1 = np.bincount(prep.user_codes, weights=w * ~ruling, minlength=prep.n_users)
    return n0, n1


def _user_means(prep: PreparedRecords, w: np.ndarray) -> tuple[np.ndarray, ...]:
    """Per-user mean allegiance per coalition (NaN where the user has no such records)."""
    n0, n1 = _user_counts(prep, w)
    scored = _scored(prep, w)
    ruling = prep.is_ruling
    s0 = np.bincount(prep.user_codes, weights=scored * ruling, minlength=prep.n_users)
    s1 = np.bincount(prep.user_codes, weights=scored * ~ruling, minlength=prep.n_users)
    with np.errstate(invalid="ignore", divide="ignore"):
        m0 = np.where(n0 > 0, s0 / n0, np.nan)
        m1 = np.where(n1 > 0, s1 / n1, np.nan)
    return m0, m1, n0, n1


def _active_users(prep: PreparedRecords, w: np.ndarray) -> int:
    return int(np.count_nonzero(np.bincount(prep.user_codes, weights=w, minlength=prep.n_users)))


def _ratio(model_id: str, ruling: float, opposition: float) -> float:
    total = ruling + opposition
    if total <= 0:
        raise UndefinedEstimateError(f"{model_id}: nothing to count in scope")
    return ruling / total


def _model_id(kind: str, scope: str) -> str:
    return ("G" if scope == "geo" else "C") + kind


# =============================================================================
# Models
# =============================================================================

def model_vt(records, scope: str = "complete", weights=None, month: str | None = None) -> VoteShareEstimate:
    """Each tweet mentioning a party is one vote for that party's coalition."""
    prep = prepare_records(records, month)
    w = _weights(prep, scope, weights)
    model_id = _model_id("VT", scope)
    ruling = prep.is_ruling
    share = _ratio(model_id, w[ruling].sum(), w[~ruling].sum())
    return VoteShareEstimate(model_id, share, int(w.sum()), _active_users(prep, w), month or prep.month)


def model_vu(records, scope: str = "complete", weights=None, month: str | None = None) -> VoteShareEstimate:
    """Each user is one voter for the coalition they mention more often; ties are excluded."""
    prep = prepare_records(records, month)
    w = _weights(prep, scope, weights)
    model_id = _model_id("VU", scope)
    n0, n1 = _user_counts(prep, w)
    ruling_voters = int(np.count_nonzero(n0 > n1))
    opposition_voters = int(np.count_nonzero(n1 > n0))
    share = _ratio(model_id, ruling_voters, opposition_voters)
    return VoteShareEstimate(
        model_id, share, int(w.sum()), ruling_voters + opposition_voters, month or prep.month,
        ruling_voters=ruling_voters, opposition_voters=opposition_voters,
    )


def model_at(records, scope: str = "complete", weights=None, month: str | None = None) -> VoteShareEstimate:
    """Ratio of summed allegiance scores per coalition."""
    prep = prepare_records(records, month)
    w = _weights(prep, scope, weights)
    model_id = _model_id("AT", scope)
    scored = _scored(prep, w)
    ruling = prep.is_ruling
    share = _ratio(model_id, scored[ruling].sum(), scored[~ruling].sum())
    return VoteShareEstimate(model_id, share, int(w.sum()), _active_users(prep, w), month or prep.month)


def model_au(records, scope: str = "complete", weights=None, month: str | None = None) -> VoteShareEstimate:
    """Ratio of per-user mean allegiances totalled per coalition."""
    prep = prepare_records(records, month)
    w = _weights(prep, scope, weights)
    model_id = _model_id("AU", scope)
    m0, m1, _, _ = _user_means(prep, w)
    share = _ratio(model_id, np.nansum(m0), np.nansum(m1))
    return VoteShareEstimate(model_id, share, int(w.sum()), _active_users(prep, w), month or prep.month)


def alt_classify(m0: np.ndarray, m1: np.ndarray, bounds: AltBounds) -> tuple[np.ndarray, np.ndarray]:
    """
    Positive-allegiance voters.

    A user votes ruling when x_low <= mean_ruling <= x_upp and their opposition
    mean is absent or below x_low; the opposition condition mirrors it. Users
    positive toward both coalitions satisfy neither.
    """
    has0 = ~np.isnan(m0)
    has1 = ~np.isnan(m1)
    with np.errstate(invalid="ignore"):
        in0 = has0 & (m0 >= bounds.x_low) & (m0 <= bounds.x_upp)
        in1 = has1 & (m1 >= bounds.x_low) & (m1 <= bounds.x_upp)
        below0 = ~has0 | (m0 < bounds.x_low)
        below1 = ~has1 | (m1 < bounds.x_low)
    return in0 & below1, in1 & below0


def model_alt(records, bounds: AltBounds | None = None, weights=None, month: str | None = None) -> VoteShareEstimate:
    prep = prepare_records(records, month)
    bounds = bounds or AltBounds()
    w = _weights(prep, "complete", weights)
    m0, m1, _, _ = _user_means(prep, w)
    ruling_users, opposition_users = alt_classify(m0, m1, bounds)
    ruling_voters = int(np.count_nonzero(ruling_users))
    opposition_voters = int(np.count_nonzero(opposition_users))
    share = _ratio("ALT", ruling_voters, opposition_voters)
    return VoteShareEstimate(
        "ALT", share, int(w.sum()), ruling_voters + opposition_voters, month or prep.month,
        ruling_voters=ruling_voters, opposition_voters=opposition_voters,
    )


_KINDS = {"VT": model_vt, "VU": model_vu, "AT": model_at, "AU": model_au}


def run_model(model_id: str, records, bounds: AltBounds | None = None, weights=None,
              month: str | None = None) -> VoteShareEstimate:
    """Dispatch one of the nine model ids."""
    if model_id == "ALT":
        return model_alt(records, bounds, weights=weights, month=month)
    if model_id not in MODEL_IDS:
        raise ValueError(f"Unknown model id: {model_id!r}")
    scope = "geo" if model_id.startswith("G") else "complete"
    return _KINDS[model_id[1:]](records, scope=scope, weights=weights, month=month)


def model_scope(model_id: str) -> str:
    if model_id not in MODEL_IDS:
        raise ValueError(f"Unknown model id: {model_id!r}")
    return "geo" if model_id.startswith("G") else "complete"


def user_mean_allegiance(records) -> list[UserAllegiance]:
    """Exact per-user, per-coalition mean allegiance, ordered by user id."""
    prep = prepare_records(records)
    if prep.n_records == 0:
        return []
    m0, m1, n0, n1 = _user_means(prep, np.ones(prep.n_records))
    result = []
    for i, user_id in enumerate(prep.user_ids):
        result.append(UserAllegiance(
            user_id=str(user_id),
            mean_ruling=None if np.isnan(m0[i]) else float(m0[i]),
            mean_opposition=None if np.isnan(m1[i]) else float(m1[i]),
            n_ruling=int(n0[i]),
            n_opposition=int(n1[i]),
        ))
    return result


# =============================================================================
# Allegiance distributions
# =============================================================================

ALLEGIANCE_SUBSETS = ("complete", "geo", "user_mean")


@dataclass(frozen=True)
class AllegianceDistribution:
    """Spread of allegiance scores toward one coalition within one subset."""

    coalition: str
    subset: str
    n: int
    histogram: tuple
    mean: float | None = None
    q1: float | None = None
    median: float | None = None
    q3: float | None = None
    month: str | None = None

    @property
    def below_half(self) -> float | None:
        """Fraction of scores in the lower half of [0, 1]."""
        if not self.n:
            return None
        return sum(self.histogram[: len(self.histogram) // 2]) / self.n

    def to_dict(self) -> dict:
        return {
            "month": self.month,
            "coalition": self.coalition,
            "subset": self.subset,
            "n": self.n,
            "mean": self.mean,
            "q1": self.q1,
            "median": self.median,
            "q3": self.q3,
            "below_half": self.below_half,
            "histogram": list(self.histogram),
        }


def _distribution(coalition: str, subset: str, values: np.ndarray, edges: np.ndarray,
                  month: str | None) -> AllegianceDistribution:
    counts, _ = np.histogram(values, bins=edges)
    if values.size == 0:
        return AllegianceDistribution(coalition, subset, 0, tuple(int(c) for c in counts), month=month)
    q1, median, q3 = np.quantile(values, [0.25, 0.5, 0.75])
    return AllegianceDistribution(
        coalition, subset, int(values.size), tuple(int(c) for c in counts),
        mean=float(values.mean()), q1=float(q1), median=float(median), q3=float(q3), month=month,
    )


def allegiance_distribution(records, month: str | None = None, bins: int = 10) -> list[AllegianceDistribution]:
    """
    Allegiance quantiles and histogram per coalition.

    Three subsets per coalition: every record naming it, the geolocated records
    naming it, and the per-user mean allegiance of users who name it. Bins split
    [0, 1] evenly, the last one closed.
    """
    if bins < 2 or bins % 2:
        raise ValueError("bins must be an even number >= 2")
    prep = prepare_records(records, month)
    m0, m1, _, _ = _user_means(prep, np.ones(prep.n_records))
    edges = np.linspace(0.0, 1.0, bins + 1)
    result = []
    for coalition, name, means in ((RULING, "ruling", m0), (OPPOSITION, "opposition", m1)):
        named = prep.coalition == coalition
        subsets = {
            "complete": prep.allegiance[named],
            "geo": prep.allegiance[named & prep.geo],
            "user_mean": means[~np.isnan(means)],
        }
        for subset in ALLEGIANCE_SUBSETS:
            result.append(_distribution(name, subset, subsets[subset], edges, month or prep.month))
    return result


__all__ = [
    "MODEL_IDS", "RECORD_COLUMNS", "RULING", "OPPOSITION", "AltBounds", "UserAllegiance",
    "VoteShareEstimate", "PreparedRecords", "validate_records", "read_records", "write_records",
    "prepare_records", "model_vt", "model_vu", "model_at", "model_au", "model_alt", "alt_classify",
    "run_model", "model_scope", "user_mean_allegiance", "AllegianceDistribution", "allegiance_distribution",
]
