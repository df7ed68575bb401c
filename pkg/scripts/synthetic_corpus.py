"""
Vote-Share Toolkit — Synthetic Corpora

Generates AllegianceRecord tables with planted ground truth: a configured
ruling-coalition share, heavy-tailed per-user activity, bimodal allegiance
bands, geotagging skew and noise accounts. Used to validate the models
where the real corpus is unavailable.
"""

import json
import logging
import re
from collections import Counter
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np
import pandas as pd

from scripts.allegiance_classifier import LabeledExample
from scripts.election_models import RECORD_COLUMNS
from scripts.errors import ConfigError
from scripts.geo_analysis import load_census
from scripts.mexico_states import STATES
from scripts.parties import OPPOSITION, PARTY_COALITION, RULING

logger = logging.getLogger(__name__)

RULING_PARTIES = np.array([p for p, c in PARTY_COALITION.items() if c == RULING])
OPPOSITION_PARTIES = np.array([p for p, c in PARTY_COALITION.items() if c == OPPOSITION])

# Token lexicon shared by text-mode corpora and synthetic training sets.
POSITIVE_TOKENS = (
    "apoyo", "gracias", "bien", "excelente", "orgullo", "vamos",
    "confianza", "victoria", "honestidad", "futuro", "esperanza", "logros",
)
NEGATIVE_TOKENS = (
    "corrupto", "mentira", "fraude", "peor", "vergüenza", "fuera",
    "robo", "traición", "fracaso", "crisis", "ineptos", "basta",
)
NEUTRAL_TOKENS = ("hoy", "elección", "voto", "diputados", "campaña", "junio", "candidato", "debate")

# Share of geolocated users placed in Mexico City by the capital-skew variant.
CAPITAL_GEO_SHARE = 0.204

_MONTH_RE = re.compile(r"^\d{4}-(0[1-9]|1[0-2])$")


@dataclass
class GeneratorConfig:
    true_ruling_share: float = 0.44
    n_users: int = 10_000
    activity_exponent: float = 2.2
    max_tweets_per_user: int = 200
    supporter_band: tuple = (0.9, 0.05)
    detractor_band: tuple = (0.1, 0.05)
    detractor_band_toward_opposition: tuple | None = None
    cross_mention_probability: float = 0.2
    both_mention_probability: float = 0.0
    geodata_probability: float = 0.05
    state_distribution: dict | None = None
    geo_state_boost: dict = field(default_factory=dict)
    state_share_offsets: dict = field(default_factory=dict)
    noise_fraction: float = 0.0
    noise_band: tuple = (0.5, 0.1)
    hyperactive_fraction: float = 0.0
    hyperactive_coalition: int = OPPOSITION
    hyperactive_multiplier: float = 50.0
    months: tuple = ("2021-05",)
    emit_text: bool = False
    seed: int = 0

    @classmethod
    def from_dict(cls, doc: dict) -> "GeneratorConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(doc) - known)
        if unknown:
            raise ConfigError(f"Unknown generator settings: {', '.join(unknown)}")
        values = dict(doc)
        for key in ("supporter_band", "detractor_band", "detractor_band_toward_opposition", "noise_band", "months"):
            if values.get(key) is not None:
                values[key] = tuple(values[key])
        cfg = cls(**values)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "GeneratorConfig":
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"Cannot read generator config {path}: {e}") from e
        if not isinstance(doc, dict):
            raise ConfigError(f"{path}: generator config must be a flat JSON object")
        return cls.from_dict(doc)

    def to_dict(self) -> dict:
        return asdict(self)

    def validate(self) -> None:
        probabilities = {
            "true_ruling_share": self.true_ruling_share,
            "cross_mention_probability": self.cross_mention_probability,
            "both_mention_probability": self.both_mention_probability,
            "geodata_probability": self.geodata_probability,
            "noise_fraction": self.noise_fraction,
            "hyperactive_fraction": self.hyperactive_fraction,
        }
        for name, value in probabilities.items():
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {value}")
        if self.n_users < 1:
            raise ConfigError("n_users must be >= 1")
        if self.activity_exponent <= 1.0:
            raise ConfigError("activity_exponent must be > 1")
        if self.max_tweets_per_user < 1:
            raise ConfigError("max_tweets_per_user must be >= 1")
        if self.hyperactive_multiplier < 1.0:
            raise ConfigError("hyperactive_multiplier must be >= 1")
        if self.hyperactive_coalition not in (RULING, OPPOSITION):
            raise ConfigError("hyperactive_coalition must be 0 (ruling) or 1 (opposition)")
        for name in ("supporter_band", "detractor_band", "detractor_band_toward_opposition", "noise_band"):
            band = getattr(self, name)
            if band is None:
                continue
            if len(band) != 2 or not 0.0 <= band[0] <= 1.0 or band[1] < 0:
                raise ConfigError(f"{name} must be (mean in [0, 1], spread >= 0)")
        if not self.months or any(not _MONTH_RE.match(m) for m in self.months):
            raise ConfigError(f"months must be YYYY-MM strings, got {self.months}")
        if self.state_distribution is not None:
            if self.geodata_probability > 0 and sum(self.state_distribution.values()) <= 0:
                raise ConfigError("geodata_probability > 0 needs a non-empty state distribution")
            if any(v < 0 for v in self.state_distribution.values()):
                raise ConfigError("state_distribution weights must be >= 0")
        for name in ("state_distribution", "geo_state_boost", "state_share_offsets"):
            unknown = set(getattr(self, name) or {}) - set(STATES)
            if unknown:
                raise ConfigError(f"{name} names unknown states: {', '.join(sorted(unknown))}")
        if any(v < 0 for v in self.geo_state_boost.values()):
            raise ConfigError("geo_state_boost multipliers must be >= 0")


@dataclass
class GroundTruth:
    user_support: pd.Series
    true_share: float
    users_per_state: dict
    geo_users_per_state: dict
    n_tweets: int
    n_records: int

    def to_dict(self) -> dict:
        return {
            "true_share": self.true_share,
            "n_users": int(self.user_support.size),
            "noise_users": int((self.user_support < 0).sum()),
            "n_tweets": self.n_tweets,
            "n_records": self.n_records,
            "users_per_state": self.users_per_state,
            "geo_users_per_state": self.geo_users_per_state,
        }


def _state_weights(cfg: GeneratorConfig) -> tuple[np.ndarray, np.ndarray]:
    if cfg.state_distribution is None:
        dist = {row.state: row.population for row in load_census()}
    else:
        dist = cfg.state_distribution
    states = np.array([s for s in STATES if dist.get(s, 0) > 0])
    if states.size == 0:
        # Only reachable with geodata_probability == 0, so the placeholder state is never geotagged.
        return np.array(["MX"]), np.array([1.0])
    weights = np.array([float(dist[s]) for s in states])
    return states, weights / weights.sum()


def _band(rng: np.random.Generator, band: tuple, size: int) -> np.ndarray:
    return np.clip(rng.normal(band[0], band[1], size), 0.0, 1.0)


def _month_dates(rng: np.random.Generator, months: tuple, size: int) -> np.ndarray:
    starts = pd.to_datetime([f"{m}-01T05:00:00Z" for m in months], utc=True)
    lengths = np.array([((s + pd.offsets.MonthBegin(1)) - s).total_seconds() for s in starts], dtype=np.int64)
    which = rng.integers(0, len(months), size)
    offsets = (rng.random(size) * lengths[which]).astype(np.int64)
    stamps = starts[which] + pd.to_timedelta(offsets, unit="s")
    return np.asarray(stamps.strftime("%Y-%m-%dT%H:%M:%S+00:00"))


def _sentiment_text(rng: np.random.Generator, party: str, allegiance: float) -> str:
    n_tokens = int(rng.integers(3, 7))
    positive = rng.random(n_tokens) < allegiance
    lexicons = (NEGATIVE_TOKENS, POSITIVE_TOKENS)
    words = [lexicons[pos][rng.integers(len(lexicons[pos]))] for pos in positive.astype(int)]
    words.insert(int(rng.integers(0, len(words) + 1)), party.lower())
    words.append(NEUTRAL_TOKENS[rng.integers(len(NEUTRAL_TOKENS))])
    return " ".join(words)


def generate_corpus(cfg: GeneratorConfig) -> tuple[pd.DataFrame, GroundTruth]:
    """
    Draw a corpus of AllegianceRecords and the truth it was planted with.

    Tweets per user follow a Zipf law P(k) = k^-s / zeta(s) (s = activity_exponent),
    truncated at max_tweets_per_user. A supporter's tweet names their own
    coalition unless it is a cross mention; own-coalition records draw A from
    the supporter band and cross records from the detractor band. Noise users
    name one random coalition with A from the noise band.
    """
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    n = cfg.n_users

    states, state_p = _state_weights(cfg)
    user_state = rng.choice(states, size=n, p=state_p)
    offsets = np.array([cfg.state_share_offsets.get(s, 0.0) for s in user_state])
    own = np.where(rng.random(n) < np.clip(cfg.true_ruling_share + offsets, 0.0, 1.0), RULING, OPPOSITION)
    noise = rng.random(n) < cfg.noise_fraction
    noise_coalition = rng.integers(0, 2, n)
    boost = np.array([cfg.geo_state_boost.get(s, 1.0) for s in user_state])
    geotagged = rng.random(n) < np.clip(cfg.geodata_probability * boost, 0.0, 1.0)

    activity = np.minimum(rng.zipf(cfg.activity_exponent, n), cfg.max_tweets_per_user).astype(np.int64)
    if cfg.hyperactive_fraction > 0:
        candidates = np.flatnonzero((own == cfg.hyperactive_coalition) & ~noise)
        n_hyper = min(candidates.size, max(1, int(round(cfg.hyperactive_fraction * n))))
        if n_hyper:
            chosen = rng.choice(candidates, size=n_hyper, replace=False)
            activity[chosen] = np.ceil(activity[chosen] * cfg.hyperactive_multiplier).astype(np.int64)

    # One entry per tweet
    n_tweets = int(activity.sum())
    tweet_user = np.repeat(np.arange(n), activity)
    cross = rng.random(n_tweets) < cfg.cross_mention_probability
    target = np.where(cross, 1 - own[tweet_user], own[tweet_user])
    target = np.where(noise[tweet_user], noise_coalition[tweet_user], target)
    both = (rng.random(n_tweets) < cfg.both_mention_probability) & ~noise[tweet_user]
    dates = _month_dates(rng, cfg.months, n_tweets)

    # One entry per record; a tweet naming both coalitions yields two
    rec_tweet = np.concatenate([np.arange(n_tweets), np.flatnonzero(both)])
    rec_coalition = np.concatenate([target, 1 - target[both]])
    rec_user = tweet_user[rec_tweet]
    n_records = rec_tweet.size

    supportive = rec_coalition == own[rec_user]
    toward_opposition = cfg.detractor_band_toward_opposition or cfg.detractor_band
    allegiance = np.select(
        [noise[rec_user], supportive, rec_coalition == OPPOSITION],
        [_band(rng, cfg.noise_band, n_records),
         _band(rng, cfg.supporter_band, n_records),
         _band(rng, toward_opposition, n_records)],
        default=_band(rng, cfg.detractor_band, n_records),
    )
    party = np.where(
        rec_coalition == RULING,
        RULING_PARTIES[rng.integers(0, RULING_PARTIES.size, n_records)],
        OPPOSITION_PARTIES[rng.integers(0, OPPOSITION_PARTIES.size, n_records)],
    )

    user_ids = np.array([f"u{i:07d}" for i in range(n)])
    rec_geo = geotagged[rec_user]
    table = pd.DataFrame({
        "tweet_id": np.array([f"t{i:09d}" for i in range(n_tweets)])[rec_tweet],
        "user_id": user_ids[rec_user],
        "region": np.where(rec_geo, user_state[rec_user], None),
        "country": np.where(rec_geo, "MX", None),
        "party": party,
        "allegiance": allegiance,
        "date": dates[rec_tweet],
        "coalition": rec_coalition.astype(int),
    })
    columns = list(RECORD_COLUMNS)
    if cfg.emit_text:
        table["text"] = _tweet_texts(rng, rec_tweet, table["party"].to_numpy(), allegiance)
        columns.append("text")
    table = table.sort_values(["date", "tweet_id", "party"], kind="mergesort").reset_index(drop=True)

    support = pd.Series(np.where(noise, -1, own), index=user_ids, name="coalition")
    counted = own[~noise]
    truth = GroundTruth(
        user_support=support,
        true_share=float(np.mean(counted == RULING)) if counted.size else float("nan"),
        users_per_state=dict(sorted(Counter(user_state.tolist()).items())),
        geo_users_per_state=dict(sorted(Counter(user_state[geotagged].tolist()).items())),
        n_tweets=n_tweets,
        n_records=int(n_records),
    )
    logger.debug("Generated %d records from %d users (true share %.4f)", n_records, n, truth.true_share)
    return table[columns], truth


def _tweet_texts(rng, rec_tweet: np.ndarray, party: np.ndarray, allegiance: np.ndarray) -> np.ndarray:
    """Compose one text per tweet; records of the same tweet share it."""
    pieces: dict[int, list[str]] = {}
    for i in np.argsort(rec_tweet, kind="stable"):
        pieces.setdefault(int(rec_tweet[i]), []).append(_sentiment_text(rng, party[i], allegiance[i]))
    texts = {tweet: " ".join(parts) for tweet, parts in pieces.items()}
    return np.array([texts[int(t)] for t in rec_tweet], dtype=object)


def capital_boost(capital_share: float, geo_share: float = CAPITAL_GEO_SHARE) -> float:
    """Geotagging multiplier that lifts a region holding capital_share of users to geo_share of geo users."""
    if not 0 < capital_share < 1 or not 0 < geo_share < 1:
        raise ConfigError("shares must lie strictly between 0 and 1")
    return geo_share * (1 - capital_share) / (capital_share * (1 - geo_share))


def distortion_suite(cfg: GeneratorConfig) -> dict:
    """
    Variants of a base config, each returned as (records, truth):

    negativity   most records are low-A detractor mentions, harsher toward the opposition
    capital      Mexico City geotags at a rate that gives it ~20% of geolocated users,
                 and its users lean toward the opposition
    hyperactive  a small opposition minority posts far more than everyone else
    """
    cfg.validate()
    states, weights = _state_weights(cfg)
    capital_share = float(weights[states == "MX"][0]) if "MX" in states else 0.073
    variants = {
        "negativity": replace(
            cfg,
            cross_mention_probability=max(cfg.cross_mention_probability, 0.6),
            detractor_band=(0.35, 0.05),
            detractor_band_toward_opposition=(0.02, 0.02),
        ),
        "capital": replace(
            cfg,
            geo_state_boost={**cfg.geo_state_boost, "MX": capital_boost(capital_share)},
            state_share_offsets={**cfg.state_share_offsets, "MX": -0.25},
        ),
        "hyperactive": replace(
            cfg,
            hyperactive_fraction=cfg.hyperactive_fraction or 0.005,
            hyperactive_coalition=OPPOSITION,
            hyperactive_multiplier=max(cfg.hyperactive_multiplier, 100.0),
        ),
    }
    return {name: generate_corpus(variant) for name, variant in variants.items()}


def generate_training_examples(n_per_class: int, seed: int = 0, purity: float = 0.85) -> list[LabeledExample]:
    """Labeled texts drawn from the text-mode lexicon; p texts lean positive, n texts negative."""
    if n_per_class < 1:
        raise ConfigError("n_per_class must be >= 1")
    rng = np.random.default_rng(seed)
    parties = np.concatenate([RULING_PARTIES, OPPOSITION_PARTIES])
    examples = []
    for label, lean in (("n", 1.0 - purity), ("p", purity)):
        for _ in range(n_per_class):
            party = parties[rng.integers(parties.size)]
            examples.append(LabeledExample(_sentiment_text(rng, party, lean), label))
    return examples


def write_jsonl(records: pd.DataFrame, path) -> int:
    """Write one ingestion-schema JSON line per tweet; returns the number of lines."""
    if "text" not in records.columns:
        raise ConfigError("JSON-lines output needs a text column (generate with emit_text)")
    tweets = records.drop_duplicates("tweet_id", keep="first")
    with open(path, "w", encoding="utf-8") as fh:
        for row in tweets.itertuples(index=False):
            doc = {
                "id": row.tweet_id,
                "author_id": row.user_id,
                "created_at": row.date,
                "lang": "es",
                "text": row.text,
            }
            if isinstance(row.region, str):
                doc["country"] = "MX"
                doc["region"] = STATES[row.region]
            fh.write(json.dumps(doc, ensure_ascii=False) + "\n")
    return len(tweets)


__all__ = [
    "GeneratorConfig", "GroundTruth", "generate_corpus", "distortion_suite", "capital_boost",
    "generate_training_examples", "write_jsonl",
]
