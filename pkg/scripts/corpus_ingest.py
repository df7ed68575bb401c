"""
Vote-Share Toolkit — Corpus Ingestion

Streams archived JSON-lines tweets, matches them against per-party queries,
applies the language / date-window filters and emits one record per
(tweet, party) labeled with the party's coalition.
"""

import json
import logging
import re
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Iterator

import pandas as pd
from tqdm import tqdm

from scripts.errors import ConfigError, InputError, RecordParseError, RecordRejectedError
from scripts.mexico_states import resolve_state
from scripts.parties import PARTY_COALITION, canonical_party

logger = logging.getLogger(__name__)

# Month and window boundaries sit at a fixed 05:00 UTC.
BOUNDARY_OFFSET = timedelta(hours=5)
WINDOW_START = datetime(2020, 12, 1, 5, 0, 0, tzinfo=timezone.utc)
WINDOW_END = datetime(2021, 5, 31, 5, 0, 0, tzinfo=timezone.utc)

URL_RE = re.compile(r"(?:https?://|www\.)\S+", re.IGNORECASE)

INGEST_COLUMNS = [
    "tweet_id", "user_id", "region", "country", "party",
    "allegiance", "date", "coalition", "text",
]
SHARD_COLUMNS = INGEST_COLUMNS + ["_any_geo", "_retweet"]

# Matched rows are packed into a DataFrame every CHUNK_ROWS records.
CHUNK_ROWS = 50_000


@dataclass(frozen=True)
class TweetRecord:
    tweet_id: str
    user_id: str
    created_at: datetime
    text: str
    lang: str
    country: str | None = None
    region: str | None = None
    place_name: str | None = None
    is_retweet: bool = False


@dataclass(frozen=True)
class QuerySpec:
    """
    Keyword query for one party.

    A tweet matches when its normalized text contains any keyword, hashtag or
    handle and none of the exclusion terms.
    """

    party: str
    keywords: tuple = ()
    hashtags: tuple = ()
    handles: tuple = ()
    exclusions: tuple = ()

    def __post_init__(self):
        try:
            party = canonical_party(self.party)
        except KeyError as e:
            raise ConfigError(str(e)) from e
        object.__setattr__(self, "party", party)
        for name in ("keywords", "hashtags", "handles", "exclusions"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if party.lower() not in {normalize_text(k) for k in self.keywords}:
            raise ConfigError(f"Query for {party} must list the party name among its keywords")

    @classmethod
    def from_dict(cls, doc: dict) -> "QuerySpec":
        if "party" not in doc:
            raise ConfigError("Query spec is missing 'party'")
        return cls(
            party=doc["party"],
            keywords=doc.get("keywords", []),
            hashtags=doc.get("hashtags", []),
            handles=doc.get("handles", []),
            exclusions=doc.get("exclusions", []),
        )


@dataclass
class CorpusStats:
    total_tweets: int = 0
    unique_users: int = 0
    geo_tweets: int = 0
    geo_users: int = 0
    any_geo_tweets: int = 0
    retweets: int = 0
    rejected: int = 0
    per_party: dict = field(default_factory=dict)
    monthly: dict = field(default_factory=dict)
    stage_counts: dict = field(default_factory=dict)

    @property
    def geo_ratio(self) -> float:
        return self.geo_tweets / self.total_tweets if self.total_tweets else 0.0

    def to_dict(self) -> dict:
        return {
            "total_tweets": self.total_tweets,
            "unique_users": self.unique_users,
            "geo_tweets": self.geo_tweets,
            "geo_users": self.geo_users,
            "any_geo_tweets": self.any_geo_tweets,
            "geo_ratio": round(self.geo_ratio, 6),
            "retweets": self.retweets,
            "rejected": self.rejected,
            "per_party": dict(sorted(self.per_party.items())),
            "monthly": dict(sorted(self.monthly.items())),
            "stage_counts": self.stage_counts,
        }


# =============================================================================
# Parsing
# =============================================================================

def _optional(obj: dict, key: str) -> str | None:
    value = obj.get(key)
    if value is None:
        return None
    value = str(value).strip()
    return value or None


def parse_timestamp(raw: str) -> datetime:
    """Parse an ISO-8601 timestamp that carries a UTC offset."""
    parsed = datetime.fromisoformat(raw.replace("Z", "+00:00"))
    if parsed.tzinfo is None:
        raise ValueError(f"timestamp {raw!r} has no UTC offset")
    return parsed.astimezone(timezone.utc)


def parse_tweet_record(line: str, line_number: int = 0) -> TweetRecord:
    """
    Parse one JSON-lines record.

    Raises:
        RecordParseError: malformed JSON (recoverable, carries the line number)
        RecordRejectedError: a required field is missing or unusable
    """
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as e:
        raise RecordParseError(line_number, f"malformed JSON ({e.msg})") from e
    if not isinstance(obj, dict):
        raise RecordParseError(line_number, "record is not a JSON object")

    for key in ("id", "author_id", "text"):
        if obj.get(key) is None or str(obj[key]) == "":
            raise RecordRejectedError(line_number, f"missing {key}")
    if not obj.get("created_at"):
        raise RecordRejectedError(line_number, "missing created_at")
    if not obj.get("lang"):
        raise RecordRejectedError(line_number, "missing lang")
    try:
        created_at = parse_timestamp(str(obj["created_at"]))
    except ValueError as e:
        raise RecordRejectedError(line_number, f"unusable created_at ({e})") from e

    text = str(obj["text"])
    referenced = obj.get("referenced_tweets") or []
    is_retweet = text.startswith("RT @") or any(
        isinstance(ref, dict) and ref.get("type") == "retweeted" for ref in referenced
    )

    return TweetRecord(
        tweet_id=str(obj["id"]),
        user_id=str(obj["author_id"]),
        created_at=created_at,
        text=text,
        lang=str(obj["lang"]).lower(),
        country=_optional(obj, "country"),
        region=_optional(obj, "region"),
        place_name=_optional(obj, "place_name"),
        is_retweet=is_retweet,
    )


def stream_tweets(path) -> Iterator[tuple[int, TweetRecord | RecordParseError]]:
    """Yield (line_number, record-or-error) without loading the file in memory."""
    try:
        handle = open(path, "rb")
    except OSError as e:
        raise InputError(f"Cannot read {path}: {e}") from e
    with handle:
        for line_number, raw in enumerate(handle, start=1):
            try:
                line = raw.decode("utf-8")
            except UnicodeDecodeError:
                yield line_number, RecordParseError(line_number, "invalid UTF-8")
                continue
            if not line.strip():
                continue
            try:
                yield line_number, parse_tweet_record(line, line_number)
            except RecordParseError as e:
                yield line_number, e


# =============================================================================
# Query matching and filters
# =============================================================================

def normalize_text(text: str) -> str:
    """Lowercase, drop URLs and collapse whitespace. Accents are kept."""
    return " ".join(URL_RE.sub(" ", text).lower().split())


def _term_pattern(terms: Iterable[str]) -> re.Pattern | None:
    normalized = sorted({normalize_text(t) for t in terms if normalize_text(t)}, key=len, reverse=True)
    if not normalized:
        return None
    alternation = "|".join(re.escape(t) for t in normalized)
    return re.compile(rf"(?<![\w#@])(?:{alternation})(?!\w)")


@lru_cache(maxsize=128)
def _compiled(spec: QuerySpec) -> tuple:
    hashtags = [h if h.startswith("#") else f"#{h}" for h in spec.hashtags]
    handles = [h if h.startswith("@") else f"@{h}" for h in spec.handles]
    include = _term_pattern([*spec.keywords, *hashtags, *handles])
    exclude = _term_pattern(spec.exclusions)
    return include, exclude


def match_party_query(t: TweetRecord, q: QuerySpec) -> bool:
    include, exclude = _compiled(q)
    text = normalize_text(t.text)
    if include is None or not include.search(text):
        return False
    return exclude is None or not exclude.search(text)


def filter_language(t: TweetRecord, lang: str = "es") -> bool:
    return t.lang == lang.lower()


def filter_window(t: TweetRecord, start: datetime, end: datetime) -> bool:
    """Half-open window: start <= created_at < end."""
    if start >= end:
        raise ValueError("window start must precede window end")
    return start <= t.created_at < end


def has_geodata(t: TweetRecord) -> bool:
    return resolve_state(t.region, t.country, t.place_name) is not None


def has_any_geo(t: TweetRecord) -> bool:
    return any((t.country, t.region, t.place_name))


def load_query_specs(path) -> list[QuerySpec]:
    """Load query specs from a directory of per-party JSON files or one JSON list."""
    path = Path(path)
    try:
        if path.is_dir():
            docs = [json.loads(p.read_text(encoding="utf-8")) for p in sorted(path.glob("*.json"))]
        else:
            loaded = json.loads(path.read_text(encoding="utf-8"))
            docs = loaded if isinstance(loaded, list) else [loaded]
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"Cannot load query specs from {path}: {e}") from e

    specs = [QuerySpec.from_dict(doc) for doc in docs]
    seen = Counter(s.party for s in specs)
    duplicated = [p for p, n in seen.items() if n > 1]
    if duplicated:
        raise ConfigError(f"Duplicate query specs for: {', '.join(duplicated)}")
    if not specs:
        raise ConfigError(f"No query specs found in {path}")
    return specs


# =============================================================================
# Months
# =============================================================================

def month_key(ts: datetime) -> str:
    """Calendar month with boundaries at 05:00 UTC."""
    return (ts.astimezone(timezone.utc) - BOUNDARY_OFFSET).strftime("%Y-%m")


def month_keys(dates: pd.Series) -> pd.Series:
    parsed = pd.to_datetime(dates, utc=True, format="ISO8601")
    return (parsed - BOUNDARY_OFFSET).dt.strftime("%Y-%m")


def monthly_partition(records: pd.DataFrame) -> dict[str, pd.DataFrame]:
    """Split a record table into disjoint calendar-month buckets, ordered by month."""
    if records is None or records.empty:
        return {}
    months = month_keys(records["date"])
    return {
        month: bucket.reset_index(drop=True)
        for month, bucket in records.groupby(months.values, sort=True)
    }


# =============================================================================
# Ingestion
# =============================================================================

def _shard_frame(rows: list) -> pd.DataFrame:
    return pd.DataFrame(rows, columns=SHARD_COLUMNS)


def _ingest_shard(job: tuple) -> tuple[pd.DataFrame, dict]:
    path, specs, start, end, lang = job
    counts = Counter()
    chunks = []
    rows = []
    seen = set()

    for _, item in stream_tweets(path):
        counts["read"] += 1
        if isinstance(item, RecordParseError):
            counts["rejected"] += 1
            logger.debug("%s: %s", path, item)
            continue
        counts["parsed"] += 1
        if not filter_language(item, lang):
            continue
        counts["language_kept"] += 1
        if not filter_window(item, start, end):
            continue
        counts["window_kept"] += 1

        matched = [q.party for q in specs if match_party_query(item, q)]
        if not matched:
            continue
        counts["matched_tweets"] += 1
        state = resolve_state(item.region, item.country, item.place_name)
        for party in matched:
            if (item.tweet_id, party) in seen:
                continue
            seen.add((item.tweet_id, party))
            counts["party_records"] += 1
            rows.append((
                item.tweet_id, item.user_id, state, item.country, party, None,
                item.created_at.isoformat(timespec="seconds"), PARTY_COALITION[party], item.text,
                has_any_geo(item), item.is_retweet,
            ))
        if len(rows) >= CHUNK_ROWS:
            chunks.append(_shard_frame(rows))
            rows = []

    if rows or not chunks:
        chunks.append(_shard_frame(rows))
    frame = chunks[0] if len(chunks) == 1 else pd.concat(chunks, ignore_index=True)
    return frame, dict(counts)


def ingest_corpus(
    paths: list,
    specs: list[QuerySpec],
    start: datetime = WINDOW_START,
    end: datetime = WINDOW_END,
    lang: str = "es",
    workers: int = 1,
    progress: bool = False,
) -> tuple[pd.DataFrame, CorpusStats]:
    """
    Ingest JSON-lines shards into an unscored record table.

    Shards are independent; results are merged, deduplicated on
    (tweet_id, party) and ordered by (date, tweet_id, party), so the output
    does not depend on sharding or worker count.
    """
    if start >= end:
        raise ValueError("window start must precede window end")
    jobs = [(str(p), tuple(specs), start, end, lang) for p in paths]

    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(tqdm(pool.map(_ingest_shard, jobs), total=len(jobs),
                                desc="Ingesting shards", disable=not progress))
    else:
        results = [_ingest_shard(job) for job in tqdm(jobs, desc="Ingesting shards", disable=not progress)]

    stage_counts = Counter()
    frames = []
    for shard_frame, shard_counts in results:
        if not shard_frame.empty:
            frames.append(shard_frame)
        stage_counts.update(shard_counts)
    del results

    table = pd.concat(frames, ignore_index=True) if frames else _shard_frame([])
    del frames
    if not table.empty:
        table = (
            table.sort_values(["date", "tweet_id", "party"], kind="mergesort")
            .drop_duplicates(["tweet_id", "party"], keep="first")
            .reset_index(drop=True)
        )
    stage_counts["deduplicated_records"] = len(table)

    stats = corpus_stats(table)
    stats.rejected = stage_counts.get("rejected", 0)
    order = ["read", "parsed", "rejected", "language_kept", "window_kept",
             "matched_tweets", "party_records", "deduplicated_records"]
    stats.stage_counts = {key: int(stage_counts.get(key, 0)) for key in order}

    logger.info("Ingested %d party records from %d tweets", len(table), stats.total_tweets)
    return table[INGEST_COLUMNS], stats


def corpus_stats(table: pd.DataFrame) -> CorpusStats:
    """Tweet/user/geo counts over an ingested record table."""
    stats = CorpusStats()
    if table.empty:
        return stats

    tweets = table.drop_duplicates("tweet_id")
    geo = tweets[tweets["region"].notna()]
    stats.total_tweets = len(tweets)
    stats.unique_users = int(tweets["user_id"].nunique())
    stats.geo_tweets = len(geo)
    stats.geo_users = int(geo["user_id"].nunique())
    if "_any_geo" in tweets:
        stats.any_geo_tweets = int(tweets["_any_geo"].sum())
    if "_retweet" in tweets:
        stats.retweets = int(tweets["_retweet"].sum())
    stats.per_party = {k: int(v) for k, v in table["party"].value_counts().items()}

    months = month_keys(tweets["date"])
    for month, bucket in tweets.groupby(months.values, sort=True):
        bucket_geo = bucket[bucket["region"].notna()]
        stats.monthly[month] = {
            "tweets": len(bucket),
            "users": int(bucket["user_id"].nunique()),
            "geo_tweets": len(bucket_geo),
            "geo_users": int(bucket_geo["user_id"].nunique()),
        }
    return stats
