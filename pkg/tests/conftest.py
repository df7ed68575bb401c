"""
conftest.py — Add the project root to sys.path so that
`from scripts.X import Y` works in tests, and share small record-table builders.
"""
import os
import sys

import numpy as np
import pandas as pd
import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from scripts.parties import PARTIES, PARTY_COALITION  # noqa: E402


def build_records(rows, date="2021-05-10T12:00:00+00:00"):
    """
    rows: (user_id, party, allegiance[, region]) tuples.

    Each row becomes one record with its own tweet id.
    """
    table = []
    for i, row in enumerate(rows):
        user_id, party, allegiance = row[:3]
        region = row[3] if len(row) > 3 else None
        table.append({
            "tweet_id": f"t{i:05d}",
            "user_id": user_id,
            "region": region,
            "country": "MX" if region else None,
            "party": party,
            "allegiance": allegiance,
            "date": date,
            "coalition": PARTY_COALITION[party],
        })
    return pd.DataFrame(table, columns=[
        "tweet_id", "user_id", "region", "country", "party", "allegiance", "date", "coalition",
    ])


def random_records(seed, n_records=60, n_users=8, geo_states=("JC", "NL", "MX")):
    """Small random corpus; allegiances are multiples of 1/8 so sums stay exact in floating point."""
    rng = np.random.default_rng(seed)
    rows = []
    for _ in range(n_records):
        user = f"u{rng.integers(n_users)}"
        party = PARTIES[rng.integers(len(PARTIES))]
        allegiance = int(rng.integers(0, 9)) / 8
        region = geo_states[rng.integers(len(geo_states))] if rng.random() < 0.5 else None
        rows.append((user, party, allegiance, region))
    return build_records(rows)


@pytest.fixture
def make_records():
    return build_records


@pytest.fixture
def corpus_factory():
    return random_records
