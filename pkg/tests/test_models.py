"""
Tests for Vote-Share Toolkit — Election Models
"""

from collections import defaultdict
from fractions import Fraction

import numpy as np
import pandas as pd
import pytest

from scripts.election_models import (
    AltBounds,
    allegiance_distribution,
    alt_classify,
    model_alt,
    model_at,
    model_au,
    model_vt,
    model_vu,
    prepare_records,
    read_records,
    run_model,
    user_mean_allegiance,
    validate_records,
    write_records,
)
from scripts.errors import InputError, UndefinedEstimateError
from scripts.parties import PARTY_COALITION


# =============================================================================
# Brute-force oracles (exact rational arithmetic)
# =============================================================================

def _rows(table, geo_only=False):
    for row in table.itertuples(index=False):
        if geo_only and not isinstance(row.region, str):
            continue
        yield row.user_id, PARTY_COALITION[row.party], Fraction(float(row.allegiance))


def _user_means(table, geo_only=False):
    sums = defaultdict(lambda: [Fraction(0), Fraction(0)])
    counts = defaultdict(lambda: [0, 0])
    for user, y, a in _rows(table, geo_only):
        sums[user][y] += a
        counts[user][y] += 1
    return {
        user: tuple(sums[user][y] / counts[user][y] if counts[user][y] else None for y in (0, 1))
        for user in counts
    }


def oracle_vt(table, geo_only=False):
    votes = [0, 0]
    for _, y, _ in _rows(table, geo_only):
        votes[y] += 1
    return Fraction(votes[0], sum(votes)) if sum(votes) else None


def oracle_vu(table, geo_only=False):
    counts = defaultdict(lambda: [0, 0])
    for user, y, _ in _rows(table, geo_only):
        counts[user][y] += 1
    ruling = sum(1 for n0, n1 in counts.values() if n0 > n1)
    opposition = sum(1 for n0, n1 in counts.values() if n1 > n0)
    return Fraction(ruling, ruling + opposition) if ruling + opposition else None


def oracle_at(table, geo_only=False):
    sums = [Fraction(0), Fraction(0)]
    for _, y, a in _rows(table, geo_only):
        sums[y] += a
    return sums[0] / (sums[0] + sums[1]) if sum(sums) else None


def oracle_au(table, geo_only=False):
    totals = [Fraction(0), Fraction(0)]
    for means in _user_means(table, geo_only).values():
        for y in (0, 1):
            if means[y] is not None:
                totals[y] += means[y]
    return totals[0] / (totals[0] + totals[1]) if sum(totals) else None


def oracle_alt(table, x_low=0.6, x_upp=1.0):
    ruling = opposition = 0
    for m0, m1 in _user_means(table).values():
        m0 = None if m0 is None else float(m0)
        m1 = None if m1 is None else float(m1)
        in0 = m0 is not None and x_low <= m0 <= x_upp
        in1 = m1 is not None and x_low <= m1 <= x_upp
        if in0 and (m1 is None or m1 < x_low):
            ruling += 1
        elif in1 and (m0 is None or m0 < x_low):
            opposition += 1
    return Fraction(ruling, ruling + opposition) if ruling + opposition else None


def _outcome(model_id, table, bounds=None):
    try:
        return run_model(model_id, table, bounds)
    except UndefinedEstimateError:
        return "undefined"


ORACLES = {
    "CVT": (oracle_vt, False), "GVT": (oracle_vt, True),
    "CVU": (oracle_vu, False), "GVU": (oracle_vu, True),
    "CAT": (oracle_at, False), "GAT": (oracle_at, True),
    "CAU": (oracle_au, False), "GAU": (oracle_au, True),
}


# =============================================================================
# Worked examples
# =============================================================================

class TestVolumetricModels:
    def test_tweet_count_ratio(self, make_records):
        table = make_records([("a", "MORENA", 0.5), ("b", "PT", 0.5), ("c", "PVEM", 0.5), ("d", "PAN", 0.5)])
        assert model_vt(table).ruling_share == 0.75

    def test_all_ruling(self, make_records):
        table = make_records([("a", "MORENA", 0.5), ("b", "PT", 0.5)])
        assert model_vt(table).ruling_share == 1.0

    def test_users_neutralize_volume(self, make_records):
        rows = [("heavy", "MORENA", 0.5)] * 100 + [("x", "PAN", 0.5), ("y", "PRI", 0.5), ("z", "MC", 0.5)]
        estimate = model_vu(make_records(rows))
        assert estimate.ruling_share == 0.25
        assert (estimate.ruling_voters, estimate.opposition_voters) == (1, 3)

    def test_tied_user_excluded(self, make_records):
        rows = [("tied", "MORENA", 0.5), ("tied", "PT", 0.5), ("tied", "PAN", 0.5), ("tied", "PRI", 0.5),
                ("fan", "MORENA", 0.5)]
        estimate = model_vu(make_records(rows))
        assert estimate.ruling_share == 1.0
        assert estimate.n_users == 1

    def test_no_records_in_scope(self, make_records):
        table = make_records([("a", "MORENA", 0.5)])
        with pytest.raises(UndefinedEstimateError):
            model_vt(table, scope="geo")


class TestAllegianceModels:
    def test_summed_scores(self, make_records):
        table = make_records([("a", "MORENA", 1.0), ("b", "PT", 1.0), ("c", "PAN", 1.0)])
        assert model_at(table).ruling_share == pytest.approx(2 / 3, abs=1e-15)

    def test_all_zero_scores_undefined(self, make_records):
        table = make_records([("a", "MORENA", 0.0), ("b", "PAN", 0.0)])
        with pytest.raises(UndefinedEstimateError):
            model_at(table)

    def test_user_averages(self, make_records):
        table = make_records([("a", "MORENA", 0.8), ("b", "PT", 0.6), ("c", "PAN", 0.7)])
        assert model_au(table).ruling_share == pytest.approx(2 / 3, abs=1e-12)

    def test_symmetric_user(self, make_records):
        table = make_records([("a", "MORENA", 0.5), ("a", "PAN", 0.5)])
        assert model_au(table).ruling_share == 0.5

    def test_user_average_weights_users_not_tweets(self, make_records):
        rows = [("loud", "MORENA", 0.9)] * 10 + [("quiet", "PAN", 0.9)]
        assert model_au(make_records(rows)).ruling_share == pytest.approx(0.5)
        assert model_at(make_records(rows)).ruling_share == pytest.approx(10 / 11)

    def test_unscored_records_rejected(self, make_records):
        table = make_records([("a", "MORENA", None), ("b", "PAN", 0.4)])
        with pytest.raises(InputError):
            model_at(table)
        # volume models do not need scores
        assert model_vt(table).ruling_share == 0.5


class TestAltModel:
    def test_positive_single_coalition_user_votes(self, make_records):
        table = make_records([("a", "MORENA", 0.7), ("b", "PAN", 0.9), ("b", "PAN", 0.7)])
        estimate = model_alt(table)
        assert (estimate.ruling_voters, estimate.opposition_voters) == (1, 1)
        assert estimate.ruling_share == 0.5

    def test_positive_toward_both_excluded(self, make_records):
        table = make_records([("a", "MORENA", 0.8), ("a", "PAN", 0.9)])
        with pytest.raises(UndefinedEstimateError):
            model_alt(table)

    def test_negative_toward_other_side_still_votes(self, make_records):
        table = make_records([("a", "MORENA", 0.8), ("a", "PAN", 0.1)])
        estimate = model_alt(table)
        assert estimate.ruling_voters == 1
        assert estimate.opposition_voters == 0

    def test_upper_bound_cuts_extremes(self, make_records):
        table = make_records([("a", "MORENA", 0.98), ("b", "PAN", 0.7)])
        assert model_alt(table, AltBounds(0.6, 0.95)).ruling_share == 0.0

    def test_classified_sets_disjoint(self, corpus_factory):
        for seed in range(20):
            prep = prepare_records(corpus_factory(seed))
            means = user_mean_allegiance(prep)
            m0 = np.array([np.nan if u.mean_ruling is None else u.mean_ruling for u in means])
            m1 = np.array([np.nan if u.mean_opposition is None else u.mean_opposition for u in means])
            ruling, opposition = alt_classify(m0, m1, AltBounds(0.3, 1.0))
            assert not (ruling & opposition).any()

    def test_volume_monotone_in_upper_bound(self, corpus_factory):
        for seed in range(20):
            table = corpus_factory(seed)
            volumes = []
            for x_upp in (0.6, 0.7, 0.8, 0.9, 1.0):
                try:
                    volumes.append(model_alt(table, AltBounds(0.5, x_upp)).n_users)
                except UndefinedEstimateError:
                    volumes.append(0)
            assert volumes == sorted(volumes)

    def test_volume_monotone_in_lower_bound_for_one_sided_users(self, make_records):
        rows = [(f"r{i}", "MORENA", a) for i, a in enumerate((0.15, 0.35, 0.55, 0.75, 0.95))]
        rows += [(f"o{i}", "PAN", a) for i, a in enumerate((0.25, 0.45, 0.65))]
        table = make_records(rows)
        volumes = [model_alt(table, AltBounds(x_low, 1.0)).n_users for x_low in (0.7, 0.5, 0.3, 0.1)]
        assert volumes == sorted(volumes)
        assert volumes[-1] == 8

    def test_invalid_bounds(self):
        with pytest.raises(ValueError):
            AltBounds(0.7, 0.6)
        with pytest.raises(ValueError):
            AltBounds(-0.1, 0.5)


# =============================================================================
# Oracles and invariants
# =============================================================================

class TestOracleAgreement:
    @pytest.mark.parametrize("model_id", sorted(ORACLES))
    def test_random_corpora(self, corpus_factory, model_id):
        oracle, geo_only = ORACLES[model_id]
        for seed in range(100):
            table = corpus_factory(seed)
            expected = oracle(table, geo_only)
            if expected is None:
                with pytest.raises(UndefinedEstimateError):
                    run_model(model_id, table)
                continue
            share = run_model(model_id, table).ruling_share
            if model_id.endswith("AU"):
                assert share == pytest.approx(float(expected), abs=1e-12)
            else:
                assert share == float(expected)

    def test_alt_random_corpora(self, corpus_factory):
        for seed in range(100):
            table = corpus_factory(seed)
            for x_low in (0.3, 0.5, 0.6):
                expected = oracle_alt(table, x_low, 1.0)
                if expected is None:
                    with pytest.raises(UndefinedEstimateError):
                        model_alt(table, AltBounds(x_low, 1.0))
                else:
                    assert model_alt(table, AltBounds(x_low, 1.0)).ruling_share == float(expected)


class TestInvariants:
    @pytest.mark.parametrize("model_id", ["CVT", "CVU", "CAT", "CAU", "GVU", "ALT"])
    def test_shares_sum_to_one(self, corpus_factory, model_id):
        for seed in range(10):
            estimate = _outcome(model_id, corpus_factory(seed, n_records=100), AltBounds(0.4, 1.0))
            if estimate != "undefined":
                assert estimate.ruling_share + estimate.opposition_share == 1.0

    @pytest.mark.parametrize("model_id", ["CVT", "CVU", "CAT", "CAU", "GAT", "ALT"])
    def test_permutation_invariance(self, corpus_factory, model_id):
        bounds = AltBounds(0.4, 1.0)
        for seed in range(10):
            table = corpus_factory(seed, n_records=100)
            shuffled = table.sample(frac=1.0, random_state=seed).reset_index(drop=True)
            assert _outcome(model_id, table, bounds) == _outcome(model_id, shuffled, bounds)

    @pytest.mark.parametrize("model_id", ["CVT", "CAT"])
    def test_duplication_invariance(self, corpus_factory, model_id):
        table = corpus_factory(5)
        tripled = pd.concat([table] * 3, ignore_index=True)
        tripled["tweet_id"] = [f"d{i:05d}" for i in range(len(tripled))]
        assert run_model(model_id, tripled).ruling_share == pytest.approx(run_model(model_id, table).ruling_share)

    def test_weights_match_replicated_records(self, corpus_factory):
        table = corpus_factory(9)
        prep = prepare_records(table)
        weights = np.arange(prep.n_records) % 3
        replicated = prep.table.loc[prep.table.index.repeat(weights)].reset_index(drop=True)
        replicated["tweet_id"] = [f"w{i:05d}" for i in range(len(replicated))]
        for model_id in ("CVT", "CVU", "CAT", "CAU"):
            assert run_model(model_id, prep, weights=weights).ruling_share == pytest.approx(
                run_model(model_id, replicated).ruling_share, abs=1e-12)

    def test_geo_equals_complete_when_all_geolocated(self, corpus_factory):
        table = corpus_factory(4)
        table["region"] = "JC"
        table["country"] = "MX"
        for kind in ("VT", "VU", "AT", "AU"):
            assert run_model(f"G{kind}", table).ruling_share == run_model(f"C{kind}", table).ruling_share

    def test_unknown_model(self, make_records):
        with pytest.raises(ValueError):
            run_model("XYZ", make_records([("a", "MORENA", 0.5)]))


class TestUserMeanAllegiance:
    def test_mean_per_coalition(self, make_records):
        means = user_mean_allegiance(make_records([("a", "MORENA", 0.2), ("a", "PT", 0.4)]))
        assert len(means) == 1
        assert means[0].mean_ruling == pytest.approx(0.3)
        assert means[0].mean_opposition is None
        assert (means[0].n_ruling, means[0].n_opposition) == (2, 0)

    def test_no_records(self, make_records):
        assert user_mean_allegiance(make_records([])) == []

    def test_matches_two_pass_oracle(self, corpus_factory):
        for seed in range(10):
            table = corpus_factory(seed)
            expected = _user_means(table)
            for user in user_mean_allegiance(table):
                m0, m1 = expected[user.user_id]
                assert user.mean_ruling == (None if m0 is None else pytest.approx(float(m0), abs=1e-12))
                assert user.mean_opposition == (None if m1 is None else pytest.approx(float(m1), abs=1e-12))

    def test_ordered_by_user(self, make_records):
        means = user_mean_allegiance(make_records([("b", "PAN", 0.1), ("a", "PAN", 0.2)]))
        assert [m.user_id for m in means] == ["a", "b"]


class TestRecordTables:
    def test_missing_column(self, make_records):
        with pytest.raises(InputError, match="missing columns"):
            validate_records(make_records([("a", "MORENA", 0.5)]).drop(columns=["coalition"]))

    def test_coalition_mismatch(self, make_records):
        table = make_records([("a", "MORENA", 0.5)])
        table["coalition"] = 1
        with pytest.raises(InputError, match="disagree"):
            validate_records(table)

    def test_allegiance_out_of_range(self, make_records):
        with pytest.raises(InputError):
            validate_records(make_records([("a", "MORENA", 1.5)]))

    def test_region_must_be_state_code(self, make_records):
        with pytest.raises(InputError):
            validate_records(make_records([("a", "MORENA", 0.5, "Jalisco")]))

    def test_require_scores(self, make_records):
        with pytest.raises(InputError):
            validate_records(make_records([("a", "MORENA", None)]), require_scores=True)

    def test_csv_round_trip_keeps_estimates(self, corpus_factory, tmp_path):
        table = corpus_factory(2)
        path = tmp_path / "records.csv"
        write_records(table, path)
        loaded = read_records(path)
        assert loaded["region"].isna().sum() == table["region"].isna().sum()
        bounds = AltBounds(0.3, 1.0)
        for model_id in ("CVT", "GVU", "CAU", "ALT"):
            assert _outcome(model_id, loaded, bounds) == _outcome(model_id, table, bounds)

    def test_empty_csv(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("", encoding="utf-8")
        assert read_records(path).empty


class TestAllegianceDistribution:
    @pytest.fixture
    def table(self, make_records):
        return make_records([
            ("a", "MORENA", 0.95, "JC"), ("a", "MORENA", 0.75), ("a", "PAN", 0.05),
            ("b", "PAN", 0.15, "NL"), ("b", "PAN", 0.45), ("c", "MORENA", 0.25),
        ])

    def test_subsets_per_coalition(self, table):
        rows = {(d.coalition, d.subset): d for d in allegiance_distribution(table, month="2021-05")}
        assert list(rows) == [
            ("ruling", "complete"), ("ruling", "geo"), ("ruling", "user_mean"),
            ("opposition", "complete"), ("opposition", "geo"), ("opposition", "user_mean"),
        ]
        assert {key: d.n for key, d in rows.items()} == {
            ("ruling", "complete"): 3, ("ruling", "geo"): 1, ("ruling", "user_mean"): 2,
            ("opposition", "complete"): 3, ("opposition", "geo"): 1, ("opposition", "user_mean"): 2,
        }
        assert all(d.month == "2021-05" for d in rows.values())

    def test_quantiles_and_histogram(self, table):
        rows = {(d.coalition, d.subset): d for d in allegiance_distribution(table)}
        ruling = rows["ruling", "complete"]
        assert (ruling.q1, ruling.median, ruling.q3) == pytest.approx((0.5, 0.75, 0.85))
        assert ruling.mean == pytest.approx(0.65)
        assert [i for i, c in enumerate(ruling.histogram) if c] == [2, 7, 9]
        assert ruling.below_half == pytest.approx(1 / 3)

        assert rows["ruling", "user_mean"].mean == pytest.approx((0.85 + 0.25) / 2)
        assert rows["opposition", "user_mean"].median == pytest.approx((0.05 + 0.3) / 2)
        assert rows["opposition", "complete"].below_half == 1.0
        assert all(sum(d.histogram) == d.n for d in rows.values())

    def test_empty_geo_subset(self, make_records):
        rows = allegiance_distribution(make_records([("a", "MORENA", 0.9), ("b", "PAN", 0.6)]))
        geo = [d for d in rows if d.subset == "geo"]
        assert all(d.n == 0 and d.median is None and d.below_half is None for d in geo)
        assert all(sum(d.histogram) == 0 and len(d.histogram) == 10 for d in geo)

    def test_needs_scores(self, make_records):
        with pytest.raises(InputError):
            allegiance_distribution(make_records([("a", "MORENA", None)]))

    def test_even_bins(self, table):
        with pytest.raises(ValueError):
            allegiance_distribution(table, bins=5)
        assert len(allegiance_distribution(table, bins=4)[0].histogram) == 4
