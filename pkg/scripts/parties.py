"""
Vote-Share Toolkit — Parties and Coalitions

The ten parties of the 2021 Mexican legislative election, grouped into the
ruling coalition (y = 0) and the opposition (y = 1).
"""

RULING = 0
OPPOSITION = 1

PARTY_COALITION = {
    "MORENA": RULING,
    "PT": RULING,
    "PVEM": RULING,
    "PAN": OPPOSITION,
    "PRI": OPPOSITION,
    "PRD": OPPOSITION,
    "MC": OPPOSITION,
    "PES": OPPOSITION,
    "FxM": OPPOSITION,
    "RSP": OPPOSITION,
}

PARTIES = tuple(PARTY_COALITION)

# Classifier training groups; one Naive Bayes model per group.
PARTY_GROUPS = {
    "MORENA+PT": ("MORENA", "PT"),
    "PVEM": ("PVEM",),
    "PAN": ("PAN",),
    "PRI": ("PRI",),
    "PRD": ("PRD",),
    "MC": ("MC",),
    "PES+FxM+RSP": ("PES", "FxM", "RSP"),
}

_PARTY_TO_GROUP = {party: group for group, members in PARTY_GROUPS.items() for party in members}
_CANONICAL = {party.upper(): party for party in PARTIES}


def canonical_party(code: str) -> str:
    """Return the canonical spelling of a party code (e.g. 'fxm' -> 'FxM')."""
    try:
        return _CANONICAL[code.strip().upper()]
    except KeyError:
        raise KeyError(f"Unknown party code: {code!r}") from None


def coalition_of(party: str) -> int:
    return PARTY_COALITION[canonical_party(party)]


def party_group(party: str) -> str:
    return _PARTY_TO_GROUP[canonical_party(party)]
