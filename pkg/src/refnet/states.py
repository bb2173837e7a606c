"""USPS state codes used throughout the toolkit."""

from __future__ import annotations

STATES_50 = (
    "AK", "AL", "AR", "AZ", "CA", "CO", "CT", "DE", "FL", "GA",
    "HI", "IA", "ID", "IL", "IN", "KS", "KY", "LA", "MA", "MD",
    "ME", "MI", "MN", "MO", "MS", "MT", "NC", "ND", "NE", "NH",
    "NJ", "NM", "NV", "NY", "OH", "OK", "OR", "PA", "RI", "SC",
    "SD", "TN", "TX", "UT", "VA", "VT", "WA", "WI", "WV", "WY",
)

TERRITORIES = ("AS", "DC", "GU", "MP", "PR", "VI")

# Sorted so that index order is lexicographic order (tie-breaks rely on this).
STATE_CODES = tuple(sorted(STATES_50 + TERRITORIES))
STATE_INDEX = {code: i for i, code in enumerate(STATE_CODES)}
N_STATES = len(STATE_CODES)
NO_STATE = -1


def state_index(code: str) -> int:
    try:
        return STATE_INDEX[code.strip().upper()]
    except KeyError:
        raise ValueError(f"unknown state code {code!r}") from None


def is_valid_state(code: str) -> bool:
    return code.strip().upper() in STATE_INDEX
