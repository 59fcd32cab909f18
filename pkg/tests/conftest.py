from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from artistbias.corpus import FilterPolicy, GenderLabel, ListeningRecord, UserProfile, apply_filters
from artistbias.interactions import build_matrix

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile(
    "default", max_examples=100, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

NO_FILTER = FilterPolicy(0, 0, 1.0)

M, F = GenderLabel.MALE, GenderLabel.FEMALE


def make_corpus(plays, user_genders, artist_genders, policy=NO_FILTER):
    """``plays`` maps user id to {artist id: playcount}."""
    records = [ListeningRecord(u, a, n) for u, row in plays.items() for a, n in row.items()]
    profiles = {u: UserProfile(u, g) for u, g in user_genders.items()}
    return apply_filters(records, profiles, artist_genders, policy)


def random_corpus(rng: np.random.Generator, n_users, n_artists, density=0.5, max_plays=300):
    """Random binary-gender corpus in which every user and artist has at least one record."""
    users = [f"u{i:02d}" for i in range(n_users)]
    artists = [f"a{j:02d}" for j in range(n_artists)]
    mask = rng.random((n_users, n_artists)) < density
    for i in range(n_users):
        mask[i, rng.integers(n_artists)] = True
    for j in range(n_artists):
        if not mask[:, j].any():
            mask[rng.integers(n_users), j] = True
    plays = {
        users[i]: {artists[j]: int(rng.integers(1, max_plays)) for j in np.flatnonzero(mask[i])}
        for i in range(n_users)
    }
    ug = {u: (M if rng.random() < 0.6 else F) for u in users}
    ag = {a: (M if rng.random() < 0.6 else F) for a in artists}
    # both groups and both categories present
    ug[users[0]], ug[users[-1]] = M, F
    ag[artists[0]], ag[artists[-1]] = M, F
    return make_corpus(plays, ug, ag)


@st.composite
def corpora(draw, max_users=10, max_artists=15):
    n_users = draw(st.integers(2, max_users))
    n_artists = draw(st.integers(2, max_artists))
    seed = draw(st.integers(0, 2**32 - 1))
    density = draw(st.floats(0.2, 0.9))
    return random_corpus(np.random.default_rng(seed), n_users, n_artists, density)


@pytest.fixture
def small_corpus():
    plays = {
        "u1": {"a1": 10, "a2": 3, "a3": 1, "a4": 7},
        "u2": {"a1": 2, "a2": 1, "a5": 4, "a6": 9},
        "u3": {"a2": 5, "a3": 2, "a5": 1},
    }
    ug = {"u1": M, "u2": F, "u3": M}
    ag = {"a1": M, "a2": M, "a3": M, "a4": F, "a5": F, "a6": F}
    return make_corpus(plays, ug, ag)


@pytest.fixture
def small_matrix(small_corpus):
    return build_matrix(small_corpus)


_ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record_criterion(number: int, ok: bool, detail: str = "") -> None:
    prev = _ACCEPTANCE.get(number)
    if prev is not None:
        ok = ok and prev[0]
        detail = "; ".join(d for d in (prev[1], detail) if d)
    _ACCEPTANCE[number] = (ok, detail)
    print(f"criterion {number}: {'PASS' if ok else 'FAIL'} {detail}")


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        ok, detail = _ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
