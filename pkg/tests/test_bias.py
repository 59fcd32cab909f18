from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from artistbias.bias import (
    ItemCategory, SamplingDesign, SamplingError, SamplingPlan, UndefinedDisparity, UserGroup,
    UserPreference, assign_groups, audit_cells, bias_disparity, cumulative_distribution,
    per_user_preference_ratio, preference_ratio, round_half_up, sample_users, write_pr_distribution,
)
from artistbias.interactions import build_matrix
from conftest import F, M, corpora, make_corpus

MU, FU = UserGroup.MALE_USERS, UserGroup.FEMALE_USERS
MA, FA = ItemCategory.MALE_ARTISTS, ItemCategory.FEMALE_ARTISTS


def _two_users():
    plays = {"u1": {"m1": 1, "m2": 1, "m3": 1, "f1": 1}, "u2": {"m1": 1, "m2": 1, "f1": 1, "f2": 1}}
    ag = {"m1": M, "m2": M, "m3": M, "f1": F, "f2": F}
    corpus = make_corpus(plays, {"u1": M, "u2": M}, ag)
    m = build_matrix(corpus)
    return m, assign_groups(m, corpus)


def test_pr_ratio_of_sums_example():
    m, a = _two_users()
    assert preference_ratio(m, MU, MA, a) == pytest.approx(5 / 8)
    assert preference_ratio(m, MU, FA, a) == pytest.approx(3 / 8)


def test_pr_errors_for_empty_group():
    m, a = _two_users()
    with pytest.raises(ValueError):
        preference_ratio(m, FU, MA, a)


def test_bd_spot_value():
    assert abs(bias_disparity(0.8, 0.9) - 0.125) < 1e-9
    with pytest.raises(UndefinedDisparity):
        bias_disparity(0.0, 0.5)


def test_per_user_pr_example():
    plays = {"u": {"m1": 3, "m2": 1, "m3": 9, "m4": 2, "f1": 1}}
    ag = {"m1": M, "m2": M, "m3": M, "m4": M, "f1": F}
    corpus = make_corpus(plays, {"u": F}, ag)
    m = build_matrix(corpus)
    prefs, excluded = per_user_preference_ratio(m, assign_groups(m, corpus))
    assert excluded == 0
    assert (prefs[0].pr_male, prefs[0].pr_female) == (pytest.approx(0.8), pytest.approx(0.2))


def test_weighted_pr_uses_ratings():
    plays = {"u": {"m": 1, "f": 7}}
    corpus = make_corpus(plays, {"u": M}, {"m": M, "f": F})
    m = build_matrix(corpus)
    a = assign_groups(m, corpus)
    assert preference_ratio(m, MU, FA, a) == 0.5
    assert preference_ratio(m, MU, FA, a, weighted=True) == pytest.approx(3 / 4)


def _id_sets(m, a):
    group = {g: {m.user_ids[u] for u in a.users_in(g)} for g in UserGroup}
    cats = {c: {m.artist_ids[i] for i in a.items_in(c)} for c in ItemCategory}
    return group, cats


@given(corpora())
def test_pr_partition_and_oracle(corpus):
    m = build_matrix(corpus)
    a = assign_groups(m, corpus)
    groups, cats = _id_sets(m, a)
    selected = {r.user_id: set() for r in corpus.records}
    for r in corpus.records:
        selected[r.user_id].add(r.artist_id)
    for g in UserGroup:
        if not groups[g]:
            continue
        prs = [preference_ratio(m, g, c, a) for c in ItemCategory]
        assert sum(prs) == pytest.approx(1.0, abs=1e-12)
        for c, pr in zip(ItemCategory, prs):
            assert pr == pytest.approx(oracles.preference_ratio(selected, groups[g], cats[c]), abs=1e-12)


@st.composite
def audit_case(draw):
    corpus = draw(corpora())
    m = build_matrix(corpus)
    rng = np.random.default_rng(draw(st.integers(0, 2**32 - 1)))
    lists = {}
    for u in range(m.n_users):
        k = int(rng.integers(1, min(5, m.n_artists) + 1))
        lists[u] = tuple(int(i) for i in rng.choice(m.n_artists, size=k, replace=False))
    return corpus, m, lists


@given(audit_case())
def test_bd_lower_bound_and_oracle(case):
    corpus, m, lists = case
    a = assign_groups(m, corpus)
    groups, cats = _id_sets(m, a)
    rec_sets = {m.user_ids[u]: {m.artist_ids[i] for i in items} for u, items in lists.items()}
    inp = {r.user_id: set() for r in corpus.records}
    for r in corpus.records:
        inp[r.user_id].add(r.artist_id)
    for cell in audit_cells(m, lists, a):
        if not groups[cell.group]:
            assert cell.bias_disparity is None and cell.reason
            continue
        pr_in = oracles.preference_ratio(inp, groups[cell.group], cats[cell.category])
        pr_out = oracles.preference_ratio(rec_sets, groups[cell.group], cats[cell.category])
        assert cell.pr_input == pytest.approx(pr_in, abs=1e-12)
        assert cell.pr_output == pytest.approx(pr_out, abs=1e-12)
        if pr_in == 0:
            assert cell.bias_disparity is None and cell.reason == "pr_input=0"
            continue
        assert cell.bias_disparity == pytest.approx(oracles.bias_disparity(pr_in, pr_out), abs=1e-9)
        assert cell.bias_disparity >= -1.0
        assert (cell.bias_disparity == -1.0) == (pr_out == 0)


@given(corpora())
def test_proportional_recommendations_have_zero_bd(corpus):
    m = build_matrix(corpus)
    a = assign_groups(m, corpus)
    lists = {u: tuple(m.user_items(u).tolist()) for u in range(m.n_users)}
    for cell in audit_cells(m, lists, a):
        if cell.bias_disparity is not None:
            assert abs(cell.bias_disparity) <= 1e-12


def test_cells_restricted_to_recommended_users():
    plays = {"a": {"m": 1}, "b": {"f": 1}}
    corpus = make_corpus(plays, {"a": M, "b": M}, {"m": M, "f": F})
    m = build_matrix(corpus)
    cells = audit_cells(m, {0: (0,)}, assign_groups(m, corpus))
    cell = next(c for c in cells if c.group is MU and c.category is FA)
    # only user "a" got a list, and "a" never listened to a female artist
    assert cell.pr_input == 0.0 and cell.reason == "pr_input=0"


def test_cumulative_distribution():
    v, frac = cumulative_distribution([0.5, 0.1, 0.9, 0.1])
    assert v.tolist() == [0.1, 0.1, 0.5, 0.9]
    assert frac.tolist() == [0.25, 0.5, 0.75, 1.0]


def test_write_pr_distribution(tmp_path, small_corpus, small_matrix):
    a = assign_groups(small_matrix, small_corpus)
    prefs, _ = per_user_preference_ratio(small_matrix, a)
    write_pr_distribution(tmp_path / "pr.tsv", small_matrix, a, prefs)
    lines = (tmp_path / "pr.tsv").read_text().splitlines()
    assert lines[0] == "user_id\tgender\tpr_male\tpr_female"
    assert lines[1] == "u1\tmale\t0.75\t0.25"
    assert len(lines) == 4


def test_round_half_up():
    assert [round_half_up(x) for x in (22.5, 7.5, 0.3 * 75, 2.4999)] == [23, 8, 23, 2]


def _population(n_male, n_female):
    groups = {f"m{i:03d}": MU for i in range(n_male)} | {f"f{i:03d}": FU for i in range(n_female)}
    prefs = {
        u: UserPreference(0, 1 - ((i * 37) % 100) / 100, ((i * 37) % 100) / 100)
        for i, u in enumerate(sorted(groups))
    }
    return groups, prefs


def test_stratified_sample_counts():
    groups, prefs = _population(75, 25)
    chosen = sample_users(groups, prefs, SamplingPlan(seed=4))
    assert sum(u.startswith("m") for u in chosen) == 23
    assert sum(u.startswith("f") for u in chosen) == 8
    assert chosen == sorted(chosen)


def test_unstratified_sample_size():
    groups, prefs = _population(75, 25)
    chosen = sample_users(groups, prefs, SamplingPlan(preserve_gender_proportions=False, seed=4))
    assert len(chosen) == 30


@given(st.integers(1, 60), st.integers(1, 60), st.floats(0.05, 1.0), st.integers(0, 2**31),
       st.sampled_from(list(SamplingDesign)))
def test_sampling_deterministic(n_m, n_f, frac, seed, design):
    groups, prefs = _population(n_m, n_f)
    plan = SamplingPlan(design=design, sample_fraction=frac, extreme_threshold=0.3, seed=seed)
    try:
        first = sample_users(groups, prefs, plan)
    except SamplingError:
        with pytest.raises(SamplingError):
            sample_users(dict(reversed(list(groups.items()))), prefs, plan)
        return
    assert sample_users(dict(reversed(list(groups.items()))), prefs, plan) == first
    assert len(set(first)) == len(first)


def test_extreme_design_threshold_and_top_fraction():
    groups, prefs = _population(40, 20)
    plan = SamplingPlan(design="extreme", sample_fraction=1.0, extreme_threshold=0.6)
    chosen = sample_users(groups, prefs, plan)
    assert chosen and all(prefs[u].pr_female > 0.6 for u in chosen)
    assert set(chosen) == {u for u in groups if prefs[u].pr_female > 0.6}
    half = sample_users(groups, prefs, SamplingPlan(design="extreme", sample_fraction=0.5, extreme_threshold=0.6))
    for g in ("m", "f"):
        pool = sorted((u for u in chosen if u.startswith(g)), key=lambda u: (-prefs[u].pr_female, u))
        assert [u for u in half if u.startswith(g)] == sorted(pool[:round_half_up(0.5 * len(pool))])


def test_extreme_design_without_candidates():
    groups = {"a": MU}
    prefs = {"a": UserPreference(0, 1.0, 0.0)}
    with pytest.raises(SamplingError):
        sample_users(groups, prefs, SamplingPlan(design="extreme"))


def test_sampling_plan_validation():
    with pytest.raises(ValueError):
        SamplingPlan(sample_fraction=0.0)
    with pytest.raises(ValueError):
        SamplingPlan(extreme_threshold=1.0)
