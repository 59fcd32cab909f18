"""
Preference ratio, bias disparity and the user-sampling designs.

Preference ratio of a user group G on an artist category C is a ratio of
sums over a 0/1 selection matrix::

    PR(G, C) = sum_{u in G} sum_{i in C} S[u, i] / sum_{u in G} sum_i S[u, i]

and bias disparity is the relative change of PR from the input matrix to the
recommendation matrix, ``(PR_out - PR_in) / PR_in``.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sps

from .corpus import FilteredCorpus, GenderLabel
from .interactions import InteractionMatrix
from .rng import derive_rng

_log = logging.getLogger(__name__)


class UserGroup(str, enum.Enum):
    MALE_USERS = "male_users"
    FEMALE_USERS = "female_users"


class ItemCategory(str, enum.Enum):
    MALE_ARTISTS = "male_artists"
    FEMALE_ARTISTS = "female_artists"


_GROUP_OF = {GenderLabel.MALE: UserGroup.MALE_USERS, GenderLabel.FEMALE: UserGroup.FEMALE_USERS}
_CATEGORY_OF = {GenderLabel.MALE: ItemCategory.MALE_ARTISTS, GenderLabel.FEMALE: ItemCategory.FEMALE_ARTISTS}


class UndefinedDisparity(ValueError):
    """Input preference ratio is zero, so bias disparity has no value."""


class SamplingError(Exception):
    pass


@dataclass(frozen=True, eq=False)
class GroupAssignment:
    """Group of every user row and category of every artist column."""

    user_groups: np.ndarray
    item_categories: np.ndarray

    def users_in(self, group: UserGroup) -> np.ndarray:
        return np.flatnonzero(self.user_groups == group.value)

    def items_in(self, category: ItemCategory) -> np.ndarray:
        return np.flatnonzero(self.item_categories == category.value)


def assign_groups(matrix: InteractionMatrix, corpus: FilteredCorpus) -> GroupAssignment:
    users = np.array([_GROUP_OF[corpus.user_profiles[u].gender].value for u in matrix.user_ids])
    items = np.array([_CATEGORY_OF[corpus.artist_genders[a]].value for a in matrix.artist_ids])
    return GroupAssignment(users, items)


def recommendation_matrix(reclists: Mapping[int, Iterable[int]], shape) -> sps.csr_matrix:
    """0/1 matrix with one entry per recommendation slot."""
    rows, cols = [], []
    for u, items in reclists.items():
        items = list(items)
        rows.extend([u] * len(items))
        cols.extend(int(i) for i in items)
    data = np.ones(len(rows))
    m = sps.csr_matrix((data, (rows, cols)), shape=shape)
    m.data[:] = 1.0
    return m


def _as_selection(selection, shape=None, weighted=False) -> sps.csr_matrix:
    if isinstance(selection, InteractionMatrix):
        s = selection.ratings.copy()
        if not weighted:
            s.data = np.ones_like(s.data)
        return s
    if isinstance(selection, Mapping):
        if shape is None:
            raise ValueError("shape is required to build a matrix from recommendation lists")
        return recommendation_matrix(selection, shape)
    return sps.csr_matrix(selection)


def _group_counts(sel: sps.csr_matrix, group_users: np.ndarray, category_items: np.ndarray):
    rows = sel[group_users]
    total = float(rows.sum())
    in_cat = float(rows[:, category_items].sum())
    return in_cat, total


def preference_ratio(selection, group: UserGroup, category: ItemCategory, assignment: GroupAssignment,
                     users: Sequence[int] | None = None, weighted: bool = False) -> float:
    """
    PR of ``group`` on ``category``.

    ``selection`` may be an :class:`InteractionMatrix` (binarised unless
    ``weighted``), a sparse/dense 0/1 matrix, or a mapping of user index to
    recommended artist indices.  ``users`` restricts the group to a subset.
    """
    shape = (len(assignment.user_groups), len(assignment.item_categories))
    sel = _as_selection(selection, shape, weighted)
    members = assignment.users_in(group)
    if users is not None:
        members = np.intersect1d(members, np.asarray(list(users), dtype=np.int64))
    if members.size == 0:
        raise ValueError(f"group {group.value} has no members")
    num, den = _group_counts(sel, members, assignment.items_in(category))
    if den <= 0:
        raise ValueError(f"group {group.value} has no selected items")
    return num / den


def bias_disparity(pr_input: float, pr_output: float) -> float:
    if pr_input <= 0:
        raise UndefinedDisparity("input preference ratio is zero")
    return (pr_output - pr_input) / pr_input


@dataclass(frozen=True)
class BiasCell:
    group: UserGroup
    category: ItemCategory
    pr_input: float | None
    pr_output: float | None
    bias_disparity: float | None
    reason: str = ""


def audit_cells(input_selection, reclists: Mapping[int, Iterable[int]], assignment: GroupAssignment,
                users: Sequence[int] | None = None, weighted: bool = False) -> list[BiasCell]:
    """
    The 2 x 2 grid of (user group, artist category) cells.

    Input PR is computed over the same users that received recommendations.
    """
    shape = (len(assignment.user_groups), len(assignment.item_categories))
    users = sorted(reclists) if users is None else list(users)
    out_sel = recommendation_matrix({u: reclists[u] for u in users if u in reclists}, shape)
    cells = []
    for g in UserGroup:
        for c in ItemCategory:
            try:
                pr_in = preference_ratio(input_selection, g, c, assignment, users, weighted)
            except ValueError as e:
                cells.append(BiasCell(g, c, None, None, None, f"no input: {e}"))
                continue
            try:
                pr_out = preference_ratio(out_sel, g, c, assignment, users)
            except ValueError as e:
                cells.append(BiasCell(g, c, pr_in, None, None, f"no output: {e}"))
                continue
            try:
                bd = bias_disparity(pr_in, pr_out)
                reason = ""
            except UndefinedDisparity:
                bd, reason = None, "pr_input=0"
            cells.append(BiasCell(g, c, pr_in, pr_out, bd, reason))
    return cells


@dataclass(frozen=True)
class UserPreference:
    user: int
    pr_male: float
    pr_female: float

    def toward(self, category: ItemCategory) -> float:
        return self.pr_male if category == ItemCategory.MALE_ARTISTS else self.pr_female


def per_user_preference_ratio(selection, assignment: GroupAssignment,
                              weighted: bool = False) -> tuple[dict[int, UserPreference], int]:
    """
    PR of every single user toward male and female artists.

    Returns the mapping and the number of users excluded for having no
    entries.
    """
    sel = _as_selection(selection, weighted=weighted)
    female = (assignment.item_categories == ItemCategory.FEMALE_ARTISTS.value).astype(np.float64)
    total = np.asarray(sel.sum(axis=1)).ravel()
    fem = sel @ female
    out = {}
    excluded = 0
    for u in range(sel.shape[0]):
        if total[u] <= 0:
            excluded += 1
            continue
        out[u] = UserPreference(u, float((total[u] - fem[u]) / total[u]), float(fem[u] / total[u]))
    return out, excluded


def cumulative_distribution(values: Iterable[float]) -> tuple[np.ndarray, np.ndarray]:
    """Sorted values and the fraction of users at or below each one."""
    v = np.sort(np.asarray(list(values), dtype=np.float64))
    return v, np.arange(1, v.size + 1) / max(v.size, 1)


def write_pr_distribution(path, matrix: InteractionMatrix, assignment: GroupAssignment,
                          prefs: Mapping[int, UserPreference]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("user_id\tgender\tpr_male\tpr_female\n")
        for u in sorted(prefs):
            p = prefs[u]
            gender = "male" if assignment.user_groups[u] == UserGroup.MALE_USERS.value else "female"
            f.write(f"{matrix.user_ids[u]}\t{gender}\t{p.pr_male!r}\t{p.pr_female!r}\n")


class SamplingDesign(str, enum.Enum):
    WHOLE_POPULATION = "whole"
    EXTREME_PREFERENCE = "extreme"


@dataclass(frozen=True)
class SamplingPlan:
    design: SamplingDesign = SamplingDesign.WHOLE_POPULATION
    sample_fraction: float = 0.30
    extreme_category: ItemCategory = ItemCategory.FEMALE_ARTISTS
    extreme_threshold: float = 0.6
    preserve_gender_proportions: bool = True
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "design", SamplingDesign(self.design))
        object.__setattr__(self, "extreme_category", ItemCategory(self.extreme_category))
        if not 0 < self.sample_fraction <= 1:
            raise ValueError("sample_fraction must lie in (0, 1]")
        if not 0 < self.extreme_threshold < 1:
            raise ValueError("extreme_threshold must lie in (0, 1)")


def round_half_up(x: float) -> int:
    # tolerate products like 0.3 * 75 landing just below .5
    return int(math.floor(x + 0.5 + 1e-9))


def sample_users(user_groups: Mapping[str, UserGroup], prefs: Mapping[str, UserPreference],
                 plan: SamplingPlan) -> list[str]:
    """
    Select the experiment population.

    ``user_groups`` maps user id to group; ``prefs`` maps user id to input
    PR.  The whole-population design draws ``sample_fraction`` of users at
    random (per gender stratum when proportions are preserved).  The
    extreme-preference design keeps users whose PR toward
    ``extreme_category`` exceeds the threshold and, for fractions below one,
    the top fraction of each group by maximum PR.
    """
    if plan.preserve_gender_proportions:
        strata = {g: sorted(u for u, gg in user_groups.items() if UserGroup(gg) == g) for g in UserGroup}
    else:
        strata = {"all": sorted(user_groups)}

    chosen: list[str] = []
    if plan.design == SamplingDesign.WHOLE_POPULATION:
        for key, members in strata.items():
            k = round_half_up(plan.sample_fraction * len(members))
            if k >= len(members):
                chosen.extend(members)
                continue
            label = key.value if isinstance(key, UserGroup) else key
            rng = derive_rng(plan.seed, "sample", label)
            idx = rng.choice(len(members), size=k, replace=False)
            chosen.extend(members[i] for i in idx)
        return sorted(chosen)

    for key, members in strata.items():
        pool = [u for u in members if u in prefs and prefs[u].toward(plan.extreme_category) > plan.extreme_threshold]
        if plan.sample_fraction < 1:
            pool.sort(key=lambda u: (-max(prefs[u].pr_male, prefs[u].pr_female), u))
            pool = pool[:round_half_up(plan.sample_fraction * len(pool))]
        chosen.extend(pool)
    if not chosen:
        raise SamplingError(
            f"no user has PR toward {plan.extreme_category.value} > {plan.extreme_threshold}"
        )
    return sorted(chosen)
