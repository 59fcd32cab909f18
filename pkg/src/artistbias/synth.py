"""
Synthetic listening corpora in LFM-360k layout.

Users pick artists from two gender categories.  The number of female-artist
picks per user follows a Beta-distributed preference whose group mean is
calibrated to a target preference ratio.  Inside a category, picks are
weighted by a log-normal artist popularity and by a latent genre affinity,
and playcounts grow with item appeal, genre affinity and the user's
preference for the artist's category.  The output is deterministic in the
seed.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit, logit

from .corpus import GenderLabel, ListeningRecord, UserProfile, write_gender_map, write_lfm360k, write_profiles
from .rng import derive_rng

_log = logging.getLogger(__name__)


class SynthesisError(ValueError):
    pass


@dataclass(frozen=True)
class SynthSpec:
    n_male_users: int = 1440
    n_female_users: int = 560
    n_male_artists: int = 820
    n_female_artists: int = 180
    #: group-level PR toward male artists, for male and female users
    target_pr_male_users: float = 0.87
    target_pr_female_users: float = 0.75
    #: Beta concentration (a + b) of per-user preference; small means extreme users
    pr_concentration: float = 1.6
    #: log-normal sigma of male / female artist popularity
    popularity_skew: float = 1.2
    female_popularity_skew: float = 0.6
    #: mean fraction of the catalogue each user listens to
    density: float = 0.04
    degree_sigma: float = 0.45
    min_degree: int = 12
    n_genres: int = 12
    genre_concentration: float = 0.25
    #: playcount model: log-rate terms
    base_plays: float = 12.0
    user_activity_sd: float = 0.5
    artist_appeal_sd: float = 0.4
    genre_affinity_weight: float = 1.2
    category_preference_weight: float = 1.5
    noise_sd: float = 0.35
    seed: int = 0

    def __post_init__(self):
        for name in ("target_pr_male_users", "target_pr_female_users"):
            v = getattr(self, name)
            if not 0 < v < 1:
                raise SynthesisError(f"{name} must lie in (0, 1), got {v}")
        if not 0 < self.density <= 1:
            raise SynthesisError("density must lie in (0, 1]")
        if min(self.n_male_users + self.n_female_users, self.n_male_artists, self.n_female_artists) < 1:
            raise SynthesisError("need at least one user and one artist per category")


@dataclass
class SynthResult:
    records: list[ListeningRecord]
    profiles: dict[str, UserProfile]
    genders: dict[str, GenderLabel]
    names: dict[str, str]
    realized_pr_male: dict[str, float] = field(default_factory=dict)
    user_pr_female: dict[str, float] = field(default_factory=dict)

    def write(self, out_dir) -> dict[str, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {
            "events": out / "events.tsv",
            "profiles": out / "profiles.tsv",
            "gender_map": out / "gender_map.tsv",
            "summary": out / "synth_summary.json",
        }
        write_lfm360k(self.records, paths["events"], self.names)
        write_profiles(self.profiles.values(), paths["profiles"])
        write_gender_map(self.genders, paths["gender_map"])
        paths["summary"].write_text(json.dumps({"realized_pr_male": self.realized_pr_male}, indent=2, sort_keys=True))
        return paths


def _degrees(spec, n_users, n_artists, rng):
    if spec.density >= 1:
        return np.full(n_users, n_artists)
    mean = spec.density * n_artists
    k = np.rint(mean * np.exp(spec.degree_sigma * rng.standard_normal(n_users) - spec.degree_sigma ** 2 / 2))
    return np.clip(k, min(spec.min_degree, n_artists), n_artists).astype(np.int64)


def _female_counts(shift, base_logits, degrees, n_male_art, n_female_art):
    pf = expit(base_logits + shift)
    lo = np.maximum(0, degrees - n_male_art)
    hi = np.minimum(degrees, n_female_art)
    return np.clip(np.rint(degrees * pf), lo, hi).astype(np.int64)


def _calibrate(target_male, base_logits, degrees, n_male_art, n_female_art):
    """Shift per-user logits so the group's male share of picks hits the target."""
    total = degrees.sum()

    def realized(shift):
        return 1.0 - _female_counts(shift, base_logits, degrees, n_male_art, n_female_art).sum() / total

    lo_pr = realized(40.0)
    hi_pr = realized(-40.0)
    if not (lo_pr - 0.02 <= target_male <= hi_pr + 0.02):
        raise SynthesisError(
            f"target PR toward male artists {target_male} is infeasible: with these degrees and "
            f"category sizes it must lie in [{lo_pr:.4f}, {hi_pr:.4f}]"
        )
    a, b = -40.0, 40.0
    for _ in range(200):
        mid = (a + b) / 2
        if realized(mid) > target_male:
            a = mid
        else:
            b = mid
    best = min((a, b), key=lambda s: abs(realized(s) - target_male))
    if abs(realized(best) - target_male) > 0.02:
        raise SynthesisError(
            f"target PR toward male artists {target_male} is infeasible: closest reachable "
            f"value is {realized(best):.4f}"
        )
    return _female_counts(best, base_logits, degrees, n_male_art, n_female_art)


def generate_synthetic(spec: SynthSpec = SynthSpec()) -> SynthResult:
    rng = derive_rng(spec.seed, "synth")
    n_users = spec.n_male_users + spec.n_female_users
    n_m, n_f = spec.n_male_artists, spec.n_female_artists
    n_art = n_m + n_f
    width = max(4, len(str(max(n_users, n_art))))
    user_ids = [f"user{i:0{width}d}" for i in range(n_users)]
    artist_ids = [f"artist{i:0{width}d}" for i in range(n_art)]
    user_gender = np.array([GenderLabel.MALE] * spec.n_male_users + [GenderLabel.FEMALE] * spec.n_female_users)
    # interleave categories so ids carry no gender signal
    art_perm = rng.permutation(n_art)
    art_female = np.zeros(n_art, dtype=bool)
    art_female[art_perm[n_m:]] = True

    sigma = np.where(art_female, spec.female_popularity_skew, spec.popularity_skew)
    pop = np.exp(sigma * rng.standard_normal(n_art))
    genre = rng.integers(spec.n_genres, size=n_art)
    appeal = spec.artist_appeal_sd * rng.standard_normal(n_art)
    theta = rng.dirichlet(np.full(spec.n_genres, spec.genre_concentration), size=n_users)
    activity = spec.user_activity_sd * rng.standard_normal(n_users)

    degrees = _degrees(spec, n_users, n_art, rng)
    n_female_picks = np.zeros(n_users, dtype=np.int64)
    for gender, target in ((GenderLabel.MALE, spec.target_pr_male_users),
                           (GenderLabel.FEMALE, spec.target_pr_female_users)):
        idx = np.flatnonzero(user_gender == gender)
        if idx.size == 0:
            continue
        mean_f = 1.0 - target
        kappa = spec.pr_concentration
        draws = rng.beta(mean_f * kappa, (1 - mean_f) * kappa, size=idx.size)
        base = logit(np.clip(draws, 1e-6, 1 - 1e-6))
        n_female_picks[idx] = _calibrate(target, base, degrees[idx], n_m, n_f)

    male_idx = np.flatnonzero(~art_female)
    female_idx = np.flatnonzero(art_female)
    records = []
    for u in range(n_users):
        k_f = int(n_female_picks[u])
        k_m = int(degrees[u] - k_f)
        pf = k_f / degrees[u]
        picks = []
        for pool, k in ((male_idx, k_m), (female_idx, k_f)):
            if k == 0:
                continue
            w = pop[pool] * (theta[u, genre[pool]] + 0.02)
            picks.append(rng.choice(pool, size=k, replace=False, p=w / w.sum()))
        items = np.sort(np.concatenate(picks))
        affinity = np.log(spec.n_genres * theta[u, genre[items]] + 0.1)
        pref = np.where(art_female[items], pf, 1.0 - pf) - 0.5
        log_rate = (
            math.log(spec.base_plays)
            + activity[u]
            + appeal[items]
            + spec.genre_affinity_weight * affinity
            + spec.category_preference_weight * pref
            + spec.noise_sd * rng.standard_normal(items.size)
        )
        plays = 1 + rng.poisson(np.exp(log_rate))
        records.extend(
            ListeningRecord(user_ids[u], artist_ids[a], int(p)) for a, p in zip(items, plays)
        )

    profiles = {
        uid: UserProfile(uid, user_gender[i], None, None) for i, uid in enumerate(user_ids)
    }
    genders = {
        aid: (GenderLabel.FEMALE if art_female[i] else GenderLabel.MALE) for i, aid in enumerate(artist_ids)
    }
    names = {aid: f"Artist {i}" for i, aid in enumerate(artist_ids)}
    result = SynthResult(records, profiles, genders, names)
    result.realized_pr_male, result.user_pr_female = realized_preference(records, profiles, genders)
    _log.info("synthetic corpus: %d records, realized PR(male) %s", len(records), result.realized_pr_male)
    return result


def realized_preference(records, profiles, genders):
    """Group-level PR toward male artists, and per-user PR toward female artists."""
    num = {"male": 0, "female": 0}
    den = {"male": 0, "female": 0}
    per_user_f: dict[str, list[int]] = {}
    for r in records:
        g = profiles[r.user_id].gender.value
        is_male = genders[r.artist_id] == GenderLabel.MALE
        den[g] += 1
        num[g] += is_male
        c = per_user_f.setdefault(r.user_id, [0, 0])
        c[0] += not is_male
        c[1] += 1
    group = {g: num[g] / den[g] for g in num if den[g]}
    per_user = {u: f / t for u, (f, t) in per_user_f.items()}
    return group, per_user


def spec_from_mapping(values: dict) -> SynthSpec:
    known = set(SynthSpec.__dataclass_fields__)
    kwargs = {}
    for k, v in values.items():
        if k in known:
            kwargs[k] = type(getattr(SynthSpec(), k))(v)
    return SynthSpec(**kwargs)


def spec_as_dict(spec: SynthSpec) -> dict:
    return asdict(spec)
