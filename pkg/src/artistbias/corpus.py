"""
Listening-event ingestion, artist gender resolution and corpus filtering.

Two raw layouts are supported:

* LFM-360k style: ``user \\t artist_mbid \\t artist_name \\t plays`` with a
  profile file ``user \\t gender \\t age \\t country \\t signup``.
* LFM-1b style: one line per listening event,
  ``user \\t artist \\t album \\t track \\t timestamp``, plus a users file that
  carries a ``gender`` column (``m``/``f``/``n``).

Both parsers aggregate to one :class:`ListeningRecord` per (user, artist).
"""

from __future__ import annotations

import enum
import logging
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

_log = logging.getLogger(__name__)


class GenderLabel(enum.Enum):
    MALE = "male"
    FEMALE = "female"
    OTHER = "other"
    NOT_APPLICABLE = "n/a"
    UNDEFINED = "undef"

    @property
    def is_binary(self) -> bool:
        return self in (GenderLabel.MALE, GenderLabel.FEMALE)


BINARY_GENDERS = (GenderLabel.MALE, GenderLabel.FEMALE)

# user-profile codes found in the Last.fm dumps
_PROFILE_CODES = {
    "m": GenderLabel.MALE,
    "male": GenderLabel.MALE,
    "f": GenderLabel.FEMALE,
    "female": GenderLabel.FEMALE,
    "n": GenderLabel.UNDEFINED,
    "": GenderLabel.UNDEFINED,
}


class DiscardType:
    """Sentinel returned when a band's member genders tie."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "Discard"


Discard = DiscardType()


class CorpusError(Exception):
    """Raised for unrecoverable ingestion or filtering failures."""


@dataclass(frozen=True, order=True)
class ListeningRecord:
    user_id: str
    artist_id: str
    playcount: int

    def __post_init__(self):
        if self.playcount < 1:
            raise ValueError(f"playcount must be >= 1, got {self.playcount}")


@dataclass(frozen=True)
class UserProfile:
    user_id: str
    gender: GenderLabel
    country: str | None = None
    age: int | None = None


@dataclass(frozen=True)
class FilterPolicy:
    min_unique_artists_per_user: int = 10
    min_users_per_artist: int = 10
    max_unknown_gender_fraction: float = 0.25
    #: count unknown-gender artists by unique artists ("artists") or by playcount mass ("plays")
    unknown_fraction_by: str = "artists"

    def __post_init__(self):
        if self.min_unique_artists_per_user < 0 or self.min_users_per_artist < 0:
            raise ValueError("interaction thresholds must be non-negative")
        if not 0.0 <= self.max_unknown_gender_fraction <= 1.0:
            raise ValueError("max_unknown_gender_fraction must lie in [0, 1]")
        if self.unknown_fraction_by not in ("artists", "plays"):
            raise ValueError(f"unknown_fraction_by must be 'artists' or 'plays'")


@dataclass
class ParseResult:
    records: list[ListeningRecord]
    profiles: dict[str, UserProfile]
    malformed_lines: int = 0
    dropped_empty_mbid: int = 0


@dataclass
class FilterReport:
    """Per-stage survivor counts plus post-gender threshold violations."""

    stages: list[tuple[str, int, int, int]] = field(default_factory=list)
    stage1_rounds: int = 0
    users_below_threshold: list[str] = field(default_factory=list)
    artists_below_threshold: list[str] = field(default_factory=list)

    def add(self, name, users, artists, records):
        self.stages.append((name, users, artists, records))

    @property
    def has_violations(self) -> bool:
        return bool(self.users_below_threshold or self.artists_below_threshold)

    def as_dict(self):
        return {
            "stages": [
                {"stage": s, "users": u, "artists": a, "records": r} for s, u, a, r in self.stages
            ],
            "stage1_rounds": self.stage1_rounds,
            "users_below_threshold": self.users_below_threshold,
            "artists_below_threshold": self.artists_below_threshold,
        }


@dataclass(frozen=True)
class FilteredCorpus:
    records: tuple[ListeningRecord, ...]
    user_profiles: Mapping[str, UserProfile]
    artist_genders: Mapping[str, GenderLabel]
    popularity: Mapping[str, int]
    report: FilterReport = field(default_factory=FilterReport, compare=False)

    @property
    def n_users(self):
        return len(self.user_profiles)

    @property
    def n_artists(self):
        return len(self.artist_genders)

    def restrict_users(self, user_ids: Iterable[str]) -> "FilteredCorpus":
        """Sub-corpus of the given users; artists left without listeners disappear."""
        keep = set(user_ids)
        records = tuple(r for r in self.records if r.user_id in keep)
        return _assemble(records, self.user_profiles, self.artist_genders, self.report)


def _assemble(records, profiles, genders, report):
    popularity: Counter = Counter()
    users = set()
    for r in records:
        popularity[r.artist_id] += r.playcount
        users.add(r.user_id)
    return FilteredCorpus(
        records=tuple(sorted(records)),
        user_profiles={u: profiles[u] for u in sorted(users)},
        artist_genders={a: genders[a] for a in sorted(popularity)},
        popularity=dict(sorted(popularity.items())),
        report=report,
    )


def _open_text(path):
    path = Path(path)
    try:
        return path.open("r", encoding="utf-8", newline="\n")
    except OSError as e:
        raise CorpusError(f"cannot read {path}: {e}") from e


def _parse_age(text):
    text = text.strip()
    if not text:
        return None
    try:
        return int(float(text))
    except ValueError:
        return None


def profile_gender(code: str) -> GenderLabel:
    return _PROFILE_CODES.get(code.strip().lower(), GenderLabel.UNDEFINED)


def parse_lfm360k(events_path, profile_path) -> ParseResult:
    """
    Parse an LFM-360k style events file and its profile file.

    Lines without an artist MusicBrainz id are dropped, since gender cannot
    be resolved for them.  Malformed lines are logged and skipped.
    """
    counts: dict[tuple[str, str], int] = defaultdict(int)
    malformed = 0
    no_mbid = 0
    with _open_text(events_path) as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\r\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                _log.warning("%s:%d: expected 4 fields, got %d", events_path, lineno, len(parts))
                malformed += 1
                continue
            user, mbid, _name, plays = parts
            try:
                n = int(plays)
            except ValueError:
                _log.warning("%s:%d: bad playcount %r", events_path, lineno, plays)
                malformed += 1
                continue
            if n < 1 or not user:
                _log.warning("%s:%d: invalid record", events_path, lineno)
                malformed += 1
                continue
            if not mbid.strip():
                no_mbid += 1
                continue
            counts[user, mbid.strip()] += n

    profiles = {}
    with _open_text(profile_path) as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\r\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) < 2:
                _log.warning("%s:%d: malformed profile line", profile_path, lineno)
                malformed += 1
                continue
            parts += [""] * (5 - len(parts))
            user, gender, age, country = parts[:4]
            profiles[user] = UserProfile(
                user, profile_gender(gender), country.strip() or None, _parse_age(age)
            )

    records = [ListeningRecord(u, a, n) for (u, a), n in sorted(counts.items())]
    _log.info(
        "parsed %d records for %d profiles (%d malformed, %d without mbid)",
        len(records), len(profiles), malformed, no_mbid,
    )
    return ParseResult(records, profiles, malformed, no_mbid)


# column order of the LFM-1b users file when it has no header
_LFM1B_USER_COLUMNS = ["user_id", "country", "age", "gender", "playcount", "registered_unixtime"]


def parse_lfm1b(events_path, users_path) -> ParseResult:
    """
    Parse LFM-1b listening events, counting event lines per (user, artist).
    """
    counts: dict[tuple[str, str], int] = defaultdict(int)
    malformed = 0
    with _open_text(events_path) as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\r\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 5 or not parts[0] or not parts[1]:
                _log.warning("%s:%d: expected 5 fields", events_path, lineno)
                malformed += 1
                continue
            counts[parts[0], parts[1]] += 1

    profiles = {}
    with _open_text(users_path) as f:
        columns = _LFM1B_USER_COLUMNS
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\r\n")
            if not line:
                continue
            parts = line.split("\t")
            if lineno == 1 and "gender" in (p.strip().lower() for p in parts):
                columns = [p.strip().lower() for p in parts]
                continue
            row = dict(zip(columns, parts))
            if "gender" not in row or not row.get("user_id"):
                _log.warning("%s:%d: malformed user line", users_path, lineno)
                malformed += 1
                continue
            user = row["user_id"]
            profiles[user] = UserProfile(
                user,
                profile_gender(row["gender"]),
                (row.get("country") or "").strip() or None,
                _parse_age(row.get("age", "")),
            )

    records = [ListeningRecord(u, a, n) for (u, a), n in sorted(counts.items())]
    return ParseResult(records, profiles, malformed, 0)


def write_lfm360k(records: Iterable[ListeningRecord], events_path, names: Mapping[str, str] | None = None):
    names = names or {}
    with open(events_path, "w", encoding="utf-8", newline="\n") as f:
        for r in records:
            f.write(f"{r.user_id}\t{r.artist_id}\t{names.get(r.artist_id, '')}\t{r.playcount}\n")


def write_profiles(profiles: Iterable[UserProfile], path):
    codes = {GenderLabel.MALE: "m", GenderLabel.FEMALE: "f"}
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for p in profiles:
            age = "" if p.age is None else str(p.age)
            f.write(f"{p.user_id}\t{codes.get(p.gender, '')}\t{age}\t{p.country or ''}\t\n")


def write_lfm1b(records: Iterable[ListeningRecord], events_path):
    """Expand aggregated records back into one event line per listen."""
    with open(events_path, "w", encoding="utf-8", newline="\n") as f:
        for r in records:
            for k in range(r.playcount):
                f.write(f"{r.user_id}\t{r.artist_id}\t\t\t{k}\n")


def resolve_band_gender(member_genders: list[GenderLabel]) -> GenderLabel | DiscardType:
    """
    Majority vote over band-member genders.

    Members that are not applicable or undefined do not vote.  A tie between
    the leading labels makes the band ambiguous and returns :data:`Discard`.
    """
    if not member_genders:
        raise ValueError("band has no membership data")
    votes = Counter(
        g for g in member_genders
        if g in (GenderLabel.MALE, GenderLabel.FEMALE, GenderLabel.OTHER)
    )
    if not votes:
        return GenderLabel.UNDEFINED
    ranked = votes.most_common()
    if len(ranked) > 1 and ranked[0][1] == ranked[1][1]:
        return Discard
    return ranked[0][0]


@dataclass
class GenderMap(Mapping[str, GenderLabel]):
    """Artist id to gender; artists missing from the file are undefined."""

    labels: dict[str, GenderLabel]
    unknown_strings: int = 0

    def __getitem__(self, key):
        return self.labels.get(key, GenderLabel.UNDEFINED)

    def __iter__(self):
        return iter(self.labels)

    def __len__(self):
        return len(self.labels)

    def __contains__(self, key):
        return key in self.labels

    def get(self, key, default=GenderLabel.UNDEFINED):
        return self.labels.get(key, default)

    def counts(self) -> dict[GenderLabel, int]:
        c = Counter(self.labels.values())
        return {g: c.get(g, 0) for g in GenderLabel}

    def coverage(self, artist_ids: Iterable[str] | None = None) -> float:
        """Fraction of artists (default: all mapped ones) with a known binary gender."""
        ids = list(self.labels) if artist_ids is None else list(artist_ids)
        if not ids:
            return 0.0
        return sum(1 for a in ids if self[a].is_binary) / len(ids)


def load_gender_map(path) -> GenderMap:
    """
    Load an ``artist_id \\t gender`` TSV.

    Extra columns (member counts) are ignored.  Unknown gender strings are
    logged and treated as undefined.
    """
    by_value = {g.value: g for g in GenderLabel}
    labels = {}
    unknown = 0
    with _open_text(path) as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\r\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if lineno == 1 and parts[0] == "artist_id":
                continue
            if len(parts) < 2:
                _log.warning("%s:%d: missing gender column", path, lineno)
                unknown += 1
                labels[parts[0]] = GenderLabel.UNDEFINED
                continue
            g = by_value.get(parts[1].strip().lower())
            if g is None:
                _log.warning("%s:%d: unknown gender string %r", path, lineno, parts[1])
                unknown += 1
                g = GenderLabel.UNDEFINED
            labels[parts[0]] = g
    gm = GenderMap(labels, unknown)
    c = gm.counts()
    _log.info(
        "gender map: %d artists, %s; %d unresolved strings",
        len(gm), ", ".join(f"{g.value}={n}" for g, n in c.items()), unknown,
    )
    return gm


def write_gender_map(genders: Mapping[str, GenderLabel], path, member_counts=None):
    member_counts = member_counts or {}
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for a in sorted(genders):
            line = f"{a}\t{genders[a].value}"
            if a in member_counts:
                line += "\t" + "\t".join(str(n) for n in member_counts[a])
            f.write(line + "\n")


def _degree_counts(records):
    per_user: Counter = Counter()
    per_artist: Counter = Counter()
    for r in records:
        per_user[r.user_id] += 1
        per_artist[r.artist_id] += 1
    return per_user, per_artist


def _interaction_fixed_point(records, policy):
    rounds = 0
    while True:
        per_user, per_artist = _degree_counts(records)
        bad_users = {u for u, n in per_user.items() if n < policy.min_unique_artists_per_user}
        kept = [r for r in records if r.user_id not in bad_users]
        per_user, per_artist = _degree_counts(kept)
        bad_artists = {a for a, n in per_artist.items() if n < policy.min_users_per_artist}
        kept = [r for r in kept if r.artist_id not in bad_artists]
        rounds += 1
        if len(kept) == len(records):
            return kept, rounds
        records = kept


def apply_filters(
    records: Iterable[ListeningRecord],
    profiles: Mapping[str, UserProfile],
    genders: Mapping[str, GenderLabel],
    policy: FilterPolicy = FilterPolicy(),
) -> FilteredCorpus:
    """
    Run the filtering pipeline.

    Stages, in order:

    1. drop users and artists below the interaction thresholds, alternating
       until nothing changes;
    2. drop users whose history has more than the allowed fraction of
       artists without a binary gender;
    3. drop artists that are not male or female, with their records;
    4. drop users whose own gender is not male or female;
    5. re-check the interaction thresholds and report (not enforce) any
       violations caused by stages 2-4.
    """
    records = list(records)
    missing = {r.user_id for r in records} - set(profiles)
    if missing:
        raise ValueError(f"{len(missing)} users in records have no profile, e.g. {sorted(missing)[0]!r}")

    def gender_of(a):
        return genders.get(a, GenderLabel.UNDEFINED)

    report = FilterReport()
    per_user, per_artist = _degree_counts(records)
    report.add("input", len(per_user), len(per_artist), len(records))

    records, report.stage1_rounds = _interaction_fixed_point(records, policy)
    per_user, per_artist = _degree_counts(records)
    report.add("interaction_thresholds", len(per_user), len(per_artist), len(records))

    unknown: Counter = Counter()
    total: Counter = Counter()
    by_plays = policy.unknown_fraction_by == "plays"
    for r in records:
        w = r.playcount if by_plays else 1
        total[r.user_id] += w
        if not gender_of(r.artist_id).is_binary:
            unknown[r.user_id] += w
    drop = {u for u in total if unknown[u] > policy.max_unknown_gender_fraction * total[u]}
    records = [r for r in records if r.user_id not in drop]
    per_user, per_artist = _degree_counts(records)
    report.add("unknown_gender_fraction", len(per_user), len(per_artist), len(records))

    records = [r for r in records if gender_of(r.artist_id).is_binary]
    per_user, per_artist = _degree_counts(records)
    report.add("binary_artist_gender", len(per_user), len(per_artist), len(records))

    records = [r for r in records if profiles[r.user_id].gender.is_binary]
    per_user, per_artist = _degree_counts(records)
    report.add("binary_user_gender", len(per_user), len(per_artist), len(records))

    if not records:
        summary = "; ".join(f"{s}: users={u} artists={a} records={n}" for s, u, a, n in report.stages)
        raise CorpusError(f"corpus is empty after filtering ({summary})")

    report.users_below_threshold = sorted(
        u for u, n in per_user.items() if n < policy.min_unique_artists_per_user
    )
    report.artists_below_threshold = sorted(
        a for a, n in per_artist.items() if n < policy.min_users_per_artist
    )
    if report.has_violations:
        _log.warning(
            "after gender filtering, %d users and %d artists fall below thresholds",
            len(report.users_below_threshold), len(report.artists_below_threshold),
        )
    resolved = {a: gender_of(a) for a in per_artist}
    return _assemble(records, profiles, resolved, report)

