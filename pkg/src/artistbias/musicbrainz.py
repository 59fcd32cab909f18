"""
Rate-limited MusicBrainz lookup that writes a gender-map TSV.

Experiments never call this; it exists to build the offline mapping
consumed by :func:`artistbias.corpus.load_gender_map`.
"""

from __future__ import annotations

import logging
import time
from typing import Iterable

import requests

from .corpus import Discard, GenderLabel, resolve_band_gender

_log = logging.getLogger(__name__)

API_ROOT = "https://musicbrainz.org/ws/2"
USER_AGENT = "artistbias/0.1 ( https://example.org/artistbias )"

_MB_GENDERS = {
    "male": GenderLabel.MALE,
    "female": GenderLabel.FEMALE,
    "other": GenderLabel.OTHER,
    "non-binary": GenderLabel.OTHER,
    "not applicable": GenderLabel.NOT_APPLICABLE,
}


def mb_gender(value: str | None) -> GenderLabel:
    if not value:
        return GenderLabel.UNDEFINED
    return _MB_GENDERS.get(value.strip().lower(), GenderLabel.UNDEFINED)


class RateLimiter:
    """Blocks so that calls are spaced at least ``1 / rate`` seconds apart."""

    def __init__(self, rate: float = 1.0, clock=time.monotonic, sleep=time.sleep):
        if rate <= 0:
            raise ValueError("rate must be positive")
        self.interval = 1.0 / rate
        self._clock = clock
        self._sleep = sleep
        self._last = None

    def wait(self):
        now = self._clock()
        if self._last is not None:
            delay = self._last + self.interval - now
            if delay > 0:
                self._sleep(delay)
                now = self._clock()
        self._last = now


class MusicBrainzFetcher:
    def __init__(self, session=None, rate: float = 1.0, user_agent: str = USER_AGENT,
                 limiter: RateLimiter | None = None, retries: int = 3):
        self.session = session or requests.Session()
        self.session.headers.update({"User-Agent": user_agent, "Accept": "application/json"})
        self.limiter = limiter or RateLimiter(rate)
        self.retries = retries
        self._cache: dict[str, dict] = {}

    def _get_artist(self, mbid: str, relations: bool) -> dict | None:
        key = f"{mbid}:{int(relations)}"
        if key in self._cache:
            return self._cache[key]
        params = {"fmt": "json"}
        if relations:
            params["inc"] = "artist-rels"
        for attempt in range(self.retries):
            self.limiter.wait()
            resp = self.session.get(f"{API_ROOT}/artist/{mbid}", params=params, timeout=30)
            if resp.status_code == 503:
                _log.warning("rate limited on %s (attempt %d)", mbid, attempt + 1)
                continue
            if resp.status_code == 404:
                self._cache[key] = None
                return None
            resp.raise_for_status()
            data = resp.json()
            self._cache[key] = data
            return data
        _log.error("giving up on %s after %d attempts", mbid, self.retries)
        return None

    def artist_gender(self, mbid: str):
        """
        Resolve one artist.

        Returns ``(label, member_counts)`` where ``label`` may be
        :data:`~artistbias.corpus.Discard` for tied bands and ``member_counts``
        is ``(male, female, other)`` for groups or ``None`` for persons.
        """
        data = self._get_artist(mbid, relations=True)
        if data is None:
            return GenderLabel.UNDEFINED, None
        if data.get("type") != "Group":
            return mb_gender(data.get("gender")), None

        member_ids = sorted({
            rel["artist"]["id"]
            for rel in data.get("relations", [])
            if rel.get("type") == "member of band"
            and rel.get("direction") == "backward"
            and rel.get("artist", {}).get("id")
        })
        if not member_ids:
            return GenderLabel.UNDEFINED, None
        members = []
        for m in member_ids:
            md = self._get_artist(m, relations=False)
            members.append(mb_gender(md.get("gender")) if md else GenderLabel.UNDEFINED)
        counts = (
            members.count(GenderLabel.MALE),
            members.count(GenderLabel.FEMALE),
            members.count(GenderLabel.OTHER),
        )
        return resolve_band_gender(members), counts

    def fetch_gender_map(self, artist_ids: Iterable[str], out_path) -> dict[str, GenderLabel]:
        """
        Resolve every artist and write ``artist_id, gender, members_male,
        members_female, members_other`` rows.  Tied bands are written as
        ``undef`` with their member counts so the tie stays visible.
        """
        labels = {}
        with open(out_path, "w", encoding="utf-8", newline="\n") as f:
            for mbid in artist_ids:
                mbid = mbid.strip()
                if not mbid:
                    continue
                label, counts = self.artist_gender(mbid)
                if label is Discard:
                    _log.info("band %s has tied member genders %s, discarded", mbid, counts)
                    label = GenderLabel.UNDEFINED
                labels[mbid] = label
                extra = "" if counts is None else "\t" + "\t".join(map(str, counts))
                f.write(f"{mbid}\t{label.value}{extra}\n")
        return labels
