"""Market-entry records: loading, APK joins, latest-entry and crawl-pair selection."""

from __future__ import annotations

import json
import re
from collections import defaultdict
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from typing import Iterable, Iterator, Mapping

from . import DATASET_FORMAT_VERSION
from .apk.certs import CertificateInfo
from .apk.extract import ApkSignals
from .signals import InvalidSignalError, Signal, SignalKind, normalize_signal

# input record field -> signal kind
RECORD_FIELDS = {
    "app_name": SignalKind.APP_NAME_MARKET,
    "developer_name": SignalKind.DEVELOPER_NAME,
    "developer_website": SignalKind.DEVELOPER_WEBSITE,
    "developer_email": SignalKind.DEVELOPER_EMAIL,
    "developer_address": SignalKind.DEVELOPER_ADDRESS,
    "privacy_policy_url": SignalKind.PRIVACY_POLICY_URL,
}
REQUIRED_FIELDS = ("market", "package_name", "crawl_id", "fetched_at")

_MARKET_TOKEN = re.compile(r"[a-z0-9][a-z0-9._-]*")
_HEX64 = re.compile(r"[0-9a-f]{64}")
_DATE_ONLY = re.compile(r"\d{4}-\d{2}-\d{2}")

_CONTACT_KINDS = frozenset(
    {
        SignalKind.DEVELOPER_WEBSITE,
        SignalKind.DEVELOPER_EMAIL,
        SignalKind.DEVELOPER_ADDRESS,
        SignalKind.PRIVACY_POLICY_URL,
    }
)


class RecordError(ValueError):
    pass


@dataclass(frozen=True)
class MarketProfile:
    """What a market exposes: kinds never collected and kinds collected only for part of the period."""

    name: str
    not_collected: frozenset[SignalKind] = frozenset()
    partial: frozenset[SignalKind] = frozenset()

    def to_dict(self) -> dict:
        return {
            "not_collected": sorted(k.value for k in self.not_collected),
            "partial": sorted(k.value for k in self.partial),
        }


@dataclass(frozen=True)
class MarketRegistry:
    profiles: Mapping[str, MarketProfile]

    def __contains__(self, market: str) -> bool:
        return market in self.profiles

    def collected(self, market: str, kind: SignalKind) -> bool:
        profile = self.profiles.get(market)
        return profile is None or kind not in profile.not_collected

    def partial(self, market: str, kind: SignalKind) -> bool:
        profile = self.profiles.get(market)
        return profile is not None and kind in profile.partial

    def to_dict(self) -> dict:
        return {"markets": {name: self.profiles[name].to_dict() for name in sorted(self.profiles)}}

    @classmethod
    def from_dict(cls, data: Mapping) -> "MarketRegistry":
        profiles = {}
        for name, spec in data.get("markets", {}).items():
            if not _MARKET_TOKEN.fullmatch(name):
                raise RecordError(f"invalid market identifier {name!r}")
            spec = spec or {}
            profiles[name] = MarketProfile(
                name,
                frozenset(SignalKind.parse(k) for k in spec.get("not_collected", ())),
                frozenset(SignalKind.parse(k) for k in spec.get("partial", ())),
            )
        return cls(profiles)

    @classmethod
    def load(cls, path) -> "MarketRegistry":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def default_registry() -> MarketRegistry:
    """The five built-in markets, with their collection masks."""
    return MarketRegistry(
        {
            "google-play": MarketProfile(
                "google-play",
                partial=frozenset(
                    {SignalKind.DEVELOPER_NAME, SignalKind.DEVELOPER_ADDRESS, SignalKind.DEVELOPER_EMAIL}
                ),
            ),
            "apkmonk": MarketProfile("apkmonk", _CONTACT_KINDS),
            "tencent": MarketProfile("tencent", _CONTACT_KINDS),
            "baidu": MarketProfile("baidu", _CONTACT_KINDS | {SignalKind.DEVELOPER_NAME}),
            "apkmirror": MarketProfile("apkmirror", _CONTACT_KINDS),
        }
    )


@dataclass(frozen=True)
class MarketEntry:
    market: str
    package_name: str
    crawl_id: int
    fetched_at: datetime
    apk_sha256: str | None
    signals: Mapping[SignalKind, Signal]
    certificates: tuple[CertificateInfo, ...] = ()
    flags: frozenset[str] = frozenset()

    @property
    def key(self) -> tuple[str, str]:
        return (self.market, self.package_name)

    @property
    def sort_key(self) -> tuple:
        return (self.market, self.package_name, self.fetched_at, self.apk_sha256 or "")

    def signal(self, kind: SignalKind) -> Signal | None:
        return self.signals.get(kind)

    def value(self, kind: SignalKind) -> str | None:
        sig = self.signals.get(kind)
        return sig.canonical_value if sig is not None else None

    @property
    def fingerprints(self) -> frozenset[str]:
        return frozenset(c.fingerprint_sha256 for c in self.certificates)

    def to_dict(self) -> dict:
        return {
            "market": self.market,
            "package_name": self.package_name,
            "crawl_id": self.crawl_id,
            "fetched_at": format_timestamp(self.fetched_at),
            "apk_sha256": self.apk_sha256,
            "signals": {k.value: self.signals[k].raw_value for k in sorted(self.signals, key=_kind_order)},
            "certificates": [c.to_dict() for c in self.certificates],
            "flags": sorted(self.flags),
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "MarketEntry":
        signals = {}
        for name, raw in data.get("signals", {}).items():
            kind = SignalKind.parse(name)
            sig = normalize_signal(kind, raw)
            if sig is not None:
                signals[kind] = sig
        timestamp, _ = parse_timestamp(data["fetched_at"])
        return cls(
            market=data["market"],
            package_name=data["package_name"],
            crawl_id=int(data["crawl_id"]),
            fetched_at=timestamp,
            apk_sha256=data.get("apk_sha256"),
            signals=signals,
            certificates=tuple(CertificateInfo.from_dict(c) for c in data.get("certificates", ())),
            flags=frozenset(data.get("flags", ())),
        )


def _kind_order(kind: SignalKind) -> int:
    return list(SignalKind).index(kind)


@dataclass(frozen=True)
class LoadError:
    line: int
    reason: str
    key: tuple | None = None

    def to_dict(self) -> dict:
        return {"line": self.line, "reason": self.reason, "key": list(self.key) if self.key else None}


@dataclass(frozen=True)
class Dataset:
    entries: tuple[MarketEntry, ...]
    markets: frozenset[str]
    registry: MarketRegistry = field(default_factory=default_registry, compare=False)
    errors: tuple[LoadError, ...] = ()

    def __iter__(self) -> Iterator[MarketEntry]:
        return iter(self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    @classmethod
    def of(cls, entries: Iterable[MarketEntry], registry: MarketRegistry | None = None, errors=()) -> "Dataset":
        ordered = tuple(sorted(entries, key=lambda e: e.sort_key))
        return cls(
            ordered,
            frozenset(e.market for e in ordered),
            registry or default_registry(),
            tuple(errors),
        )

    def for_market(self, market: str) -> list[MarketEntry]:
        return [e for e in self.entries if e.market == market]


def format_timestamp(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).isoformat().replace("+00:00", "Z")


def parse_timestamp(text) -> tuple[datetime, bool]:
    """Parse an ISO-8601 timestamp into UTC; the flag marks a date-only value."""
    if not isinstance(text, str):
        raise RecordError(f"fetched_at must be a string, got {type(text).__name__}")
    value = text.strip()
    if _DATE_ONLY.fullmatch(value):
        return datetime.fromisoformat(value).replace(tzinfo=timezone.utc), True
    if value.endswith(("Z", "z")):
        value = value[:-1] + "+00:00"
    try:
        ts = datetime.fromisoformat(value)
    except ValueError:
        raise RecordError(f"bad timestamp {text!r}") from None
    if ts.tzinfo is None:
        raise RecordError(f"timestamp {text!r} has no UTC offset")
    return ts.astimezone(timezone.utc), False


def entry_from_record(record: Mapping, registry: MarketRegistry) -> MarketEntry:
    """Validate and normalize one input record."""
    if not isinstance(record, Mapping):
        raise RecordError("record is not a JSON object")
    missing = [f for f in REQUIRED_FIELDS if record.get(f) in (None, "")]
    if missing:
        raise RecordError(f"missing required field(s): {', '.join(missing)}")
    market = record["market"]
    if not isinstance(market, str) or not _MARKET_TOKEN.fullmatch(market):
        raise RecordError(f"invalid market identifier {market!r}")
    if market not in registry:
        raise RecordError(f"market {market!r} is not in the registry")
    package = record["package_name"]
    if not isinstance(package, str) or not package.strip():
        raise RecordError("package_name must be a non-empty string")
    crawl_id = record["crawl_id"]
    if crawl_id not in (1, 2) or isinstance(crawl_id, bool):
        raise RecordError(f"crawl_id must be 1 or 2, got {crawl_id!r}")
    fetched_at, date_only = parse_timestamp(record["fetched_at"])
    apk_sha256 = record.get("apk_sha256")
    if apk_sha256 is not None:
        apk_sha256 = str(apk_sha256).strip().lower() or None
        if apk_sha256 is not None and not _HEX64.fullmatch(apk_sha256):
            raise RecordError(f"malformed apk_sha256 {record['apk_sha256']!r}")

    signals = {SignalKind.PACKAGE_NAME: normalize_signal(SignalKind.PACKAGE_NAME, package)}
    for field_name, kind in RECORD_FIELDS.items():
        raw = record.get(field_name)
        if raw is None:
            continue
        if not isinstance(raw, str):
            raise RecordError(f"{field_name} must be a string")
        try:
            sig = normalize_signal(kind, raw)
        except InvalidSignalError as exc:
            raise RecordError(str(exc)) from None
        if sig is not None:
            signals[kind] = sig
    return MarketEntry(
        market=market,
        package_name=package,
        crawl_id=crawl_id,
        fetched_at=fetched_at,
        apk_sha256=apk_sha256,
        signals=signals,
        flags=frozenset({"date-precision"}) if date_only else frozenset(),
    )


def _iter_records(records) -> Iterator[tuple[int, object]]:
    for lineno, item in enumerate(records, 1):
        if isinstance(item, (str, bytes)):
            text = item.strip()
            if not text:
                continue
            try:
                yield lineno, json.loads(text)
            except json.JSONDecodeError as exc:
                yield lineno, RecordError(f"invalid JSON: {exc.msg}")
        else:
            yield lineno, item


def load_dataset(records, registry: MarketRegistry | None = None) -> Dataset:
    """Build a dataset from JSONL lines or already-decoded records.

    Invalid records and repeated (market, package_name, fetched_at) triples
    end up in ``Dataset.errors``; everything else is kept.
    """
    registry = registry or default_registry()
    entries: list[MarketEntry] = []
    errors: list[LoadError] = []
    seen: dict[tuple, int] = {}
    for lineno, record in _iter_records(records):
        if isinstance(record, RecordError):
            errors.append(LoadError(lineno, str(record)))
            continue
        try:
            entry = entry_from_record(record, registry)
        except RecordError as exc:
            errors.append(LoadError(lineno, str(exc)))
            continue
        triple = (entry.market, entry.package_name, format_timestamp(entry.fetched_at))
        if triple in seen:
            errors.append(
                LoadError(lineno, f"duplicate entry {triple} (first seen on line {seen[triple]})", triple)
            )
            continue
        seen[triple] = lineno
        entries.append(entry)
    return Dataset.of(entries, registry, errors)


def dump_dataset(dataset: Dataset) -> str:
    """Deterministic JSON container for a dataset."""
    payload = {
        "format": "apkattrib-dataset",
        "format_version": DATASET_FORMAT_VERSION,
        "registry": dataset.registry.to_dict(),
        "entries": [e.to_dict() for e in dataset.entries],
        "errors": [e.to_dict() for e in dataset.errors],
    }
    return json.dumps(payload, sort_keys=True, ensure_ascii=False, indent=1) + "\n"


def read_dataset(text: str) -> Dataset:
    payload = json.loads(text)
    if payload.get("format") != "apkattrib-dataset":
        raise RecordError("not a dataset file")
    if payload.get("format_version") != DATASET_FORMAT_VERSION:
        raise RecordError(f"unsupported dataset format version {payload.get('format_version')!r}")
    errors = [
        LoadError(e["line"], e["reason"], tuple(e["key"]) if e.get("key") else None)
        for e in payload.get("errors", ())
    ]
    return Dataset.of(
        (MarketEntry.from_dict(e) for e in payload["entries"]),
        MarketRegistry.from_dict(payload["registry"]),
        errors,
    )


class LatestEntries(dict):
    """(market, package_name) -> latest entry; ``ties`` lists keys decided by a tie-break."""

    def __init__(self):
        super().__init__()
        self.ties: set[tuple[str, str]] = set()


def latest_entries(entries: Iterable[MarketEntry]) -> LatestEntries:
    """Latest entry per (market, package_name).

    Equal timestamps go to the lexicographically larger APK hash, then to the
    entry seen first; either way the key is recorded in ``ties``.
    """
    latest = LatestEntries()
    for entry in entries:
        current = latest.get(entry.key)
        if current is None:
            latest[entry.key] = entry
            continue
        if entry.fetched_at == current.fetched_at:
            latest.ties.add(entry.key)
        if (entry.fetched_at, entry.apk_sha256 or "") > (current.fetched_at, current.apk_sha256 or ""):
            latest[entry.key] = entry
    return latest


def latest_by_market(entries: Iterable[MarketEntry]) -> dict[str, list[MarketEntry]]:
    grouped: dict[str, list[MarketEntry]] = defaultdict(list)
    for (market, _), entry in sorted(latest_entries(entries).items()):
        grouped[market].append(entry)
    return dict(grouped)


@dataclass(frozen=True)
class LongitudinalPair:
    first: MarketEntry
    last: MarketEntry

    @property
    def key(self) -> tuple[str, str]:
        return self.first.key


def _order(entry: MarketEntry) -> tuple:
    return (entry.fetched_at, entry.apk_sha256 or "")


def _crawl_groups(entries: Iterable[MarketEntry]):
    groups: dict[tuple[str, str], dict[int, list[MarketEntry]]] = defaultdict(lambda: {1: [], 2: []})
    for entry in entries:
        groups[entry.key][entry.crawl_id].append(entry)
    return groups


def longitudinal_pairs(entries: Iterable[MarketEntry]) -> list[LongitudinalPair]:
    """Earliest first-crawl entry paired with the latest second-crawl entry."""
    pairs = []
    for key, crawls in sorted(_crawl_groups(entries).items()):
        if crawls[1] and crawls[2]:
            pairs.append(LongitudinalPair(min(crawls[1], key=_order), max(crawls[2], key=_order)))
    return pairs


@dataclass(frozen=True)
class CrawlOverlap:
    first_crawl: int
    second_crawl: int
    both: int

    @property
    def single_crawl(self) -> int:
        return self.first_crawl + self.second_crawl - 2 * self.both

    def to_dict(self) -> dict:
        return {
            "first_crawl": self.first_crawl,
            "second_crawl": self.second_crawl,
            "both": self.both,
            "single_crawl": self.single_crawl,
        }


def crawl_overlap(entries: Iterable[MarketEntry]) -> dict[str, CrawlOverlap]:
    """Per market: package names seen in each crawl and in both."""
    counts: dict[str, list[int]] = defaultdict(lambda: [0, 0, 0])
    for (market, _), crawls in _crawl_groups(entries).items():
        c = counts[market]
        c[0] += bool(crawls[1])
        c[1] += bool(crawls[2])
        c[2] += bool(crawls[1] and crawls[2])
    return {m: CrawlOverlap(*counts[m]) for m in sorted(counts)}


def join_apk_signals(dataset: Dataset, results) -> Dataset:
    """Attach certificates and manifest labels from APK extraction results.

    ``results`` is a mapping keyed by APK hash or an iterable of
    :class:`ApkSignals`. Entries without a matching APK are flagged
    ``apk-missing``; a package-name disagreement is flagged
    ``package-conflict`` but joined anyway.
    """
    if isinstance(results, Mapping):
        by_hash = dict(results)
    else:
        by_hash = {r.apk_sha256: r for r in results}
    joined = []
    for entry in dataset.entries:
        apk: ApkSignals | None = by_hash.get(entry.apk_sha256) if entry.apk_sha256 else None
        if apk is None:
            joined.append(replace(entry, flags=entry.flags | {"apk-missing"}))
            continue
        flags = set(entry.flags) - {"apk-missing"}
        if apk.package_name != entry.package_name:
            flags.add("package-conflict")
        signals = dict(entry.signals)
        signals.pop(SignalKind.APP_NAME_MANIFEST, None)
        label = normalize_signal(SignalKind.APP_NAME_MANIFEST, apk.app_name_manifest)
        if label is not None:
            signals[SignalKind.APP_NAME_MANIFEST] = label
        joined.append(
            replace(entry, signals=signals, certificates=tuple(apk.certificates), flags=frozenset(flags))
        )
    return Dataset(tuple(joined), dataset.markets, dataset.registry, dataset.errors)
