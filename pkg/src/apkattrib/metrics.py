"""Availability, volatility, consistency and large-organization reports.

Every percentage is carried as a :class:`Ratio` so serialized reports keep
the numerator and denominator it was computed from.
"""

from __future__ import annotations

import csv
import io
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum
from fractions import Fraction
from itertools import combinations
from typing import Iterable, Sequence

from . import REPORT_FORMAT_VERSION
from .apk.certs import RDN_FIELDS, is_play_signing_subject
from .graph import build_graph, signal_degree_stats
from .ingest import (
    Dataset,
    LongitudinalPair,
    MarketEntry,
    MarketRegistry,
    crawl_overlap,
    latest_by_market,
)
from .signals import (
    GRAPH_KINDS,
    Script,
    SignalKind,
    detect_script,
    levenshtein_similarity,
    normalize_signal,
)

MARKET_KINDS = (
    SignalKind.APP_NAME_MARKET,
    SignalKind.DEVELOPER_NAME,
    SignalKind.DEVELOPER_WEBSITE,
    SignalKind.DEVELOPER_EMAIL,
    SignalKind.DEVELOPER_ADDRESS,
    SignalKind.PRIVACY_POLICY_URL,
)

GOOGLE_PLAY = "google-play"


@dataclass(frozen=True)
class Ratio:
    numerator: int
    denominator: int

    @property
    def value(self) -> Fraction | None:
        return Fraction(self.numerator, self.denominator) if self.denominator else None

    @property
    def percent(self) -> float | None:
        value = self.value
        return None if value is None else round(float(value * 100), 6)

    def to_dict(self) -> dict:
        return {"numerator": self.numerator, "denominator": self.denominator, "percent": self.percent}

    def render(self) -> str:
        """Percent with two decimals, rounded half up on the exact fraction."""
        if not self.denominator:
            return ""
        hundredths = (self.numerator * 20000 + self.denominator) // (2 * self.denominator)
        return f"{hundredths // 100}.{hundredths % 100:02d}"


NOT_COLLECTED = "not_collected"


@dataclass(frozen=True)
class Cell:
    """A report cell: a ratio, or a signal the market never exposed."""

    ratio: Ratio | None

    @property
    def collected(self) -> bool:
        return self.ratio is not None

    def to_dict(self) -> dict:
        if self.ratio is None:
            return {"status": NOT_COLLECTED, "numerator": None, "denominator": None, "percent": None}
        return {"status": "ok", **self.ratio.to_dict()}

    def render(self) -> str:
        return "---" if self.ratio is None else self.ratio.render()


def _csv(rows: Iterable[Sequence]) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerows(rows)
    return out.getvalue()


def _envelope(name: str, body: dict) -> dict:
    return {"report": name, "format_version": REPORT_FORMAT_VERSION, **body}


# -- availability ------------------------------------------------------------


@dataclass
class AvailabilityReport:
    markets: list[str]
    # market -> row name -> cell
    signals: dict[str, dict[str, Cell]]
    rdn: dict[str, dict[str, Cell]]
    entries: dict[str, int]
    all_signers: bool = False
    cutoff: datetime | None = None

    def to_dict(self) -> dict:
        return _envelope(
            "availability",
            {
                "all_signers": self.all_signers,
                "cutoff": self.cutoff.isoformat().replace("+00:00", "Z") if self.cutoff else None,
                "markets": {
                    m: {
                        "entries": self.entries[m],
                        "signals": {k: c.to_dict() for k, c in self.signals[m].items()},
                        "cert_rdn": {k: c.to_dict() for k, c in self.rdn[m].items()},
                    }
                    for m in self.markets
                },
            },
        )

    def to_csv(self) -> str:
        rows = [["section", "signal", *self.markets]]
        for kind in MARKET_KINDS:
            rows.append(["market", kind.value, *(self.signals[m][kind.value].render() for m in self.markets)])
        for name in RDN_FIELDS:
            rows.append(["cert_rdn", name, *(self.rdn[m][name].render() for m in self.markets)])
        return _csv(rows)


def _rdn_missing(entry: MarketEntry, name: str, all_signers: bool) -> bool:
    certs = sorted(entry.certificates, key=lambda c: c.fingerprint_sha256)
    if not all_signers:
        certs = certs[:1]
    return any(getattr(c.subject, name) is None for c in certs)


def availability(
    dataset: Dataset,
    registry: MarketRegistry | None = None,
    cutoff: datetime | None = None,
    all_signers: bool = False,
    markets: Iterable[str] | None = None,
) -> AvailabilityReport:
    """Share of latest unique entries per market lacking each signal.

    Signals a market does not expose are reported as not collected. Signals
    collected only for part of the period count entries fetched at or after
    ``cutoff`` when one is given. Certificate RDNs use the first certificate
    by fingerprint, or every certificate with ``all_signers``.
    """
    registry = registry or dataset.registry
    latest = latest_by_market(dataset.entries)
    names = sorted(markets) if markets is not None else sorted(latest)
    signals: dict[str, dict[str, Cell]] = {}
    rdn: dict[str, dict[str, Cell]] = {}
    for market in names:
        entries = latest.get(market, [])
        row = {}
        for kind in MARKET_KINDS:
            if not registry.collected(market, kind):
                row[kind.value] = Cell(None)
                continue
            pool = entries
            if cutoff is not None and registry.partial(market, kind):
                pool = [e for e in entries if e.fetched_at >= cutoff]
            missing = sum(1 for e in pool if e.signal(kind) is None)
            row[kind.value] = Cell(Ratio(missing, len(pool)))
        signals[market] = row
        signed = [e for e in entries if e.certificates]
        rdn[market] = {
            name: Cell(Ratio(sum(_rdn_missing(e, name, all_signers) for e in signed), len(signed)))
            for name in RDN_FIELDS
        }
    return AvailabilityReport(
        names, signals, rdn, {m: len(latest.get(m, [])) for m in names}, all_signers, cutoff
    )


# -- volatility --------------------------------------------------------------


class Change(str, Enum):
    UNCHANGED = "unchanged"
    CHANGED = "changed"
    APPEARED = "appeared"
    DISAPPEARED = "disappeared"
    BOTH_ABSENT = "both_absent"


class CertChange(str, Enum):
    UNCHANGED = "unchanged"
    ADDED = "added"
    FULLY_REPLACED = "fully_replaced"
    PARTIALLY_REPLACED = "partially_replaced"
    REMOVED_ONLY = "removed_only"
    BOTH_EMPTY = "both_empty"


def classify_value(first: str | None, last: str | None) -> Change:
    if first is None and last is None:
        return Change.BOTH_ABSENT
    if first is None:
        return Change.APPEARED
    if last is None:
        return Change.DISAPPEARED
    return Change.UNCHANGED if first == last else Change.CHANGED


def classify_certificates(first: frozenset[str], last: frozenset[str]) -> CertChange:
    if not first and not last:
        return CertChange.BOTH_EMPTY
    if first == last:
        return CertChange.UNCHANGED
    if last > first:
        return CertChange.ADDED
    if last < first:
        return CertChange.REMOVED_ONLY
    if first and last and not (first & last):
        return CertChange.FULLY_REPLACED
    return CertChange.PARTIALLY_REPLACED


@dataclass(frozen=True)
class PairChanges:
    key: tuple[str, str]
    signals: dict[SignalKind, Change]
    certificates: CertChange
    reverted: frozenset[SignalKind] = frozenset()


def classify_pair(pair: LongitudinalPair, kinds: Sequence[SignalKind] = MARKET_KINDS) -> PairChanges:
    return PairChanges(
        pair.key,
        {k: classify_value(pair.first.value(k), pair.last.value(k)) for k in kinds},
        classify_certificates(pair.first.fingerprints, pair.last.fingerprints),
    )


def _reverted(pair: LongitudinalPair, history: Sequence[MarketEntry], kinds) -> frozenset[SignalKind]:
    """Kinds whose value left and came back between the pair's two entries."""
    window = [e for e in history if pair.first.fetched_at <= e.fetched_at <= pair.last.fetched_at]
    out = set()
    for kind in kinds:
        start, end = pair.first.value(kind), pair.last.value(kind)
        if start is None or start != end:
            continue
        if any(e.value(kind) is not None and e.value(kind) != start for e in window):
            out.add(kind)
    return frozenset(out)


@dataclass
class VolatilityReport:
    markets: list[str]
    pairs: dict[str, int]
    coverage: dict[str, Ratio | None]
    # market -> kind -> Change -> count
    signal_counts: dict[str, dict[str, dict[str, int]]]
    changed: dict[str, dict[str, Cell]]
    cert_counts: dict[str, dict[str, int]]
    reverted: dict[str, dict[str, int]] = field(default_factory=dict)

    def cert_cell(self, market: str, cls: CertChange) -> Ratio:
        return Ratio(self.cert_counts[market].get(cls.value, 0), self.pairs[market])

    def to_dict(self) -> dict:
        out = {}
        for m in self.markets:
            out[m] = {
                "pairs": self.pairs[m],
                "coverage": self.coverage[m].to_dict() if self.coverage.get(m) else None,
                "changed": {k: c.to_dict() for k, c in self.changed[m].items()},
                "classes": self.signal_counts[m],
                "certificates": {
                    "added": self.cert_cell(m, CertChange.ADDED).to_dict(),
                    "fully_replaced": self.cert_cell(m, CertChange.FULLY_REPLACED).to_dict(),
                    "classes": self.cert_counts[m],
                },
            }
            if self.reverted:
                out[m]["reverted"] = self.reverted.get(m, {})
        return _envelope("volatility", {"markets": out})

    def to_csv(self) -> str:
        rows = [["section", "signal", *self.markets]]
        for kind in MARKET_KINDS:
            rows.append(["market", kind.value, *(self.changed[m][kind.value].render() for m in self.markets)])
        for cls in (CertChange.ADDED, CertChange.FULLY_REPLACED):
            rows.append(["cert", cls.value, *(self.cert_cell(m, cls).render() for m in self.markets)])
        rows.append(
            ["coverage", "pairs", *((self.coverage[m].render() if self.coverage.get(m) else "") for m in self.markets)]
        )
        return _csv(rows)


def volatility(
    pairs: Sequence[LongitudinalPair],
    dataset: Dataset | None = None,
    scan_intermediate: bool = False,
    kinds: Sequence[SignalKind] = MARKET_KINDS,
) -> VolatilityReport:
    """Value changes between each package's first- and second-crawl entries.

    Only value-to-value changes enter the headline rate; appearing and
    disappearing values are counted separately. A dataset, when given,
    supplies collection masks, crawl coverage and (with
    ``scan_intermediate``) the history used to count reverted values.
    """
    registry = dataset.registry if dataset is not None else None
    overlap = crawl_overlap(dataset.entries) if dataset is not None else {}
    history: dict[tuple[str, str], list[MarketEntry]] = defaultdict(list)
    if dataset is not None and scan_intermediate:
        for e in dataset.entries:
            history[e.key].append(e)

    by_market: dict[str, list[PairChanges]] = defaultdict(list)
    for pair in pairs:
        changes = classify_pair(pair, kinds)
        if scan_intermediate:
            changes = PairChanges(
                changes.key, changes.signals, changes.certificates, _reverted(pair, history[pair.key], kinds)
            )
        by_market[pair.first.market].append(changes)

    markets = sorted(set(by_market) | set(overlap))
    report = VolatilityReport(markets, {}, {}, {}, {}, {})
    for m in markets:
        rows = by_market.get(m, [])
        n = len(rows)
        report.pairs[m] = n
        ov = overlap.get(m)
        union = ov.first_crawl + ov.second_crawl - ov.both if ov else 0
        report.coverage[m] = Ratio(ov.both, union) if ov else None
        counts = {k.value: dict(Counter(r.signals[k].value for r in rows)) for k in kinds}
        report.signal_counts[m] = {k: {c.value: v.get(c.value, 0) for c in Change} for k, v in counts.items()}
        report.changed[m] = {
            k.value: (
                Cell(None)
                if registry is not None and not registry.collected(m, k)
                else Cell(Ratio(counts[k.value].get(Change.CHANGED.value, 0), n))
            )
            for k in kinds
        }
        cert = Counter(r.certificates.value for r in rows)
        report.cert_counts[m] = {c.value: cert.get(c.value, 0) for c in CertChange}
        if scan_intermediate:
            report.reverted[m] = {k.value: sum(k in r.reverted for r in rows) for k in kinds}
    return report


# -- within-app consistency --------------------------------------------------


@dataclass(frozen=True)
class AppNameRow:
    market: str
    package_name: str
    market_name: str
    manifest_name: str
    exact: bool
    similarity: float


HISTOGRAM_BINS = 10


def _bin(similarity: float) -> int:
    return min(int(similarity * HISTOGRAM_BINS), HISTOGRAM_BINS - 1)


@dataclass
class WithinAppReport:
    rows: list[AppNameRow]
    excluded_non_latin: dict[str, int]

    @property
    def markets(self) -> list[str]:
        return sorted({r.market for r in self.rows} | set(self.excluded_non_latin))

    def market_rows(self, market: str) -> list[AppNameRow]:
        return [r for r in self.rows if r.market == market]

    def exact_match(self, market: str | None = None) -> Ratio:
        rows = self.rows if market is None else self.market_rows(market)
        return Ratio(sum(r.exact for r in rows), len(rows))

    def below_half(self, market: str | None = None) -> Ratio:
        rows = self.rows if market is None else self.market_rows(market)
        return Ratio(sum(r.similarity < 0.5 for r in rows), len(rows))

    def histogram(self, market: str | None = None) -> list[int]:
        rows = self.rows if market is None else self.market_rows(market)
        bins = [0] * HISTOGRAM_BINS
        for r in rows:
            bins[_bin(r.similarity)] += 1
        return bins

    def to_dict(self) -> dict:
        def section(market):
            return {
                "exact_match": self.exact_match(market).to_dict(),
                "below_half": self.below_half(market).to_dict(),
                "histogram": self.histogram(market),
                "excluded_non_latin": (
                    sum(self.excluded_non_latin.values()) if market is None else self.excluded_non_latin.get(market, 0)
                ),
            }

        return {
            "all": section(None),
            "markets": {m: section(m) for m in self.markets},
            "bin_width": 1 / HISTOGRAM_BINS,
        }

    def rows_csv(self) -> str:
        rows = [["market", "package_name", "market_name", "manifest_name", "exact", "similarity"]]
        for r in self.rows:
            rows.append([r.market, r.package_name, r.market_name, r.manifest_name, int(r.exact), f"{r.similarity:.6f}"])
        return _csv(rows)


def within_app_consistency(dataset: Dataset) -> WithinAppReport:
    """Market app name against manifest label for each latest entry.

    Pairs where either name contains non-Latin letters are left out.
    """
    rows = []
    excluded: Counter[str] = Counter()
    for market, entries in sorted(latest_by_market(dataset.entries).items()):
        excluded[market] += 0
        for e in entries:
            a, b = e.value(SignalKind.APP_NAME_MARKET), e.value(SignalKind.APP_NAME_MANIFEST)
            if a is None or b is None:
                continue
            if {detect_script(a), detect_script(b)} & {Script.NON_LATIN, Script.MIXED}:
                excluded[market] += 1
                continue
            sim = levenshtein_similarity(a, b)
            rows.append(AppNameRow(market, e.package_name, a, b, a == b, sim))
    return WithinAppReport(rows, dict(excluded))


# -- within-market consistency -------------------------------------------------

DEGREE_PAIRS = (
    (SignalKind.CERT_FINGERPRINT, SignalKind.DEVELOPER_NAME),
    (SignalKind.DEVELOPER_NAME, SignalKind.CERT_FINGERPRINT),
    (SignalKind.APP_NAME_MARKET, SignalKind.DEVELOPER_NAME),
    (SignalKind.DEVELOPER_NAME, SignalKind.DEVELOPER_WEBSITE),
    (SignalKind.DEVELOPER_NAME, SignalKind.DEVELOPER_EMAIL),
    (SignalKind.DEVELOPER_NAME, SignalKind.PRIVACY_POLICY_URL),
) + tuple(
    (kind, SignalKind.PACKAGE_NAME) for kind in GRAPH_KINDS if kind is not SignalKind.PACKAGE_NAME
)


def within_market(dataset: Dataset, market: str) -> dict[str, dict]:
    """Degree statistics between signal kinds on one market's latest entries."""
    entries = latest_by_market(dataset.entries).get(market, [])
    graph = build_graph(entries, GRAPH_KINDS, scope=[market])
    out = {}
    for src, dst in DEGREE_PAIRS:
        if not (dataset.registry.collected(market, src) and dataset.registry.collected(market, dst)):
            continue
        out[f"{src.value}->{dst.value}"] = signal_degree_stats(graph, src, dst).to_dict()
    return out


# -- cross-market consistency ------------------------------------------------


@dataclass
class MarketPairStats:
    markets: tuple[str, str]
    shared: int
    same_cert: Ratio
    same_app_name: Ratio
    same_developer_name: Ratio | None
    google_cert_on_alt: Ratio | None = None

    def to_dict(self) -> dict:
        return {
            "markets": list(self.markets),
            "shared_packages": self.shared,
            "same_cert": self.same_cert.to_dict(),
            "same_app_name": self.same_app_name.to_dict(),
            "same_developer_name": self.same_developer_name.to_dict() if self.same_developer_name else None,
            "google_cert_on_alt_market": self.google_cert_on_alt.to_dict() if self.google_cert_on_alt else None,
        }


@dataclass
class CrossMarketReport:
    markets: list[str]
    pairs: dict[tuple[str, str], MarketPairStats]
    multi_market_packages: Ratio

    def pair(self, a: str, b: str) -> MarketPairStats:
        return self.pairs[tuple(sorted((a, b)))]

    def to_dict(self) -> dict:
        return _envelope(
            "cross-market",
            {
                "markets": self.markets,
                "multi_market_packages": self.multi_market_packages.to_dict(),
                "pairs": [self.pairs[k].to_dict() for k in sorted(self.pairs)],
            },
        )

    def matrix_csv(self, metric: str = "same_cert") -> str:
        rows = [["market", *self.markets]]
        for a in self.markets:
            row = [a]
            for b in self.markets:
                if a == b:
                    row.append("")
                    continue
                value = getattr(self.pair(a, b), metric)
                row.append("---" if value is None else value.render())
            rows.append(row)
        return _csv(rows)

    def to_csv(self) -> str:
        rows = [["market_x", "market_y", "shared", "same_cert", "same_app_name", "same_developer_name", "google_cert_on_alt"]]
        for key in sorted(self.pairs):
            p = self.pairs[key]
            rows.append(
                [
                    *key,
                    p.shared,
                    p.same_cert.render(),
                    p.same_app_name.render(),
                    p.same_developer_name.render() if p.same_developer_name else "---",
                    p.google_cert_on_alt.render() if p.google_cert_on_alt else "",
                ]
            )
        return _csv(rows)


def _same_certs(a: MarketEntry, b: MarketEntry, exact: bool) -> bool:
    return a.fingerprints == b.fingerprints if exact else bool(a.fingerprints & b.fingerprints)


def cross_market(dataset: Dataset, exact_certificates: bool = False) -> CrossMarketReport:
    """Agreement of certificates, app names and developer names across markets.

    Each unordered market pair is compared on the package names both list.
    Certificates agree when their fingerprint sets intersect (or are equal
    with ``exact_certificates``); names agree on canonical equality, and
    app names written in different scripts are skipped.
    """
    registry = dataset.registry
    latest = latest_by_market(dataset.entries)
    index = {m: {e.package_name: e for e in entries} for m, entries in latest.items()}
    markets = sorted(index)
    pairs = {}
    for a, b in combinations(markets, 2):
        shared = sorted(set(index[a]) & set(index[b]))
        cert = [0, 0]
        app = [0, 0]
        dev = [0, 0]
        google = [0, 0]
        alt = b if a == GOOGLE_PLAY else a if b == GOOGLE_PLAY else None
        for pkg in shared:
            ea, eb = index[a][pkg], index[b][pkg]
            if ea.certificates and eb.certificates:
                cert[1] += 1
                cert[0] += _same_certs(ea, eb, exact_certificates)
            na, nb = ea.value(SignalKind.APP_NAME_MARKET), eb.value(SignalKind.APP_NAME_MARKET)
            if na is not None and nb is not None and detect_script(na) == detect_script(nb):
                app[1] += 1
                app[0] += na == nb
            da, db = ea.value(SignalKind.DEVELOPER_NAME), eb.value(SignalKind.DEVELOPER_NAME)
            if da is not None and db is not None:
                dev[1] += 1
                dev[0] += da == db
            if alt is not None:
                other = index[alt][pkg]
                if other.certificates:
                    google[1] += 1
                    google[0] += any(is_play_signing_subject(c) for c in other.certificates)
        dev_collected = registry.collected(a, SignalKind.DEVELOPER_NAME) and registry.collected(
            b, SignalKind.DEVELOPER_NAME
        )
        pairs[(a, b)] = MarketPairStats(
            (a, b),
            len(shared),
            Ratio(*cert),
            Ratio(*app),
            Ratio(*dev) if dev_collected else None,
            Ratio(*google) if alt is not None else None,
        )
    markets_per_pkg = Counter(pkg for m in markets for pkg in index[m])
    multi = Ratio(sum(1 for c in markets_per_pkg.values() if c > 1), len(markets_per_pkg))
    return CrossMarketReport(markets, pairs, multi)


@dataclass
class ConsistencyReport:
    within_app: WithinAppReport
    within_market: dict[str, dict[str, dict]]
    cross_market: CrossMarketReport

    def to_dict(self) -> dict:
        return _envelope(
            "consistency",
            {
                "within_app": self.within_app.to_dict(),
                "within_market": self.within_market,
                "cross_market": self.cross_market.to_dict(),
            },
        )


def consistency(dataset: Dataset, markets: Iterable[str] | None = None) -> ConsistencyReport:
    names = sorted(markets) if markets is not None else sorted(dataset.markets)
    return ConsistencyReport(
        within_app_consistency(dataset),
        {m: within_market(dataset, m) for m in names},
        cross_market(dataset),
    )


# -- large organizations -----------------------------------------------------


@dataclass(frozen=True)
class OrgRow:
    developer_name: str
    apps: int
    emails: int
    websites: int
    certs: int
    other_developer_names: tuple[str, ...]
    flags: frozenset[str] = frozenset()

    def to_dict(self) -> dict:
        return {
            "developer_name": self.developer_name,
            "apps": self.apps,
            "emails": self.emails,
            "websites": self.websites,
            "certs": self.certs,
            "other_developer_names": list(self.other_developer_names),
            "flags": sorted(self.flags),
        }


@dataclass
class OrgReport:
    market: str
    rows: list[OrgRow]

    def to_dict(self) -> dict:
        return _envelope("org", {"market": self.market, "rows": [r.to_dict() for r in self.rows]})

    def to_csv(self) -> str:
        rows = [["developer_name", "apps", "emails", "websites", "certs", "other_developer_names"]]
        for r in self.rows:
            rows.append(
                [r.developer_name, r.apps, r.emails, r.websites, r.certs, "; ".join(r.other_developer_names) or "---"]
            )
        return _csv(rows)


def org_report(dataset: Dataset, market: str, names: Iterable[str]) -> OrgReport:
    """Signal counts and certificate-sharing developer names for selected developers."""
    entries = latest_by_market(dataset.entries).get(market, [])
    by_name: dict[str, list[MarketEntry]] = defaultdict(list)
    by_cert: dict[str, set[str]] = defaultdict(set)
    for e in entries:
        dev = e.value(SignalKind.DEVELOPER_NAME)
        if dev is None:
            continue
        by_name[dev].append(e)
        for fp in e.fingerprints:
            by_cert[fp].add(dev)
    rows = []
    for raw in names:
        sig = normalize_signal(SignalKind.DEVELOPER_NAME, raw)
        if sig is None:
            continue
        name = sig.canonical_value
        mine = by_name.get(name, [])
        if not mine:
            rows.append(OrgRow(raw, 0, 0, 0, 0, (), frozenset({"unknown-developer"})))
            continue
        fps = set().union(*(e.fingerprints for e in mine))
        others = set().union(*(by_cert[fp] for fp in fps)) - {name} if fps else set()
        rows.append(
            OrgRow(
                raw,
                apps=len({e.package_name for e in mine}),
                emails=len({v for e in mine if (v := e.value(SignalKind.DEVELOPER_EMAIL))}),
                websites=len({v for e in mine if (v := e.value(SignalKind.DEVELOPER_WEBSITE))}),
                certs=len(fps),
                other_developer_names=tuple(sorted(others)),
            )
        )
    return OrgReport(market, rows)
