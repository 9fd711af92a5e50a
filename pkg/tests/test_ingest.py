import json
from dataclasses import replace
from datetime import datetime, timezone

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from apkattrib.apk.certs import CertificateInfo, RdnSet, Scheme
from apkattrib.apk.extract import ApkSignals
from apkattrib.ingest import (
    Dataset,
    MarketRegistry,
    RecordError,
    crawl_overlap,
    default_registry,
    dump_dataset,
    entry_from_record,
    join_apk_signals,
    latest_entries,
    load_dataset,
    longitudinal_pairs,
    parse_timestamp,
    read_dataset,
)
from apkattrib.signals import SignalKind

SHA = "ab" * 32


def rec(**kw):
    base = {
        "market": "google-play",
        "package_name": "com.example.app",
        "crawl_id": 1,
        "fetched_at": "2021-05-01T10:00:00Z",
        "app_name": "Example",
        "developer_name": "Example Ltd",
    }
    base.update(kw)
    return base


def lines(*records):
    return [json.dumps(r) for r in records]


def test_record_normalized():
    entry = entry_from_record(rec(developer_website="HTTPS://Example.COM/Path/"), default_registry())
    assert entry.value(SignalKind.DEVELOPER_NAME) == "example ltd"
    assert entry.value(SignalKind.DEVELOPER_WEBSITE) == "https://example.com/Path"
    assert entry.value(SignalKind.PACKAGE_NAME) == "com.example.app"
    assert entry.package_name == "com.example.app"
    assert entry.fetched_at == datetime(2021, 5, 1, 10, tzinfo=timezone.utc)


def test_empty_signal_is_absent():
    entry = entry_from_record(rec(developer_email="  "), default_registry())
    assert entry.signal(SignalKind.DEVELOPER_EMAIL) is None


@pytest.mark.parametrize(
    "bad, fragment",
    [
        ({"market": None}, "missing required"),
        ({"market": "Google Play"}, "invalid market"),
        ({"market": "fdroid"}, "not in the registry"),
        ({"crawl_id": 3}, "crawl_id"),
        ({"crawl_id": True}, "crawl_id"),
        ({"fetched_at": "yesterday"}, "bad timestamp"),
        ({"fetched_at": "2021-05-01T10:00:00"}, "no UTC offset"),
        ({"apk_sha256": "xyz"}, "apk_sha256"),
        ({"developer_name": 42}, "must be a string"),
    ],
)
def test_invalid_records(bad, fragment):
    with pytest.raises(RecordError, match=fragment):
        entry_from_record(rec(**bad), default_registry())


def test_date_only_timestamp_flagged():
    ts, date_only = parse_timestamp("2021-09-21")
    assert date_only and ts == datetime(2021, 9, 21, tzinfo=timezone.utc)
    entry = entry_from_record(rec(fetched_at="2021-09-21"), default_registry())
    assert "date-precision" in entry.flags


def test_offsets_converted_to_utc():
    ts, _ = parse_timestamp("2021-05-01T12:00:00+02:00")
    assert ts == datetime(2021, 5, 1, 10, tzinfo=timezone.utc)


def test_errors_collected_not_dropped():
    data = load_dataset(lines(rec(), rec(market="nowhere"), rec(package_name="b")) + ["{not json"])
    assert len(data) == 2
    assert [e.line for e in data.errors] == [2, 4]


def test_duplicate_triple_rejected_with_key():
    data = load_dataset(lines(rec(), rec(app_name="Other")))
    assert len(data) == 1
    (err,) = data.errors
    assert err.key == ("google-play", "com.example.app", "2021-05-01T10:00:00Z")
    assert "duplicate" in err.reason


def test_extra_fields_ignored():
    data = load_dataset(lines(rec(rating="4.5")))
    assert len(data) == 1 and not data.errors


def test_custom_registry():
    registry = MarketRegistry.from_dict({"markets": {"fdroid": {"not_collected": ["developer_email"]}}})
    data = load_dataset(lines(rec(market="fdroid")), registry)
    assert data.markets == {"fdroid"}
    assert not registry.collected("fdroid", SignalKind.DEVELOPER_EMAIL)
    with pytest.raises(RecordError):
        MarketRegistry.from_dict({"markets": {"Bad Name": {}}})


def test_default_masks():
    reg = default_registry()
    assert not reg.collected("baidu", SignalKind.DEVELOPER_NAME)
    assert not reg.collected("tencent", SignalKind.DEVELOPER_WEBSITE)
    assert reg.collected("google-play", SignalKind.DEVELOPER_EMAIL)
    assert reg.partial("google-play", SignalKind.DEVELOPER_ADDRESS)
    assert MarketRegistry.from_dict(reg.to_dict()).to_dict() == reg.to_dict()


def test_dump_read_round_trip():
    data = load_dataset(lines(rec(), rec(crawl_id=2, fetched_at="2021-11-01T00:00:00Z"), rec(market="x")))
    text = dump_dataset(data)
    again = read_dataset(text)
    assert dump_dataset(again) == text
    assert again.entries == data.entries


def test_read_rejects_other_formats():
    with pytest.raises(RecordError):
        read_dataset(json.dumps({"format": "something-else"}))
    with pytest.raises(RecordError):
        read_dataset(json.dumps({"format": "apkattrib-dataset", "format_version": 99}))


def _entry(**kw):
    return entry_from_record(rec(**kw), default_registry())


def test_latest_entry_and_ties():
    a = _entry(fetched_at="2021-05-01T10:00:00Z", apk_sha256="aa" * 32)
    b = _entry(fetched_at="2021-06-01T10:00:00Z", apk_sha256="11" * 32)
    c = _entry(fetched_at="2021-06-01T10:00:00Z", apk_sha256="ff" * 32)
    latest = latest_entries([a, b, c])
    assert latest[("google-play", "com.example.app")] is c
    assert latest.ties == {("google-play", "com.example.app")}
    assert latest_entries([a, b]).ties == set()


def test_full_tie_keeps_first_seen():
    a = _entry(app_name="First")
    b = _entry(app_name="Second")
    assert latest_entries([a, b])[a.key] is a


def test_longitudinal_pairs_pick_extremes():
    e1 = _entry(crawl_id=1, fetched_at="2021-05-01T00:00:00Z", app_name="A")
    e2 = _entry(crawl_id=1, fetched_at="2021-05-09T00:00:00Z", app_name="B")
    e3 = _entry(crawl_id=2, fetched_at="2021-11-01T00:00:00Z", app_name="C")
    e4 = _entry(crawl_id=2, fetched_at="2021-11-09T00:00:00Z", app_name="D")
    only1 = _entry(package_name="com.single", crawl_id=1)
    (pair,) = longitudinal_pairs([e4, only1, e2, e1, e3])
    assert pair.first is e1 and pair.last is e4
    overlap = crawl_overlap([e1, e2, e3, e4, only1])["google-play"]
    assert (overlap.first_crawl, overlap.second_crawl, overlap.both, overlap.single_crawl) == (2, 1, 1, 1)


def _cert(fp, schemes=(Scheme.V2,)):
    return CertificateInfo(fp, RdnSet(common_name="X"), RdnSet(common_name="X"), True, frozenset(schemes))


def test_join_attaches_certificates_and_label():
    data = load_dataset(lines(rec(apk_sha256=SHA), rec(package_name="com.nokey"), rec(package_name="com.other", apk_sha256="cd" * 32)))
    apk = ApkSignals(SHA, "com.example.app", "Manifest Name", (_cert("01" * 32),), 1)
    wrong = ApkSignals("cd" * 32, "com.mismatch", None, (), 0, ("unsigned",))
    joined = join_apk_signals(data, [apk, wrong])
    by_pkg = {e.package_name: e for e in joined.entries}
    assert by_pkg["com.example.app"].fingerprints == {"01" * 32}
    assert by_pkg["com.example.app"].value(SignalKind.APP_NAME_MANIFEST) == "manifest name"
    assert "apk-missing" in by_pkg["com.nokey"].flags
    assert "package-conflict" in by_pkg["com.other"].flags
    # round trip keeps certificates and the manifest label
    again = read_dataset(dump_dataset(joined))
    assert again.entries == joined.entries


records = st.lists(
    st.fixed_dictionaries(
        {
            "market": st.sampled_from(["google-play", "apkmonk", "baidu"]),
            "package_name": st.sampled_from(["a.b", "c.d", "e.f"]),
            "crawl_id": st.sampled_from([1, 2]),
            "fetched_at": st.sampled_from(["2021-05-01T00:00:00Z", "2021-05-02T00:00:00Z", "2021-11-01T00:00:00Z"]),
            "app_name": st.sampled_from(["One", "Two", " "]),
        }
    ),
    max_size=20,
    unique_by=lambda r: (r["market"], r["package_name"], r["fetched_at"]),
)


@settings(max_examples=50)
@given(records, st.randoms())
def test_load_is_order_independent(recs, rnd):
    shuffled = list(recs)
    rnd.shuffle(shuffled)
    a = load_dataset(recs)
    b = load_dataset(shuffled)
    assert a.entries == b.entries
    assert dump_dataset(replace(a, errors=())) == dump_dataset(replace(b, errors=()))
    assert latest_entries(a.entries) == latest_entries(b.entries)
    assert longitudinal_pairs(a.entries) == longitudinal_pairs(b.entries)


def test_dataset_of_sorts():
    a = _entry(market="baidu")
    b = _entry(market="apkmonk")
    assert [e.market for e in Dataset.of([a, b]).entries] == ["apkmonk", "baidu"]
