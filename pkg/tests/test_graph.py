import csv
import io
import random
from datetime import datetime, timezone
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from apkattrib.graph import (
    AttributionGraph,
    EntryNode,
    SignalNode,
    betweenness_centrality,
    build_graph,
    ccdf,
    cluster_summary,
    connected_components,
    edges_csv,
    isolated_entry_count,
    nodes_csv,
    signal_degree_stats,
)
from apkattrib.ingest import MarketEntry
from apkattrib.signals import SignalKind, normalize_signal

TS = datetime(2022, 1, 1, tzinfo=timezone.utc)


def entry(package, market="m", certs=(), **values):
    signals = {SignalKind.PACKAGE_NAME: normalize_signal(SignalKind.PACKAGE_NAME, package)}
    for name, raw in values.items():
        kind = SignalKind(name)
        signals[kind] = normalize_signal(kind, raw)
    from apkattrib.apk.certs import CertificateInfo, RdnSet

    certificates = tuple(CertificateInfo(fp, RdnSet(), RdnSet(), True) for fp in certs)
    return MarketEntry(market, package, 1, TS, None, signals, certificates)


def test_path_graph_middle_is_one():
    g = AttributionGraph(
        [EntryNode("m", "a"), SignalNode(SignalKind.DEVELOPER_NAME, "b"), EntryNode("m", "c")],
        [[1], [0, 2], [1]],
        frozenset(),
        None,
        {},
    )
    scores = betweenness_centrality(g)
    assert [scores[n] for n in g.nodes] == [0.0, 1.0, 0.0]
    raw = betweenness_centrality(g, normalized=False)
    assert raw[g.nodes[1]] == 1.0


def test_graph_nodes_and_edges():
    g = build_graph([entry("a.b", developer_name="Dev", certs=["aa" * 32]), entry("c.d", developer_name="dev")])
    kinds = sorted((n.kind.value, n.value) for n in g.nodes if isinstance(n, SignalNode))
    assert kinds == [
        ("cert_fingerprint", "aa" * 32),
        ("developer_name", "dev"),
        ("package_name", "a.b"),
        ("package_name", "c.d"),
    ]
    assert g.edge_count == 5
    (cluster,) = connected_components(g)
    assert len(cluster.entry_nodes) == 2


def test_manifest_name_not_a_graph_kind():
    with pytest.raises(ValueError):
        build_graph([], kinds=[SignalKind.APP_NAME_MANIFEST])


def test_duplicate_entries_rejected():
    with pytest.raises(ValueError):
        build_graph([entry("a.b"), entry("a.b")])


def test_scope_filters_markets():
    g = build_graph([entry("a.b", market="x"), entry("a.b", market="y")], scope=["x"])
    assert [n for n in g.nodes if isinstance(n, EntryNode)] == [EntryNode("x", "a.b")]


def test_cross_market_package_links_entries():
    g = build_graph([entry("a.b", market="x"), entry("a.b", market="y")])
    (cluster,) = connected_components(g)
    assert len(cluster.entry_nodes) == 2


def test_fully_consistent_rules():
    team = [
        entry(f"t.{i}", developer_name="Team", developer_email="t@x.org", app_name_market=f"App {i}", certs=["aa" * 32])
        for i in range(3)
    ]
    split = [
        entry("s.1", developer_name="Split", developer_email="one@x.org"),
        entry("s.2", developer_name="Split", developer_email="two@x.org"),
    ]
    lone = [entry("l.1", developer_name="Lonely")]
    clusters = connected_components(build_graph(team + split + lone))
    by_size = {len(c.entry_nodes): c for c in clusters}
    assert by_size[3].fully_consistent is True
    assert by_size[2].fully_consistent is False
    assert by_size[1].fully_consistent is False
    assert by_size[1].isolated
    assert isolated_entry_count(clusters) == 1


def test_clusters_sorted_by_size():
    g = build_graph([entry("a", developer_name="x"), entry("b", developer_name="y"), entry("c", developer_name="y")])
    sizes = [c.size for c in connected_components(g)]
    assert sizes == sorted(sizes, reverse=True)
    assert [c.id for c in connected_components(g)] == [0, 1]


def _check_against_oracles(entries):
    g = build_graph(entries, oracles.RANDOM_KINDS + (SignalKind.PACKAGE_NAME,))
    ours = {frozenset(c.node_ids) for c in connected_components(g)}
    assert ours == set(oracles.bfs_components(g.adj))
    scores = betweenness_centrality(g)
    expected = oracles.brute_force_betweenness(g.adj)
    for i, node in enumerate(g.nodes):
        assert scores[node] == pytest.approx(expected[i], abs=1e-9)


@settings(max_examples=30, deadline=None)
@given(st.integers(min_value=0, max_value=2**32))
def test_random_graphs_match_oracles(seed):
    _check_against_oracles(oracles.random_entries(random.Random(seed)))


def test_size_cutoff_skips_components():
    g = build_graph([entry("a", developer_name="x"), entry("b", developer_name="x"), entry("c")])
    scores = betweenness_centrality(g, max_component_size=3)
    assert scores.skipped == 1
    assert EntryNode("m", "a") not in scores


def test_ranked_signals_only():
    g = build_graph([entry(f"p{i}", developer_name="hub", app_name_market=f"n{i}") for i in range(4)])
    scores = betweenness_centrality(g)
    top = scores.ranked(1, signals_only=True)[0][0]
    assert top == SignalNode(SignalKind.DEVELOPER_NAME, "hub")
    assert all(isinstance(n, SignalNode) for n, _ in scores.ranked(signals_only=True))
    assert all(n.kind is SignalKind.APP_NAME_MARKET for n, _ in scores.ranked(kind=SignalKind.APP_NAME_MARKET))


def test_ccdf_exact():
    assert ccdf([1, 1, 2, 5]) == [(1, Fraction(1)), (2, Fraction(1, 2)), (5, Fraction(1, 4))]
    assert ccdf([]) == []


@given(st.lists(st.integers(min_value=0, max_value=20), min_size=1))
def test_ccdf_properties(values):
    points = ccdf(values)
    assert points[0][1] == 1
    xs = [x for x, _ in points]
    ps = [p for _, p in points]
    assert xs == sorted(set(values))
    assert ps == sorted(ps, reverse=True)
    for x, p in points:
        assert p == Fraction(sum(v >= x for v in values), len(values))


def test_degree_stats_cert_to_developer():
    g = build_graph(
        [
            entry("a", developer_name="One", certs=["aa" * 32]),
            entry("b", developer_name="Two", certs=["aa" * 32]),
            entry("c", developer_name="Three", certs=["bb" * 32]),
            entry("d", certs=["cc" * 32]),
        ]
    )
    stats = signal_degree_stats(g, SignalKind.CERT_FINGERPRINT, SignalKind.DEVELOPER_NAME)
    assert stats.distribution == {0: 1, 1: 1, 2: 1}
    assert stats.multi_valued == 1
    with pytest.raises(ValueError):
        signal_degree_stats(g, SignalKind.DEVELOPER_ADDRESS, SignalKind.DEVELOPER_NAME)


def test_exports():
    g = build_graph([entry("a", developer_name="x"), entry("b", developer_name="x")])
    nodes = list(csv.reader(io.StringIO(nodes_csv(g))))
    assert nodes[0] == ["node_id", "node_type", "kind", "value_hash"]
    assert len(nodes) == len(g.nodes) + 1
    assert "x" not in {row[3] for row in nodes}
    edges = list(csv.reader(io.StringIO(edges_csv(g))))
    assert edges[0] == ["signal_id", "entry_id"]
    assert len(edges) == g.edge_count + 1
    for sig, ent in edges[1:]:
        assert isinstance(g.nodes[int(sig)], SignalNode) and isinstance(g.nodes[int(ent)], EntryNode)
    clusters = connected_components(g)
    summary = cluster_summary(g, clusters, betweenness_centrality(g), top=1)
    assert summary["clusters"] == 1
    assert summary["cluster_rows"][0]["top_centrality"][0]["value"] == "x"
