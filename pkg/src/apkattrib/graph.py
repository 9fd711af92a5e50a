"""Bipartite attribution graph: signal-value nodes linked to the market entries using them."""

from __future__ import annotations

import csv
import hashlib
import io
from collections import Counter, deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

from .ingest import MarketEntry
from .signals import GRAPH_KINDS, SignalKind

# kinds that may differ inside a fully consistent cluster
CONSISTENCY_EXEMPT = frozenset({SignalKind.APP_NAME_MARKET, SignalKind.PACKAGE_NAME})

_KIND_ORDER = {kind: i for i, kind in enumerate(SignalKind)}


@dataclass(frozen=True)
class EntryNode:
    market: str
    package_name: str

    @property
    def sort_key(self) -> tuple:
        return (0, self.market, self.package_name)

    @property
    def label(self) -> str:
        return f"{self.market}:{self.package_name}"


@dataclass(frozen=True)
class SignalNode:
    kind: SignalKind
    value: str

    @property
    def sort_key(self) -> tuple:
        return (1, _KIND_ORDER[self.kind], self.value)

    @property
    def label(self) -> str:
        return f"{self.kind.value}:{self.value}"


GraphNode = EntryNode | SignalNode


class AttributionGraph:
    """Immutable bipartite graph with nodes in a fixed sorted order.

    Algorithms work on integer node ids (positions in ``nodes``) and the
    sorted adjacency lists in ``adj``.
    """

    def __init__(
        self,
        nodes: Sequence[GraphNode],
        adj: Sequence[Sequence[int]],
        kinds: frozenset[SignalKind],
        scope: tuple[str, ...] | None,
        entries: dict[EntryNode, MarketEntry],
    ):
        self.nodes = tuple(nodes)
        self.adj = tuple(tuple(a) for a in adj)
        self.index = {node: i for i, node in enumerate(self.nodes)}
        self.kinds = kinds
        self.scope = scope
        self.entries = entries

    def __len__(self) -> int:
        return len(self.nodes)

    @property
    def edges(self) -> list[tuple[int, int]]:
        """(signal id, entry id) pairs in id order."""
        return [
            (i, j)
            for i, node in enumerate(self.nodes)
            if isinstance(node, SignalNode)
            for j in self.adj[i]
        ]

    @property
    def edge_count(self) -> int:
        return sum(len(a) for a in self.adj) // 2

    def is_entry(self, i: int) -> bool:
        return isinstance(self.nodes[i], EntryNode)

    def entry_ids(self) -> list[int]:
        return [i for i, n in enumerate(self.nodes) if isinstance(n, EntryNode)]

    def neighbors(self, node: GraphNode) -> list[GraphNode]:
        return [self.nodes[j] for j in self.adj[self.index[node]]]

    def without(self, node: GraphNode) -> "AttributionGraph":
        """Copy of the graph with one node and its edges removed."""
        drop = self.index[node]
        keep = [i for i in range(len(self.nodes)) if i != drop]
        remap = {old: new for new, old in enumerate(keep)}
        adj = [[remap[j] for j in self.adj[i] if j != drop] for i in keep]
        entries = {k: v for k, v in self.entries.items() if k != node}
        return AttributionGraph([self.nodes[i] for i in keep], adj, self.kinds, self.scope, entries)


def build_graph(
    entries: Iterable[MarketEntry],
    kinds: Iterable[SignalKind] = GRAPH_KINDS,
    scope: Iterable[str] | None = None,
) -> AttributionGraph:
    """One entry node per listing, one signal node per distinct (kind, value).

    ``entries`` must hold one entry per (market, package_name), normally the
    output of :func:`~apkattrib.ingest.latest_entries`. ``scope`` restricts
    the markets taken into the graph.
    """
    kinds = frozenset(kinds)
    if SignalKind.APP_NAME_MANIFEST in kinds:
        raise ValueError("the manifest app name is not a graph signal")
    markets = tuple(sorted(set(scope))) if scope is not None else None
    by_node: dict[EntryNode, MarketEntry] = {}
    links: dict[EntryNode, set[SignalNode]] = {}
    for entry in entries:
        if markets is not None and entry.market not in markets:
            continue
        node = EntryNode(entry.market, entry.package_name)
        if node in by_node:
            raise ValueError(f"duplicate entry for {node.label}; select latest entries first")
        by_node[node] = entry
        signals = set()
        for kind in kinds:
            if kind is SignalKind.CERT_FINGERPRINT:
                signals.update(SignalNode(kind, fp) for fp in entry.fingerprints)
            else:
                value = entry.value(kind)
                if value is not None:
                    signals.add(SignalNode(kind, value))
        links[node] = signals
    all_nodes = set(by_node)
    for signals in links.values():
        all_nodes.update(signals)
    ordered = sorted(all_nodes, key=lambda n: n.sort_key)
    index = {n: i for i, n in enumerate(ordered)}
    adj: list[list[int]] = [[] for _ in ordered]
    for node, signals in links.items():
        i = index[node]
        for sig in signals:
            j = index[sig]
            adj[i].append(j)
            adj[j].append(i)
    for a in adj:
        a.sort()
    return AttributionGraph(ordered, adj, kinds, markets, by_node)


@dataclass
class Cluster:
    id: int
    entry_nodes: tuple[EntryNode, ...]
    signal_nodes: tuple[SignalNode, ...]
    node_ids: tuple[int, ...] = field(repr=False)
    fully_consistent: bool = False

    @property
    def size(self) -> int:
        return len(self.node_ids)

    @property
    def isolated(self) -> bool:
        return len(self.entry_nodes) <= 1


def _components(graph: AttributionGraph) -> list[list[int]]:
    seen = [False] * len(graph.nodes)
    comps = []
    for start in range(len(graph.nodes)):
        if seen[start]:
            continue
        seen[start] = True
        comp = [start]
        queue = deque([start])
        while queue:
            v = queue.popleft()
            for w in graph.adj[v]:
                if not seen[w]:
                    seen[w] = True
                    comp.append(w)
                    queue.append(w)
        comp.sort()
        comps.append(comp)
    return comps


def connected_components(graph: AttributionGraph) -> list[Cluster]:
    """Clusters sorted by size (descending), then by smallest node id."""
    comps = sorted(_components(graph), key=lambda c: (-len(c), c[0]))
    clusters = []
    for cid, comp in enumerate(comps):
        cluster = Cluster(
            id=cid,
            entry_nodes=tuple(graph.nodes[i] for i in comp if graph.is_entry(i)),
            signal_nodes=tuple(graph.nodes[i] for i in comp if not graph.is_entry(i)),
            node_ids=tuple(comp),
        )
        cluster.fully_consistent = classify_cluster(cluster, graph)
        clusters.append(cluster)
    return clusters


def isolated_entry_count(clusters: Iterable[Cluster]) -> int:
    return sum(1 for c in clusters if len(c.entry_nodes) == 1)


def classify_cluster(cluster: Cluster, graph: AttributionGraph) -> bool:
    """Whether every non-exempt signal kind takes a single value in the cluster.

    Single-entry clusters are never fully consistent.
    """
    if cluster.isolated:
        return False
    values = Counter(node.kind for node in cluster.signal_nodes if node.kind not in CONSISTENCY_EXEMPT)
    return all(values[kind] <= 1 for kind in graph.kinds - CONSISTENCY_EXEMPT)


class CentralityScores(dict):
    """node -> betweenness; ``skipped`` counts components left out by a size cutoff."""

    def __init__(self):
        super().__init__()
        self.skipped = 0

    def ranked(
        self, top: int | None = None, kind: SignalKind | None = None, signals_only: bool = False
    ) -> list[tuple[GraphNode, float]]:
        """Nodes by decreasing score; ``signals_only`` leaves out entry nodes."""
        items = [
            (node, score)
            for node, score in self.items()
            if (kind is None and not (signals_only and isinstance(node, EntryNode)))
            or (isinstance(node, SignalNode) and node.kind is kind)
        ]
        items.sort(key=lambda item: (-item[1], item[0].sort_key))
        return items if top is None else items[:top]


def _brandes(adj: Sequence[Sequence[int]], comp: Sequence[int]) -> dict[int, float]:
    score = dict.fromkeys(comp, 0.0)
    for s in comp:
        stack = []
        preds: dict[int, list[int]] = {s: []}
        sigma = {s: 1}
        dist = {s: 0}
        queue = deque([s])
        while queue:
            v = queue.popleft()
            stack.append(v)
            dv = dist[v] + 1
            for w in adj[v]:
                if w not in dist:
                    dist[w] = dv
                    sigma[w] = 0
                    preds[w] = []
                    queue.append(w)
                if dist[w] == dv:
                    sigma[w] += sigma[v]
                    preds[w].append(v)
        delta = dict.fromkeys(stack, 0.0)
        while stack:
            w = stack.pop()
            coeff = (1.0 + delta[w]) / sigma[w]
            for v in preds[w]:
                delta[v] += sigma[v] * coeff
            if w != s:
                score[w] += delta[w]
    return score


def betweenness_centrality(
    graph: AttributionGraph, normalized: bool = True, max_component_size: int | None = None
) -> CentralityScores:
    """Exact betweenness over unweighted shortest paths, one component at a time.

    Each unordered pair is counted once. Normalization divides by
    ``(n - 1)(n - 2) / 2`` with ``n`` the size of the node's component.
    """
    result = CentralityScores()
    for comp in _components(graph):
        if max_component_size is not None and len(comp) > max_component_size:
            result.skipped += 1
            continue
        raw = _brandes(graph.adj, comp)
        n = len(comp)
        scale = 0.5
        if normalized:
            pairs = (n - 1) * (n - 2) / 2
            scale = 0.5 / pairs if pairs > 0 else 0.0
        for i, value in raw.items():
            result[graph.nodes[i]] = value * scale
    return result


def ccdf(values: Iterable[int]) -> list[tuple[int, Fraction]]:
    """Support points of P(X >= x) over the observed values."""
    counts = Counter(values)
    total = sum(counts.values())
    points = []
    remaining = total
    for x in sorted(counts):
        points.append((x, Fraction(remaining, total)))
        remaining -= counts[x]
    return points


@dataclass
class DegreeStats:
    from_kind: SignalKind
    to_kind: SignalKind
    counts: dict[SignalNode, int]
    entries_total: int
    entries_touched: int

    @property
    def distribution(self) -> dict[int, int]:
        return dict(sorted(Counter(self.counts.values()).items()))

    @property
    def multi_valued(self) -> int:
        return sum(1 for c in self.counts.values() if c > 1)

    @property
    def multi_valued_share(self) -> Fraction:
        return Fraction(self.multi_valued, len(self.counts)) if self.counts else Fraction(0)

    @property
    def entries_touched_share(self) -> Fraction:
        return Fraction(self.entries_touched, self.entries_total) if self.entries_total else Fraction(0)

    def ccdf(self) -> list[tuple[int, Fraction]]:
        return ccdf(self.counts.values())

    def to_dict(self) -> dict:
        return {
            "from_kind": self.from_kind.value,
            "to_kind": self.to_kind.value,
            "nodes": len(self.counts),
            "distribution": {str(k): v for k, v in self.distribution.items()},
            "multi_valued": {
                "numerator": self.multi_valued,
                "denominator": len(self.counts),
                "percent": _percent(self.multi_valued_share),
            },
            "entries_touched": {
                "numerator": self.entries_touched,
                "denominator": self.entries_total,
                "percent": _percent(self.entries_touched_share),
            },
            "ccdf": [[x, float(p)] for x, p in self.ccdf()],
        }


def _percent(share: Fraction) -> float:
    return round(float(share * 100), 6)


def signal_degree_stats(graph: AttributionGraph, from_kind: SignalKind, to_kind: SignalKind) -> DegreeStats:
    """How many distinct ``to_kind`` values each ``from_kind`` node reaches via shared entries.

    Also reports how many entry nodes are attached to a ``from_kind`` node
    with more than one such value.
    """
    for kind in (from_kind, to_kind):
        if kind not in graph.kinds:
            raise ValueError(f"signal kind {kind.value!r} is not part of this graph")
    counts: dict[SignalNode, int] = {}
    touched: set[int] = set()
    for i, node in enumerate(graph.nodes):
        if not isinstance(node, SignalNode) or node.kind is not from_kind:
            continue
        reached = set()
        for e in graph.adj[i]:
            for j in graph.adj[e]:
                other = graph.nodes[j]
                if other.kind is to_kind:
                    reached.add(j)
        counts[node] = len(reached)
        if len(reached) > 1:
            touched.update(graph.adj[i])
    return DegreeStats(from_kind, to_kind, counts, len(graph.entry_ids()), len(touched))


def value_hash(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def nodes_csv(graph: AttributionGraph) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["node_id", "node_type", "kind", "value_hash"])
    for i, node in enumerate(graph.nodes):
        if isinstance(node, EntryNode):
            writer.writerow([i, "entry", "", value_hash(node.label)])
        else:
            writer.writerow([i, "signal", node.kind.value, value_hash(node.value)])
    return out.getvalue()


def edges_csv(graph: AttributionGraph) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["signal_id", "entry_id"])
    writer.writerows(graph.edges)
    return out.getvalue()


def cluster_summary(
    graph: AttributionGraph,
    clusters: Sequence[Cluster],
    centrality: CentralityScores | None = None,
    top: int = 3,
) -> dict:
    rows = []
    for cluster in clusters:
        row = {
            "id": cluster.id,
            "entries": len(cluster.entry_nodes),
            "signals": len(cluster.signal_nodes),
            "fully_consistent": cluster.fully_consistent,
            "isolated": cluster.isolated,
        }
        if centrality is not None:
            members = [(graph.nodes[i], centrality.get(graph.nodes[i])) for i in cluster.node_ids]
            members = [(n, s) for n, s in members if s is not None and isinstance(n, SignalNode)]
            members.sort(key=lambda item: (-item[1], item[0].sort_key))
            row["top_centrality"] = [
                {"kind": n.kind.value, "value": n.value, "centrality": round(s, 12)} for n, s in members[:top]
            ]
        rows.append(row)
    return {
        "scope": list(graph.scope) if graph.scope is not None else None,
        "kinds": sorted(k.value for k in graph.kinds),
        "nodes": len(graph.nodes),
        "edges": graph.edge_count,
        "entries": len(graph.entry_ids()),
        "clusters": len(clusters),
        "isolated_entries": isolated_entry_count(clusters),
        "fully_consistent_clusters": sum(1 for c in clusters if c.fully_consistent),
        "cluster_rows": rows,
    }
