"""Command-line entry point.

Every command writes its files under an output directory together with a
``config-<command>.json`` holding the resolved options, and prints the list
of written files as JSON on stdout. Input problems exit with status 1 and a
JSON error object on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

from . import DATASET_FORMAT_VERSION, REPORT_FORMAT_VERSION, __version__
from .apk import ApkError, ApkSignals, extract_apk
from .graph import (
    betweenness_centrality,
    build_graph,
    cluster_summary,
    connected_components,
    edges_csv,
    nodes_csv,
    signal_degree_stats,
)
from .ingest import (
    Dataset,
    MarketRegistry,
    RecordError,
    default_registry,
    dump_dataset,
    join_apk_signals,
    latest_entries,
    load_dataset,
    longitudinal_pairs,
    parse_timestamp,
    read_dataset,
)
from .metrics import (
    availability,
    consistency,
    cross_market,
    org_report,
    volatility,
)
from .signals import GRAPH_KINDS, SignalKind

OUT_DIR_ENV = "APKATTRIB_OUT_DIR"
DEFAULT_OUT_DIR = "apkattrib-out"

log = logging.getLogger("apkattrib")


class InputError(Exception):
    """A problem with user-supplied input; reported as JSON, exit status 1."""

    def __init__(self, message: str, flag: str | None = None, kind: str = "input-error"):
        super().__init__(message)
        self.flag = flag
        self.kind = kind

    def to_dict(self) -> dict:
        out = {"error": self.kind, "message": str(self)}
        if self.flag:
            out["flag"] = self.flag
        return out


@dataclass
class PipelineConfig:
    command: str
    inputs: list[str] = field(default_factory=list)
    markets_path: str | None = None
    kinds: list[str] = field(default_factory=list)
    market_filter: list[str] | None = None
    cutoff: str | None = None
    out_dir: str = DEFAULT_OUT_DIR
    formats: list[str] = field(default_factory=lambda: ["json", "csv"])
    seed: int = 0
    options: dict = field(default_factory=dict)

    def to_json(self) -> str:
        payload = {"tool_version": __version__, **asdict(self)}
        return json.dumps(payload, sort_keys=True, indent=1) + "\n"


# -- helpers -----------------------------------------------------------------


def _dump(data) -> str:
    return json.dumps(data, sort_keys=True, ensure_ascii=False, indent=1) + "\n"


class Writer:
    """Collects output files in order and writes them under one directory."""

    def __init__(self, out_dir: str, formats: Sequence[str]):
        self.root = Path(out_dir)
        self.formats = set(formats)
        self.written: list[str] = []

    def write(self, name: str, text: str, explicit: bool = False) -> None:
        suffix = name.rsplit(".", 1)[-1]
        if not explicit and suffix in ("json", "csv") and suffix not in self.formats and not name.startswith("config-"):
            return
        path = Path(name) if explicit else self.root / name
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8", newline="\n")
        self.written.append(str(path))


def _require(args, name: str):
    value = getattr(args, name, None)
    if value in (None, []):
        raise InputError(f"--{name.replace('_', '-')} is required", flag=f"--{name.replace('_', '-')}", kind="missing-flag")
    return value


def _read_text(path: str, flag: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}", flag=flag, kind="unreadable-input") from exc


def _registry(args) -> MarketRegistry:
    if not getattr(args, "markets", None):
        return default_registry()
    try:
        return MarketRegistry.from_dict(json.loads(_read_text(args.markets, "--markets")))
    except (ValueError, KeyError, TypeError) as exc:
        raise InputError(f"invalid market registry: {exc}", flag="--markets", kind="invalid-registry") from exc


def _load_dataset_file(args) -> Dataset:
    path = _require(args, "dataset")
    try:
        return read_dataset(_read_text(path, "--dataset"))
    except (ValueError, KeyError, TypeError) as exc:
        raise InputError(f"invalid dataset file {path}: {exc}", flag="--dataset", kind="invalid-dataset") from exc


def _kinds(text: str | None) -> tuple[SignalKind, ...]:
    if not text:
        return GRAPH_KINDS
    try:
        kinds = tuple(SignalKind.parse(t) for t in text.split(",") if t.strip())
    except ValueError as exc:
        raise InputError(str(exc), flag="--kinds", kind="invalid-kind") from exc
    if SignalKind.APP_NAME_MANIFEST in kinds:
        raise InputError("the manifest app name is not a graph signal", flag="--kinds", kind="invalid-kind")
    return kinds


def _kind(text: str, flag: str) -> SignalKind:
    try:
        return SignalKind.parse(text)
    except ValueError as exc:
        raise InputError(str(exc), flag=flag, kind="invalid-kind") from exc


def _markets(args) -> list[str] | None:
    values = getattr(args, "market", None)
    if not values:
        return None
    return sorted({m.strip() for v in values for m in v.split(",") if m.strip()})


def _cutoff(args):
    if not getattr(args, "cutoff", None):
        return None
    try:
        return parse_timestamp(args.cutoff)[0]
    except RecordError as exc:
        raise InputError(str(exc), flag="--cutoff", kind="invalid-timestamp") from exc


def _config(args, command: str, inputs: Sequence[str] = (), **options) -> PipelineConfig:
    kinds = getattr(args, "kinds", None)
    return PipelineConfig(
        command=command,
        inputs=list(inputs),
        markets_path=getattr(args, "markets", None),
        kinds=[k.value for k in _kinds(kinds)] if command.startswith(("graph", "all")) else [],
        market_filter=_markets(args),
        cutoff=getattr(args, "cutoff", None),
        out_dir=args.out_dir,
        formats=sorted(args.formats),
        seed=args.seed,
        options={k: v for k, v in sorted(options.items())},
    )


# -- extract -----------------------------------------------------------------


def _extract_one(job: tuple[str, str, bool]) -> dict:
    label, path, resources = job
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        return {"path": label, "error": "unreadable-input", "message": exc.strerror or str(exc)}
    try:
        return {"path": label, **extract_apk(data, resolve_resources=resources).to_dict()}
    except ApkError as exc:
        return {"path": label, "error": exc.kind, "message": str(exc)}


def _apk_paths(paths: Sequence[str]) -> list[tuple[str, str]]:
    """(label, path) pairs; directories expand to their *.apk files, sorted."""
    out = []
    for raw in paths:
        p = Path(raw)
        if p.is_dir():
            out.extend((str(f.relative_to(p)), str(f)) for f in sorted(p.rglob("*.apk")))
        elif p.exists():
            out.append((p.name, str(p)))
        else:
            raise InputError(f"no such file: {raw}", flag="path", kind="unreadable-input")
    return out


def run_extract(paths: Sequence[str], resources: bool, jobs: int) -> list[dict]:
    jobs_list = [(label, path, resources) for label, path in _apk_paths(paths)]
    log.info("extracting %d APKs", len(jobs_list))
    if jobs > 1 and len(jobs_list) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_extract_one, jobs_list))
    return [_extract_one(j) for j in jobs_list]


def _jsonl(records: Sequence[dict]) -> str:
    return "".join(json.dumps(r, sort_keys=True, ensure_ascii=False) + "\n" for r in records)


def cmd_extract(args, writer: Writer) -> None:
    out = _require(args, "out")
    results = run_extract(args.paths, args.resources, args.jobs)
    writer.write(out, _jsonl(results), explicit=True)
    for r in results:
        if "error" in r:
            log.warning("%s: %s", r["path"], r["message"])
    writer.write("config-extract.json", _config(args, "extract", args.paths, resources=args.resources).to_json())


# -- ingest ------------------------------------------------------------------


def _read_apk_signals(text: str) -> list[ApkSignals]:
    out = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise InputError(f"line {lineno}: invalid JSON: {exc.msg}", flag="--apk-signals") from exc
        if "error" in record:
            continue
        try:
            out.append(ApkSignals.from_dict(record))
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"line {lineno}: invalid APK record: {exc}", flag="--apk-signals") from exc
    return out


def build_dataset(entries_text: str, apk_text: str | None, registry: MarketRegistry) -> Dataset:
    dataset = load_dataset(entries_text.splitlines(), registry)
    if apk_text is not None:
        dataset = join_apk_signals(dataset, _read_apk_signals(apk_text))
    return dataset


def cmd_ingest(args, writer: Writer) -> None:
    entries = _require(args, "entries")
    out = _require(args, "out")
    apk_text = _read_text(args.apk_signals, "--apk-signals") if args.apk_signals else None
    dataset = build_dataset(_read_text(entries, "--entries"), apk_text, _registry(args))
    for err in dataset.errors:
        log.warning("line %d: %s", err.line, err.reason)
    writer.write(out, dump_dataset(dataset), explicit=True)
    inputs = [entries] + ([args.apk_signals] if args.apk_signals else [])
    writer.write("config-ingest.json", _config(args, "ingest", inputs).to_json())


# -- graph -------------------------------------------------------------------


def _graph(args, dataset: Dataset):
    kinds = _kinds(args.kinds)
    scope = _markets(args)
    latest = latest_entries(dataset.entries)
    return build_graph(latest.values(), kinds, scope=scope)


def _centrality(args, graph):
    return betweenness_centrality(graph, max_component_size=getattr(args, "max_component_size", None))


def write_graph(args, dataset: Dataset, writer: Writer, action: str, prefix: str = "") -> None:
    graph = _graph(args, dataset)
    if action == "build":
        writer.write(f"{prefix}graph-nodes.csv", nodes_csv(graph))
        writer.write(f"{prefix}graph-edges.csv", edges_csv(graph))
    elif action == "components":
        clusters = connected_components(graph)
        writer.write(f"{prefix}graph-clusters.json", _dump(cluster_summary(graph, clusters)))
    elif action == "centrality":
        scores = _centrality(args, graph)
        clusters = connected_components(graph)
        ranked = [
            {"node": node.label, "kind": getattr(getattr(node, "kind", None), "value", "entry"), "centrality": round(s, 12)}
            for node, s in scores.ranked(args.top, signals_only=True)
        ]
        writer.write(
            f"{prefix}graph-centrality.json",
            _dump(
                {
                    "top": ranked,
                    "skipped_components": scores.skipped,
                    "summary": cluster_summary(graph, clusters, scores),
                }
            ),
        )
    elif action == "degrees":
        src = _kind(args.from_kind, "--from")
        dst = _kind(args.to_kind, "--to")
        try:
            stats = signal_degree_stats(graph, src, dst)
        except ValueError as exc:
            raise InputError(str(exc), flag="--kinds", kind="invalid-kind") from exc
        name = f"{prefix}degrees-{src.value}-{dst.value}"
        writer.write(f"{name}.json", _dump(stats.to_dict()))
        rows = ["x,ccdf"] + [f"{x},{float(p):.12g}" for x, p in stats.ccdf()]
        writer.write(f"{name}.csv", "\n".join(rows) + "\n")


def cmd_graph(args, writer: Writer) -> None:
    dataset = _load_dataset_file(args)
    write_graph(args, dataset, writer, args.action)
    options = {"top": getattr(args, "top", None)}
    if args.action == "degrees":
        options.update({"from": args.from_kind, "to": args.to_kind})
    writer.write(
        f"config-graph-{args.action}.json",
        _config(args, f"graph-{args.action}", [args.dataset], **options).to_json(),
    )


# -- report ------------------------------------------------------------------


def _read_names(path: str) -> list[str]:
    return [line.strip() for line in _read_text(path, "--names").splitlines() if line.strip()]


def write_report(args, dataset: Dataset, writer: Writer, name: str, prefix: str = "") -> None:
    markets = _markets(args)
    if markets is not None:
        unknown = [m for m in markets if m not in dataset.registry]
        if unknown:
            raise InputError(f"unknown market {unknown[0]!r}", flag="--market", kind="unknown-market")
    stem = f"{prefix}report-{name}"
    if name == "availability":
        rep = availability(dataset, cutoff=_cutoff(args), all_signers=args.all_signers, markets=markets)
        writer.write(f"{stem}.json", _dump(rep.to_dict()))
        writer.write(f"{stem}.csv", rep.to_csv())
    elif name == "volatility":
        entries = [e for e in dataset.entries if markets is None or e.market in markets]
        scoped = Dataset.of(entries, dataset.registry)
        rep = volatility(longitudinal_pairs(entries), scoped, scan_intermediate=args.scan_intermediate)
        writer.write(f"{stem}.json", _dump(rep.to_dict()))
        writer.write(f"{stem}.csv", rep.to_csv())
    elif name == "consistency":
        rep = consistency(dataset, markets)
        writer.write(f"{stem}.json", _dump(rep.to_dict()))
        writer.write(f"{stem}-within-app.csv", rep.within_app.rows_csv())
        writer.write(f"{stem}-cross-market.csv", rep.cross_market.to_csv())
    elif name == "cross-market":
        rep = cross_market(dataset, exact_certificates=args.exact_certs)
        writer.write(f"{stem}.json", _dump(rep.to_dict()))
        writer.write(f"{stem}.csv", rep.to_csv())
        writer.write(f"{stem}-matrix.csv", rep.matrix_csv())
    elif name == "org":
        if not markets or len(markets) != 1:
            raise InputError("org report needs exactly one --market", flag="--market", kind="missing-flag")
        names_path = _require(args, "names")
        rep = org_report(dataset, markets[0], _read_names(names_path))
        writer.write(f"{stem}.json", _dump(rep.to_dict()))
        writer.write(f"{stem}.csv", rep.to_csv())


def cmd_report(args, writer: Writer) -> None:
    dataset = _load_dataset_file(args)
    write_report(args, dataset, writer, args.name)
    options = {
        "all_signers": args.all_signers,
        "exact_certs": args.exact_certs,
        "scan_intermediate": args.scan_intermediate,
        "names": args.names,
    }
    writer.write(f"config-report-{args.name}.json", _config(args, f"report-{args.name}", [args.dataset], **options).to_json())


# -- all ---------------------------------------------------------------------

REPORTS = ("availability", "volatility", "consistency", "cross-market")


def cmd_all(args, writer: Writer) -> None:
    apks = _require(args, "apks")
    entries = _require(args, "entries")
    if not Path(apks).is_dir():
        raise InputError(f"not a directory: {apks}", flag="--apks", kind="unreadable-input")
    results = run_extract([apks], True, args.jobs)
    apk_text = _jsonl(results)
    writer.write("apk-signals.jsonl", apk_text)
    dataset = build_dataset(_read_text(entries, "--entries"), apk_text, _registry(args))
    writer.write("dataset.json", dump_dataset(dataset))
    for action in ("build", "components", "centrality"):
        write_graph(args, dataset, writer, action)
    for name in REPORTS:
        write_report(args, dataset, writer, name)
    if args.names and _markets(args) and len(_markets(args)) == 1:
        write_report(args, dataset, writer, "org")
    options = {
        "top": args.top,
        "all_signers": args.all_signers,
        "exact_certs": args.exact_certs,
        "scan_intermediate": args.scan_intermediate,
        "names": args.names,
    }
    writer.write("config-all.json", _config(args, "all", [apks, entries], **options).to_json())


# -- parser ------------------------------------------------------------------


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out-dir", default=None, help=f"output directory (default ${OUT_DIR_ENV} or {DEFAULT_OUT_DIR})")
    p.add_argument("--format", dest="formats", action="append", choices=("json", "csv"), help="output formats")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1, help="worker processes for extraction")
    p.add_argument("--markets", help="market registry JSON")


def _report_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--market", action="append", help="market filter; repeatable or comma separated")
    p.add_argument("--names", help="file with one developer name per line (org report)")
    p.add_argument("--cutoff", help="timestamp for partially collected signals")
    p.add_argument("--all-signers", action="store_true", help="RDN availability over every certificate")
    p.add_argument("--exact-certs", action="store_true", help="same certificate means equal fingerprint sets")
    p.add_argument("--scan-intermediate", action="store_true", help="count values that reverted between crawls")


def _graph_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--kinds", help="comma separated signal kinds")
    p.add_argument("--top", type=int, default=10)
    p.add_argument("--max-component-size", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="apkattrib", description="Attribution signals from APKs and market metadata.")
    parser.add_argument(
        "--version",
        action="version",
        version=f"apkattrib {__version__} (dataset format {DATASET_FORMAT_VERSION}, report format {REPORT_FORMAT_VERSION})",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="extract signals from APK files")
    p.add_argument("paths", nargs="+")
    p.add_argument("--out")
    p.add_argument("--resources", action="store_true", help="resolve labels through resources.arsc")
    _common(p)

    p = sub.add_parser("ingest", help="build a dataset from market records")
    p.add_argument("--entries")
    p.add_argument("--apk-signals")
    p.add_argument("--out")
    _common(p)

    p = sub.add_parser("graph", help="attribution graph queries")
    p.add_argument("action", choices=("build", "components", "centrality", "degrees"))
    p.add_argument("--dataset")
    p.add_argument("--market", action="append")
    p.add_argument("--from", dest="from_kind", default="cert_fingerprint")
    p.add_argument("--to", dest="to_kind", default="developer_name")
    _graph_flags(p)
    _common(p)

    p = sub.add_parser("report", help="availability, volatility and consistency reports")
    p.add_argument("name", choices=("availability", "volatility", "consistency", "cross-market", "org"))
    p.add_argument("--dataset")
    _report_flags(p)
    _common(p)

    p = sub.add_parser("all", help="extract, ingest, graph and report in one run")
    p.add_argument("--apks", help="directory of APK files")
    p.add_argument("--entries", help="market records JSONL")
    _report_flags(p)
    _graph_flags(p)
    _common(p)
    return parser


COMMANDS = {
    "extract": cmd_extract,
    "ingest": cmd_ingest,
    "graph": cmd_graph,
    "report": cmd_report,
    "all": cmd_all,
}


def run(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(message)s",
        stream=sys.stderr,
    )
    args.out_dir = args.out_dir or os.environ.get(OUT_DIR_ENV) or DEFAULT_OUT_DIR
    args.formats = args.formats or ["json", "csv"]
    writer = Writer(args.out_dir, args.formats)
    try:
        COMMANDS[args.command](args, writer)
    except InputError as exc:
        print(json.dumps(exc.to_dict(), sort_keys=True), file=sys.stderr)
        return 1
    print(json.dumps({"written": writer.written}, indent=1))
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
