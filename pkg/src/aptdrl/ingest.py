"""Report parsing and dataset assembly.

Three JSON report kinds are read, each for a handful of named fields only:

* file report (antivirus verdicts): ``data.attributes.unique_sources``,
  ``data.attributes.last_analysis_results.<engine>.category`` and
  ``data.attributes.pe_info.import_list[*].imported_functions[*]``
* behavior report: ``data.files_written[*]``, ``data.registry_keys_set[*]``,
  ``data.network_events[*]``
* cuckoo report: ``behavior.apistats.<pid>.<api_name>``

Absent sections count as zero. Present sections of the wrong type raise
:class:`SchemaError` naming the JSON path.
"""
from __future__ import annotations

import csv
import json
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Mapping, NamedTuple

import numpy as np

from .data import Dataset
from .errors import AptError, DuplicateHash, EmptyCorpus, MalformedRow, SchemaError

MANIFEST_HEADER = ["sha256", "apt_group", "country"]
MANIFEST_NAME = "manifest.csv"
FILE_DIR = "file_reports"
BEHAVIOR_DIR = "behavior_reports"
CUCKOO_DIR = "cuckoo_reports"
FIXED_FEATURES = (
    "unique_sources",
    "malicious_count",
    "import_count",
    "files_written",
    "registry_keys_set",
    "network_event_count",
)
DEFAULT_TOP_N = 256

_SHA256 = re.compile(r"^[0-9a-f]{64}$")


class AptGroup(NamedTuple):
    country: str
    name: str
    count: int


# reference corpus layout: 12 groups, 3594 samples
APT_GROUPS = (
    AptGroup("China", "APT 1", 405),
    AptGroup("China", "APT 10", 244),
    AptGroup("China", "APT 19", 32),
    AptGroup("China", "APT 21", 106),
    AptGroup("Russia", "APT 28", 214),
    AptGroup("Russia", "APT 29", 281),
    AptGroup("China", "APT 30", 164),
    AptGroup("North-Korea", "DarkHotel", 273),
    AptGroup("Russia", "Energetic Bear", 132),
    AptGroup("USA", "Equation Group", 395),
    AptGroup("Pakistan", "Gorgon Group", 961),
    AptGroup("China", "Winnti", 387),
)


@dataclass(frozen=True)
class ManifestEntry:
    sha256: str
    apt_group: str
    country: str


@dataclass(frozen=True)
class FileReportFeatures:
    file_name: str = ""
    unique_sources: int = 0
    malicious_count: int = 0
    import_count: int = 0


@dataclass(frozen=True)
class BehaviorFeatures:
    files_written: int = 0
    registry_keys_set: int = 0
    network_event_count: int = 0


ApiCallCounts = dict  # api name -> non-negative count


@dataclass(frozen=True)
class ApiVocabulary:
    names: tuple[str, ...]
    corpus_size: int
    top_n: int
    min_frequency: int  # smallest total count that made the cut (0 when empty)

    def __len__(self) -> int:
        return len(self.names)

    @property
    def index(self) -> dict[str, int]:
        return {n: i for i, n in enumerate(self.names)}

    def to_json(self) -> str:
        return json.dumps(
            {"names": list(self.names), "corpus_size": self.corpus_size, "top_n": self.top_n, "min_frequency": self.min_frequency},
            indent=2,
        ) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ApiVocabulary":
        raw = json.loads(text)
        return cls(tuple(raw["names"]), int(raw["corpus_size"]), int(raw["top_n"]), int(raw["min_frequency"]))


def feature_names(vocab: ApiVocabulary) -> list[str]:
    return list(FIXED_FEATURES) + [f"api:{n}" for n in vocab.names]


def parse_manifest(path: str | Path) -> list[ManifestEntry]:
    """Read the ``sha256,apt_group,country`` manifest; row numbers count the header as 1."""
    entries: list[ManifestEntry] = []
    seen: dict[str, int] = {}
    with Path(path).open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != MANIFEST_HEADER:
            raise MalformedRow(1, f"header must be {','.join(MANIFEST_HEADER)}, got {header}")
        for row_no, row in enumerate(reader, start=2):
            if len(row) != 3:
                raise MalformedRow(row_no, f"expected 3 fields, got {len(row)}")
            sha, group, country = row
            if not _SHA256.match(sha):
                raise MalformedRow(row_no, f"sha256 is not 64 lowercase hex characters: {sha!r}")
            if not group.strip():
                raise MalformedRow(row_no, "empty apt_group")
            if sha in seen:
                raise DuplicateHash(sha, row_no)
            seen[sha] = row_no
            entries.append(ManifestEntry(sha, group, country))
    return entries


# --- JSON helpers ----------------------------------------------------------

_MISSING = object()


def _load(document: str | bytes | Mapping, source: str | None) -> Any:
    if isinstance(document, Mapping):
        return document
    try:
        doc = json.loads(document)
    except (ValueError, TypeError) as exc:
        raise SchemaError("$", f"not valid JSON ({exc})", source) from None
    if not isinstance(doc, dict):
        raise SchemaError("$", "top level must be an object", source)
    return doc


def _get(node: Any, path: str, key: str, kind: type, source: str | None) -> Any:
    """``node[key]`` checked against ``kind``; returns _MISSING when absent or null."""
    value = node.get(key, _MISSING)
    if value is _MISSING or value is None:
        return _MISSING
    if not isinstance(value, kind):
        raise SchemaError(f"{path}.{key}", f"expected {kind.__name__}, got {type(value).__name__}", source)
    return value


def _count(value: Any, path: str, source: str | None) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise SchemaError(path, f"expected a non-negative integer, got {value!r}", source)
    if value < 0:
        raise SchemaError(path, f"negative count {value}", source)
    return value


def parse_file_report(document: str | bytes | Mapping, source: str | None = None) -> FileReportFeatures:
    doc = _load(document, source)
    data = _get(doc, "$", "data", dict, source)
    if data is _MISSING:
        return FileReportFeatures()
    attrs = _get(data, "data", "attributes", dict, source)
    if attrs is _MISSING:
        return FileReportFeatures()
    base = "data.attributes"

    name = _get(attrs, base, "meaningful_name", str, source)
    unique = _get(attrs, base, "unique_sources", object, source)
    unique_sources = 0 if unique is _MISSING else _count(unique, f"{base}.unique_sources", source)

    malicious = 0
    results = _get(attrs, base, "last_analysis_results", dict, source)
    if results is not _MISSING:
        for engine, verdict in results.items():
            vpath = f"{base}.last_analysis_results.{engine}"
            if not isinstance(verdict, dict):
                raise SchemaError(vpath, f"expected object, got {type(verdict).__name__}", source)
            category = _get(verdict, vpath, "category", str, source)
            if category is not _MISSING and category.lower() == "malicious":
                malicious += 1

    imports = 0
    pe = _get(attrs, base, "pe_info", dict, source)
    if pe is not _MISSING:
        ilist = _get(pe, f"{base}.pe_info", "import_list", list, source)
        if ilist is not _MISSING:
            for i, lib in enumerate(ilist):
                lpath = f"{base}.pe_info.import_list[{i}]"
                if not isinstance(lib, dict):
                    raise SchemaError(lpath, f"expected object, got {type(lib).__name__}", source)
                funcs = _get(lib, lpath, "imported_functions", list, source)
                if funcs is _MISSING:
                    continue
                for j, fn in enumerate(funcs):
                    if not isinstance(fn, str):
                        raise SchemaError(f"{lpath}.imported_functions[{j}]", "expected string", source)
                imports += len(funcs)

    return FileReportFeatures("" if name is _MISSING else name, unique_sources, malicious, imports)


def parse_behavior_report(document: str | bytes | Mapping, source: str | None = None) -> BehaviorFeatures:
    doc = _load(document, source)
    data = _get(doc, "$", "data", dict, source)
    if data is _MISSING:
        return BehaviorFeatures()
    counts = []
    for key in ("files_written", "registry_keys_set", "network_events"):
        items = _get(data, "data", key, list, source)
        counts.append(0 if items is _MISSING else len(items))
    return BehaviorFeatures(*counts)


def parse_cuckoo_report(document: str | bytes | Mapping, source: str | None = None) -> ApiCallCounts:
    """Per-API call counts summed over every process in ``behavior.apistats``."""
    doc = _load(document, source)
    behavior = _get(doc, "$", "behavior", dict, source)
    if behavior is _MISSING:
        return {}
    stats = _get(behavior, "behavior", "apistats", dict, source)
    if stats is _MISSING:
        return {}
    totals: Counter[str] = Counter()
    for pid, calls in stats.items():
        ppath = f"behavior.apistats.{pid}"
        if not isinstance(calls, dict):
            raise SchemaError(ppath, f"expected object, got {type(calls).__name__}", source)
        for api, n in calls.items():
            if not api:
                raise SchemaError(ppath, "empty API name", source)
            totals[api] += _count(n, f"{ppath}.{api}", source)
    return dict(totals)


def build_vocabulary(records: Iterable[tuple[str, Mapping[str, int]]], top_n: int = DEFAULT_TOP_N) -> ApiVocabulary:
    """Top ``top_n`` API names by summed count; ties broken lexicographically."""
    if top_n < 1:
        raise ValueError("top_n must be >= 1")
    totals: Counter[str] = Counter()
    n_records = 0
    for _sha, counts in records:
        n_records += 1
        for api, n in counts.items():
            totals[api] += n
    if n_records == 0:
        raise EmptyCorpus("no records to build a vocabulary from")
    ranked = sorted(totals.items(), key=lambda kv: (-kv[1], kv[0]))[:top_n]
    return ApiVocabulary(tuple(n for n, _ in ranked), n_records, top_n, ranked[-1][1] if ranked else 0)


def assemble_dataset(
    manifest: list[ManifestEntry],
    file_reports: Mapping[str, FileReportFeatures],
    behavior_reports: Mapping[str, BehaviorFeatures],
    cuckoo_reports: Mapping[str, Mapping[str, int]],
    vocab: ApiVocabulary,
) -> Dataset:
    """One zero-filled feature row per manifest entry, in manifest order."""
    width = len(FIXED_FEATURES) + len(vocab)
    X = np.zeros((len(manifest), width), dtype=np.float64)
    col = {name: len(FIXED_FEATURES) + i for i, name in enumerate(vocab.names)}
    for row, entry in enumerate(manifest):
        fr = file_reports.get(entry.sha256)
        if fr is not None:
            X[row, 0:3] = (fr.unique_sources, fr.malicious_count, fr.import_count)
        br = behavior_reports.get(entry.sha256)
        if br is not None:
            X[row, 3:6] = (br.files_written, br.registry_keys_set, br.network_event_count)
        for api, n in cuckoo_reports.get(entry.sha256, {}).items():
            j = col.get(api)
            if j is not None:
                X[row, j] = n
    return Dataset([e.sha256 for e in manifest], [e.apt_group for e in manifest], X, feature_names(vocab))


@dataclass
class ParsedCorpus:
    manifest: list[ManifestEntry]
    file_reports: dict[str, FileReportFeatures]
    behavior_reports: dict[str, BehaviorFeatures]
    cuckoo_reports: dict[str, ApiCallCounts]


def load_corpus(manifest_path: str | Path, reports_dir: str | Path) -> ParsedCorpus:
    """Parse every report in ``reports_dir/{file,behavior,cuckoo}_reports/<sha256>.json``.

    Missing report files are fine (zero-filled later); unreadable or malformed
    ones raise with the file path attached.
    """
    manifest_path, reports_dir = Path(manifest_path), Path(reports_dir)
    if not manifest_path.is_file():
        raise AptError(f"manifest not found: {manifest_path}")
    if not reports_dir.is_dir():
        raise AptError(f"reports directory not found: {reports_dir}")
    manifest = parse_manifest(manifest_path)
    parsed: dict[str, dict] = {FILE_DIR: {}, BEHAVIOR_DIR: {}, CUCKOO_DIR: {}}
    parsers = {FILE_DIR: parse_file_report, BEHAVIOR_DIR: parse_behavior_report, CUCKOO_DIR: parse_cuckoo_report}
    for sub, parser in parsers.items():
        for entry in manifest:
            path = reports_dir / sub / f"{entry.sha256}.json"
            if not path.is_file():
                continue
            try:
                text = path.read_text(encoding="utf-8")
            except (OSError, UnicodeDecodeError) as exc:
                raise SchemaError("$", f"unreadable ({exc})", str(path)) from None
            parsed[sub][entry.sha256] = parser(text, source=str(path))
    return ParsedCorpus(manifest, parsed[FILE_DIR], parsed[BEHAVIOR_DIR], parsed[CUCKOO_DIR])


def ingest_corpus(manifest_path, reports_dir, top_n: int = DEFAULT_TOP_N, vocab: ApiVocabulary | None = None) -> tuple[Dataset, ApiVocabulary]:
    corpus = load_corpus(manifest_path, reports_dir)
    if vocab is None:
        vocab = build_vocabulary(
            [(e.sha256, corpus.cuckoo_reports.get(e.sha256, {})) for e in corpus.manifest], top_n
        )
    ds = assemble_dataset(corpus.manifest, corpus.file_reports, corpus.behavior_reports, corpus.cuckoo_reports, vocab)
    return ds, vocab
