"""Synthetic corpora: labelled feature matrices and raw report documents.

Class centres sit on scaled coordinate axes, ``offset + a * e_c`` with
``a = separation / sqrt(2)``, so every pair of centres is exactly
``separation`` apart. Samples add isotropic Gaussian noise and are clipped at
zero; ``offset = 3 * noise_sigma`` keeps clipping rare.
"""
from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import Dataset, write_dataset_csv
from .errors import AptError, InvalidConfig
from .ingest import APT_GROUPS, BEHAVIOR_DIR, CUCKOO_DIR, FILE_DIR, FIXED_FEATURES, MANIFEST_NAME

GROUND_TRUTH_NAME = "ground_truth.csv"
# blob coordinates are O(1); reports need integer counts
COUNT_SCALE = 10.0

# Windows API names commonly seen in sandbox api statistics
API_POOL = (
    "NtCreateFile", "NtReadFile", "NtWriteFile", "NtClose", "NtOpenKey", "NtQueryValueKey",
    "NtAllocateVirtualMemory", "NtProtectVirtualMemory", "NtFreeVirtualMemory", "NtOpenProcess",
    "NtQuerySystemInformation", "NtDelayExecution", "NtMapViewOfSection", "NtUnmapViewOfSection",
    "LdrLoadDll", "LdrGetProcedureAddress", "LdrGetDllHandle", "RegOpenKeyExA", "RegOpenKeyExW",
    "RegQueryValueExA", "RegQueryValueExW", "RegSetValueExA", "RegSetValueExW", "RegCloseKey",
    "CreateFileW", "CreateFileA", "WriteFile", "ReadFile", "DeleteFileW", "CopyFileW",
    "CreateProcessInternalW", "CreateRemoteThread", "OpenProcess", "VirtualAllocEx",
    "WriteProcessMemory", "GetSystemTimeAsFileTime", "GetTickCount", "GetComputerNameW",
    "GetUserNameW", "FindFirstFileExW", "FindNextFileW", "SetFileAttributesW", "GetFileAttributesW",
    "InternetOpenA", "InternetOpenUrlA", "InternetReadFile", "HttpSendRequestA", "WSAStartup",
    "socket", "connect", "send", "recv", "getaddrinfo", "gethostbyname", "CryptEncrypt",
    "CryptDecrypt", "CryptHashData", "CryptAcquireContextW", "CoCreateInstance", "OleInitialize",
    "SetWindowsHookExA", "GetAsyncKeyState", "FindWindowA", "ShellExecuteExW",
)

ENGINES = (
    "Avast", "AVG", "BitDefender", "ClamAV", "DrWeb", "ESET-NOD32", "F-Secure", "Fortinet",
    "Ikarus", "Kaspersky", "Malwarebytes", "McAfee", "Microsoft", "Panda", "Sophos", "Symantec",
    "TrendMicro", "VBA32", "ViRobot", "Zillya",
)
BENIGN_CATEGORIES = ("undetected", "harmless", "type-unsupported", "timeout")
LIBRARIES = ("kernel32.dll", "advapi32.dll", "user32.dll", "ws2_32.dll", "wininet.dll", "ntdll.dll", "shell32.dll")
NETWORK_CATEGORIES = ("dns", "http", "tcp", "udp")


@dataclass(frozen=True)
class SynthConfig:
    num_classes: int = 3
    per_class: tuple[int, ...] = (20, 20, 20)
    dim: int = 16
    center_separation: float = 1.0
    noise_sigma: float = 0.1
    seed: int = 0
    # reports only: share of samples emitted with no recorded activity
    zero_activity_rate: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "per_class", tuple(int(c) for c in self.per_class))
        if self.num_classes < 2:
            raise InvalidConfig("num_classes must be >= 2")
        if len(self.per_class) != self.num_classes:
            raise InvalidConfig(f"per_class has {len(self.per_class)} entries for {self.num_classes} classes")
        if any(c < 1 for c in self.per_class):
            raise InvalidConfig("every class needs at least one sample")
        if self.center_separation <= 0:
            raise InvalidConfig("center_separation must be > 0")
        if self.noise_sigma < 0:
            raise InvalidConfig("noise_sigma must be >= 0")
        if self.dim < self.num_classes:
            raise InvalidConfig(f"dim {self.dim} cannot hold {self.num_classes} axis-aligned centres")
        if not 0.0 <= self.zero_activity_rate <= 1.0:
            raise InvalidConfig("zero_activity_rate must be in [0, 1]")


def class_labels(k: int) -> list[str]:
    if k <= len(APT_GROUPS):
        return [g.name for g in APT_GROUPS[:k]]
    return [f"group-{c:03d}" for c in range(k)]


def synthetic_sha256(seed: int, label: str, index: int) -> str:
    return hashlib.sha256(f"aptdrl-synth:{seed}:{label}:{index}".encode("utf-8")).hexdigest()


def class_centers(cfg: SynthConfig) -> np.ndarray:
    a = cfg.center_separation / np.sqrt(2.0)
    centers = np.full((cfg.num_classes, cfg.dim), 3.0 * cfg.noise_sigma)
    centers[np.arange(cfg.num_classes), np.arange(cfg.num_classes)] += a
    return centers


@dataclass
class SynthDataset:
    dataset: Dataset
    centers: np.ndarray
    codes: np.ndarray = field(repr=False)


def generate_features(cfg: SynthConfig) -> SynthDataset:
    """Gaussian blobs around axis-aligned centres, one record per sample."""
    rng = np.random.default_rng(cfg.seed)
    centers = class_centers(cfg)
    labels = class_labels(cfg.num_classes)
    ids, names, rows, codes = [], [], [], []
    for c, count in enumerate(cfg.per_class):
        noise = rng.normal(0.0, cfg.noise_sigma, size=(count, cfg.dim)) if cfg.noise_sigma > 0 else np.zeros((count, cfg.dim))
        rows.append(np.maximum(centers[c] + noise, 0.0))
        for i in range(count):
            ids.append(synthetic_sha256(cfg.seed, labels[c], i))
            names.append(labels[c])
            codes.append(c)
    X = np.vstack(rows)
    return SynthDataset(Dataset(ids, names, X), centers, np.array(codes))


def imbalance_profile(scale: float = 0.1, minimum: int = 2) -> tuple[int, ...]:
    """Reference per-group sample sizes, scaled and rounded half up."""
    return tuple(max(minimum, int(np.floor(g.count * scale + 0.5))) for g in APT_GROUPS)


# ---------------------------------------------------------------------------
# raw report documents


def api_names(n: int) -> list[str]:
    if n <= len(API_POOL):
        return list(API_POOL[:n])
    return list(API_POOL) + [f"SynthApi{i:04d}" for i in range(n - len(API_POOL))]


def _split_count(total: int, parts: int, rng: np.random.Generator) -> list[int]:
    """Random non-negative composition of ``total`` into ``parts`` integers."""
    if parts == 1 or total == 0:
        return [total] + [0] * (parts - 1)
    cuts = np.sort(rng.integers(0, total + 1, size=parts - 1))
    edges = np.concatenate([[0], cuts, [total]])
    return [int(v) for v in np.diff(edges)]


def _file_report(sha: str, counts: np.ndarray, rng: np.random.Generator, empty: bool) -> dict:
    if empty:
        return {"data": {"id": sha, "type": "file", "attributes": {}}}
    unique_sources, malicious, imports = (int(v) for v in counts[:3])
    n_engines = malicious + int(rng.integers(0, 4))
    # large detection counts need more engines than the named list
    engines = ENGINES if n_engines <= len(ENGINES) else tuple(f"Engine{i:03d}" for i in range(n_engines))
    results = {}
    for i, engine in enumerate(engines[:n_engines]):
        if i < malicious:
            category = "malicious" if i % 3 else "Malicious"
            result = "Trojan.Generic"
        else:
            category = BENIGN_CATEGORIES[int(rng.integers(len(BENIGN_CATEGORIES)))]
            result = None
        results[engine] = {"category": category, "engine_name": engine, "result": result}
    per_lib = _split_count(imports, 3, rng)
    import_list = []
    for lib, n in zip(rng.choice(LIBRARIES, size=3, replace=False), per_lib):
        import_list.append({"library_name": str(lib), "imported_functions": [f"Func{j:04d}" for j in range(n)]})
    return {
        "data": {
            "id": sha,
            "type": "file",
            "attributes": {
                "meaningful_name": f"{sha[:12]}.exe",
                "unique_sources": unique_sources,
                "last_analysis_results": results,
                "pe_info": {"import_list": import_list},
            },
        }
    }


def _behavior_report(sha: str, counts: np.ndarray, rng: np.random.Generator, empty: bool) -> dict:
    if empty:
        return {"data": {}}
    files, keys, net = (int(v) for v in counts[3:6])
    events = []
    for cat, n in zip(NETWORK_CATEGORIES, _split_count(net, len(NETWORK_CATEGORIES), rng)):
        events.extend({"category": cat, "destination": f"10.0.{len(events) % 250}.{j % 250}"} for j in range(n))
    return {
        "data": {
            "files_written": [f"C:\\Users\\user\\AppData\\Local\\Temp\\{sha[:8]}_{i}.tmp" for i in range(files)],
            "registry_keys_set": [
                {"key": f"HKCU\\Software\\{sha[:6]}\\k{i}", "value": str(i)} for i in range(keys)
            ],
            "network_events": events,
        }
    }


def _cuckoo_report(sha: str, api_counts: dict[str, int], rng: np.random.Generator, empty: bool) -> dict:
    if empty:
        return {"target": {"file": {"sha256": sha}}, "behavior": {"apistats": {}}}
    n_proc = int(rng.integers(1, 4))
    pids = [str(1000 + 4 * int(rng.integers(0, 500)) + i) for i in range(n_proc)]
    stats: dict[str, dict[str, int]] = {pid: {} for pid in pids}
    for name, total in api_counts.items():
        for pid, part in zip(pids, _split_count(total, n_proc, rng)):
            if part:
                stats[pid][name] = part
    return {"target": {"file": {"sha256": sha}}, "behavior": {"apistats": stats}}


def vocabulary_order(totals: dict[str, int]) -> list[str]:
    """Descending total frequency, ties lexicographic; zero totals excluded."""
    return [name for name, n in sorted(totals.items(), key=lambda kv: (-kv[1], kv[0])) if n > 0]


@dataclass
class ReportCorpus:
    root: Path
    ground_truth: Dataset
    api_vocabulary: list[str]


def _dump(obj: dict) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def generate_reports(cfg: SynthConfig, out_dir: str | Path) -> ReportCorpus:
    """Emit manifest, one file/behavior/cuckoo document per sample, and ground truth.

    Feature space: six report counts followed by ``dim - 6`` API counts. Count
    means come from the blob centres scaled by ``COUNT_SCALE``; every sample's
    counts are rounded and written out so that ingest recovers them exactly.
    The ground-truth API columns follow the vocabulary order ingest derives.
    """
    if cfg.dim <= len(FIXED_FEATURES):
        raise InvalidConfig(f"report corpora need dim > {len(FIXED_FEATURES)}")
    blobs = generate_features(cfg)
    rng = np.random.default_rng([cfg.seed, 1])
    counts = np.floor(blobs.dataset.X * COUNT_SCALE + 0.5).astype(np.int64)
    zero = rng.random(len(counts)) < cfg.zero_activity_rate
    counts[zero] = 0
    apis = api_names(cfg.dim - len(FIXED_FEATURES))

    root = Path(out_dir)
    try:
        for sub in (FILE_DIR, BEHAVIOR_DIR, CUCKOO_DIR):
            (root / sub).mkdir(parents=True, exist_ok=True)
        ds = blobs.dataset
        country = {g.name: g.country for g in APT_GROUPS}
        with (root / MANIFEST_NAME).open("w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["sha256", "apt_group", "country"])
            for sha, label in zip(ds.ids, ds.labels):
                w.writerow([sha, label, country.get(label, "Unknown")])
        totals = {name: 0 for name in apis}
        per_sample_api = []
        for i, sha in enumerate(ds.ids):
            row = counts[i]
            api_counts = {name: int(v) for name, v in zip(apis, row[len(FIXED_FEATURES):]) if v > 0}
            for name, v in api_counts.items():
                totals[name] += v
            per_sample_api.append(api_counts)
            (root / FILE_DIR / f"{sha}.json").write_text(_dump(_file_report(sha, row, rng, bool(zero[i]))), encoding="utf-8")
            (root / BEHAVIOR_DIR / f"{sha}.json").write_text(_dump(_behavior_report(sha, row, rng, bool(zero[i]))), encoding="utf-8")
            (root / CUCKOO_DIR / f"{sha}.json").write_text(_dump(_cuckoo_report(sha, api_counts, rng, bool(zero[i]))), encoding="utf-8")
        vocab = vocabulary_order(totals)
        truth = np.zeros((len(ds), len(FIXED_FEATURES) + len(vocab)), dtype=np.float64)
        truth[:, : len(FIXED_FEATURES)] = counts[:, : len(FIXED_FEATURES)]
        for i, api_counts in enumerate(per_sample_api):
            for j, name in enumerate(vocab):
                truth[i, len(FIXED_FEATURES) + j] = api_counts.get(name, 0)
        gt = Dataset(ds.ids, ds.labels, truth)
        write_dataset_csv(gt, root / GROUND_TRUTH_NAME)
        (root / "api_vocabulary.json").write_text(json.dumps(vocab, indent=2) + "\n", encoding="utf-8")
    except OSError as exc:
        raise AptError(f"cannot write synthetic corpus to {root}: {exc}") from exc
    return ReportCorpus(root, gt, vocab)


def write_placeholder_manifest(path: str | Path) -> int:
    """Manifest with the reference per-group sizes and deterministic stand-in hashes.

    The real corpus hashes are not redistributed; these rows reproduce its
    group/country layout for exercising manifest handling.
    """
    n = 0
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sha256", "apt_group", "country"])
        for g in APT_GROUPS:
            for i in range(g.count):
                w.writerow([hashlib.sha256(f"placeholder:{g.name}:{i}".encode()).hexdigest(), g.name, g.country])
                n += 1
    return n
