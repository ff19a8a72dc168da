"""Experiment execution: a strategy grid over a test split, one record per
(patch, strategy, draw).

Determinism contract: every task derives its own random stream from
(global seed, patch id, strategy string, draw index), so the records file
is byte-identical for any worker count, and adding or removing strategies,
patches or draws never perturbs the remaining streams.  Output rows follow
canonical order: patch id (lexicographic), then strategy (config order),
then draw index.
"""

from __future__ import annotations

import csv
import dataclasses
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

try:
    import tomllib
except ImportError:  # Python 3.10
    import tomli as tomllib

from .bridge import parse_backend_spec
from .dataset import DatasetManifest, load_manifest, load_patch, split_by_patient
from .errors import (
    BackendCrashedError,
    BackendError,
    ConfigError,
    EmptyMaskError,
    InsufficientBackgroundError,
    InsufficientForegroundError,
    MissingFileError,
    ParseError,
    ProtocolError,
    RleLengthError,
    SegPromptError,
    TimeoutError_,
)
from .metrics import score_pair
from .rng import SeededRng
from .strategies import StrategySpec, build_prompt, parse_strategy

RECORDS_VERSION = "#segprompt-records v1"
_COLUMNS = [
    "patch_id", "patient_id", "strategy", "draw", "status", "reason",
    "dice", "iou", "points", "positives", "negatives", "box",
]

STATUS_OK = "ok"
STATUS_SKIPPED = "skipped"
STATUS_FAILED = "failed"


@dataclasses.dataclass(frozen=True)
class EvalRecord:
    patch_id: str
    patient_id: str
    strategy: str
    draw: int
    status: str
    reason: str = ""
    dice: float | None = None
    iou: float | None = None
    points: int = 0
    positives: int = 0
    negatives: int = 0
    box: bool = False

    def __post_init__(self):
        if self.status not in (STATUS_OK, STATUS_SKIPPED, STATUS_FAILED):
            raise ValueError(f"bad status {self.status!r}")
        if (self.status == STATUS_OK) != (self.dice is not None and self.iou is not None):
            raise ValueError("dice/iou must be present exactly when status is ok")


@dataclasses.dataclass(frozen=True)
class ExperimentConfig:
    manifest: Path
    strategies: tuple[str, ...]
    seed: int = 0
    split_seed: int = 0
    backend: str = "oracle:identity"
    workers: int = 1
    timeout_s: float = 30.0
    draws: int = 1
    train_fraction: float = 0.8

    def __post_init__(self):
        if not self.strategies:
            raise ConfigError("strategy list must be non-empty")
        for s in self.strategies:
            try:
                parse_strategy(s)
            except SegPromptError as exc:
                raise ConfigError(f"bad strategy {s!r}: {exc}") from exc
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.draws < 1:
            raise ConfigError("draws must be >= 1")
        if self.timeout_s <= 0:
            raise ConfigError("timeout_s must be positive")


_CONFIG_KEYS = {
    "manifest": str,
    "strategies": list,
    "seed": int,
    "split_seed": int,
    "backend": str,
    "workers": int,
    "timeout_s": (int, float),
    "draws": int,
    "train_fraction": (int, float),
}


def load_config(path: Path) -> ExperimentConfig:
    """Read an experiment config from a TOML file.

    Required keys: manifest (path, relative to the config file) and
    strategies (list of canonical strategy strings).  Optional keys with
    defaults: seed, split_seed, backend, workers, timeout_s, draws,
    train_fraction.
    """
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(str(path))
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    unknown = set(raw) - set(_CONFIG_KEYS) - {"effort"}
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    for key, types in _CONFIG_KEYS.items():
        if key in raw and not isinstance(raw[key], types):
            raise ConfigError(f"config key {key!r} has wrong type {type(raw[key]).__name__}")
    if "manifest" not in raw:
        raise ConfigError("config needs a manifest path")
    if "strategies" not in raw:
        raise ConfigError("config needs a strategies list")
    strategies = raw["strategies"]
    if not all(isinstance(s, str) for s in strategies):
        raise ConfigError("strategies must be a list of strings")
    kwargs = {k: raw[k] for k in _CONFIG_KEYS if k in raw and k not in ("manifest", "strategies")}
    if "timeout_s" in kwargs:
        kwargs["timeout_s"] = float(kwargs["timeout_s"])
    if "train_fraction" in kwargs:
        kwargs["train_fraction"] = float(kwargs["train_fraction"])
    manifest = Path(raw["manifest"])
    if not manifest.is_absolute():
        manifest = (path.parent / manifest).resolve()
    return ExperimentConfig(manifest=manifest, strategies=tuple(strategies), **kwargs)


@dataclasses.dataclass
class RunLog:
    lines: list[str] = dataclasses.field(default_factory=list)
    ok: int = 0
    skipped: int = 0
    failed: int = 0
    wall_s: float = 0.0

    def note(self, message: str) -> None:
        self.lines.append(message)

    def summary(self) -> str:
        return (
            f"{self.ok} ok, {self.skipped} skipped, {self.failed} failed "
            f"in {self.wall_s:.2f}s"
        )


def _prompt_shape(prompt) -> dict:
    pos = len(prompt.positive_points)
    neg = len(prompt.negative_points)
    return {
        "points": pos + neg,
        "positives": pos,
        "negatives": neg,
        "box": prompt.box is not None,
    }


def _evaluate_one(manifest: DatasetManifest, backend, seed: int, patch_cache,
                  patch_id: str, strategy: str, spec: StrategySpec, draw: int) -> EvalRecord:
    patient = manifest.entry(patch_id).patient_id
    image, gt = patch_cache(patch_id)
    rng = SeededRng(seed, "prompt", patch_id, strategy, str(draw))
    try:
        prompt = build_prompt(spec, gt, rng)
    except (InsufficientForegroundError, InsufficientBackgroundError, EmptyMaskError) as exc:
        return EvalRecord(patch_id, patient, strategy, draw, STATUS_SKIPPED,
                          reason=f"{type(exc).__name__}: {exc}")
    shape = _prompt_shape(prompt)
    try:
        pred = backend.segment(image, prompt, gt=gt,
                               image_path=str(manifest.entry(patch_id).image_path))
    except (BackendError, BackendCrashedError, ProtocolError, TimeoutError_, RleLengthError) as exc:
        return EvalRecord(patch_id, patient, strategy, draw, STATUS_FAILED,
                          reason=f"{type(exc).__name__}: {exc}", **shape)
    scores = score_pair(pred, gt)
    return EvalRecord(patch_id, patient, strategy, draw, STATUS_OK,
                      dice=scores.dice, iou=scores.iou, **shape)


def run_experiment(config: ExperimentConfig, *, side: str = "test",
                   log: RunLog | None = None) -> tuple[list[EvalRecord], RunLog]:
    """Evaluate the configured grid and return records in canonical order.

    `side` picks which half of the patient split to evaluate ("test" by
    default, "train" or "all" for diagnostics).  Per-task failures become
    failed records; only setup problems (bad config, unreadable manifest)
    raise.
    """
    if side not in ("test", "train", "all"):
        raise ConfigError(f"side must be test, train or all, got {side!r}")
    log = log if log is not None else RunLog()
    started = time.monotonic()
    manifest = load_manifest(config.manifest)
    if side == "all":
        wanted = set(manifest.patch_ids())
    else:
        split = split_by_patient(manifest, config.train_fraction, config.split_seed)
        wanted = set(split.test if side == "test" else split.train)
    patch_ids = sorted(pid for pid in manifest.patch_ids() if pid in wanted)
    specs = [(s, parse_strategy(s)) for s in config.strategies]
    tasks = [
        (pid, strategy, spec, draw)
        for pid in patch_ids
        for strategy, spec in specs
        for draw in range(config.draws)
    ]
    log.note(f"evaluating {len(patch_ids)} patches x {len(specs)} strategies "
             f"x {config.draws} draw(s) on backend {config.backend}")

    factory = parse_backend_spec(config.backend, timeout_s=config.timeout_s)
    local = threading.local()
    handles: list = []

    def get_backend():
        if not hasattr(local, "backend"):
            local.backend = factory()
            handles.append(local.backend)
        return local.backend

    cache_lock = threading.Lock()
    cache: dict[str, tuple] = {}

    def patch_cache(pid: str):
        with cache_lock:
            if pid in cache:
                return cache[pid]
        loaded = load_patch(manifest, pid)
        with cache_lock:
            cache.setdefault(pid, loaded)
            if len(cache) > 64:
                cache.pop(next(iter(cache)))
        return loaded

    def work(task):
        pid, strategy, spec, draw = task
        return _evaluate_one(manifest, get_backend(), config.seed, patch_cache,
                             pid, strategy, spec, draw)

    try:
        if config.workers == 1:
            records = [work(t) for t in tasks]
        else:
            with ThreadPoolExecutor(max_workers=config.workers) as pool:
                records = list(pool.map(work, tasks))
    finally:
        for h in handles:
            h.close()

    for rec in records:
        if rec.status == STATUS_OK:
            log.ok += 1
        elif rec.status == STATUS_SKIPPED:
            log.skipped += 1
            log.note(f"skipped {rec.patch_id} {rec.strategy} draw {rec.draw}: {rec.reason}")
        else:
            log.failed += 1
            log.note(f"failed {rec.patch_id} {rec.strategy} draw {rec.draw}: {rec.reason}")
    log.wall_s = time.monotonic() - started
    return records, log


def write_records(records: list[EvalRecord], path: Path) -> None:
    """Records file: versioned header comment, then CSV.  Scores keep full
    float precision (shortest round-tripping decimal form)."""
    with open(path, "w", newline="") as fh:
        fh.write(RECORDS_VERSION + "\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(_COLUMNS)
        for r in records:
            writer.writerow([
                r.patch_id, r.patient_id, r.strategy, r.draw, r.status, r.reason,
                "" if r.dice is None else repr(r.dice),
                "" if r.iou is None else repr(r.iou),
                r.points, r.positives, r.negatives,
                "true" if r.box else "false",
            ])


def read_records(path: Path) -> list[EvalRecord]:
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(str(path))
    with open(path, newline="") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip() != RECORDS_VERSION:
        raise ParseError(f"first line must be {RECORDS_VERSION!r}", line=1)
    body = [(i, ln) for i, ln in enumerate(lines[1:], start=2)
            if ln.strip() and not ln.startswith("#")]
    out: list[EvalRecord] = []
    for (lineno, _), row in zip(body, csv.reader(ln for _, ln in body)):
        if row == _COLUMNS:
            continue
        if len(row) != len(_COLUMNS):
            raise ParseError(f"expected {len(_COLUMNS)} columns, got {len(row)}", line=lineno)
        try:
            out.append(EvalRecord(
                patch_id=row[0], patient_id=row[1], strategy=row[2],
                draw=int(row[3]), status=row[4], reason=row[5],
                dice=float(row[6]) if row[6] else None,
                iou=float(row[7]) if row[7] else None,
                points=int(row[8]), positives=int(row[9]), negatives=int(row[10]),
                box=row[11] == "true",
            ))
        except ValueError as exc:
            raise ParseError(str(exc), line=lineno) from exc
    return out
