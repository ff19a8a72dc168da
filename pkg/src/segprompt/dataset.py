"""Dataset ingestion: manifests, patch loading, patient-wise splitting.

A manifest is a small text file tying patches to their files and patients:

    #segprompt-manifest v1
    #labels background=0,tumor=1,stroma=2
    #target tumor
    patch_id,image,mask,patient_id
    a001,images/a001.png,masks/a001.png,P07

Comment lines carry the version, the label-name-to-value table and the
label names mapped to foreground; the body is plain CSV with relative (or
absolute) paths resolved against the manifest's directory.  Images are
8/16-bit grayscale or 8-bit RGB rasters; label masks are single-channel
8-bit rasters holding one small integer per class.
"""

from __future__ import annotations

import csv
import dataclasses
from fractions import Fraction
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import (
    DecodeError,
    DimensionMismatchError,
    DuplicatePatchIdError,
    ManifestError,
    MissingFileError,
    ParseError,
    TooFewPatientsError,
)
from .masks import BinaryMask, LabelMask, binarize
from .rng import SeededRng

MANIFEST_VERSION = "#segprompt-manifest v1"
SPLIT_VERSION = "#segprompt-split v1"
_BODY_HEADER = ["patch_id", "image", "mask", "patient_id"]


@dataclasses.dataclass(frozen=True)
class ManifestEntry:
    patch_id: str
    image_path: Path
    mask_path: Path
    patient_id: str


@dataclasses.dataclass(frozen=True)
class DatasetManifest:
    entries: tuple[ManifestEntry, ...]
    label_set: dict[str, int]
    target_labels: frozenset[int]
    base_dir: Path

    def __post_init__(self):
        object.__setattr__(self, "_by_id", {e.patch_id: e for e in self.entries})

    def patch_ids(self) -> list[str]:
        return [e.patch_id for e in self.entries]

    def entry(self, patch_id: str) -> ManifestEntry:
        try:
            return self._by_id[patch_id]
        except KeyError:
            raise ManifestError(f"no patch {patch_id!r} in manifest") from None

    def patients(self) -> dict[str, list[str]]:
        """patient id -> patch ids, in manifest order."""
        out: dict[str, list[str]] = {}
        for e in self.entries:
            out.setdefault(e.patient_id, []).append(e.patch_id)
        return out


def write_manifest_file(path: Path, rows, label_set: dict[str, int],
                        target_labels: tuple[str, ...]) -> None:
    """Write a v1 manifest.  rows: iterable of (patch_id, image, mask, patient_id)
    with paths as stored (normally relative to the manifest directory)."""
    path = Path(path)
    for name in target_labels:
        if name not in label_set:
            raise ManifestError(f"target label {name!r} not in label set")
    with open(path, "w", newline="") as fh:
        fh.write(MANIFEST_VERSION + "\n")
        fh.write("#labels " + ",".join(f"{k}={v}" for k, v in label_set.items()) + "\n")
        fh.write("#target " + ",".join(target_labels) + "\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(_BODY_HEADER)
        for row in rows:
            writer.writerow(row)


def _parse_labels_line(raw: str, lineno: int) -> dict[str, int]:
    out: dict[str, int] = {}
    for item in raw.split(","):
        name, eq, value = item.partition("=")
        name = name.strip()
        if not eq or not name:
            raise ParseError(f"bad label entry {item!r}", line=lineno)
        try:
            out[name] = int(value)
        except ValueError:
            raise ParseError(f"label value for {name!r} is not an integer", line=lineno) from None
    if not out:
        raise ParseError("empty label set", line=lineno)
    return out


def load_manifest(path: Path) -> DatasetManifest:
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(str(path))
    base = path.parent
    label_set: dict[str, int] | None = None
    target_names: list[str] | None = None
    body: list[tuple[int, str]] = []
    with open(path, newline="") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip() != MANIFEST_VERSION:
        raise ParseError(f"first line must be {MANIFEST_VERSION!r}", line=1)
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        if line.startswith("#labels "):
            label_set = _parse_labels_line(line[len("#labels "):], lineno)
        elif line.startswith("#target "):
            target_names = [n.strip() for n in line[len("#target "):].split(",") if n.strip()]
        elif line.startswith("#"):
            continue
        else:
            body.append((lineno, line))
    if label_set is None:
        raise ParseError("manifest has no #labels line", line=1)
    if not target_names:
        raise ParseError("manifest has no #target line", line=1)
    unknown = [n for n in target_names if n not in label_set]
    if unknown:
        raise ParseError(f"target labels {unknown} not in label set", line=1)

    reader = csv.reader(line for _, line in body)
    entries: list[ManifestEntry] = []
    seen: set[str] = set()
    for (lineno, _), row in zip(body, reader):
        if row == _BODY_HEADER:
            continue
        if len(row) != 4:
            raise ParseError(f"expected 4 columns, got {len(row)}", line=lineno)
        pid, image_rel, mask_rel, patient = (c.strip() for c in row)
        if not pid or not patient:
            raise ParseError("patch id and patient id must be non-empty", line=lineno)
        if pid in seen:
            raise DuplicatePatchIdError(pid)
        seen.add(pid)
        image_path = (base / image_rel).resolve()
        mask_path = (base / mask_rel).resolve()
        for p in (image_path, mask_path):
            if not p.is_file():
                raise MissingFileError(str(p))
        entries.append(ManifestEntry(pid, image_path, mask_path, patient))
    return DatasetManifest(
        entries=tuple(entries),
        label_set=label_set,
        target_labels=frozenset(label_set[n] for n in target_names),
        base_dir=base,
    )


def _decode_image(path: Path) -> np.ndarray:
    try:
        with Image.open(path) as im:
            if im.mode in ("L", "P"):
                arr = np.asarray(im.convert("L"))
            elif im.mode in ("I;16", "I"):
                arr = np.asarray(im, dtype=np.uint16)
            elif im.mode in ("RGB", "RGBA"):
                arr = np.asarray(im.convert("L"))
            else:
                raise DecodeError(f"unsupported image mode {im.mode!r} in {path}")
    except DecodeError:
        raise
    except Exception as exc:
        raise DecodeError(f"cannot decode {path}: {exc}") from exc
    return np.ascontiguousarray(arr)


def _decode_labels(path: Path) -> np.ndarray:
    try:
        with Image.open(path) as im:
            if im.mode not in ("L", "P"):
                raise DecodeError(f"label mask {path} must be single-channel 8-bit, got mode {im.mode!r}")
            arr = np.asarray(im.convert("L") if im.mode == "P" else im)
    except DecodeError:
        raise
    except Exception as exc:
        raise DecodeError(f"cannot decode {path}: {exc}") from exc
    return np.ascontiguousarray(arr)


def load_patch(manifest: DatasetManifest, patch_id: str) -> tuple[np.ndarray, BinaryMask]:
    """(intensity grid, binarized ground truth) for one patch.

    Deterministic: repeated loads return bit-identical arrays.
    """
    entry = manifest.entry(patch_id)
    image = _decode_image(entry.image_path)
    labels = _decode_labels(entry.mask_path)
    if image.shape != labels.shape:
        raise DimensionMismatchError(
            f"patch {patch_id!r}: image is {image.shape[1]}x{image.shape[0]} "
            f"but mask is {labels.shape[1]}x{labels.shape[0]}"
        )
    gt = binarize(LabelMask(labels), manifest.target_labels, label_set=set(manifest.label_set.values()))
    return image, gt


@dataclasses.dataclass(frozen=True)
class SplitAssignment:
    train: frozenset[str]
    test: frozenset[str]
    seed: int


def split_by_patient(manifest: DatasetManifest, train_fraction: float, seed: int) -> SplitAssignment:
    """Patient-disjoint train/test split targeting train_fraction of patches.

    Patients are shuffled by a stream derived from the seed, then assigned
    to train in shuffle order until the train side holds at least
    train_fraction of all patches.  The last patient is never assigned to
    train, so the test side is always non-empty; the achieved fraction is
    therefore within one patient's patch count of the target.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must be in (0, 1), got {train_fraction}")
    patients = manifest.patients()
    if len(patients) < 2:
        raise TooFewPatientsError(
            f"patient-wise splitting needs at least 2 patients, got {len(patients)}"
        )
    order = sorted(patients)
    SeededRng(seed, "split").shuffle(order)
    total = len(manifest.entries)
    threshold = Fraction(str(train_fraction)) * total
    train_patients: set[str] = set()
    count = 0
    for i, patient in enumerate(order):
        if count >= threshold:
            break
        if len(order) - i == 1:
            break
        train_patients.add(patient)
        count += len(patients[patient])
    train = frozenset(e.patch_id for e in manifest.entries if e.patient_id in train_patients)
    test = frozenset(e.patch_id for e in manifest.entries if e.patient_id not in train_patients)
    return SplitAssignment(train=train, test=test, seed=seed)


def write_split(split: SplitAssignment, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(SPLIT_VERSION + "\n")
        fh.write(f"#seed {split.seed}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["patch_id", "side"])
        for pid in sorted(split.train):
            writer.writerow([pid, "train"])
        for pid in sorted(split.test):
            writer.writerow([pid, "test"])


def read_split(path: Path) -> SplitAssignment:
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(str(path))
    with open(path, newline="") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip() != SPLIT_VERSION:
        raise ParseError(f"first line must be {SPLIT_VERSION!r}", line=1)
    seed = 0
    train: set[str] = set()
    test: set[str] = set()
    body: list[tuple[int, str]] = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        if line.startswith("#seed "):
            try:
                seed = int(line[len("#seed "):])
            except ValueError:
                raise ParseError("bad #seed value", line=lineno) from None
        elif line.startswith("#"):
            continue
        else:
            body.append((lineno, line))
    for (lineno, _), row in zip(body, csv.reader(line for _, line in body)):
        if row == ["patch_id", "side"]:
            continue
        if len(row) != 2 or row[1] not in ("train", "test"):
            raise ParseError(f"expected 'patch_id,train|test', got {row}", line=lineno)
        (train if row[1] == "train" else test).add(row[0])
    overlap = train & test
    if overlap:
        raise ParseError(f"patches on both sides: {sorted(overlap)[:3]}", line=1)
    return SplitAssignment(train=frozenset(train), test=frozenset(test), seed=seed)


def scan_flat_tree(root: Path, image_dir: str = "images", mask_dir: str = "masks",
                   patient_pattern: str = r"^([^_]+)") -> list[tuple[str, str, str, str]]:
    """Manifest rows for a flat layout: root/images/*.png + root/masks/<same name>.

    The patient id is the first regex group matched against the file stem
    (default: everything before the first underscore).
    """
    import re

    root = Path(root)
    pat = re.compile(patient_pattern)
    images = sorted((root / image_dir).glob("*"))
    if not images:
        raise ManifestError(f"no images under {root / image_dir}")
    rows = []
    for img in images:
        mask = root / mask_dir / img.name
        if not mask.is_file():
            raise MissingFileError(str(mask))
        m = pat.search(img.stem)
        if not m or not m.group(1):
            raise ManifestError(f"cannot extract patient id from {img.stem!r} with {patient_pattern!r}")
        rows.append((img.stem, f"{image_dir}/{img.name}", f"{mask_dir}/{img.name}", m.group(1)))
    return rows


def scan_nested_tree(root: Path, image_dir: str = "images", mask_dir: str = "masks") -> list[tuple[str, str, str, str]]:
    """Manifest rows for a per-patient layout: root/<patient>/images/*.png
    plus root/<patient>/masks/<same name>.  Patch id is <patient>-<stem>."""
    root = Path(root)
    rows = []
    for patient_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        for img in sorted((patient_dir / image_dir).glob("*")):
            mask = patient_dir / mask_dir / img.name
            if not mask.is_file():
                raise MissingFileError(str(mask))
            rows.append((
                f"{patient_dir.name}-{img.stem}",
                f"{patient_dir.name}/{image_dir}/{img.name}",
                f"{patient_dir.name}/{mask_dir}/{img.name}",
                patient_dir.name,
            ))
    if not rows:
        raise ManifestError(f"no patient directories with {image_dir}/ found under {root}")
    return rows
