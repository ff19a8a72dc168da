"""Segmenter backends: built-in oracles and the external-process bridge.

A backend turns (image, prompt) into a predicted :class:`BinaryMask`.  Four
in-process oracles cover testing without any model:

* ``oracle:identity``       echoes the ground truth it is handed
* ``oracle:boxfill``        fills the prompt box (or, with no box, the tight
                            box of the positive points)
* ``oracle:pointdisk:r=R``  union of radius-R disks around positive points
                            minus radius-R disks around negative points
* ``oracle:regiongrow:tol=T``
                            intensity flood fill from the positive points,
                            clipped to the box when one is present

``cmd:<command line>`` spawns an external adapter process and talks the
line protocol described in PROTOCOL.md: newline-delimited canonical JSON
records over the child's stdin/stdout, masks as run-length counts.
"""

from __future__ import annotations

import base64
import collections
import dataclasses
import io
import json
import queue
import shlex
import subprocess
import threading
from pathlib import Path

import numpy as np

from .errors import (
    BackendCrashedError,
    BackendError,
    HandshakeMismatchError,
    ProtocolError,
    RleLengthError,
    SpawnFailedError,
    TimeoutError_,
)
from .masks import BBox, BinaryMask
from .strategies import Prompt, PromptPoint

PROTOCOL_VERSION = "segprompt/1"


def canonical_json(obj) -> str:
    """The one JSON shape both sides must emit: sorted keys, no spaces."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


# ---------------------------------------------------------------------------
# Run-length codec.  Runs alternate background/foreground counts, starting
# with the background count (possibly 0), over the row-major flattening.


def rle_encode(mask: BinaryMask) -> list[int]:
    flat = mask.pixels.ravel()
    if flat.size == 0:
        return []
    changes = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate(([0], changes, [flat.size]))
    runs = np.diff(bounds).tolist()
    if flat[0]:
        runs.insert(0, 0)
    return [int(r) for r in runs]


def rle_decode(runs: list[int], width: int, height: int) -> BinaryMask:
    total = 0
    for r in runs:
        if not isinstance(r, int) or isinstance(r, bool) or r < 0:
            raise RleLengthError(f"runs must be non-negative integers, got {r!r}")
        total += r
    if total != width * height:
        raise RleLengthError(f"runs sum to {total}, expected {width}x{height}={width * height}")
    values = np.arange(len(runs)) % 2 == 1
    flat = np.repeat(values, runs)
    return BinaryMask(flat, width=width, height=height)


# ---------------------------------------------------------------------------
# Wire records.


@dataclasses.dataclass(frozen=True)
class SegmentRequest:
    request_id: int
    width: int
    height: int
    prompt: Prompt
    image_path: str | None = None
    image_b64: str | None = None

    def __post_init__(self):
        if (self.image_path is None) == (self.image_b64 is None):
            raise ValueError("exactly one of image_path and image_b64 is required")
        for p in self.prompt.points:
            if not (0 <= p.x < self.width and 0 <= p.y < self.height):
                raise ValueError(f"point ({p.x},{p.y}) outside {self.width}x{self.height} image")
        b = self.prompt.box
        if b is not None and not (b.x_max < self.width and b.y_max < self.height):
            raise ValueError(f"box {b} outside {self.width}x{self.height} image")

    def to_json(self) -> str:
        b = self.prompt.box
        prompt = {
            "box": [b.x_min, b.y_min, b.x_max, b.y_max] if b else None,
            "points": [
                {"x": p.x, "y": p.y, "label": 1 if p.positive else 0}
                for p in self.prompt.points
            ],
        }
        obj = {
            "type": "segment",
            "id": self.request_id,
            "width": self.width,
            "height": self.height,
            "prompt": prompt,
        }
        if self.image_path is not None:
            obj["image_path"] = self.image_path
        else:
            obj["image_b64"] = self.image_b64
        return canonical_json(obj)


def encode_image_b64(image: np.ndarray) -> str:
    """Inline transfer fallback: PNG bytes, base64."""
    from PIL import Image

    mode = "I;16" if image.dtype == np.uint16 else "L"
    buf = io.BytesIO()
    Image.fromarray(image, mode=mode).save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def hello_line() -> str:
    return canonical_json({"type": "hello", "protocol": PROTOCOL_VERSION})


# ---------------------------------------------------------------------------
# Oracle backends.


class OracleBackend:
    """Base for in-process backends; pure, shareable, nothing to close."""

    name = "oracle"

    def segment(self, image: np.ndarray, prompt: Prompt, *, gt: BinaryMask | None = None,
                image_path: str | None = None) -> BinaryMask:
        raise NotImplementedError

    def close(self) -> None:
        pass


class IdentityOracle(OracleBackend):
    """Echoes the ground truth: the perfect segmenter."""

    name = "oracle:identity"

    def segment(self, image, prompt, *, gt=None, image_path=None):
        if gt is None:
            raise BackendError("identity oracle needs the ground-truth side channel")
        return gt


class BoxFillOracle(OracleBackend):
    """Foreground = the prompt box interior.

    Without a box the tight box of the positive points is filled instead,
    so point-only strategies still get a well-defined answer; with neither
    a box nor positive points the prediction is empty.
    """

    name = "oracle:boxfill"

    def segment(self, image, prompt, *, gt=None, image_path=None):
        h, w = image.shape
        box = prompt.box
        if box is None:
            pos = prompt.positive_points
            if not pos:
                return BinaryMask(np.zeros((h, w), dtype=bool))
            box = BBox(min(p.x for p in pos), min(p.y for p in pos),
                       max(p.x for p in pos), max(p.y for p in pos))
        out = np.zeros((h, w), dtype=bool)
        out[box.y_min:box.y_max + 1, box.x_min:box.x_max + 1] = True
        return BinaryMask(out)


class PointDiskOracle(OracleBackend):
    """Union of radius-r disks (Euclidean, boundary included) around the
    positive points, minus the same disks around the negative points."""

    def __init__(self, radius: int):
        if radius < 1:
            raise ValueError("disk radius must be >= 1")
        self.radius = radius
        self.name = f"oracle:pointdisk:r={radius}"
        side = 2 * radius + 1
        offs = np.arange(side) - radius
        self._stamp = offs.reshape(-1, 1) ** 2 + offs.reshape(1, -1) ** 2 <= radius * radius

    def _paint(self, grid: np.ndarray, points, value: bool) -> None:
        r = self.radius
        h, w = grid.shape
        for p in points:
            y0, y1 = max(p.y - r, 0), min(p.y + r, h - 1) + 1
            x0, x1 = max(p.x - r, 0), min(p.x + r, w - 1) + 1
            sub = self._stamp[y0 - (p.y - r):y1 - (p.y - r), x0 - (p.x - r):x1 - (p.x - r)]
            if value:
                grid[y0:y1, x0:x1] |= sub
            else:
                grid[y0:y1, x0:x1] &= ~sub

    def segment(self, image, prompt, *, gt=None, image_path=None):
        out = np.zeros(image.shape, dtype=bool)
        self._paint(out, prompt.positive_points, True)
        self._paint(out, prompt.negative_points, False)
        return BinaryMask(out)


class RegionGrowOracle(OracleBackend):
    """4-connected flood fill from each positive point over pixels whose
    intensity is within tol of that seed's intensity; the union over seeds
    is the prediction.  A prompt box clips the growable region first, so
    seeds outside the box grow nothing.  Negative points are ignored."""

    def __init__(self, tolerance: int):
        if tolerance < 0:
            raise ValueError("tolerance must be >= 0")
        self.tolerance = tolerance
        self.name = f"oracle:regiongrow:tol={tolerance}"

    def segment(self, image, prompt, *, gt=None, image_path=None):
        h, w = image.shape
        out = np.zeros((h, w), dtype=bool)
        pos = prompt.positive_points
        if not pos:
            return BinaryMask(out)
        box_mask = None
        if prompt.box is not None:
            box_mask = np.zeros((h, w), dtype=bool)
            b = prompt.box
            box_mask[b.y_min:b.y_max + 1, b.x_min:b.x_max + 1] = True
        grid = image.astype(np.int64)
        # Seeds sharing an intensity value define the same admissible region,
        # so flood once per distinct value with all its seeds as sources.
        by_value: dict[int, list[PromptPoint]] = collections.defaultdict(list)
        for p in pos:
            by_value[int(grid[p.y, p.x])].append(p)
        for value, seeds in by_value.items():
            admissible = np.abs(grid - value) <= self.tolerance
            if box_mask is not None:
                admissible &= box_mask
            frontier = np.zeros((h, w), dtype=bool)
            for p in seeds:
                if admissible[p.y, p.x]:
                    frontier[p.y, p.x] = True
            region = frontier.copy()
            while frontier.any():
                grown = np.zeros((h, w), dtype=bool)
                grown[1:, :] |= frontier[:-1, :]
                grown[:-1, :] |= frontier[1:, :]
                grown[:, 1:] |= frontier[:, :-1]
                grown[:, :-1] |= frontier[:, 1:]
                frontier = grown & admissible & ~region
                region |= frontier
            out |= region
        return BinaryMask(out)


# ---------------------------------------------------------------------------
# External backend.


class _LineReader:
    """Pumps child stdout lines into a queue so reads can time out."""

    def __init__(self, stream):
        self._queue: queue.Queue = queue.Queue()
        self._thread = threading.Thread(target=self._pump, args=(stream,), daemon=True)
        self._thread.start()

    def _pump(self, stream):
        for raw in stream:
            self._queue.put(raw)
        self._queue.put(None)

    def read_line(self, timeout: float) -> str | None:
        """Next line without its newline, or None at end of stream."""
        try:
            raw = self._queue.get(timeout=timeout)
        except queue.Empty:
            raise TimeoutError_(timeout) from None
        if raw is None:
            return None
        return raw.rstrip("\n")


class ExternalBackend:
    """One adapter child process, one in-flight request at a time.

    The child is spawned lazily on first use and respawned after a crash
    or timeout; request ids increase across the life of this handle and
    reset when a fresh child is spawned.
    """

    def __init__(self, command: str, timeout_s: float = 30.0, env: dict | None = None,
                 inline_images: bool = False):
        self.command = command
        self.timeout_s = timeout_s
        self.env = env
        self.inline_images = inline_images
        self.name = f"cmd:{command}"
        self._proc: subprocess.Popen | None = None
        self._reader: _LineReader | None = None
        self._next_id = 1
        self.model_name: str | None = None

    # -- lifecycle

    def _spawn(self) -> None:
        argv = shlex.split(self.command)
        env = None
        if self.env is not None:
            import os

            env = dict(os.environ)
            env.update(self.env)
        try:
            self._proc = subprocess.Popen(
                argv,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                env=env,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise SpawnFailedError(f"cannot start {argv[0]!r}: {exc}") from exc
        self._reader = _LineReader(self._proc.stdout)
        self._next_id = 1
        self._send(hello_line())
        line = self._read(self.timeout_s, context="handshake")
        try:
            reply = json.loads(line)
        except json.JSONDecodeError:
            raise HandshakeMismatchError(f"handshake reply is not JSON: {line!r}") from None
        if reply.get("type") != "hello" or reply.get("protocol") != PROTOCOL_VERSION:
            raise HandshakeMismatchError(
                f"expected hello with protocol {PROTOCOL_VERSION!r}, got {line!r}"
            )
        self.model_name = reply.get("model")

    def _teardown(self) -> None:
        proc, self._proc, self._reader = self._proc, None, None
        if proc is None:
            return
        try:
            if proc.stdin:
                proc.stdin.close()
        except OSError:
            pass
        try:
            proc.wait(timeout=2.0)
        except subprocess.TimeoutExpired:
            proc.kill()
            proc.wait()

    def close(self) -> None:
        self._teardown()

    # -- plumbing

    def _send(self, line: str) -> None:
        assert self._proc is not None and self._proc.stdin is not None
        try:
            self._proc.stdin.write(line + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            self._teardown()
            raise BackendCrashedError(f"adapter closed its stdin pipe: {exc}") from exc

    def _read(self, timeout: float, context: str) -> str:
        assert self._reader is not None
        try:
            line = self._reader.read_line(timeout)
        except TimeoutError_:
            self._teardown()
            raise
        if line is None:
            self._teardown()
            raise BackendCrashedError(f"adapter exited during {context}")
        return line

    # -- requests

    def segment(self, image: np.ndarray, prompt: Prompt, *, gt: BinaryMask | None = None,
                image_path: str | None = None) -> BinaryMask:
        if self._proc is None or self._proc.poll() is not None:
            self._teardown()
            self._spawn()
        h, w = image.shape
        if image_path is not None and not self.inline_images:
            req = SegmentRequest(self._next_id, w, h, prompt, image_path=str(image_path))
        else:
            req = SegmentRequest(self._next_id, w, h, prompt, image_b64=encode_image_b64(image))
        self._next_id += 1
        self._send(req.to_json())
        line = self._read(self.timeout_s, context=f"request {req.request_id}")
        try:
            reply = json.loads(line)
        except json.JSONDecodeError:
            self._teardown()
            raise ProtocolError(f"response is not JSON: {line!r}") from None
        if reply.get("id") != req.request_id:
            self._teardown()
            raise ProtocolError(
                f"response id {reply.get('id')!r} does not match request {req.request_id}"
            )
        kind = reply.get("type")
        if kind == "error":
            raise BackendError(
                f"adapter error {reply.get('code', '?')}: {reply.get('message', '')}"
            )
        if kind != "mask":
            self._teardown()
            raise ProtocolError(f"unexpected record type {kind!r}")
        runs = reply.get("rle")
        if not isinstance(runs, list):
            self._teardown()
            raise ProtocolError("mask record lacks an rle list")
        return rle_decode(runs, w, h)


def parse_backend_spec(spec: str, timeout_s: float = 30.0):
    """Build a backend factory from its textual spec.

    Returns a zero-argument callable so the runner can create one handle
    per worker.  Known forms: oracle:identity, oracle:boxfill,
    oracle:pointdisk:r=R, oracle:regiongrow:tol=T, cmd:<command line>.
    """
    if spec == "oracle:identity":
        return IdentityOracle
    if spec == "oracle:boxfill":
        return BoxFillOracle
    if spec.startswith("oracle:pointdisk:"):
        tail = spec[len("oracle:pointdisk:"):]
        if not tail.startswith("r="):
            raise BackendError(f"pointdisk needs r=, got {spec!r}")
        radius = _positive_int(tail[2:], spec)
        return lambda: PointDiskOracle(radius)
    if spec.startswith("oracle:regiongrow:"):
        tail = spec[len("oracle:regiongrow:"):]
        if not tail.startswith("tol="):
            raise BackendError(f"regiongrow needs tol=, got {spec!r}")
        tol = _positive_int(tail[4:], spec, allow_zero=True)
        return lambda: RegionGrowOracle(tol)
    if spec.startswith("cmd:"):
        command = spec[4:].strip()
        if not command:
            raise BackendError("cmd: backend needs a command line")
        return lambda: ExternalBackend(command, timeout_s=timeout_s)
    raise BackendError(f"unknown backend spec {spec!r}")


def _positive_int(raw: str, spec: str, allow_zero: bool = False) -> int:
    try:
        value = int(raw)
    except ValueError:
        raise BackendError(f"bad integer {raw!r} in backend spec {spec!r}") from None
    if value < 0 or (value == 0 and not allow_zero):
        raise BackendError(f"parameter must be {'>= 0' if allow_zero else '>= 1'} in {spec!r}")
    return value


# ---------------------------------------------------------------------------
# Transcript-driven conformance checking.


@dataclasses.dataclass(frozen=True)
class TranscriptResult:
    name: str
    ok: bool
    detail: str


def _subset_match(expected, actual) -> bool:
    """True when every key in expected appears in actual with an equal value
    (recursively); actual may carry extra keys."""
    if isinstance(expected, dict):
        return isinstance(actual, dict) and all(
            k in actual and _subset_match(v, actual[k]) for k, v in expected.items()
        )
    if isinstance(expected, list):
        return (
            isinstance(actual, list)
            and len(actual) == len(expected)
            and all(_subset_match(e, a) for e, a in zip(expected, actual))
        )
    return expected == actual


def run_transcript(command: str, path: Path, timeout_s: float = 10.0) -> TranscriptResult:
    """Replay one conformance transcript against an adapter command.

    Lines starting with `> ` are sent verbatim; `< ` lines must match the
    adapter's next output line byte for byte; `~ ` lines are compared as a
    JSON subset (every listed key must be present and equal).  Blank lines
    and `#` comments are skipped.
    """
    path = Path(path)
    name = path.stem
    proc = None
    try:
        try:
            proc = subprocess.Popen(
                shlex.split(command),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            return TranscriptResult(name, False, f"cannot start adapter: {exc}")
        reader = _LineReader(proc.stdout)
        with open(path) as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.rstrip("\n")
                if not line.strip() or line.startswith("#"):
                    continue
                tag, payload = line[:2], line[2:]
                if tag == "> ":
                    try:
                        proc.stdin.write(payload + "\n")
                        proc.stdin.flush()
                    except (BrokenPipeError, OSError):
                        return TranscriptResult(name, False, f"adapter pipe closed at line {lineno}")
                elif tag in ("< ", "~ "):
                    try:
                        got = reader.read_line(timeout_s)
                    except TimeoutError_:
                        return TranscriptResult(
                            name, False, f"no response within {timeout_s}s at line {lineno}"
                        )
                    if got is None:
                        return TranscriptResult(name, False, f"adapter exited at line {lineno}")
                    if tag == "< ":
                        if got != payload:
                            return TranscriptResult(
                                name, False,
                                f"line {lineno}: expected {payload!r}, got {got!r}"
                            )
                    else:
                        try:
                            actual = json.loads(got)
                        except json.JSONDecodeError:
                            return TranscriptResult(name, False, f"line {lineno}: reply is not JSON: {got!r}")
                        if not _subset_match(json.loads(payload), actual):
                            return TranscriptResult(
                                name, False,
                                f"line {lineno}: {got!r} lacks required fields of {payload!r}"
                            )
                else:
                    return TranscriptResult(name, False, f"line {lineno}: unknown tag {line[:2]!r}")
        return TranscriptResult(name, True, "ok")
    finally:
        if proc is not None:
            try:
                proc.stdin.close()
            except OSError:
                pass
            try:
                proc.wait(timeout=2.0)
            except subprocess.TimeoutExpired:
                proc.kill()
                proc.wait()


def packaged_transcripts() -> list[Path]:
    from importlib import resources

    root = resources.files("segprompt") / "transcripts"
    return sorted(p for p in root.iterdir() if p.name.endswith(".txt"))  # type: ignore[attr-defined]


def protocol_check(command: str, transcripts: list[Path] | None = None,
                   timeout_s: float = 10.0) -> list[TranscriptResult]:
    paths = transcripts if transcripts is not None else packaged_transcripts()
    return [run_transcript(command, p, timeout_s) for p in paths]
