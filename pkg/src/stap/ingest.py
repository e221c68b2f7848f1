"""
Frame sources, sampling, model-space resize and window assembly.

Two on-disk source formats are supported:

* packed raw video: a 25-byte little-endian header
  ``{magic "STAP1", width u32, height u32, frame_count u64, fps_milli u32}``
  followed by ``frame_count`` consecutive RGB8 planes;
* frame directory: ``frame_%08d.rgb`` files plus a ``meta`` text file with
  ``width``, ``height`` and ``fps`` lines (``key=value``).
"""

from __future__ import annotations

import enum
import os
import re
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, Callable, Iterable, Iterator

import numpy as np

from .model import (
    DEFAULT_WINDOW_SIZE,
    MODEL_SIZE,
    Frame,
    InvalidFrame,
    SequenceWindow,
    _ParseMixin,
)

MAGIC = b"STAP1"
HEADER = struct.Struct("<5sIIQI")
FRAME_FILE_RE = re.compile(r"^frame_(\d{8})\.rgb$")


class SourceError(Exception):
    """A frame could not be decoded; ``position`` is the source frame index."""

    def __init__(self, message: str, position: int | None = None):
        super().__init__(message)
        self.position = position


class TailPolicy(_ParseMixin, enum.Enum):
    DROP = "drop"
    PAD_LAST = "pad-last"


@dataclass(frozen=True)
class SamplingPolicy:
    frame_interval: int = 1
    window_size: int = DEFAULT_WINDOW_SIZE
    window_stride: int | None = None
    tail_policy: TailPolicy = TailPolicy.DROP

    def __post_init__(self) -> None:
        if self.window_stride is None:
            object.__setattr__(self, "window_stride", self.window_size)
        object.__setattr__(self, "tail_policy", TailPolicy.parse(self.tail_policy))
        for name in ("frame_interval", "window_size", "window_stride"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ValueError(f"{name} must be an integer >= 1, got {value!r}")

    def to_dict(self) -> dict:
        return {
            "frame_interval": self.frame_interval,
            "window_size": self.window_size,
            "window_stride": self.window_stride,
            "tail_policy": self.tail_policy.value,
        }


# --------------------------------------------------------------------------
# sources


class FrameSource:
    """Base class: an iterable of frames in strictly increasing index order."""

    width: int
    height: int
    fps: float
    finite: bool = True

    def __iter__(self) -> Iterator[Frame]:
        raise NotImplementedError

    def timestamp(self, index: int) -> float:
        return index * 1000.0 / self.fps

    def describe(self) -> dict:
        return {
            "kind": type(self).__name__,
            "width": self.width,
            "height": self.height,
            "fps": self.fps,
        }


def read_packed_header(fh: BinaryIO) -> tuple[int, int, int, float]:
    raw = fh.read(HEADER.size)
    if len(raw) != HEADER.size:
        raise SourceError("truncated packed video header", position=None)
    magic, width, height, count, fps_milli = HEADER.unpack(raw)
    if magic != MAGIC:
        raise SourceError(f"bad magic {magic!r}, expected {MAGIC!r}", position=None)
    if fps_milli == 0:
        raise SourceError("fps_milli must be positive", position=None)
    return width, height, count, fps_milli / 1000.0


class PackedVideoSource(FrameSource):
    def __init__(self, path: str | os.PathLike):
        self.path = Path(path)
        with open(self.path, "rb") as fh:
            self.width, self.height, self.frame_count, self.fps = read_packed_header(fh)

    def __iter__(self) -> Iterator[Frame]:
        plane = self.width * self.height * 3
        with open(self.path, "rb") as fh:
            fh.seek(HEADER.size)
            for index in range(self.frame_count):
                buf = fh.read(plane)
                if len(buf) != plane:
                    raise SourceError(
                        f"{self.path}: frame {index} truncated ({len(buf)}/{plane} bytes)",
                        position=index,
                    )
                px = np.frombuffer(buf, dtype=np.uint8).reshape(self.height, self.width, 3)
                yield Frame(index, self.timestamp(index), px)

    def describe(self) -> dict:
        d = super().describe()
        d.update(path=str(self.path.resolve()), frame_count=self.frame_count)
        return d


def write_packed_video(
    path: str | os.PathLike, frames: Iterable[Frame | np.ndarray], fps: float = 30.0
) -> int:
    """Write frames to a packed raw video file; returns the frame count."""
    planes = [f.pixels if isinstance(f, Frame) else np.asarray(f, dtype=np.uint8) for f in frames]
    if not planes:
        raise ValueError("cannot write an empty video")
    height, width = planes[0].shape[:2]
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(MAGIC, width, height, len(planes), int(round(fps * 1000))))
        for p in planes:
            if p.shape != (height, width, 3):
                raise ValueError(f"frame shape {p.shape} differs from {(height, width, 3)}")
            fh.write(np.ascontiguousarray(p, dtype=np.uint8).tobytes())
    return len(planes)


def _read_meta(path: Path) -> dict[str, str]:
    meta = {}
    for line in path.read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=") if "=" in line else line.partition(" ")
        meta[key.strip().lower()] = value.strip()
    return meta


class FrameDirectorySource(FrameSource):
    def __init__(self, path: str | os.PathLike):
        self.path = Path(path)
        meta_path = self.path / "meta"
        if not meta_path.is_file():
            raise SourceError(f"{self.path}: missing meta file")
        meta = _read_meta(meta_path)
        try:
            self.width = int(meta["width"])
            self.height = int(meta["height"])
            self.fps = float(meta.get("fps", 30))
        except (KeyError, ValueError) as exc:
            raise SourceError(f"{meta_path}: bad meta ({exc})") from exc
        indexed = []
        for name in os.listdir(self.path):
            m = FRAME_FILE_RE.match(name)
            if m:
                indexed.append((int(m.group(1)), name))
        self.files = sorted(indexed)

    def __iter__(self) -> Iterator[Frame]:
        plane = self.width * self.height * 3
        for index, name in self.files:
            buf = (self.path / name).read_bytes()
            if len(buf) != plane:
                raise SourceError(
                    f"{name}: expected {plane} bytes, got {len(buf)}", position=index
                )
            px = np.frombuffer(buf, dtype=np.uint8).reshape(self.height, self.width, 3)
            yield Frame(index, self.timestamp(index), px)

    def describe(self) -> dict:
        d = super().describe()
        d.update(path=str(self.path.resolve()), frame_count=len(self.files))
        return d


def write_frame_directory(
    path: str | os.PathLike, frames: Iterable[Frame | np.ndarray], fps: float = 30.0
) -> int:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    count = 0
    shape = None
    for i, f in enumerate(frames):
        index = f.index if isinstance(f, Frame) else i
        px = f.pixels if isinstance(f, Frame) else np.asarray(f, dtype=np.uint8)
        shape = shape or px.shape
        (path / f"frame_{index:08d}.rgb").write_bytes(np.ascontiguousarray(px).tobytes())
        count += 1
    if shape is None:
        raise ValueError("cannot write an empty frame directory")
    (path / "meta").write_text(f"width={shape[1]}\nheight={shape[0]}\nfps={fps:g}\n")
    return count


class SyntheticSource(FrameSource):
    """
    Frames produced by ``make_pixels(index) -> (h, w, 3) uint8``.

    With ``count=None`` the source is continuous and never ends.
    """

    def __init__(
        self,
        make_pixels: Callable[[int], np.ndarray],
        count: int | None,
        fps: float = 30.0,
    ):
        self.make_pixels = make_pixels
        self.count = count
        self.fps = fps
        self.finite = count is not None
        first = np.asarray(make_pixels(0))
        self.height, self.width = first.shape[:2]

    def __iter__(self) -> Iterator[Frame]:
        index = 0
        while self.count is None or index < self.count:
            yield Frame(index, self.timestamp(index), np.asarray(self.make_pixels(index), dtype=np.uint8))
            index += 1


def open_source(path: str | os.PathLike) -> FrameSource:
    """Open a packed video file or a frame directory."""
    p = Path(path)
    if p.is_dir():
        return FrameDirectorySource(p)
    if p.is_file():
        return PackedVideoSource(p)
    raise SourceError(f"no such source: {p}")


# --------------------------------------------------------------------------
# sampling / resize / windowing


def sample(frames: Iterable[Frame], policy: SamplingPolicy) -> Iterator[Frame]:
    """Keep the frames whose source index is a multiple of ``frame_interval``."""
    n = policy.frame_interval
    for f in frames:
        if f.index % n == 0:
            yield f


def _bilinear_axis(n_in: int, n_out: int) -> tuple[np.ndarray, np.ndarray, np.ndarray, int]:
    """
    Source taps and integer weights for one axis.

    The half-pixel source coordinate ``(o + 0.5) * n_in / n_out - 0.5`` is the
    rational ``num / den`` with ``den = 2 * n_out``, so weights are kept as
    exact integer numerators over ``den``. Borders clamp.
    """
    den = 2 * n_out
    num = (2 * np.arange(n_out, dtype=np.int64) + 1) * n_in - n_out
    num = np.maximum(num, 0)
    i0 = num // den
    frac = num % den
    over = i0 >= n_in - 1
    i0[over] = n_in - 1
    frac[over] = 0
    i1 = np.minimum(i0 + 1, n_in - 1)
    return i0, i1, frac, den


def bilinear_resize(pixels: np.ndarray, width: int, height: int) -> np.ndarray:
    """Bilinear resample without anti-alias prefilter, rounded half-up to uint8."""
    h, w = pixels.shape[:2]
    if (w, h) == (width, height):
        return pixels.copy()
    y0, y1, fy, dy = _bilinear_axis(h, height)
    x0, x1, fx, dx = _bilinear_axis(w, width)
    p = pixels.astype(np.int64)
    fy = fy[:, None, None]
    rows = p[y0] * (dy - fy) + p[y1] * fy
    fx = fx[None, :, None]
    acc = rows[:, x0] * (dx - fx) + rows[:, x1] * fx
    # exact integer arithmetic: floor(acc / (dx * dy) + 1/2)
    den = dx * dy
    out = (2 * acc + den) // (2 * den)
    return np.clip(out, 0, 255).astype(np.uint8)


def resize_to_model(f: Frame, size: int = MODEL_SIZE) -> Frame:
    if f.width < 1 or f.height < 1:
        raise InvalidFrame(f"frame {f.index} has zero dimension {f.size}")
    if f.size == (size, size):
        return f
    return f.with_pixels(bilinear_resize(f.pixels, size, size))


def resize_window(w: SequenceWindow, size: int = MODEL_SIZE) -> SequenceWindow:
    if w.frame_size == (size, size):
        return w
    cache: dict[int, Frame] = {}
    out = []
    for f in w.frames:
        # padded tail frames repeat an index; resize each distinct frame once
        if f.index not in cache:
            cache[f.index] = resize_to_model(f, size)
        out.append(cache[f.index])
    return w.with_frames(out)


def make_windows(frames: Iterable[Frame], policy: SamplingPolicy) -> Iterator[SequenceWindow]:
    """
    Group sampled frames into windows of ``window_size``.

    Window k holds sampled frames ``[k*stride, k*stride + window_size)``.
    With ``PAD_LAST`` the first incomplete group is right-padded by repeating
    its final frame, but only when it holds a frame no complete window covered.
    """
    size, stride = policy.window_size, policy.window_stride
    buf: list[tuple[int, Frame]] = []
    pos = 0
    k = 0
    start = 0
    last_covered = -1
    for f in frames:
        if pos >= start:
            buf.append((pos, f))
        pos += 1
        if len(buf) == size:
            yield SequenceWindow(k, tuple(fr for _, fr in buf))
            last_covered = start + size - 1
            k += 1
            start = k * stride
            buf = [(p, fr) for p, fr in buf if p >= start]
    if policy.tail_policy is TailPolicy.PAD_LAST and buf and buf[-1][0] > last_covered:
        real = [fr for _, fr in buf]
        pad = size - len(real)
        yield SequenceWindow(k, tuple(real + [real[-1]] * pad), padded=pad)


def window_stream(
    source: Iterable[Frame], policy: SamplingPolicy, model_space: bool = True
) -> Iterator[SequenceWindow]:
    """Sample, optionally resize each kept frame to model space, then window."""
    frames = sample(source, policy)
    if model_space:
        frames = (resize_to_model(f) for f in frames)
    return make_windows(frames, policy)


def expected_window_count(n_frames: int, policy: SamplingPolicy) -> int:
    """Closed-form window count for a finished source of ``n_frames`` frames."""
    m = -(-n_frames // policy.frame_interval) if n_frames > 0 else 0
    size, stride = policy.window_size, policy.window_stride
    full = (m - size) // stride + 1 if m >= size else 0
    if policy.tail_policy is TailPolicy.PAD_LAST and m > 0:
        last_covered = (full - 1) * stride + size - 1 if full else -1
        next_start = full * stride
        if next_start < m and m - 1 > last_covered:
            full += 1
    return full
