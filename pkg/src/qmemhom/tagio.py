"""Time-tag streams and their on-disk formats.

Binary ("QTT1"), all little-endian::

    magic      4 bytes  b"QTT1"
    channels   u32      number of registered channel ids
    records    u64      record count
    resolution u32      tag resolution in ns
    record     u64      channel | (timestamp_ns << 8)   (timestamp < 2**56)

so each record is the channel byte followed by a 7-byte timestamp. The text
variant is CSV with the header ``channel,timestamp_ns``, LF line endings and
canonical integers.
"""

from __future__ import annotations

import io
import os
import re
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import BinaryIO, Iterator

import numpy as np

from .errors import NonMonotonicTimestampError, TagFormatError, UnknownChannelError, UnsortedStreamError

MAGIC = b"QTT1"
HEADER = struct.Struct("<4sIQI")
RECORD_SIZE = 8
MAX_TIMESTAMP = (1 << 56) - 1
CSV_HEADER = "channel,timestamp_ns"

S1, AS1, S2, AS2, DET_B, DET_C, AS1_HBT, AS2_HBT = range(8)
CHANNEL_NAMES = ("s1", "as1", "s2", "as2", "det_b", "det_c", "as1_hbt", "as2_hbt")
CHANNELS = {name: i for i, name in enumerate(CHANNEL_NAMES)}


def channel_id(ch: int | str) -> int:
    return CHANNELS[ch] if isinstance(ch, str) else int(ch)


@dataclass(frozen=True)
class StreamMetadata:
    window_length_ns: float = 300_000.0
    repetition_rate_hz: float = 50.0
    n_windows: int = 0
    resolution_ns: int = 2
    channel_names: tuple[str, ...] = CHANNEL_NAMES

    @property
    def channel_count(self) -> int:
        return len(self.channel_names)

    @property
    def window_period_ns(self) -> float:
        return 1e9 / self.repetition_rate_hz

    @property
    def duration_s(self) -> float:
        return self.n_windows / self.repetition_rate_hz


@dataclass(frozen=True, eq=False)
class TimeTagStream:
    channels: np.ndarray
    timestamps: np.ndarray
    metadata: StreamMetadata = field(default_factory=StreamMetadata)

    def __post_init__(self):
        ch = np.asarray(self.channels, dtype=np.uint8)
        ts = np.asarray(self.timestamps, dtype=np.int64)
        if ch.shape != ts.shape or ch.ndim != 1:
            raise ValueError("channels and timestamps must be 1-D and equal length")
        if ts.size and (ts[0] < 0):
            raise ValueError("timestamps must be non-negative")
        if ts.size > 1 and np.any(np.diff(ts) < 0):
            i = int(np.nonzero(np.diff(ts) < 0)[0][0]) + 1
            raise UnsortedStreamError(f"timestamp decreases at record {i}")
        if ch.size and int(ch.max()) >= self.metadata.channel_count:
            raise UnknownChannelError(f"channel {int(ch.max())} not in channel map")
        ch.setflags(write=False)
        ts.setflags(write=False)
        object.__setattr__(self, "channels", ch)
        object.__setattr__(self, "timestamps", ts)

    def __len__(self) -> int:
        return int(self.timestamps.size)

    def select(self, channel: int | str) -> np.ndarray:
        return self.timestamps[self.channels == channel_id(channel)]

    def counts_by_channel(self) -> dict[str, int]:
        n = np.bincount(self.channels, minlength=self.metadata.channel_count)
        return {name: int(n[i]) for i, name in enumerate(self.metadata.channel_names)}

    def equals(self, other: TimeTagStream) -> bool:
        return np.array_equal(self.channels, other.channels) and np.array_equal(self.timestamps, other.timestamps)

    def with_metadata(self, **kw) -> TimeTagStream:
        return TimeTagStream(self.channels, self.timestamps, replace(self.metadata, **kw))


def _from_unsorted(channels, timestamps, metadata: StreamMetadata) -> TimeTagStream:
    order = np.lexsort((channels, timestamps))
    return TimeTagStream(np.asarray(channels)[order], np.asarray(timestamps)[order], metadata)


def concat(streams: list[TimeTagStream], metadata: StreamMetadata | None = None) -> TimeTagStream:
    md = metadata or (streams[0].metadata if streams else StreamMetadata())
    if not streams:
        return TimeTagStream(np.zeros(0, np.uint8), np.zeros(0, np.int64), md)
    return TimeTagStream(np.concatenate([s.channels for s in streams]),
                         np.concatenate([s.timestamps for s in streams]), md)


# --- reading -------------------------------------------------------------

def _read_source(source) -> bytes:
    if isinstance(source, (bytes, bytearray, memoryview)):
        return bytes(source)
    if isinstance(source, (str, os.PathLike)):
        return Path(source).read_bytes()
    return source.read()


def _check_binary_records(words: np.ndarray, base_offset: int, channel_count: int,
                          resolution: int, last_ts: int | None) -> tuple[np.ndarray, np.ndarray]:
    ch = (words & 0xFF).astype(np.uint8)
    ts = (words >> np.uint64(8)).astype(np.int64)
    bad = np.nonzero(ch >= channel_count)[0]
    if bad.size:
        i = int(bad[0])
        raise UnknownChannelError(f"unknown channel {int(ch[i])}", base_offset + RECORD_SIZE * i)
    if resolution > 1:
        bad = np.nonzero(ts % resolution)[0]
        if bad.size:
            i = int(bad[0])
            raise TagFormatError(f"timestamp {int(ts[i])} not a multiple of {resolution} ns",
                                 base_offset + RECORD_SIZE * i)
    prev = np.concatenate([[last_ts if last_ts is not None else ts[0] if ts.size else 0], ts[:-1]])
    bad = np.nonzero(ts < prev)[0]
    if bad.size:
        i = int(bad[0])
        raise NonMonotonicTimestampError("timestamp decreases", base_offset + RECORD_SIZE * i)
    return ch, ts


def _parse_header(data: bytes) -> tuple[int, int, int]:
    if len(data) < HEADER.size:
        raise TagFormatError("truncated header", len(data))
    magic, nch, nrec, res = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise TagFormatError("bad magic", 0)
    if not 1 <= nch <= 256:
        raise TagFormatError(f"channel count {nch} outside 1..256", 4)
    if res < 1:
        raise TagFormatError("resolution must be >= 1 ns", 16)
    return nch, nrec, res


def _metadata_for(nch: int, res: int, base: StreamMetadata | None) -> StreamMetadata:
    base = base or StreamMetadata()
    names = base.channel_names
    if len(names) != nch:
        names = tuple(CHANNEL_NAMES[i] if i < len(CHANNEL_NAMES) else f"ch{i}" for i in range(nch))
    return replace(base, resolution_ns=res, channel_names=names)


def _parse_binary(data: bytes, metadata: StreamMetadata | None) -> TimeTagStream:
    nch, nrec, res = _parse_header(data)
    body = len(data) - HEADER.size
    if body != nrec * RECORD_SIZE:
        pos = HEADER.size + min(body, nrec * RECORD_SIZE) // RECORD_SIZE * RECORD_SIZE
        raise TagFormatError(f"header declares {nrec} records but body holds {body} bytes", pos)
    words = np.frombuffer(data, dtype="<u8", offset=HEADER.size, count=nrec)
    ch, ts = _check_binary_records(words, HEADER.size, nch, res, None)
    return TimeTagStream(ch, ts, _metadata_for(nch, res, metadata))


_CANON_INT = re.compile(r"0|[1-9][0-9]*\Z")


def _parse_csv_lines(lines, first_line: int, md: StreamMetadata, last_ts: int | None):
    chans, stamps = [], []
    for k, line in enumerate(lines):
        lineno = first_line + k
        parts = line.split(",")
        if len(parts) != 2 or not all(_CANON_INT.fullmatch(p) for p in parts):
            raise TagFormatError(f"malformed record {line!r}", lineno, unit="line")
        c, t = int(parts[0]), int(parts[1])
        if c >= md.channel_count:
            raise UnknownChannelError(f"unknown channel {c}", lineno, unit="line")
        if t > MAX_TIMESTAMP:
            raise TagFormatError("timestamp exceeds 56 bits", lineno, unit="line")
        if t % md.resolution_ns:
            raise TagFormatError(f"timestamp {t} not a multiple of {md.resolution_ns} ns", lineno, unit="line")
        if last_ts is not None and t < last_ts:
            raise NonMonotonicTimestampError("timestamp decreases", lineno, unit="line")
        last_ts = t
        chans.append(c)
        stamps.append(t)
    return chans, stamps, last_ts


def _csv_body_lines(text: str) -> list[str]:
    if "\r" in text:
        raise TagFormatError("CR characters are not allowed; use LF line endings",
                             text[: text.index("\r")].count("\n") + 1, unit="line")
    if not text.endswith("\n"):
        raise TagFormatError("missing final LF", text.count("\n") + 1, unit="line")
    lines = text[:-1].split("\n")
    if lines[0] != CSV_HEADER:
        raise TagFormatError(f"expected header {CSV_HEADER!r}", 1, unit="line")
    return lines[1:]


def _parse_csv(data: bytes, metadata: StreamMetadata | None) -> TimeTagStream:
    md = metadata or StreamMetadata()
    try:
        text = data.decode("ascii")
    except UnicodeDecodeError as exc:
        raise TagFormatError("non-ASCII byte in CSV", exc.start) from None
    lines = _csv_body_lines(text)
    chans, stamps, _ = _parse_csv_lines(lines, 2, md, None)
    return TimeTagStream(np.array(chans, dtype=np.uint8), np.array(stamps, dtype=np.int64), md)


def parse_tags(source, metadata: StreamMetadata | None = None) -> TimeTagStream:
    """Parse a binary or CSV tag file (bytes, path or binary file object).

    An empty input is a valid empty stream. The format is chosen from the
    leading magic bytes.
    """
    data = _read_source(source)
    if not data:
        return TimeTagStream(np.zeros(0, np.uint8), np.zeros(0, np.int64), metadata or StreamMetadata())
    if data[:4] == MAGIC:
        return _parse_binary(data, metadata)
    return _parse_csv(data, metadata)


def iter_tags(source, chunk_records: int = 1 << 20,
              metadata: StreamMetadata | None = None) -> Iterator[TimeTagStream]:
    """Yield consecutive chunks of a tag file without loading it all."""
    if isinstance(source, (bytes, bytearray, memoryview)):
        fh: BinaryIO = io.BytesIO(bytes(source))
    elif isinstance(source, (str, os.PathLike)):
        fh = open(source, "rb")
    else:
        fh = source
    try:
        head = fh.read(HEADER.size)
        if not head:
            return
        if head[:4] != MAGIC:
            # CSV chunks: validate incrementally line by line
            md = metadata or StreamMetadata()
            rest = fh.read()
            try:
                text = (head + rest).decode("ascii")
            except UnicodeDecodeError as exc:
                raise TagFormatError("non-ASCII byte in CSV", exc.start) from None
            lines = _csv_body_lines(text)
            last = None
            for i in range(0, len(lines), chunk_records):
                ch, ts, last = _parse_csv_lines(lines[i:i + chunk_records], 2 + i, md, last)
                yield TimeTagStream(np.array(ch, np.uint8), np.array(ts, np.int64), md)
            return
        nch, nrec, res = _parse_header(head)
        md = _metadata_for(nch, res, metadata)
        done, last = 0, None
        while done < nrec:
            n = min(chunk_records, nrec - done)
            buf = fh.read(n * RECORD_SIZE)
            offset = HEADER.size + done * RECORD_SIZE
            if len(buf) != n * RECORD_SIZE:
                raise TagFormatError("truncated record data", offset + len(buf) // RECORD_SIZE * RECORD_SIZE)
            words = np.frombuffer(buf, dtype="<u8")
            ch, ts = _check_binary_records(words, offset, nch, res, last)
            last = int(ts[-1])
            done += n
            yield TimeTagStream(ch, ts, md)
        if fh.read(1):
            raise TagFormatError("trailing bytes after declared records", HEADER.size + nrec * RECORD_SIZE)
    finally:
        if isinstance(source, (str, os.PathLike)):
            fh.close()


# --- writing -------------------------------------------------------------

def encode_binary(s: TimeTagStream) -> bytes:
    ts = s.timestamps
    if ts.size and int(ts[-1]) > MAX_TIMESTAMP:
        raise ValueError("timestamp exceeds 56 bits")
    words = s.channels.astype(np.uint64) | (ts.astype(np.uint64) << np.uint64(8))
    header = HEADER.pack(MAGIC, s.metadata.channel_count, len(s), s.metadata.resolution_ns)
    return header + words.astype("<u8").tobytes()


def encode_csv(s: TimeTagStream) -> bytes:
    body = "".join(f"{c},{t}\n" for c, t in zip(s.channels.tolist(), s.timestamps.tolist()))
    return (CSV_HEADER + "\n" + body).encode("ascii")


def write_tags(s: TimeTagStream, dest=None, fmt: str = "binary") -> bytes:
    """Encode ``s``; also write it to ``dest`` (path or file object) if given."""
    if fmt not in ("binary", "csv"):
        raise ValueError(f"unknown tag format {fmt!r}")
    data = encode_binary(s) if fmt == "binary" else encode_csv(s)
    if dest is None:
        return data
    if isinstance(dest, (str, os.PathLike)):
        path = Path(dest)
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_bytes(data)
        os.replace(tmp, path)
    else:
        dest.write(data)
    return data
