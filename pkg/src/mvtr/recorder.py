"""Bit-exact chunked recording format for synchronized multi-channel data.

Layout (little-endian throughout):

    header:   magic "MVTR", version u8 = 1, channel_count u16
    channel:  id u16, kind u8, name_len u8, name bytes (UTF-8, <= 64),
              nominal_rate_hz f64                     (x channel_count)
    records:  channel_id u16, master_ts u64, payload_len u32, payload,
              crc32 u32 over channel_id||master_ts||payload
    index:    per channel: id u16, count u64, count x (master_ts u64,
              record_offset u64), timestamps sorted
    footer:   magic "RTVM", index_offset u64          (final 12 bytes)

A file missing the footer (e.g. a crashed writer) is still streamable;
readers flag it as truncated and fall back to a linear scan.
"""

from __future__ import annotations

import enum
import struct
import zlib
from bisect import bisect_left
from dataclasses import dataclass, field

FILE_MAGIC = b"MVTR"
FOOTER_MAGIC = b"RTVM"
FORMAT_VERSION = 1
MAX_PAYLOAD = 64 * 1024 * 1024
MAX_NAME_BYTES = 64

_REC_HEAD = struct.Struct("<HQI")
_CRC_HEAD = struct.Struct("<HQ")


class RecorderError(ValueError):
    pass


class UnreadableFileError(RecorderError):
    pass


class ChannelKind(enum.IntEnum):
    STEREO_FRAME = 1
    KINEMATICS = 2
    LIDAR = 3
    EVENT = 4


@dataclass(frozen=True)
class ChannelDescriptor:
    id: int
    kind: ChannelKind
    name: str
    nominal_rate_hz: float

    def __post_init__(self):
        if not 0 <= self.id <= 0xFFFF:
            raise RecorderError("channel id must fit u16")
        if len(self.name.encode()) > MAX_NAME_BYTES:
            raise RecorderError("channel name exceeds 64 bytes")


@dataclass(frozen=True)
class Record:
    channel_id: int
    master_ts: int
    payload: bytes

    def crc32(self) -> int:
        return zlib.crc32(_CRC_HEAD.pack(self.channel_id, self.master_ts) + self.payload)

    def encode(self) -> bytes:
        return (
            _REC_HEAD.pack(self.channel_id, self.master_ts, len(self.payload))
            + self.payload
            + struct.pack("<I", self.crc32())
        )


def encode_channel_table(channels) -> bytes:
    out = [FILE_MAGIC, struct.pack("<BH", FORMAT_VERSION, len(channels))]
    for ch in channels:
        name = ch.name.encode()
        out.append(struct.pack("<HBB", ch.id, int(ch.kind), len(name)))
        out.append(name)
        out.append(struct.pack("<d", ch.nominal_rate_hz))
    return b"".join(out)


class RecordingWriter:
    """One exclusive writer per file; append then finalize."""

    def __init__(self, path, channels):
        ids = [c.id for c in channels]
        if len(ids) != len(set(ids)):
            raise RecorderError("duplicate channel ids")
        self.path = path
        self.channels = {c.id: c for c in channels}
        self._last_ts = {}
        self._index = {c.id: [] for c in channels}
        self._fh = open(path, "wb")
        self._fh.write(encode_channel_table(channels))
        self._finalized = False

    def append(self, rec: Record) -> int:
        if self._finalized:
            raise RecorderError("writer already finalized")
        if rec.channel_id not in self.channels:
            raise RecorderError(f"unknown channel {rec.channel_id}")
        if len(rec.payload) > MAX_PAYLOAD:
            raise RecorderError("payload exceeds 64 MiB")
        last = self._last_ts.get(rec.channel_id)
        if last is not None and rec.master_ts < last:
            raise RecorderError(
                f"timestamp regression on channel {rec.channel_id}: {rec.master_ts} < {last}"
            )
        offset = self._fh.tell()
        self._fh.write(rec.encode())
        self._last_ts[rec.channel_id] = rec.master_ts
        self._index[rec.channel_id].append((rec.master_ts, offset))
        return offset

    def finalize(self):
        if self._finalized:
            return
        index_offset = self._fh.tell()
        for cid in sorted(self._index):
            entries = self._index[cid]
            self._fh.write(struct.pack("<HQ", cid, len(entries)))
            for ts, off in entries:
                self._fh.write(struct.pack("<QQ", ts, off))
        self._fh.write(FOOTER_MAGIC + struct.pack("<Q", index_offset))
        self._fh.close()
        self._finalized = True

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.finalize()


class RecordingReader:
    """Random access through the index when present; streaming otherwise."""

    def __init__(self, path):
        self.path = path
        self._fh = open(path, "rb")
        head = self._fh.read(7)
        if len(head) < 7 or head[:4] != FILE_MAGIC:
            raise UnreadableFileError("bad file magic")
        version, count = struct.unpack("<BH", head[4:])
        if version != FORMAT_VERSION:
            raise UnreadableFileError(f"unsupported version {version}")
        self.channels = {}
        for _ in range(count):
            cid, kind, name_len = struct.unpack("<HBB", self._fh.read(4))
            name = self._fh.read(name_len).decode()
            (rate,) = struct.unpack("<d", self._fh.read(8))
            self.channels[cid] = ChannelDescriptor(cid, ChannelKind(kind), name, rate)
        self._records_start = self._fh.tell()
        self.truncated = True
        self._index = None
        self._fh.seek(0, 2)
        self._file_end = self._fh.tell()
        if self._file_end >= self._records_start + 12:
            self._fh.seek(-12, 2)
            tail = self._fh.read(12)
            if tail[:4] == FOOTER_MAGIC:
                (index_offset,) = struct.unpack("<Q", tail[4:])
                self.truncated = False
                self._load_index(index_offset)

    def _load_index(self, index_offset):
        self._fh.seek(index_offset)
        self._index = {}
        end = self._file_end - 12
        while self._fh.tell() < end:
            cid, n = struct.unpack("<HQ", self._fh.read(10))
            raw = self._fh.read(16 * n)
            self._index[cid] = [struct.unpack_from("<QQ", raw, 16 * i) for i in range(n)]
        self._records_end = index_offset

    def _read_record_at(self, offset):
        self._fh.seek(offset)
        head = self._fh.read(_REC_HEAD.size)
        if len(head) < _REC_HEAD.size:
            return None, offset
        cid, ts, plen = _REC_HEAD.unpack(head)
        body = self._fh.read(plen + 4)
        if len(body) < plen + 4:
            return None, offset
        rec = Record(cid, ts, body[:plen])
        (crc,) = struct.unpack("<I", body[plen:])
        return (rec, crc), offset + _REC_HEAD.size + plen + 4

    def scan(self):
        """Yield (offset, Record, crc_ok) streaming from the record section."""
        end = self._records_end if not self.truncated else self._file_end
        offset = self._records_start
        while offset < end:
            item, next_offset = self._read_record_at(offset)
            if item is None:
                break
            rec, crc = item
            yield offset, rec, crc == rec.crc32()
            offset = next_offset

    def records(self, channel_id=None):
        for _, rec, _ in self.scan():
            if channel_id is None or rec.channel_id == channel_id:
                yield rec

    def seek_time(self, channel_id: int, t: int):
        """First record on the channel with master_ts >= t; None past the end."""
        if channel_id not in self.channels:
            raise RecorderError(f"unknown channel {channel_id}")
        if self.truncated or self._index is None:
            for rec in self.records(channel_id):
                if rec.master_ts >= t:
                    return rec
            return None
        entries = self._index.get(channel_id, [])
        i = bisect_left(entries, (t, 0))
        # equal timestamps: bisect on (ts, 0) lands at the first of them
        if i == len(entries):
            return None
        (rec, _), _ = self._read_record_at(entries[i][1])
        return rec

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


@dataclass(frozen=True)
class VerifyReport:
    record_counts: dict          # channel_id -> count
    crc_failures: tuple          # byte offsets of corrupt records
    rate_estimates: dict         # channel_id -> measured Hz
    max_stereo_skew_ns: int
    truncated: bool


def verify(path) -> VerifyReport:
    """Recompute every CRC and measure rates and stereo channel skew."""
    from .pipeline import align_streams

    with RecordingReader(path) as reader:
        counts = {cid: 0 for cid in reader.channels}
        failures = []
        spans = {}
        stereo_streams = {}
        for offset, rec, ok in reader.scan():
            counts[rec.channel_id] = counts.get(rec.channel_id, 0) + 1
            if not ok:
                failures.append(offset)
            lo, hi = spans.get(rec.channel_id, (rec.master_ts, rec.master_ts))
            spans[rec.channel_id] = (min(lo, rec.master_ts), max(hi, rec.master_ts))
            ch = reader.channels.get(rec.channel_id)
            if ch is not None and ch.kind == ChannelKind.STEREO_FRAME:
                stereo_streams.setdefault(rec.channel_id, []).append((offset, rec.master_ts))
        rates = {}
        for cid, n in counts.items():
            lo, hi = spans.get(cid, (0, 0))
            rates[cid] = (n - 1) / ((hi - lo) * 1e-9) if n > 1 and hi > lo else 0.0
        max_skew = 0
        if len(stereo_streams) >= 2:
            ordered = [stereo_streams[cid] for cid in sorted(stereo_streams)]
            rate = max(
                (reader.channels[cid].nominal_rate_hz for cid in stereo_streams), default=30.0
            ) or 30.0
            tolerance = round(0.5e9 / rate)
            tuples, _ = align_streams(ordered, tolerance)
            if tuples:
                max_skew = max(t.spread for t in tuples)
        return VerifyReport(
            record_counts=counts,
            crc_failures=tuple(failures),
            rate_estimates=rates,
            max_stereo_skew_ns=max_skew,
            truncated=reader.truncated,
        )


# kinematics channel payload
_ARM_HEAD = struct.Struct("<BB")


@dataclass(frozen=True)
class ArmSample:
    arm_id: int
    joints: tuple
    quat_wxyz: tuple   # unit quaternion, w first
    position: tuple


def encode_kinematics(arms) -> bytes:
    out = [struct.pack("<B", len(arms))]
    for arm in arms:
        out.append(_ARM_HEAD.pack(arm.arm_id, len(arm.joints)))
        out.append(struct.pack(f"<{len(arm.joints)}d", *arm.joints))
        out.append(struct.pack("<4d", *arm.quat_wxyz))
        out.append(struct.pack("<3d", *arm.position))
    return b"".join(out)


def decode_kinematics(payload: bytes):
    (n,) = struct.unpack_from("<B", payload, 0)
    off = 1
    arms = []
    for _ in range(n):
        arm_id, jn = _ARM_HEAD.unpack_from(payload, off)
        off += _ARM_HEAD.size
        joints = struct.unpack_from(f"<{jn}d", payload, off)
        off += 8 * jn
        quat = struct.unpack_from("<4d", payload, off)
        norm = sum(c * c for c in quat) ** 0.5
        if abs(norm - 1.0) > 1e-9:
            raise RecorderError(f"kinematics quaternion norm {norm} not unit")
        off += 32
        pos = struct.unpack_from("<3d", payload, off)
        off += 24
        arms.append(ArmSample(arm_id, joints, quat, pos))
    return arms
