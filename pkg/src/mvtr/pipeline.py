"""Stereo capture pipeline: synthetic global-shutter frames, bilinear
demosaicing, calibrated rectification, latency accounting, and
cross-stream timestamp alignment.

Frames carry exactly one exposure timestamp: the simulated sensor is a
single global-shutter device, so both stereo channels of a capture share
it. Stage transforms are pure; the aligner is a single-consumer stateful
pass.
"""

from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .clocksync import SimClock
from .geometry import RigidTransform, UnitQuat, Vec3
from .kinematics import CameraModel

DEFAULT_LATENCY_BUDGET_NS = 8_000_000

SEQ_BITS = 32
_CELL = 2           # px per encoded bit cell
_BITS_PER_ROW = 8


class PipelineError(ValueError):
    pass


@dataclass(frozen=True)
class BayerFrame:
    width: int
    height: int
    bit_depth: int
    pattern: str
    pixels: np.ndarray  # (height, width), row-major
    stream_id: str
    seq: int
    exposure_ts: int  # ns, device clock

    def __post_init__(self):
        if self.width % 2 or self.height % 2:
            raise PipelineError("frame dimensions must be even")
        if self.bit_depth not in (8, 16):
            raise PipelineError("bit depth must be 8 or 16")
        if self.pattern != "RGGB":
            raise PipelineError(f"unsupported pattern {self.pattern}")
        if self.pixels.shape != (self.height, self.width):
            raise PipelineError("pixel buffer shape mismatch")


@dataclass(frozen=True)
class RgbFrame:
    width: int
    height: int
    bit_depth: int
    channels: np.ndarray  # (3, height, width)
    stream_id: str
    seq: int
    exposure_ts: int


@dataclass(frozen=True)
class CaptureConfig:
    width: int = 640
    height: int = 480
    bit_depth: int = 8
    stream_id: str = "cam0"


def _stream_key(stream_id: str) -> int:
    h = 0
    for ch in stream_id:
        h = (h * 131 + ord(ch)) & 0xFFFFFFFF
    return h


@functools.lru_cache(maxsize=16)
def _base_pattern(cfg: CaptureConfig) -> np.ndarray:
    """The seq-independent part of the test pattern, cached per config."""
    maxval = (1 << cfg.bit_depth) - 1
    dtype = np.uint8 if cfg.bit_depth == 8 else np.uint16
    key = _stream_key(cfg.stream_id)
    y = np.arange(cfg.height)[:, None]
    x = np.arange(cfg.width)[None, :]
    gradient = (x + 2 * y + key) % (maxval + 1)
    checker = ((x // 8 + y // 8) % 2) * (maxval // 4)
    return ((gradient + checker) % (maxval + 1)).astype(dtype)


def synth_capture(cfg: CaptureConfig, device_clock: SimClock, true_time: int,
                  seq: int) -> BayerFrame:
    """Deterministic test pattern: gradient + checker + seq-encoded corner block."""
    if cfg.width % 2 or cfg.height % 2:
        raise PipelineError("frame dimensions must be even")
    maxval = (1 << cfg.bit_depth) - 1
    img = _base_pattern(cfg).copy()
    _encode_seq(img, seq, maxval)
    return BayerFrame(
        width=cfg.width, height=cfg.height, bit_depth=cfg.bit_depth, pattern="RGGB",
        pixels=img, stream_id=cfg.stream_id, seq=seq,
        exposure_ts=device_clock.local_time(true_time),
    )


def _encode_seq(img: np.ndarray, seq: int, maxval: int) -> None:
    rows = SEQ_BITS // _BITS_PER_ROW
    if img.shape[0] < rows * _CELL or img.shape[1] < _BITS_PER_ROW * _CELL:
        return
    for bit in range(SEQ_BITS):
        r, c = divmod(bit, _BITS_PER_ROW)
        val = maxval if (seq >> bit) & 1 else 0
        img[r * _CELL:(r + 1) * _CELL, c * _CELL:(c + 1) * _CELL] = val


def decode_seq(frame: BayerFrame) -> int:
    """Invert the corner block written by synth_capture."""
    maxval = (1 << frame.bit_depth) - 1
    seq = 0
    for bit in range(SEQ_BITS):
        r, c = divmod(bit, _BITS_PER_ROW)
        if frame.pixels[r * _CELL, c * _CELL] > maxval // 2:
            seq |= 1 << bit
    return seq


# Bayer sample masks for RGGB: R at (even,even), G at (even,odd)+(odd,even), B at (odd,odd)
_KERNEL_RB = np.array([[1, 2, 1], [2, 4, 2], [1, 2, 1]], dtype=float)
_KERNEL_G = np.array([[0, 1, 0], [1, 4, 1], [0, 1, 0]], dtype=float)


def _demosaic_reference(pixels: np.ndarray) -> np.ndarray:
    """Mask-normalized convolution form of the demosaic (reference oracle).

    out_c = conv(v*mask_c, K_c) / conv(mask_c, K_c) with clamp-to-edge
    borders. Slow but transparently correct; demosaic_bilinear computes
    the same values via parity decomposition.
    """
    v = pixels.astype(float)
    h, w = v.shape
    yy, xx = np.mgrid[0:h, 0:w]
    masks = (
        ((yy % 2 == 0) & (xx % 2 == 0)).astype(float),  # r
        (((yy + xx) % 2) == 1).astype(float),           # g
        ((yy % 2 == 1) & (xx % 2 == 1)).astype(float),  # b
    )
    kernels = (_KERNEL_RB, _KERNEL_G, _KERNEL_RB)
    out = np.empty((3, h, w))
    for i in range(3):
        num = ndimage.convolve(v * masks[i], kernels[i], mode="nearest")
        den = ndimage.convolve(masks[i], kernels[i], mode="nearest")
        out[i] = num / den
    return np.rint(out).astype(pixels.dtype)


def demosaic_bilinear(frame: BayerFrame) -> RgbFrame:
    """Per-channel bilinear interpolation, clamp-to-edge at the border.

    Each missing sample is the kernel-weighted mean of its available
    same-color neighbors, computed per parity class on quarter-resolution
    views. Bit-identical to _demosaic_reference: every intermediate sum
    is an exact integer in float32 and each quotient is either exactly
    representable (halves, quarters) or rounded once (thirds), matching
    the reference's single division.
    """
    if frame.width < 2 or frame.height < 2:
        raise PipelineError("demosaic needs at least 2x2")
    h, w = frame.pixels.shape
    vf = frame.pixels.astype(np.float32)
    R = vf[0::2, 0::2]
    G1 = vf[0::2, 1::2]
    G2 = vf[1::2, 0::2]
    B = vf[1::2, 1::2]
    out = np.empty((3, h, w), dtype=np.float32)

    # red: samples on (even, even)
    r = out[0]
    r[0::2, 0::2] = R
    rh = r[0::2, 1::2]             # horizontal neighbors
    rh[:, :-1] = (R[:, :-1] + R[:, 1:]) * 0.5
    rh[:, -1] = R[:, -1]
    rv = r[1::2, 0::2]             # vertical neighbors
    rv[:-1, :] = (R[:-1, :] + R[1:, :]) * 0.5
    rv[-1, :] = R[-1, :]
    rd = r[1::2, 1::2]             # four diagonal neighbors
    rd[:-1, :-1] = (R[:-1, :-1] + R[:-1, 1:] + R[1:, :-1] + R[1:, 1:]) * 0.25
    rd[-1, :-1] = (R[-1, :-1] + R[-1, 1:]) * 0.5
    rd[:-1, -1] = (R[:-1, -1] + R[1:, -1]) * 0.5
    rd[-1, -1] = R[-1, -1]

    # green: samples on both odd-parity sites, cross-shaped neighbors
    g = out[1]
    g[0::2, 1::2] = G1
    g[1::2, 0::2] = G2
    gr = g[0::2, 0::2]             # at red sites: up/down/left/right greens
    gr[1:, 1:] = (G2[:-1, 1:] + G2[1:, 1:] + G1[1:, :-1] + G1[1:, 1:]) * 0.25
    gr[0, 1:] = (G2[0, 1:] + G1[0, :-1] + G1[0, 1:]) / np.float32(3.0)
    gr[1:, 0] = (G2[:-1, 0] + G2[1:, 0] + G1[1:, 0]) / np.float32(3.0)
    gr[0, 0] = (G2[0, 0] + G1[0, 0]) * 0.5
    gb = g[1::2, 1::2]             # at blue sites
    gb[:-1, :-1] = (G1[:-1, :-1] + G1[1:, :-1] + G2[:-1, :-1] + G2[:-1, 1:]) * 0.25
    gb[-1, :-1] = (G1[-1, :-1] + G2[-1, :-1] + G2[-1, 1:]) / np.float32(3.0)
    gb[:-1, -1] = (G1[:-1, -1] + G1[1:, -1] + G2[:-1, -1]) / np.float32(3.0)
    gb[-1, -1] = (G1[-1, -1] + G2[-1, -1]) * 0.5

    # blue: samples on (odd, odd); mirror of red
    b = out[2]
    b[1::2, 1::2] = B
    bh = b[1::2, 0::2]
    bh[:, 1:] = (B[:, :-1] + B[:, 1:]) * 0.5
    bh[:, 0] = B[:, 0]
    bv = b[0::2, 1::2]
    bv[1:, :] = (B[:-1, :] + B[1:, :]) * 0.5
    bv[0, :] = B[0, :]
    bd = b[0::2, 0::2]
    bd[1:, 1:] = (B[:-1, :-1] + B[:-1, 1:] + B[1:, :-1] + B[1:, 1:]) * 0.25
    bd[0, 1:] = (B[0, :-1] + B[0, 1:]) * 0.5
    bd[1:, 0] = (B[:-1, 0] + B[1:, 0]) * 0.5
    bd[0, 0] = B[0, 0]

    out = np.rint(out).astype(frame.pixels.dtype)
    return RgbFrame(
        width=frame.width, height=frame.height, bit_depth=frame.bit_depth,
        channels=out, stream_id=frame.stream_id, seq=frame.seq,
        exposure_ts=frame.exposure_ts,
    )


@dataclass(frozen=True)
class StereoRig:
    left: CameraModel
    right: CameraModel
    right_from_left: RigidTransform  # maps left-camera coords to right-camera coords

    def baseline(self) -> float:
        return self.right_from_left.translation.norm()


@dataclass(frozen=True)
class RectifiedPair:
    r_left: UnitQuat
    r_right: UnitQuat
    intrinsics: CameraModel  # shared by both rectified views


def rectify_pair(rig: StereoRig) -> RectifiedPair:
    """Calibrated rectification: new x axes along the baseline, optical axes
    parallel; corresponding points then share the image row."""
    if rig.baseline() <= 0:
        raise PipelineError("zero baseline")
    r = rig.right_from_left.rotation.to_matrix()
    t = rig.right_from_left.translation.as_array()
    baseline_dir = -r.T @ t  # right camera position in the left frame
    r1 = baseline_dir / np.linalg.norm(baseline_dir)
    z_avg = (np.array([0.0, 0.0, 1.0]) + r.T @ np.array([0.0, 0.0, 1.0])) / 2
    r3 = z_avg - np.dot(z_avg, r1) * r1
    n3 = np.linalg.norm(r3)
    if n3 < 1e-12:
        raise PipelineError("baseline parallel to the optical axes")
    r3 /= n3
    r2 = np.cross(r3, r1)
    rect_left = np.vstack([r1, r2, r3])
    rect_right = rect_left @ r.T
    f = (rig.left.fx + rig.left.fy + rig.right.fx + rig.right.fy) / 4
    intr = CameraModel(
        fx=f, fy=f,
        cx=(rig.left.cx + rig.right.cx) / 2, cy=(rig.left.cy + rig.right.cy) / 2,
        width=rig.left.width, height=rig.left.height,
        baseline=rig.baseline(), working_range=rig.left.working_range,
    )
    return RectifiedPair(
        r_left=UnitQuat.from_matrix(rect_left),
        r_right=UnitQuat.from_matrix(rect_right),
        intrinsics=intr,
    )


@dataclass(frozen=True)
class StageLatency:
    stages: tuple  # of (name, duration_ns)

    def __post_init__(self):
        if any(d < 0 for _, d in self.stages):
            raise PipelineError("stage durations must be >= 0")


@dataclass(frozen=True)
class LatencyReport:
    photon_to_glass_ns: int
    budget_ns: int
    within_budget: bool
    breakdown: tuple  # of (name, duration_ns, percent)


def latency_report(stages: StageLatency,
                   budget_ns: int = DEFAULT_LATENCY_BUDGET_NS) -> LatencyReport:
    total = sum(d for _, d in stages.stages)
    breakdown = tuple(
        (name, d, (100.0 * d / total) if total else 0.0) for name, d in stages.stages
    )
    return LatencyReport(
        photon_to_glass_ns=total, budget_ns=budget_ns,
        within_budget=total <= budget_ns, breakdown=breakdown,
    )


@dataclass(frozen=True)
class AlignedTuple:
    frames: tuple       # one entry per stream, reference first
    timestamps: tuple   # master-domain ns, same order
    spread: int         # max - min of timestamps


def align_streams(streams: list, tolerance: int) -> tuple:
    """Group frames across streams by master-domain timestamp.

    streams: list of lists of (frame, master_ts); stream 0 is the
    reference. A tuple takes one not-yet-consumed frame per stream,
    consumption advances monotonically, and the tuple's spread
    (max - min timestamp, reference included) must be <= tolerance.
    An exact maximum matching under those rules is returned; among
    count-optimal solutions ties go to the earliest reference frame,
    then the smallest spread, then the earliest frames. Returns
    (tuples, dropped_counts_per_stream).
    """
    for s in streams:
        ts = [t for _, t in s]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise PipelineError("stream timestamps must be strictly increasing")
    if not streams:
        return [], []
    ref = streams[0]
    others = streams[1:]
    other_ts = [[t for _, t in s] for s in others]
    n = len(ref)

    def normalize(i, cursors):
        # frames older than ref_ts - tolerance can never join this or any
        # later tuple; skipping them canonicalizes the DP state
        lo = ref[i][1] - tolerance
        return tuple(
            next((j for j in range(c, len(ts)) if ts[j] >= lo), len(ts))
            for ts, c in zip(other_ts, cursors)
        )

    def combos(i, cursors):
        # all per-stream index choices whose joint spread fits the tolerance
        ref_ts = ref[i][1]
        windows = []
        for ts, c in zip(other_ts, cursors):
            win = []
            j = c
            while j < len(ts) and ts[j] <= ref_ts + tolerance:
                win.append(j)
                j += 1
            if not win:
                return
            windows.append(win)
        for picks in itertools.product(*windows):
            stamps = [ref_ts] + [ts[j] for ts, j in zip(other_ts, picks)]
            spread = max(stamps) - min(stamps)
            if spread <= tolerance:
                yield picks, spread

    # forward reachability, then backward values over the same layers
    layers = [None] * (n + 1)
    layers[0] = {normalize(0, (0,) * len(others))} if n else set()
    for i in range(n):
        nxt = set()
        for state in layers[i]:
            for picks, _ in combos(i, state):
                step = tuple(j + 1 for j in picks)
                nxt.add(normalize(i + 1, step) if i + 1 < n else step)
            nxt.add(normalize(i + 1, state) if i + 1 < n else state)
        layers[i + 1] = nxt
    values = [{} for _ in range(n + 1)]
    for state in layers[n]:
        values[n][state] = 0
    for i in range(n - 1, -1, -1):
        for state in layers[i]:
            skip = normalize(i + 1, state) if i + 1 < n else state
            best = values[i + 1][skip]
            for picks, _ in combos(i, state):
                step = tuple(j + 1 for j in picks)
                step = normalize(i + 1, step) if i + 1 < n else step
                best = max(best, 1 + values[i + 1][step])
            values[i][state] = best

    tuples = []
    matched = [0] * len(streams)
    if n:
        state = next(iter(layers[0]))
        for i in range(n):
            skip = normalize(i + 1, state) if i + 1 < n else state
            choice = None
            for picks, spread in combos(i, state):
                step = tuple(j + 1 for j in picks)
                step_n = normalize(i + 1, step) if i + 1 < n else step
                if 1 + values[i + 1][step_n] == values[i][state]:
                    key = (spread, picks)
                    if choice is None or key < choice[0]:
                        choice = (key, picks, step_n)
            if choice is not None:
                _, picks, state = choice
                ref_frame, ref_ts = ref[i]
                frames = [ref_frame] + [others[s][j][0] for s, j in enumerate(picks)]
                stamps = [ref_ts] + [others[s][j][1] for s, j in enumerate(picks)]
                matched[0] += 1
                for s in range(len(others)):
                    matched[s + 1] += 1
                tuples.append(AlignedTuple(
                    frames=tuple(frames), timestamps=tuple(stamps),
                    spread=max(stamps) - min(stamps),
                ))
            else:
                state = skip
    dropped = [len(s) - m for s, m in zip(streams, matched)]
    return tuples, dropped
