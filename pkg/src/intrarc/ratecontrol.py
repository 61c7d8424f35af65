"""Two-pass controller: first-pass record assembly and second-pass QP mapping.

The first pass attaches a predicted bit count to every frame at a fixed
probe QP. The second pass walks frames in order, computes each frame's
bit target from the running deficit, maps (probe QP, prediction,
target) to the encode QP through the logarithmic R-QP model

    q_bar = q_p - c_low * sqrt(max(1, q_p)) * log2(b_target / b_pred)

followed by a resolution-weighted pull toward q_start on the high-rate
side, and charges the frame's actual spend back into the deficit.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Sequence

import numpy as np

from intrarc.features import FrameFeatures
from intrarc.video_io import VideoGeometry

TRACE_CSV_HEADER = ["frame_index", "q_p", "b_hat", "b_prime", "q_bar", "q_prime",
                    "actual_bits", "deficit"]

# c_high anchors: published operating points at the two reference resolutions,
# interpolated linearly in log2(pixel count) between them.
_C_HIGH_LO = (854 * 480, 0.25)
_C_HIGH_HI = (3840 * 2160, 0.5)


class EncoderError(Exception):
    """Encoder backend failed; carries the decisions made so far."""

    def __init__(self, message: str, partial_trace: list):
        super().__init__(message)
        self.partial_trace = partial_trace


@dataclass(frozen=True)
class FirstPassRecord:
    frame_index: int
    q_p: int
    b_hat_p: float

    def __post_init__(self):
        if not 0 <= self.q_p <= 63:
            raise ValueError(f"q_p={self.q_p} outside [0, 63]")
        if not math.isfinite(self.b_hat_p) or self.b_hat_p < 1:
            raise ValueError(f"b_hat_p={self.b_hat_p} must be finite and >= 1")


@dataclass(frozen=True)
class RcConfig:
    target_bitrate: float       # bits per second
    fps_num: int
    resolution: VideoGeometry
    fps_den: int = 1
    c_low: float = 1.0
    q_start: int = 24
    first_pass_qp: int = 32
    deficit_gain: float = 0.5   # fraction of the deficit recovered per frame
    qp_min: int = 0
    qp_max: int = 63

    def __post_init__(self):
        if self.target_bitrate <= 0:
            raise ValueError("target_bitrate must be positive")
        if self.fps_num <= 0 or self.fps_den <= 0:
            raise ValueError("frame rate must be positive")
        if not 0.0 < self.deficit_gain <= 1.0:
            raise ValueError("deficit_gain must be in (0, 1]")
        if not 0 <= self.qp_min <= self.qp_max <= 63:
            raise ValueError("require 0 <= qp_min <= qp_max <= 63")
        if not 0 <= self.first_pass_qp <= 63:
            raise ValueError("first_pass_qp outside [0, 63]")

    @property
    def frame_budget(self) -> float:
        """Per-frame base budget in bits."""
        return self.target_bitrate * self.fps_den / self.fps_num

    @property
    def fps_text(self) -> str:
        return f"{self.fps_num}/{self.fps_den}"


@dataclass
class RcState:
    """Mutable accumulator owned by one second-pass run."""

    b_base: float
    deficit: float = 0.0
    frames_done: int = 0

    @classmethod
    def initial(cls, cfg: RcConfig) -> "RcState":
        return cls(b_base=cfg.frame_budget)


@dataclass(frozen=True)
class FrameDecision:
    frame_index: int
    q_p: int
    b_hat_p: float
    b_prime_p: float
    q_bar_p: float
    q_prime_p: int
    actual_bits: float | None = None


def _round_half_away(x: float) -> int:
    return int(math.floor(x + 0.5)) if x >= 0 else int(math.ceil(x - 0.5))


def c_high_for(resolution: VideoGeometry) -> float:
    """High-rate correction weight for a resolution, in [0.25, 0.5]."""
    lo_area, lo_c = _C_HIGH_LO
    hi_area, hi_c = _C_HIGH_HI
    t = (math.log2(resolution.pixels) - math.log2(lo_area)) / (
        math.log2(hi_area) - math.log2(lo_area)
    )
    return min(hi_c, max(lo_c, lo_c + t * (hi_c - lo_c)))


def build_first_pass(features: Sequence[FrameFeatures], model,
                     cfg: RcConfig) -> list[FirstPassRecord]:
    """Predict bits for every frame at the configured first-pass QP.

    `model` is either a trained ForestModel or any callable
    (features, q) -> bits; predictions are floored at 1.
    """
    if not features:
        raise ValueError("no frames to build a first pass for")
    q = cfg.first_pass_qp
    if callable(model):
        preds = [float(model(f, q)) for f in features]
    else:
        from intrarc.forest import predict_batch

        X = np.empty((len(features), 7))
        for i, f in enumerate(features):
            X[i, :6] = f.as_array()
            X[i, 6] = float(q)
        preds = predict_batch(model, X).tolist()
    return [
        FirstPassRecord(frame_index=f.frame_index, q_p=q, b_hat_p=max(1.0, b))
        for f, b in zip(features, preds)
    ]


def build_noise_first_pass(n_frames: int, cfg: RcConfig, seed: int = 0) -> list[FirstPassRecord]:
    """Worst-case first pass: predictions are white noise around the budget.

    Draws N(mu, sigma^2) with mu = sigma = per-frame budget, rounded and
    clamped to >= 1.
    """
    if n_frames < 1:
        raise ValueError("n_frames must be >= 1")
    rng = np.random.default_rng(seed)
    mu = cfg.frame_budget
    draws = rng.normal(mu, mu, size=n_frames)
    return [
        FirstPassRecord(frame_index=i, q_p=cfg.first_pass_qp,
                        b_hat_p=max(1.0, float(np.floor(d + 0.5))))
        for i, d in enumerate(draws)
    ]


def compute_target_bits(state: RcState, cfg: RcConfig) -> float:
    """Bit target for the next frame: base budget minus a deficit share."""
    return max(1.0, state.b_base - cfg.deficit_gain * state.deficit)


def map_qp(record: FirstPassRecord, b_prime: float, cfg: RcConfig) -> tuple[float, int]:
    """R-QP mapping of one frame: real-valued q_bar and final integer QP."""
    q_bar = record.q_p - cfg.c_low * math.sqrt(max(1, record.q_p)) * math.log2(
        b_prime / record.b_hat_p
    )
    corrected = q_bar + c_high_for(cfg.resolution) * max(0.0, cfg.q_start - q_bar)
    q_prime = min(cfg.qp_max, max(cfg.qp_min, _round_half_away(corrected)))
    return q_bar, q_prime


def run_second_pass(records: Sequence[FirstPassRecord],
                    encoder: Callable[[FrameDecision], float],
                    cfg: RcConfig) -> tuple[list[FrameDecision], dict]:
    """Sequentially encode all frames under deficit compensation.

    Returns the per-frame decision trace and a summary dict. An encoder
    failure raises EncoderError carrying the partial trace.
    """
    if not records:
        raise ValueError("no first-pass records")
    state = RcState.initial(cfg)
    decisions: list[FrameDecision] = []
    for rec in records:
        b_prime = compute_target_bits(state, cfg)
        q_bar, q_prime = map_qp(rec, b_prime, cfg)
        pending = FrameDecision(
            frame_index=rec.frame_index, q_p=rec.q_p, b_hat_p=rec.b_hat_p,
            b_prime_p=b_prime, q_bar_p=q_bar, q_prime_p=q_prime,
        )
        try:
            actual = float(encoder(pending))
        except Exception as exc:
            raise EncoderError(
                f"encoder failed at frame {rec.frame_index}: {exc}", decisions
            ) from exc
        decisions.append(replace(pending, actual_bits=actual))
        state.deficit += actual - state.b_base
        state.frames_done += 1
    total_bits = math.fsum(d.actual_bits for d in decisions)
    n = len(decisions)
    summary = {
        "target_bitrate": cfg.target_bitrate,
        "fps": cfg.fps_text,
        "total_bits": total_bits,
        "bitrate_deviation": (total_bits - n * state.b_base) / (n * state.b_base),
        "mean_qp": math.fsum(d.q_prime_p for d in decisions) / n,
    }
    return decisions, summary


def write_trace_csv(path: str, decisions: Iterable[FrameDecision], b_base: float) -> None:
    """Per-frame trace with the running deficit recomputed alongside."""
    deficit = 0.0
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_CSV_HEADER)
        for d in decisions:
            deficit += d.actual_bits - b_base
            writer.writerow([
                d.frame_index, d.q_p, f"{d.b_hat_p:.9g}", f"{d.b_prime_p:.9g}",
                f"{d.q_bar_p:.9g}", d.q_prime_p, f"{d.actual_bits:.9g}", f"{deficit:.9g}",
            ])


def read_trace_csv(path: str) -> list[FrameDecision]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != TRACE_CSV_HEADER:
            raise ValueError(f"{path}: expected header {','.join(TRACE_CSV_HEADER)}")
        out = []
        for rec in reader:
            out.append(FrameDecision(
                frame_index=int(rec[0]), q_p=int(rec[1]), b_hat_p=float(rec[2]),
                b_prime_p=float(rec[3]), q_bar_p=float(rec[4]), q_prime_p=int(rec[5]),
                actual_bits=float(rec[6]),
            ))
    return out
