"""Evaluation metrics: PSNR, component-weighted PSNR, BD-rate, deviation.

BD-rate interpolates both curves as log10(rate) over PSNR with a
monotone piecewise cubic (PCHIP), integrates the difference exactly
over the common PSNR interval, and converts the mean log offset back to
a percentage. Positive values mean the test curve spends more bits for
the same quality.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.interpolate import PchipInterpolator

PSNR_CAP = 99.99
RD_CSV_HEADER = ["bitrate", "psnr_yuv"]
BD_METHOD = "pchip-log-rate"


class OverlapError(ValueError):
    """RD curves share no PSNR interval."""


def psnr(reference, distorted, max_value: float) -> float:
    """Peak signal-to-noise ratio in dB, capped at 99.99 for identical input."""
    ref = np.asarray(reference, dtype=np.float64)
    dist = np.asarray(distorted, dtype=np.float64)
    if ref.shape != dist.shape:
        raise ValueError(f"plane shapes differ: {ref.shape} vs {dist.shape}")
    if max_value <= 0:
        raise ValueError("max_value must be positive")
    mse = float(np.mean((ref - dist) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(max_value**2 / mse))


def psnr_yuv(py: float, pu: float, pv: float) -> float:
    """Component-weighted PSNR: luma counts six-fold against each chroma."""
    for v in (py, pu, pv):
        if not math.isfinite(v):
            raise ValueError("PSNR inputs must be finite")
    return (6.0 * py + pu + pv) / 8.0


@dataclass(frozen=True)
class RdPoint:
    bitrate: float   # bits per second
    psnr_yuv: float  # dB

    def __post_init__(self):
        if self.bitrate <= 0:
            raise ValueError("bitrate must be positive")
        if not math.isfinite(self.psnr_yuv):
            raise ValueError("psnr must be finite")


@dataclass(frozen=True)
class RdCurve:
    points: tuple[RdPoint, ...]

    def __post_init__(self):
        if len(self.points) < 4:
            raise ValueError(f"an RD curve needs >= 4 points, got {len(self.points)}")
        rates = [p.bitrate for p in self.points]
        psnrs = [p.psnr_yuv for p in self.points]
        if any(b >= a for b, a in zip(rates, rates[1:])):
            raise ValueError("bitrates must be strictly increasing")
        if any(b > a for b, a in zip(psnrs, psnrs[1:])):
            raise ValueError("psnr must be non-decreasing with bitrate")

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[float, float]]) -> "RdCurve":
        pts = tuple(RdPoint(bitrate=r, psnr_yuv=p) for r, p in sorted(pairs))
        return cls(points=pts)

    def psnr_range(self) -> tuple[float, float]:
        return self.points[0].psnr_yuv, self.points[-1].psnr_yuv


def _log_rate_spline(curve: RdCurve) -> PchipInterpolator:
    x = np.array([p.psnr_yuv for p in curve.points])
    y = np.log10([p.bitrate for p in curve.points])
    if (np.diff(x) <= 0).any():
        raise ValueError("BD-rate needs strictly increasing PSNR within each curve")
    return PchipInterpolator(x, y)


def bd_rate(anchor: RdCurve, test: RdCurve) -> float:
    """Average bitrate difference of `test` against `anchor`, in percent."""
    lo = max(anchor.psnr_range()[0], test.psnr_range()[0])
    hi = min(anchor.psnr_range()[1], test.psnr_range()[1])
    if hi <= lo:
        raise OverlapError(
            f"no PSNR overlap: anchor {anchor.psnr_range()}, test {test.psnr_range()}"
        )
    ia = _log_rate_spline(anchor).integrate(lo, hi)
    it = _log_rate_spline(test).integrate(lo, hi)
    mean_log_diff = (it - ia) / (hi - lo)
    return 100.0 * (10.0**mean_log_diff - 1.0)


def bd_report(anchor: RdCurve, test: RdCurve) -> dict:
    lo = max(anchor.psnr_range()[0], test.psnr_range()[0])
    hi = min(anchor.psnr_range()[1], test.psnr_range()[1])
    return {
        "bd_rate_percent": bd_rate(anchor, test),
        "psnr_overlap": [lo, hi],
        "method": BD_METHOD,
    }


def bitrate_deviation(trace: Sequence, cfg) -> float:
    """Relative budget error of a decision trace, in percent."""
    if not trace:
        raise ValueError("empty trace")
    b_base = cfg.frame_budget
    total = math.fsum(d.actual_bits for d in trace)
    n = len(trace)
    return 100.0 * (total - n * b_base) / (n * b_base)


def write_rd_csv(path: str, curve: RdCurve) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RD_CSV_HEADER)
        for p in curve.points:
            writer.writerow([f"{p.bitrate:.9g}", f"{p.psnr_yuv:.9g}"])


def read_rd_csv(path: str) -> RdCurve:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != RD_CSV_HEADER:
            raise ValueError(f"{path}: expected header {','.join(RD_CSV_HEADER)}")
        pairs = [(float(rec[0]), float(rec[1])) for rec in reader]
    return RdCurve.from_pairs(pairs)
