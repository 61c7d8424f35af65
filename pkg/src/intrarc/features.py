"""Per-frame spatial complexity features from block DCT energy.

Each plane is split into non-overlapping blocks (edges padded by
replication), every block gets an orthonormal 2-D DCT-II, and the
absolute AC coefficients are summed with a radially increasing weight
exp(sqrt((i/w)^2 + (j/w)^2)). The plane energy is that sum averaged
over blocks and normalized by block area and the nominal sample scale,
so values are comparable across resolutions and bit depths. The
companion brightness feature is the plain normalized sample mean.

Sample scale is 255 * 2^(bit_depth - 8) rather than 2^bit_depth - 1 so
that content scaled between bit depths maps to identical features.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np
from scipy.fft import dctn

FEATURE_CSV_HEADER = ["frame_index", "e_y", "l_y", "e_u", "l_u", "e_v", "l_v"]

# Chroma of a luma-only frame is reported as mid-grey with zero texture.
NEUTRAL_CHROMA_LEVEL = 0.5


@dataclass(frozen=True)
class AnalyzerConfig:
    block_size_luma: int = 32
    block_size_chroma: int = 16

    def __post_init__(self):
        for size in (self.block_size_luma, self.block_size_chroma):
            if size < 8 or size > 64 or size & (size - 1):
                raise ValueError(f"block size {size} must be a power of two in [8, 64]")


@dataclass(frozen=True)
class FrameFeatures:
    """Six-element complexity vector of one frame, in estimator order."""

    e_y: float
    l_y: float
    e_u: float
    l_u: float
    e_v: float
    l_v: float
    frame_index: int = 0

    def as_array(self) -> np.ndarray:
        return np.array([self.e_y, self.l_y, self.e_u, self.l_u, self.e_v, self.l_v])


_WEIGHTS: dict[int, np.ndarray] = {}


def _ac_weights(w: int) -> np.ndarray:
    cached = _WEIGHTS.get(w)
    if cached is None:
        i = np.arange(w, dtype=np.float64) / w
        cached = np.exp(np.sqrt(i[:, None] ** 2 + i[None, :] ** 2))
        cached[0, 0] = 0.0  # DC excluded
        _WEIGHTS[w] = cached
    return cached


def _pad_to_blocks(plane: np.ndarray, w: int) -> np.ndarray:
    h, width = plane.shape
    pad_r = (-h) % w
    pad_c = (-width) % w
    if pad_r or pad_c:
        plane = np.pad(plane, ((0, pad_r), (0, pad_c)), mode="edge")
    return plane


def block_texture_energies(plane: np.ndarray, block_size: int) -> np.ndarray:
    """Weighted absolute-AC DCT sums for every block of a 2-D plane.

    Edge blocks are completed by replicating the last row/column. The
    returned array is unnormalized (one raw energy per block).
    """
    padded = _pad_to_blocks(np.asarray(plane, dtype=np.float64), block_size)
    nr = padded.shape[0] // block_size
    nc = padded.shape[1] // block_size
    blocks = padded.reshape(nr, block_size, nc, block_size).transpose(0, 2, 1, 3)
    coeffs = dctn(blocks, type=2, norm="ortho", axes=(-2, -1))
    weighted = np.abs(coeffs) * _ac_weights(block_size)
    return weighted.sum(axis=(-2, -1)).reshape(-1)


def plane_energy(plane: np.ndarray, block_size: int, sample_scale: float) -> float:
    """Normalized texture energy of a 2-D plane (exact block-order invariant sum)."""
    energies = block_texture_energies(plane, block_size)
    return math.fsum(energies.tolist()) / (energies.size * block_size**2 * sample_scale)


def extract_features(frame, cfg: AnalyzerConfig = AnalyzerConfig()) -> FrameFeatures:
    """Compute the six complexity features of one frame."""
    g = frame.geometry
    scale = 255.0 * 2 ** (g.bit_depth - 8)
    y = frame.y_plane.reshape(g.height, g.width)
    e_y = plane_energy(y, cfg.block_size_luma, scale)
    l_y = min(1.0, float(frame.y_plane.mean()) / scale)
    if g.chroma_format == "400":
        e_u = e_v = 0.0
        l_u = l_v = NEUTRAL_CHROMA_LEVEL
    else:
        ch, cw = g.height // 2, g.width // 2
        u = frame.u_plane.reshape(ch, cw)
        v = frame.v_plane.reshape(ch, cw)
        e_u = plane_energy(u, cfg.block_size_chroma, scale)
        e_v = plane_energy(v, cfg.block_size_chroma, scale)
        l_u = min(1.0, float(frame.u_plane.mean()) / scale)
        l_v = min(1.0, float(frame.v_plane.mean()) / scale)
    return FrameFeatures(e_y=e_y, l_y=l_y, e_u=e_u, l_u=l_u, e_v=e_v, l_v=l_v,
                         frame_index=frame.index)


def extract_sequence(frames: Iterable, cfg: AnalyzerConfig = AnalyzerConfig(),
                     threads: int = 1) -> list[FrameFeatures]:
    """Extract features for a whole frame stream, ordered by frame index."""
    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            result = list(pool.map(lambda f: extract_features(f, cfg), frames))
    else:
        result = [extract_features(f, cfg) for f in frames]
    if not result:
        raise ValueError("no frames in input stream")
    return result


def write_features_csv(path: str, rows: Iterable[FrameFeatures]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(FEATURE_CSV_HEADER)
        for f in rows:
            writer.writerow([f.frame_index] + [f"{v:.9g}" for v in f.as_array()])


def read_features_csv(path: str) -> list[FrameFeatures]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != FEATURE_CSV_HEADER:
            raise ValueError(f"{path}: expected header {','.join(FEATURE_CSV_HEADER)}")
        rows = []
        for rec in reader:
            idx = int(rec[0])
            e_y, l_y, e_u, l_u, e_v, l_v = (float(v) for v in rec[1:7])
            rows.append(FrameFeatures(e_y, l_y, e_u, l_u, e_v, l_v, frame_index=idx))
    return rows
