"""Parametric synthetic encoder: a rate law and a distortion law.

Stands in for a real intra encoder so the controller can be validated
in a closed loop at desk scale. Rate follows
kappa * pixels * (0.01 + e_y)^gamma * 2^(-q / delta), i.e. spend halves
every `delta` QP steps and grows with luma texture; optional lognormal
multiplicative noise models per-frame spread. Distortion is linear in
QP. Noise draws are keyed on (seed, frame_index, q) so every function
here is pure and safe to evaluate in parallel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from intrarc.features import FrameFeatures
from intrarc.forest import TrainingSample

PSNR_FLOOR = 20.0
PSNR_CEIL = 99.0


@dataclass(frozen=True)
class SimParams:
    kappa: float               # bits per pixel at q=0 and unit texture factor
    gamma: float = 0.8
    delta: float = 6.0         # QP interval over which spend halves
    noise_sigma: float = 0.0   # lognormal log-std of multiplicative noise
    psnr_intercept: float = 60.0
    psnr_slope: float = 0.7
    seed: int = 0

    def __post_init__(self):
        if self.kappa <= 0 or self.delta <= 0 or self.psnr_slope <= 0:
            raise ValueError("kappa, delta and psnr_slope must be positive")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")


def expected_bits(features: FrameFeatures, q: int, pixels: int, params: SimParams) -> float:
    """Noiseless, unrounded rate law; the oracle predictor."""
    return params.kappa * pixels * (0.01 + features.e_y) ** params.gamma * 2.0 ** (-q / params.delta)


def sim_bits(features: FrameFeatures, q: int, pixels: int, params: SimParams) -> int:
    """Bits spent encoding one frame at QP q (>= 1)."""
    if not 0 <= q <= 63:
        raise ValueError(f"q={q} outside [0, 63]")
    if pixels <= 0:
        raise ValueError("pixels must be positive")
    noise = 1.0
    if params.noise_sigma > 0:
        rng = np.random.default_rng(
            np.random.SeedSequence(params.seed, spawn_key=(features.frame_index, q))
        )
        noise = float(np.exp(rng.normal(0.0, params.noise_sigma)))
    raw = expected_bits(features, q, pixels, params) * noise
    return max(1, int(np.floor(raw + 0.5)))


def sim_psnr(q: int, params: SimParams) -> float:
    """Frame quality in dB at QP q, linear with clamping."""
    if not 0 <= q <= 63:
        raise ValueError(f"q={q} outside [0, 63]")
    return min(PSNR_CEIL, max(PSNR_FLOOR, params.psnr_intercept - params.psnr_slope * q))


def random_features(n: int, rng: np.random.Generator, start_index: int = 0) -> list[FrameFeatures]:
    """Frame feature vectors drawn uniformly from their practical ranges."""
    e = rng.uniform(0.0, 1.0, size=(n, 3))
    l = rng.uniform(0.0, 1.0, size=(n, 3))
    return [
        FrameFeatures(e_y=e[i, 0], l_y=l[i, 0], e_u=e[i, 1], l_u=l[i, 1],
                      e_v=e[i, 2], l_v=l[i, 2], frame_index=start_index + i)
        for i in range(n)
    ]


def generate_dataset(n: int, params: SimParams, seed: int = 0,
                     pixels: int = 3840 * 2160,
                     q_range: tuple[int, int] = (18, 48)) -> list[TrainingSample]:
    """Synthetic training table: uniform features, uniform QP, simulated bits."""
    if n < 1:
        raise ValueError("dataset size must be >= 1")
    rng = np.random.default_rng(seed)
    feats = random_features(n, rng)
    qs = rng.integers(q_range[0], q_range[1] + 1, size=n)
    return [
        TrainingSample(features=f, q=int(q), bits=sim_bits(f, int(q), pixels, params))
        for f, q in zip(feats, qs)
    ]


def make_encoder(features: list[FrameFeatures], pixels: int, params: SimParams):
    """Encoding callback for the second pass: FrameDecision -> actual bits."""
    by_index = {f.frame_index: f for f in features}

    def encode(decision) -> int:
        return sim_bits(by_index[decision.frame_index], decision.q_prime_p, pixels, params)

    return encode


def make_oracle_predictor(pixels: int, params: SimParams):
    """First-pass predictor with perfect knowledge of the noiseless rate law."""

    def predict_fn(features: FrameFeatures, q: int) -> float:
        return expected_bits(features, q, pixels, params)

    return predict_fn
