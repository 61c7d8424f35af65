#!/usr/bin/env python3
"""Write a small synthetic Y4M clip for trying the CLI end to end.

Frames blend a smooth gradient with seeded noise whose amplitude varies
per frame, so the complexity features differ frame to frame.
"""

import argparse

import numpy as np

from intrarc.video_io import PlanarFrame, VideoGeometry, write_y4m


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="demo.y4m")
    ap.add_argument("--frames", type=int, default=30)
    ap.add_argument("--size", default="128x128")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    w, h = (int(v) for v in args.size.split("x"))
    g = VideoGeometry(w, h)
    rng = np.random.default_rng(args.seed)
    gradient = np.linspace(0, 200, w)[None, :] + np.linspace(0, 40, h)[:, None]

    frames = []
    for i in range(args.frames):
        amp = 10 + 90 * (i % 10) / 9  # sawtooth texture amplitude
        y = gradient + rng.normal(0, amp, (h, w))
        u = 120 + rng.normal(0, amp / 2, (h // 2, w // 2))
        v = 130 + rng.normal(0, amp / 2, (h // 2, w // 2))
        clip = lambda p: np.clip(p, 0, 255).astype(np.uint8).reshape(-1)
        frames.append(PlanarFrame(g, clip(y), clip(u), clip(v), index=i))
    n = write_y4m(args.out, frames)
    print(f"wrote {n} frames of {w}x{h} to {args.out}")


if __name__ == "__main__":
    main()
