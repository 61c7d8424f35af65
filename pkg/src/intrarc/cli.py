"""Command-line front end: analyze | train | predict | rc | bdrate.

Every subcommand that writes an output also writes
<out>.manifest.json recording the command, inputs, fully resolved
configuration and seeds, so a run can be reproduced exactly. All
randomness flows from explicit --seed flags.

Exit codes: 0 success, 2 usage error, 3 data/format error, 4 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time

import numpy as np

from intrarc import __version__
from intrarc import features as feat
from intrarc import forest
from intrarc import metrics
from intrarc import ratecontrol as rc
from intrarc import simulator as sim
from intrarc import video_io

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_IO = 4


def _write_manifest(out_path: str, command: str, inputs: dict, config: dict,
                    seeds: dict, extra: dict | None = None) -> None:
    manifest = {
        "command": command,
        "inputs": inputs,
        "config": config,
        "seeds": seeds,
        "tool_version": __version__,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }
    if extra:
        manifest.update(extra)
    with open(f"{out_path}.manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_json(path: str | None, payload: dict) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _parse_fps(text: str) -> tuple[int, int]:
    if "/" in text:
        num, den = text.split("/", 1)
        return int(num), int(den)
    return int(text), 1


def _parse_resolution(text: str) -> tuple[int, int]:
    w, h = text.lower().split("x", 1)
    return int(w), int(h)


def _parse_raw_geometry(text: str, fps: tuple[int, int]) -> video_io.VideoGeometry:
    """WIDTHxHEIGHT:BITDEPTH:CHROMA, e.g. 1920x1080:8:420."""
    dims, bits, chroma = text.split(":")
    w, h = _parse_resolution(dims)
    return video_io.VideoGeometry(width=w, height=h, bit_depth=int(bits),
                                  chroma_format=chroma, fps_num=fps[0], fps_den=fps[1])


def _is_y4m(path: str) -> bool:
    with open(path, "rb") as fh:
        return fh.read(9) == b"YUV4MPEG2"


def cmd_analyze(args) -> int:
    if _is_y4m(args.input):
        frames = video_io.open_y4m(args.input)
    else:
        if not args.raw_geometry:
            raise UsageError("headerless input requires --raw-geometry")
        geometry = _parse_raw_geometry(args.raw_geometry, (30, 1))
        frames = video_io.open_raw_yuv(args.input, geometry)
    cfg = feat.AnalyzerConfig(
        block_size_luma=args.block_size,
        block_size_chroma=max(8, args.block_size // 2),
    )
    start = time.perf_counter()
    rows = feat.extract_sequence(frames, cfg, threads=args.threads)
    elapsed = time.perf_counter() - start
    feat.write_features_csv(args.out, rows)
    _write_manifest(
        args.out, "analyze",
        inputs={"input": args.input, "raw_geometry": args.raw_geometry},
        config={"block_size_luma": cfg.block_size_luma,
                "block_size_chroma": cfg.block_size_chroma,
                "threads": args.threads},
        seeds={},
        extra={"first_pass_throughput": {
            "frames": len(rows),
            "elapsed_seconds": round(elapsed, 6),
            "frames_per_second": round(len(rows) / elapsed, 3) if elapsed > 0 else None,
        }},
    )
    print(f"wrote {len(rows)} feature rows to {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    X, y = forest.read_training_csv(args.data)
    hp = forest.ForestHyperparams(
        n_estimators=args.trees, max_depth=args.max_depth,
        min_samples_leaf=args.min_samples_leaf, min_samples_split=args.min_samples_split,
        seed=args.seed, max_features=args.max_features,
    )
    holdout_stats = None
    if args.holdout:
        if not 0.0 < args.holdout < 1.0:
            raise UsageError("--holdout must be a fraction in (0, 1)")
        rng = np.random.default_rng(args.seed)
        perm = rng.permutation(len(y))
        n_test = max(1, int(round(args.holdout * len(y))))
        test_idx, train_idx = perm[:n_test], perm[n_test:]
        model = forest.train_arrays(X[train_idx], y[train_idx], hp, threads=args.threads)
        pred = forest.predict_batch(model, X[test_idx])
        resid = y[test_idx] - pred
        ss_res = float(np.sum(resid**2))
        ss_tot = float(np.sum((y[test_idx] - y[test_idx].mean()) ** 2))
        holdout_stats = {
            "fraction": args.holdout,
            "n_train": int(train_idx.size),
            "n_test": int(test_idx.size),
            "r2": 1.0 - ss_res / ss_tot,
            "mae": float(np.mean(np.abs(resid))),
        }
    else:
        model = forest.train_arrays(X, y, hp, threads=args.threads)
    size = forest.save(model, args.out)
    _write_manifest(
        args.out, "train",
        inputs={"data": args.data},
        config={"n_estimators": hp.n_estimators, "max_depth": hp.max_depth,
                "min_samples_leaf": hp.min_samples_leaf,
                "min_samples_split": hp.min_samples_split,
                "max_features": hp.max_features, "threads": args.threads},
        seeds={"seed": hp.seed},
        extra={"model_bytes": size, "n_samples": model.n_samples,
               "holdout": holdout_stats},
    )
    msg = f"trained {hp.n_estimators} trees on {model.n_samples} samples -> {args.out} ({size} bytes)"
    if holdout_stats:
        msg += f"; holdout R2={holdout_stats['r2']:.4f} MAE={holdout_stats['mae']:.1f}"
    print(msg)
    return EXIT_OK


def cmd_predict(args) -> int:
    model = forest.load(args.model)
    rows = feat.read_features_csv(args.features)
    out = args.out
    records = [(f.frame_index, args.qp, forest.predict(model, f, args.qp)) for f in rows]
    if out:
        with open(out, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["frame_index", "q", "b_hat"])
            for idx, q, b in records:
                writer.writerow([idx, q, f"{b:.9g}"])
        _write_manifest(out, "predict",
                        inputs={"model": args.model, "features": args.features},
                        config={"qp": args.qp}, seeds={})
    else:
        for idx, q, b in records:
            print(f"{idx},{q},{b:.9g}")
    return EXIT_OK


def _log_encoder(path: str, n_frames: int):
    """Encoder backed by an external per-(frame, q) bits table."""
    table: dict[tuple[int, int], float] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["frame_index", "q", "bits"]:
            raise ValueError(f"{path}: expected header frame_index,q,bits")
        for rec in reader:
            table[(int(rec[0]), int(rec[1]))] = float(rec[2])
    logged_frames = {f for f, _ in table}
    if logged_frames != set(range(n_frames)):
        raise ValueError(
            f"{path}: log covers {len(logged_frames)} frames, features have {n_frames}"
        )

    def encode(decision) -> float:
        key = (decision.frame_index, decision.q_prime_p)
        if key not in table:
            raise KeyError(f"no log entry for frame {key[0]} at q={key[1]}")
        return table[key]

    return encode


def cmd_rc(args) -> int:
    rows = feat.read_features_csv(args.features)
    fps = _parse_fps(args.fps)
    width, height = _parse_resolution(args.resolution)
    resolution = video_io.VideoGeometry(width=width, height=height,
                                        fps_num=fps[0], fps_den=fps[1])
    cfg = rc.RcConfig(
        target_bitrate=args.bitrate, fps_num=fps[0], fps_den=fps[1],
        resolution=resolution, c_low=args.c_low, first_pass_qp=args.first_pass_qp,
        deficit_gain=args.deficit_gain,
    )

    if args.first_pass == "noise":
        records = rc.build_noise_first_pass(len(rows), cfg, seed=args.seed)
    else:
        if not args.model:
            raise UsageError("either --model or --first-pass noise is required")
        model = forest.load(args.model)
        records = rc.build_first_pass(rows, model, cfg)

    sim_params = sim.SimParams(kappa=args.sim_kappa, gamma=args.sim_gamma,
                               delta=args.sim_delta, noise_sigma=args.sim_noise,
                               seed=args.sim_seed)
    if args.encoder == "sim":
        encoder = sim.make_encoder(rows, resolution.pixels, sim_params)
    elif args.encoder.startswith("log:"):
        encoder = _log_encoder(args.encoder[4:], len(rows))
    else:
        raise UsageError(f"unknown encoder backend {args.encoder!r}")

    decisions, summary = rc.run_second_pass(records, encoder, cfg)
    rc.write_trace_csv(args.trace, decisions, cfg.frame_budget)
    if args.report:
        _write_json(args.report, summary)
    _write_manifest(
        args.trace, "rc",
        inputs={"features": args.features, "model": args.model,
                "encoder": args.encoder},
        config={"target_bitrate": cfg.target_bitrate, "fps": cfg.fps_text,
                "resolution": f"{width}x{height}",
                "c_low": cfg.c_low, "c_high": rc.c_high_for(resolution),
                "q_start": cfg.q_start, "first_pass": args.first_pass,
                "first_pass_qp": cfg.first_pass_qp,
                "deficit_gain": cfg.deficit_gain,
                "qp_min": cfg.qp_min, "qp_max": cfg.qp_max,
                "frame_budget": cfg.frame_budget,
                "sim": {"kappa": sim_params.kappa, "gamma": sim_params.gamma,
                        "delta": sim_params.delta, "noise_sigma": sim_params.noise_sigma}},
        seeds={"first_pass_seed": args.seed, "sim_seed": args.sim_seed},
        extra={"summary": summary},
    )
    print(f"rc: {len(decisions)} frames, deviation "
          f"{100.0 * summary['bitrate_deviation']:+.3f}%, mean QP {summary['mean_qp']:.2f}")
    return EXIT_OK


def cmd_bdrate(args) -> int:
    anchor = metrics.read_rd_csv(args.anchor)
    test = metrics.read_rd_csv(args.test)
    report = metrics.bd_report(anchor, test)
    _write_json(args.out, report)
    if args.out:
        _write_manifest(args.out, "bdrate",
                        inputs={"anchor": args.anchor, "test": args.test},
                        config={"method": report["method"]}, seeds={})
    return EXIT_OK


class UsageError(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="intrarc",
        description="Two-pass all-intra rate control from low-complexity video features",
    )
    parser.add_argument("--version", action="version", version=f"intrarc {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("analyze", help="extract per-frame complexity features")
    p.add_argument("--input", required=True, help="Y4M or headerless planar YUV file")
    p.add_argument("--raw-geometry", default=None,
                   help="WxH:BITDEPTH:CHROMA for headerless input, e.g. 1920x1080:8:420")
    p.add_argument("--block-size", type=int, default=32, help="luma DCT block size")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    p.add_argument("--out", required=True, help="features CSV output path")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("train", help="train the bits estimator forest")
    p.add_argument("--data", required=True, help="training CSV")
    p.add_argument("--trees", type=int, default=100)
    p.add_argument("--max-depth", type=int, default=12)
    p.add_argument("--min-samples-leaf", type=int, default=1)
    p.add_argument("--min-samples-split", type=int, default=2)
    p.add_argument("--max-features", type=int, default=forest.N_FEATURES)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--holdout", type=float, default=None,
                   help="held-out fraction for R2/MAE reporting")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    p.add_argument("--out", required=True, help="model file output path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="predict per-frame bits at one QP")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--qp", type=int, required=True)
    p.add_argument("--out", default=None, help="CSV output (stdout if omitted)")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("rc", help="run the two-pass rate control loop")
    p.add_argument("--features", required=True)
    p.add_argument("--model", default=None, help="bits estimator model file")
    p.add_argument("--first-pass", choices=["model", "noise"], default="model")
    p.add_argument("--seed", type=int, default=0, help="noise first-pass seed")
    p.add_argument("--bitrate", type=float, required=True, help="target bits/second")
    p.add_argument("--fps", default="30", help="frames/second, e.g. 30 or 30000/1001")
    p.add_argument("--resolution", required=True, help="WxH, drives the high-rate correction")
    p.add_argument("--encoder", default="sim", help="'sim' or 'log:<csv path>'")
    p.add_argument("--c-low", type=float, default=1.0)
    p.add_argument("--first-pass-qp", type=int, default=32)
    p.add_argument("--deficit-gain", type=float, default=0.5)
    p.add_argument("--sim-kappa", type=float, default=1.0)
    p.add_argument("--sim-gamma", type=float, default=0.8)
    p.add_argument("--sim-delta", type=float, default=6.0)
    p.add_argument("--sim-noise", type=float, default=0.0)
    p.add_argument("--sim-seed", type=int, default=0)
    p.add_argument("--trace", required=True, help="per-frame trace CSV output")
    p.add_argument("--report", default=None, help="summary JSON output")
    p.set_defaults(func=cmd_rc)

    p = sub.add_parser("bdrate", help="BD-rate between two RD curve CSVs")
    p.add_argument("--anchor", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--out", default=None, help="report JSON output (stdout if omitted)")
    p.set_defaults(func=cmd_bdrate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except metrics.OverlapError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (video_io.VideoFormatError, forest.ModelFormatError,
            rc.EncoderError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
