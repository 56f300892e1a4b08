#!/usr/bin/env python3
"""End-to-end desk-scale experiment: synthesize data, train the 3- and
30-epoch regimes, and compare test-set metrics against the cloudy
baseline. Mirrors the epoch comparison the acceptance suite locks in,
but leaves artifacts (checkpoints, report.json, grid.png) behind for
inspection.

Usage:
    python scripts/desk_experiment.py --out runs/desk --count 64 --size 32
"""

import argparse
import json
import os
import sys
import time

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

import attngan  # noqa: E402
from attngan import (ModelConfig, TrainConfig, evaluate, load_dataset,  # noqa: E402
                     select_pairs, split, synth_dataset, train)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__,
                                     formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    parser.add_argument("--out", default="runs/desk", help="experiment directory")
    parser.add_argument("--count", type=int, default=64, help="synthetic pairs")
    parser.add_argument("--size", type=int, default=32, help="image side in pixels")
    parser.add_argument("--seed", type=int, default=42, help="RNG seed")
    parser.add_argument("--epochs", type=int, nargs="+", default=[3, 30],
                        help="epoch regimes to train and compare")
    args = parser.parse_args()

    data_root = os.path.join(args.out, "data")
    t0 = time.perf_counter()
    manifest = synth_dataset(args.count, args.size, args.seed, data_root)
    manifest = split(manifest, attngan.default_train_count(args.count), args.seed)
    manifest.save()
    _, pairs = load_dataset(data_root, args.size)
    train_pairs = select_pairs(pairs, manifest.train_ids)
    test_pairs = select_pairs(pairs, manifest.test_ids)
    print(f"dataset: {len(train_pairs)} train / {len(test_pairs)} test "
          f"at {args.size}x{args.size}")

    results = {}
    for epochs in args.epochs:
        run_dir = os.path.join(args.out, f"run{epochs:03d}ep")
        cfg = TrainConfig(epochs=epochs, seed=args.seed,
                          model=ModelConfig(image_size=args.size))
        state = train(train_pairs, cfg, run_dir)
        report = evaluate(state, test_pairs,
                          os.path.join(run_dir, "report.json"),
                          os.path.join(run_dir, "grid.png"))
        results[epochs] = report
        print(f"{epochs:3d} epochs: psnr {report.summary['psnr_db_mean']:6.2f} dB "
              f"(baseline {report.baseline['psnr_db_mean']:6.2f}), "
              f"ssim {report.summary['ssim_mean']:.4f} "
              f"(baseline {report.baseline['ssim_mean']:.4f})")

    summary = {
        "elapsed_s": round(time.perf_counter() - t0, 1),
        "regimes": {str(e): {"psnr_db": r.summary["psnr_db_mean"],
                             "ssim": r.summary["ssim_mean"],
                             "baseline_psnr_db": r.baseline["psnr_db_mean"],
                             "baseline_ssim": r.baseline["ssim_mean"]}
                    for e, r in results.items()},
    }
    with open(os.path.join(args.out, "summary.json"), "w") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
    print(f"done in {summary['elapsed_s']}s; artifacts under {args.out}/")
    return 0


if __name__ == "__main__":
    sys.exit(main())
