#!/usr/bin/env python3
"""Learnability experiment: a separable synthetic corpus must be fit almost
perfectly, and a zero-separation corpus must stay at chance on validation.

Usage: python3 scripts/learnability.py [--n 200] [--epochs 15] [--null-seeds 5]
"""

import argparse
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from ptmfnet.dataio import SynthSpec, load_manifest, synth_dataset
from ptmfnet.model import ModelConfig
from ptmfnet.training import train


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=200, help="samples per corpus")
    ap.add_argument("--class-sep", type=float, default=3.0)
    ap.add_argument("--epochs", type=int, default=15)
    ap.add_argument("--null-epochs", type=int, default=8)
    ap.add_argument("--null-seeds", type=int, default=5)
    ap.add_argument("--data-seed", type=int, default=314)
    ap.add_argument("--work-dir", default=None, help="default: a fresh temp dir")
    args = ap.parse_args()

    work = Path(args.work_dir) if args.work_dir else Path(tempfile.mkdtemp(prefix="learnability_"))
    print(f"working in {work}", file=sys.stderr)

    manifest = synth_dataset(SynthSpec(n_samples=args.n, task="binary", class_sep=args.class_sep),
                             np.random.default_rng(args.data_seed), work / "separable")
    records = load_manifest(manifest)
    t0 = time.perf_counter()
    state = train(ModelConfig.compact(task="binary", epochs=args.epochs, seed=0), records)
    elapsed = time.perf_counter() - t0
    best_train = max(r["train_acc"] for r in state.log)
    print(f"separable: best train_acc={best_train:.4f} "
          f"best val_f1_task={state.best_val_f1:.4f} ({elapsed:.1f}s)")

    null_manifest = synth_dataset(SynthSpec(n_samples=args.n, task="binary", class_sep=0.0),
                                  np.random.default_rng(args.data_seed), work / "null")
    null_records = load_manifest(null_manifest)
    n_val = round(args.n * 0.2)
    sigma = (0.25 / n_val) ** 0.5
    ok = True
    for seed in range(args.null_seeds):
        cfg = ModelConfig.compact(task="binary", epochs=args.null_epochs, seed=seed)
        final = train(cfg, null_records).log[-1]["val_acc_task"]
        inside = abs(final - 0.5) <= 3 * sigma
        ok &= inside
        print(f"null seed {seed}: final val_acc_task={final:.4f} "
              f"(chance band +/- {3 * sigma:.4f}) {'ok' if inside else 'OUTSIDE'}")
    print(f"learnable={best_train >= 0.95} null_at_chance={ok}")
    return 0 if (best_train >= 0.95 and ok) else 1


if __name__ == "__main__":
    sys.exit(main())
