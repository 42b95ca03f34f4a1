#!/usr/bin/env python3
"""Full ablation matrix on a synthetic corpus: every branch variant across
every task granularity, written as one CSV.

Usage: python3 scripts/ablation_matrix.py --out ablation.csv [--n 60] [--epochs 10]
"""

import argparse
import sys
import tempfile
from pathlib import Path

import numpy as np

from ptmfnet.ablation import run_ablation, write_ablation_csv
from ptmfnet.dataio import SynthSpec, load_manifest, synth_dataset
from ptmfnet.model import ModelConfig


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="ablation.csv")
    ap.add_argument("--n", type=int, default=60, help="synthetic corpus size")
    ap.add_argument("--class-sep", type=float, default=1.5)
    ap.add_argument("--personality-sep", type=float, default=3.0)
    ap.add_argument("--epochs", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--data-seed", type=int, default=7)
    ap.add_argument("--work-dir", default=None)
    args = ap.parse_args()

    work = Path(args.work_dir) if args.work_dir else Path(tempfile.mkdtemp(prefix="ablation_"))
    spec = SynthSpec(n_samples=args.n, task="quinary", class_sep=args.class_sep,
                     personality_sep=args.personality_sep)
    records = load_manifest(synth_dataset(spec, np.random.default_rng(args.data_seed),
                                          work / "data"))
    base = ModelConfig.compact(epochs=args.epochs, seed=args.seed)
    rows = run_ablation(base, records, progress=lambda line: print(line, file=sys.stderr))
    path = write_ablation_csv(rows, args.out)
    print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
