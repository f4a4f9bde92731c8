"""Time one training epoch per model (mean ± std over repeats); no thresholds.

    python scripts/bench_epochs.py --repeats 3 --train-limit 10000
"""
import argparse

from densembed.cli import RunSpec, cmd_bench

MODELS = [("fc0", {}), ("fc50", {}), ("logistic-el", dict(B=5)), ("logistic-el", dict(B=15)),
          ("logistic-el-mnn", dict(B=10, B0=5))]


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--data-dir", default=None)
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--train-limit", type=int, default=None)
    args = ap.parse_args()
    for name, kw in MODELS:
        cmd_bench(RunSpec(model=name, data_dir=args.data_dir, train_limit=args.train_limit, **kw), args.repeats)


if __name__ == "__main__":
    main()
