"""Train the MNIST comparison models for several seeds and print a results table.

    python scripts/reproduce_mnist_table.py --data-dir /root/data --seeds 0 1 2 --out runs/table1.json

Pass ``--quick`` to train on 6000 images for 3 epochs (a smoke run, not a reproduction).
"""
import argparse
import json
from pathlib import Path

from densembed.data import load_mnist
from densembed.layers import build_model, param_count
from densembed.train import TrainConfig, aggregate, fit

ROWS = [
    ("FC (no hidden)", "fc0", {}),
    ("FC-50", "fc50", {}),
    ("Logistic-EL B=3", "logistic-el", dict(B=3)),
    ("Logistic-EL B=5", "logistic-el", dict(B=5)),
    ("Logistic-EL B=8", "logistic-el", dict(B=8)),
    ("Logistic-EL B=15", "logistic-el", dict(B=15)),
    ("Logistic-EL+mNN B=6, B0=3", "logistic-el-mnn", dict(B=6, B0=3)),
    ("Logistic-EL+mNN B=8, B0=4", "logistic-el-mnn", dict(B=8, B0=4)),
    ("Logistic-EL+mNN B=10, B0=5", "logistic-el-mnn", dict(B=10, B0=5)),
]


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--data-dir", default=None)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--epochs", type=int, default=20)
    ap.add_argument("--squash", default="sigmoid")
    ap.add_argument("--only", nargs="*", help="substrings of row labels to run")
    ap.add_argument("--quick", action="store_true")
    ap.add_argument("--out", default="runs/mnist_table.json")
    args = ap.parse_args()

    train, test = load_mnist(args.data_dir)
    epochs, limit = (3, 6000) if args.quick else (args.epochs, None)
    results = []
    print(f"{'Model':<30} {'Error (%)':>14} {'# parameters':>13}")
    for label, name, kw in ROWS:
        if args.only and not any(s in label for s in args.only):
            continue
        errors = []
        for seed in args.seeds:
            model = build_model(name, squash_preset=args.squash, **kw)
            rec = fit(model, train, test, TrainConfig(epochs=epochs, seed=seed, train_limit=limit))
            errors.append(rec.final_error)
        mean, std = aggregate(errors)
        count = param_count(model)
        print(f"{label:<30} {f'{mean:.2f} ± {std:.2f}':>14} {count:>13}", flush=True)
        results.append({"model": label, "name": name, **kw, "errors": errors, "mean": mean, "std": std,
                        "param_count": count})
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    Path(args.out).write_text(json.dumps({"epochs": epochs, "seeds": args.seeds, "squash": args.squash,
                                          "rows": results}, indent=2) + "\n")


if __name__ == "__main__":
    main()
