"""Compare the location/scale squash presets on a Logistic-EL model.

    python scripts/squash_ablation.py --B 5 --epochs 20 --seed 0
"""
import argparse

from densembed.data import load_mnist
from densembed.densities import SQUASH_PRESETS
from densembed.layers import build_model
from densembed.train import TrainConfig, fit


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--data-dir", default=None)
    ap.add_argument("--B", type=int, default=5)
    ap.add_argument("--epochs", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--presets", nargs="+", default=sorted(SQUASH_PRESETS))
    args = ap.parse_args()

    train, test = load_mnist(args.data_dir)
    for preset in args.presets:
        model = build_model("logistic-el", B=args.B, squash_preset=preset)
        rec = fit(model, train, test, TrainConfig(epochs=args.epochs, seed=args.seed))
        curve = " ".join(f"{e['test_error']:.2f}" for e in rec.epochs)
        print(f"{preset:<11} final {rec.final_error:.2f}%  curve: {curve}", flush=True)


if __name__ == "__main__":
    main()
