"""Train a Logistic-EL and a micro-network model briefly, then write their receptive fields as PGM.

    python scripts/render_fields.py --out figures --epochs 2
"""
import argparse
from pathlib import Path

from densembed.data import load_mnist
from densembed.layers import build_model
from densembed.render import receptive_field, to_gray, write_pgm
from densembed.train import TrainConfig, fit


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--data-dir", default=None)
    ap.add_argument("--epochs", type=int, default=2)
    ap.add_argument("--out", default="figures")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    train, test = load_mnist(args.data_dir)

    el = build_model("logistic-el", B=8)
    fit(el, train, test, TrainConfig(epochs=args.epochs))
    write_pgm(out / "logistic_el_B8.pgm", to_gray(receptive_field(el)[0]))

    mnn = build_model("logistic-el-mnn", B=8, B0=4)
    fit(mnn, train, test, TrainConfig(epochs=args.epochs))
    for k in range(4):  # the field moves with the input
        write_pgm(out / f"mnn_B8_input{k}.pgm", to_gray(receptive_field(mnn, test.take(k)[0])[0]))
        write_pgm(out / f"input{k}.pgm", test.pixels[k, 0])
    print(f"wrote figures to {out}/")


if __name__ == "__main__":
    main()
