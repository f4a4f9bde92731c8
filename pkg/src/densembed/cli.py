"""Command-line entry point: ``densembed {train,render-rf,bench,verify}``."""
from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import checkpoint
from .data import DataFormatError, default_data_dir, load_dataset
from .layers import MODEL_NAMES, Model, build_model, param_count
from .render import read_pgm, receptive_field, to_gray, write_pgm, write_png
from .train import TrainConfig, TrainingDiverged, aggregate, fit, init_params, loss_and_grads, adam_step, AdamState
from .data import batches

DATASET_SHAPES = {"mnist": (28, 1), "cifar10": (32, 3)}


@dataclass
class RunSpec:
    model: str = "logistic-el"
    B: int | None = None
    B0: int | None = None
    dataset: str = "mnist"
    channel_mode: str = "per-channel"
    squash: str = "sigmoid"
    epochs: int = 20
    lr: float = 0.002
    schedule: str = "constant"
    batch_size: int = 64
    seed: int = 0
    runs: int = 1
    out: str = "runs/latest"
    data_dir: str | None = None
    train_limit: int | None = None
    test_limit: int | None = None

    def __post_init__(self):
        if self.model not in MODEL_NAMES:
            raise ValueError(f"unknown model {self.model!r}; choose from {', '.join(MODEL_NAMES)}")
        if self.dataset not in DATASET_SHAPES:
            raise ValueError(f"unknown dataset {self.dataset!r}")
        if self.model == "logistic-el" and self.B is None:
            raise ValueError("--model logistic-el needs --B")
        if self.model == "logistic-el-mnn" and (self.B is None or self.B0 is None):
            raise ValueError("--model logistic-el-mnn needs --B and --B0")
        if self.runs < 1:
            raise ValueError("--runs must be >= 1")

    def build(self) -> Model:
        n, c = DATASET_SHAPES[self.dataset]
        return build_model(self.model, n, c, B=self.B, B0=self.B0, channel_mode=self.channel_mode,
                           squash_preset=self.squash)

    def train_config(self, seed: int | None = None) -> TrainConfig:
        return TrainConfig(epochs=self.epochs, max_lr=self.lr, schedule=self.schedule, batch_size=self.batch_size,
                           seed=self.seed if seed is None else seed, train_limit=self.train_limit,
                           test_limit=self.test_limit)

    def label(self) -> str:
        extra = "".join(f" {k}={v}" for k, v in (("B", self.B), ("B0", self.B0)) if v is not None)
        return f"{self.model}{extra}"


def _spec_flags(p: argparse.ArgumentParser) -> None:
    # defaults are None so that a JSON config can fill gaps; see resolve_spec
    p.add_argument("--config", help="JSON file with RunSpec fields (flags override it)")
    p.add_argument("--model", choices=MODEL_NAMES)
    p.add_argument("--B", type=int)
    p.add_argument("--B0", type=int)
    p.add_argument("--dataset", choices=sorted(DATASET_SHAPES))
    p.add_argument("--channel-mode", choices=("shared", "per-channel"))
    p.add_argument("--squash", choices=("sigmoid", "steep-location", "fixed-scale"))
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--schedule", choices=("constant", "one-cycle"))
    p.add_argument("--batch-size", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--runs", type=int)
    p.add_argument("--out")
    p.add_argument("--data-dir", help="dataset root (default: $DATA_DIR, else ./data)")
    p.add_argument("--train-limit", type=int, help="use only the first N training items")
    p.add_argument("--test-limit", type=int, help="use only the first N test items")


def resolve_spec(args: argparse.Namespace) -> RunSpec:
    """Flags > JSON config file > built-in defaults."""
    merged: dict = {}
    if getattr(args, "config", None):
        merged.update(json.loads(Path(args.config).read_text()))
    names = {f.name for f in fields(RunSpec)}
    unknown = set(merged) - names
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    for name in names:
        val = getattr(args, name, None)
        if val is not None:
            merged[name] = val
    return RunSpec(**merged)


def _load_data(spec: RunSpec):
    root = Path(spec.data_dir) if spec.data_dir else default_data_dir()
    try:
        return load_dataset(spec.dataset, root)
    except FileNotFoundError as exc:
        hint = ("place the four MNIST IDX files (optionally .gz)" if spec.dataset == "mnist"
                else "place the CIFAR-10 binary batches (cifar-10-batches-bin)")
        print(f"error: {exc}\nhint: {hint} under {root}, or point --data-dir / DATA_DIR at them",
              file=sys.stderr)
        return None


def cmd_train(spec: RunSpec) -> int:
    model = spec.build()
    print(f"{spec.label()}: # parameters {param_count(model)}", flush=True)
    data = _load_data(spec)
    if data is None:
        return 2
    train, test = data
    out = Path(spec.out)
    errors = []
    for run in range(spec.runs):
        seed = spec.seed + run
        run_dir = out if spec.runs == 1 else out / f"run{run}"
        run_dir.mkdir(parents=True, exist_ok=True)
        model = spec.build()
        log = lambda e, sec: print(f"  epoch {e['epoch']:2d}  loss {e['train_loss']:.4f}  "
                                   f"test error {e['test_error']:.2f}%  ({sec:.1f}s)", flush=True)
        try:
            record = fit(model, train, test, spec.train_config(seed), log=log)
        except TrainingDiverged as exc:
            print(f"error: training diverged: {exc}", file=sys.stderr)
            if exc.record is not None:
                (run_dir / "runrecord.jsonl").write_text(exc.record.jsonl())
                (run_dir / "summary.json").write_text(json.dumps(exc.record.summary(), indent=2, sort_keys=True))
            return 3
        # the output location is not part of the run, so records from two dirs compare equal
        record.config["run_spec"] = {k: v for k, v in asdict(spec).items() if k != "out"}
        checkpoint.save(run_dir / "checkpoint.dembed", model, seed)
        (run_dir / "runrecord.jsonl").write_text(record.jsonl())
        (run_dir / "summary.json").write_text(json.dumps(record.summary(), indent=2, sort_keys=True) + "\n")
        (run_dir / "timings.json").write_text(json.dumps({"epoch_seconds": record.seconds}) + "\n")
        errors.append(record.final_error)
    mean, std = aggregate(errors)
    if spec.runs > 1:
        (out / "summary.json").write_text(json.dumps(
            {"model": spec.label(), "param_count": param_count(model), "runs": spec.runs,
             "final_errors": errors, "mean_error": mean, "std_error": std}, indent=2, sort_keys=True) + "\n")
    print(f"{'Model':<28} {'Error (%)':>16} {'# parameters':>14}")
    print(f"{spec.label():<28} {f'{mean:.2f} ± {std:.2f}':>16} {param_count(model):>14}")
    print(f"# parameters {param_count(model)}")
    return 0


def cmd_render_rf(args) -> int:
    model, header = checkpoint.load(args.checkpoint)
    image = None
    if args.input:
        image = read_pgm(args.input).astype(np.float64) / 255.0
    elif args.index is not None:
        spec = RunSpec(model=header["model"], B=header["config"].get("B"), B0=header["config"].get("B0"),
                       dataset=args.dataset, data_dir=args.data_dir)
        data = _load_data(spec)
        if data is None:
            return 2
        image = data[1].take(args.index)
    try:
        fields_ = receptive_field(model, image)
    except (ValueError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    names = ["rf"] if len(fields_) == 1 else [f"rf_c{k}" for k in range(len(fields_))]
    for name, field in zip(names, fields_):
        gray = to_gray(field)
        write_pgm(out / f"{name}.pgm", gray)
        if args.png:
            write_png(out / f"{name}.png", gray)
        print(out / f"{name}.pgm")
    return 0


def time_epoch(model: Model, train, config: TrainConfig) -> float:
    state = AdamState()
    t0 = time.perf_counter()
    for x, y in batches(train, config.batch_size, config.seed, shuffle=True):
        _, grads = loss_and_grads(model, x, y)
        model.params = adam_step(state, model.params, grads, config.max_lr)
    return time.perf_counter() - t0


def cmd_bench(spec: RunSpec, repeats: int) -> int:
    model = spec.build()
    count = param_count(model)
    data = _load_data(spec)
    if data is None:
        return 2
    train = data[0].subset(spec.train_limit)
    timings = []
    for r in range(repeats):
        init_params(model, spec.seed + r)
        timings.append(time_epoch(model, train, spec.train_config(spec.seed + r)))
        print(f"  repeat {r + 1}: {timings[-1]:.3f}s", flush=True)
    mean, std = aggregate(timings)
    print(f"{spec.label()}  # parameters {count}  epoch time {mean:.3f} ± {std:.3f}s over {repeats} repeats "
          f"({len(train)} training items)")
    return 0


def cmd_verify() -> int:
    from . import verify

    results, seconds = verify.run_all()
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name}: {r.detail}")
    ok = all(r.passed for r in results)
    print(f"{'all checks passed' if ok else 'FAILED'} in {seconds:.1f}s")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="densembed", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model and write checkpoint + run record")
    _spec_flags(p)

    p = sub.add_parser("render-rf", help="write the receptive field of a checkpoint as PGM")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", help="PGM input image (needed for micro-network models)")
    p.add_argument("--index", type=int, help="use this test-set image as input instead")
    p.add_argument("--dataset", default="mnist", choices=sorted(DATASET_SHAPES))
    p.add_argument("--data-dir")
    p.add_argument("--out", default=".")
    p.add_argument("--png", action="store_true", help="also write PNG (needs Pillow)")

    p = sub.add_parser("bench", help="time one training epoch, repeated")
    _spec_flags(p)
    p.add_argument("--repeats", type=int, default=3)

    sub.add_parser("verify", help="run the dataset-free invariant battery")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "train":
            return cmd_train(resolve_spec(args))
        if args.command == "bench":
            return cmd_bench(resolve_spec(args), args.repeats)
        if args.command == "render-rf":
            return cmd_render_rf(args)
        return cmd_verify()
    except (ValueError, DataFormatError, checkpoint.CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
