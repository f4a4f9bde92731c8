"""Initialization, Adam, the epoch loop and evaluation."""
from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .data import Dataset, batches
from .layers import Constant, FanIn, Model, Normal, param_count
from .rng import XorShift64Star, derive_seed

SCHEDULES = ("constant", "one-cycle")


class TrainingDiverged(FloatingPointError):
    def __init__(self, message: str, record: RunRecord | None = None):
        super().__init__(message)
        self.record = record


@dataclass
class TrainConfig:
    epochs: int = 20
    max_lr: float = 0.002
    schedule: str = "constant"
    batch_size: int = 64
    seed: int = 0
    eval_batch_size: int = 1000
    train_limit: int | None = None
    test_limit: int | None = None

    def __post_init__(self):
        # epochs == 0 is allowed and means "evaluate the initial model only"
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if not self.max_lr > 0:
            raise ValueError("max_lr must be positive")
        if self.schedule not in SCHEDULES:
            raise ValueError(f"schedule must be one of {SCHEDULES}")
        if self.batch_size < 1 or self.eval_batch_size < 1:
            raise ValueError("batch sizes must be >= 1")


def init_params(model: Model, seed: int) -> Model:
    """Draw every parameter from its declared initializer, in declaration order."""
    rng = XorShift64Star(derive_seed(seed, 0x1A17))
    values = {}
    for name, p in model.params.items():
        spec = model.init_specs[name]
        if isinstance(spec, Normal):
            arr = rng.normal(spec.mean, spec.std, p.size)
        elif isinstance(spec, FanIn):
            bound = 1.0 / math.sqrt(spec.fan_in)
            arr = rng.uniform(-bound, bound, p.size)
        elif isinstance(spec, Constant):
            arr = np.full(p.size, spec.value)
        else:
            arr = np.asarray(spec, dtype=np.float64)
        values[name] = np.asarray(arr).reshape(p.shape)
    model.set_parameters(values)
    return model


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_step(state: AdamState, params: dict[str, Tensor], grads: dict[str, np.ndarray], lr: float) -> dict[str, Tensor]:
    """One bias-corrected Adam update; returns fresh parameter tensors."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            bad = int(np.sum(~np.isfinite(g)))
            raise TrainingDiverged(f"gradient of {name!r} has {bad} non-finite entries at step {state.step + 1}")
        if g.shape != params[name].shape:
            raise ad.ShapeError(f"gradient of {name!r} has shape {g.shape}, parameter {params[name].shape}")
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    out = dict(params)
    for name, g in grads.items():
        m = state.m.get(name, np.zeros_like(g))
        v = state.v.get(name, np.zeros_like(g))
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * g * g
        state.m[name], state.v[name] = m, v
        update = lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        out[name] = Tensor(params[name].data - update, requires_grad=True)
    return out


def learning_rate(config: TrainConfig, step: int, total_steps: int) -> float:
    """Constant, or one-cycle: cosine warm-up over 30% of steps from max/25, cosine decay to max/25e4."""
    if config.schedule == "constant":
        return config.max_lr
    warm = max(1, int(0.3 * total_steps))
    lo, end = config.max_lr / 25.0, config.max_lr / 25e4
    if step < warm:
        frac = step / warm
        return lo + (config.max_lr - lo) * 0.5 * (1.0 - math.cos(math.pi * frac))
    frac = (step - warm) / max(1, total_steps - warm)
    return end + (config.max_lr - end) * 0.5 * (1.0 + math.cos(math.pi * frac))


def predict(model: Model, ds: Dataset, batch_size: int = 1000) -> np.ndarray:
    preds = [ad.argmax(model(x), axis=1) for x, _ in batches(ds, batch_size, shuffle=False)]
    return np.concatenate(preds) if preds else np.zeros(0, dtype=np.int64)


def error_percent(predictions: np.ndarray, labels: np.ndarray) -> float:
    if len(labels) == 0:
        return 0.0
    return 100.0 * float(np.sum(predictions != labels)) / len(labels)


def evaluate(model: Model, ds: Dataset, batch_size: int = 1000) -> float:
    """Test error in percent; argmax with ties to the lowest class index."""
    return error_percent(predict(model, ds, batch_size), ds.labels)


def loss_and_grads(model: Model, images: np.ndarray, labels: np.ndarray) -> tuple[float, dict[str, np.ndarray]]:
    loss = ad.softmax_cross_entropy(model(images), labels)
    ad.backward(loss)
    grads = {name: p.grad if p.grad is not None else np.zeros(p.shape) for name, p in model.params.items()}
    return loss.item(), grads


@dataclass
class RunRecord:
    model: str
    param_count: int
    config: dict
    initial_error: float
    epochs: list[dict] = field(default_factory=list)
    seconds: list[float] = field(default_factory=list)
    diverged: bool = False

    @property
    def final_error(self) -> float:
        return self.epochs[-1]["test_error"] if self.epochs else self.initial_error

    def jsonl(self) -> str:
        """One line per epoch; wall-clock times are kept out so records stay reproducible."""
        return "".join(json.dumps(e, sort_keys=True) + "\n" for e in self.epochs)

    def summary(self) -> dict:
        return {"model": self.model, "param_count": self.param_count, "config": self.config,
                "initial_error": self.initial_error, "final_error": self.final_error,
                "epochs_completed": len(self.epochs), "diverged": self.diverged}


def fit(model: Model, train: Dataset, test: Dataset, config: TrainConfig, log=None, init: bool = True) -> RunRecord:
    train = train.subset(config.train_limit)
    test = test.subset(config.test_limit)
    if init:
        init_params(model, config.seed)
    record = RunRecord(model.kind, param_count(model), {"model": model.config(), **asdict(config)},
                       evaluate(model, test, config.eval_batch_size))
    state = AdamState()
    steps_per_epoch = math.ceil(len(train) / config.batch_size)
    total = steps_per_epoch * config.epochs
    for epoch in range(config.epochs):
        t0 = time.perf_counter()
        loss_sum, seen = 0.0, 0
        for x, y in batches(train, config.batch_size, config.seed, shuffle=True, epoch=epoch):
            try:
                loss, grads = loss_and_grads(model, x, y)
                if not math.isfinite(loss):
                    raise TrainingDiverged(f"loss became {loss} in epoch {epoch + 1}")
                model.params = adam_step(state, model.params, grads, learning_rate(config, state.step, total))
            except (TrainingDiverged, ad.NonFiniteError) as exc:
                record.diverged = True
                raise TrainingDiverged(str(exc), record) from exc
            loss_sum += loss * len(y)
            seen += len(y)
        err = evaluate(model, test, config.eval_batch_size)
        record.epochs.append({"epoch": epoch + 1, "train_loss": loss_sum / max(seen, 1), "test_error": err})
        record.seconds.append(time.perf_counter() - t0)
        if log is not None:
            log(record.epochs[-1], record.seconds[-1])
    return record


def aggregate(errors) -> tuple[float, float]:
    """Mean and unbiased standard deviation (0 for a single run)."""
    e = np.asarray(list(errors), dtype=np.float64)
    return float(e.mean()), float(e.std(ddof=1)) if e.size > 1 else 0.0
