import gzip
import os
from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

from densembed.data import serialize_idx

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")

MNIST_DIR = Path(os.environ.get("DATA_DIR", "/root/data"))


def _has_mnist(root: Path) -> bool:
    return any((d / "train-images-idx3-ubyte").exists() or (d / "train-images-idx3-ubyte.gz").exists()
               for d in (root, root / "mnist"))


@pytest.fixture(scope="session")
def mnist_dir():
    if not _has_mnist(MNIST_DIR):
        pytest.skip(f"MNIST IDX files not found under {MNIST_DIR} (set DATA_DIR)")
    return MNIST_DIR


def write_fake_mnist(root: Path, n_train: int = 64, n_test: int = 32, seed: int = 0, compress: bool = False) -> Path:
    """Tiny MNIST-format dataset: class k lights up a k-dependent block."""
    rng = np.random.default_rng(seed)
    root.mkdir(parents=True, exist_ok=True)
    for prefix, n in (("train", n_train), ("t10k", n_test)):
        labels = (np.arange(n) % 10).astype(np.uint8)
        images = rng.integers(0, 40, size=(n, 28, 28)).astype(np.uint8)
        for k, lab in enumerate(labels):
            r = 2 + 2 * int(lab)
            images[k, r:r + 4, 6:22] = 250
        for kind, arr in (("images-idx3", images), ("labels-idx1", labels)):
            raw = serialize_idx(arr)
            name = root / f"{prefix}-{kind}-ubyte"
            if compress:
                Path(f"{name}.gz").write_bytes(gzip.compress(raw))
            else:
                name.write_bytes(raw)
    return root


@pytest.fixture
def fake_mnist(tmp_path):
    return write_fake_mnist(tmp_path / "data")


def pytest_runtest_logreport(report):
    if "test_acceptance.py::test_criterion" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _CRITERIA.append(report)


_CRITERIA: list = []


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for rep in _CRITERIA:
        name = rep.nodeid.split("::test_criterion_", 1)[1]
        detail = dict(rep.user_properties).get("detail", "")
        if rep.skipped:
            reason = rep.longrepr[2] if isinstance(rep.longrepr, tuple) else str(rep.longrepr)
            detail = reason.replace("Skipped: ", "")
        verdict = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[rep.outcome]
        terminalreporter.write_line(f"{verdict}  criterion {name}  {detail}")
