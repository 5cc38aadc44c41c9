import numpy as np
import pytest

from ibs import NetworkSpec, TrainConfig, build_model, make_dataset, split_indices, train


@pytest.fixture(scope="session")
def custom_run():
    """Custom preset at seed 0 with the default network and training settings."""
    ds, _ = make_dataset("custom", 0)
    model, metrics = train(NetworkSpec.mlp(2), ds, TrainConfig())
    tr, te = split_indices(ds.n_samples, 0.85, 0)
    return ds, model, metrics, tr, te


@pytest.fixture
def linear2d():
    """Logistic regression with boundary 2*x0 - x1 + 0.5 = 0."""
    return build_model([np.array([[2.0], [-1.0]])], [np.array([0.5])])


@pytest.fixture
def small_mlp():
    rng = np.random.default_rng(7)
    sizes = (3, 6, 5, 1)
    ws = [rng.normal(size=(a, b)) for a, b in zip(sizes[:-1], sizes[1:])]
    bs = [rng.normal(size=b) * 0.1 for b in sizes[1:]]
    return build_model(ws, bs)


ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def criterion():
    """Record one PASS/FAIL line per acceptance criterion, then assert it."""

    def record(number, title, ok, detail):
        line = f"criterion {number} {'PASS' if ok else 'FAIL'}: {title} ({detail})"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
