import sys
import textwrap

import numpy as np
import pytest

from hoist.config_space import ConfigSpace, ParameterSpec


class TableMember:
    """Stub surrogate returning fixed predictions keyed by the first encoded coordinate."""

    def __init__(self, table, variances=None):
        self.table = dict(table)
        self.variances = dict(variances or {k: 0.0 for k in table})

    def predict_batch(self, X):
        keys = [round(float(x), 9) for x in np.atleast_2d(X)[:, 0]]
        return (
            np.array([self.table[k] for k in keys], dtype=float),
            np.array([self.variances[k] for k in keys], dtype=float),
        )


class ConstMember:
    def __init__(self, mean, var):
        self.mean, self.var = mean, var

    def predict_batch(self, X):
        n = len(np.atleast_2d(X))
        return np.full(n, float(self.mean)), np.full(n, float(self.var))


@pytest.fixture
def unit_space():
    return ConfigSpace((ParameterSpec("x", "continuous", 0.0, 1.0),))


@pytest.fixture
def mixed_space():
    return ConfigSpace(
        (
            ParameterSpec("lr", "continuous-log", 1e-7, 1e-2),
            ParameterSpec("dropout", "continuous", 0.0, 0.9),
            ParameterSpec("layers", "integer", 1, 5),
            ParameterSpec("act", "categorical", choices=("relu", "tanh", "gelu")),
        )
    )


def write_stub(tmp_path, name, body):
    """Write an executable python stub that reads one JSON request from stdin."""
    path = tmp_path / name
    path.write_text(
        "import json, sys, time, math\n"
        "req = json.loads(sys.stdin.readline())\n" + textwrap.dedent(body)
    )
    return [sys.executable, str(path)]


@pytest.fixture
def stub(tmp_path):
    return lambda name, body: write_stub(tmp_path, name, body)


# one PASS/FAIL line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def report(label, ok, detail=""):
    line = f"{'PASS' if ok else 'FAIL'} {label}" + (f": {detail}" if detail else "")
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
