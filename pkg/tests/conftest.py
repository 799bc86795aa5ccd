import numpy as np
import pytest

from stereogate.dataset import Dataset, FeatureSchema
from stereogate.synth import load_spec, synth_generate


def make_dataset(X, y, names=None, roles=None, types=None, ts=None):
    X = np.asarray(X, dtype=float)
    n, p = X.shape
    names = names or [f"f{j}" for j in range(p)]
    roles = roles or ["catalyst"] * p
    types = types or ["T"] * n
    return Dataset(FeatureSchema(names, roles), X, y, [f"r{i}" for i in range(n)], types, ts)


@pytest.fixture(scope="session")
def demo_spec():
    return load_spec("gate_demo")


@pytest.fixture(scope="session")
def demo_data(demo_spec):
    return synth_generate(demo_spec, 0)


def write_csv(path, header, rows):
    lines = [",".join(header)] + [",".join(str(v) for v in r) for r in rows]
    path.write_text("\n".join(lines) + "\n")
    return path


# acceptance criteria report: one line per criterion in the terminal summary
ACCEPTANCE = {}


def record_criterion(number, title, ok, detail):
    line = f"criterion {number:>2} [{'PASS' if ok else 'FAIL'}] {title}: {detail}"
    ACCEPTANCE[number] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[number])
