import numpy as np
import pytest

from strata_shap.experiments import gen_synthetic

ACCEPTANCE = []


def record_criterion(number, passed, detail):
    line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE.append((number, line))
    print(line)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(ACCEPTANCE):
        terminalreporter.write_line(line)


@pytest.fixture
def six_csv(tmp_path):
    path = tmp_path / "six.csv"
    gen_synthetic(6, 2, seed=0).to_csv(path)
    return path


@pytest.fixture(scope="session")
def synth_csvs(tmp_path_factory):
    root = tmp_path_factory.mktemp("synth")
    data = gen_synthetic(300, 50, seed=11)
    train, held = data.subset(np.arange(100)), data.subset(np.arange(100, 300))
    train.to_csv(root / "train.csv")
    held.to_csv(root / "held.csv")
    return root / "train.csv", root / "held.csv"
