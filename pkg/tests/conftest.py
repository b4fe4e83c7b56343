import numpy as np
import pytest

from cooplearn.data import MultiViewDataset

_ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record_acceptance(number: int, passed: bool, detail: str) -> None:
    _ACCEPTANCE[number] = (bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        passed, detail = _ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_dataset(rng, n=40, widths=(6, 5), noise=1.0, names=None, family="gaussian"):
    views = [rng.standard_normal((n, p)) for p in widths]
    signal = views[0][:, 0] - 0.5 * views[-1][:, 1]
    y = signal + noise * rng.standard_normal(n)
    if family == "binomial":
        y = (y > 0).astype(float)
    names = names or [f"v{i}" for i in range(len(widths))]
    return MultiViewDataset.build(views, y, family, names)
