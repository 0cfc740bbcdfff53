import numpy as np
import pytest

from graphfi import fixtures


@pytest.fixture(scope="session")
def mlp():
    return fixtures.load("tiny-mlp")


@pytest.fixture(scope="session")
def cnn():
    return fixtures.load("tiny-cnn")


@pytest.fixture(scope="session")
def regressor():
    return fixtures.load("tiny-regressor")


@pytest.fixture(scope="session")
def rnn():
    return fixtures.load("rnn4")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# ---- acceptance criteria: enforce time budgets and print one line each

_RESULTS = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when != "call":
        return
    number, title, budget = mark.args
    if rep.passed and rep.duration > budget:
        rep.outcome = "failed"
        rep.longrepr = f"criterion {number} took {rep.duration:.1f}s, budget {budget}s"
    detail = getattr(item, "criterion_detail", "")
    _RESULTS[number] = (rep.passed, title, rep.duration, budget, detail)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(_RESULTS):
        ok, title, dur, budget, detail = _RESULTS[n]
        line = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {title}  ({dur:.2f}s / {budget:g}s)"
        tr.write_line(line + (f"  [{detail}]" if detail else ""), green=ok, red=not ok)
