import numpy as np
import pytest

from builders import constant_model, prob_model, vote_model
from ensdiv.losses import Dataset, Ensemble, Task


@pytest.fixture
def rng():
    return np.random.default_rng(20240613)


@pytest.fixture
def models_0_2():
    """Regression members predicting 0 and 2 everywhere, targets 1, uniform weights."""
    task = Task.regression()
    ens = Ensemble.uniform([constant_model([0.0]), constant_model([2.0])], task)
    return ens, Dataset(np.zeros((3, 1)), np.ones(3), task)


@pytest.fixture
def ce_pair():
    """Two classifiers with true-class probabilities 0.9 and 0.5 on every sample."""
    task = Task.classification(2)
    ens = Ensemble.uniform([prob_model(0.9), prob_model(0.5)], task)
    return ens, Dataset(np.zeros((4, 1)), np.zeros(4), task)


@pytest.fixture
def votes_001():
    """Three classifiers voting 0, 0, 1 on every sample whose label is 0."""
    task = Task.classification(2)
    ens = Ensemble.uniform([vote_model(0), vote_model(0), vote_model(1)], task)
    return ens, Dataset(np.zeros((5, 1)), np.zeros(5), task)


_CRITERIA = pytest.StashKey[dict]()


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion checked by the test")
    config.stash[_CRITERIA] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or (report.when != "call" and not report.failed):
        return
    number, title = marker.args
    entry = item.config.stash[_CRITERIA].setdefault(number, {"title": title, "passed": True, "details": []})
    entry["passed"] = entry["passed"] and report.passed
    entry["details"].extend(value for key, value in item.user_properties if key == "detail")


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash[_CRITERIA]
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        entry = results[number]
        status = "PASS" if entry["passed"] else "FAIL"
        detail = f" [{'; '.join(entry['details'])}]" if entry["details"] else ""
        terminalreporter.write_line(f"{status} criterion {number}: {entry['title']}{detail}")
    passed = sum(e["passed"] for e in results.values())
    terminalreporter.write_line(f"{passed}/{len(results)} acceptance criteria pass")
