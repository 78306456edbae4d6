import numpy as np
import pytest

from trajfair.synthetic import random_demographics, random_outcomes, random_walk_cohort


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def bundle():
    """30 random-walk users with random outcomes and demographics (fixed seeds)."""
    trajs = random_walk_cohort(30, 400, seed=11, spread_m=800.0, step_m=30.0)
    ids = [t.user_id for t in trajs]
    return trajs, random_outcomes(ids, seed=12), random_demographics(ids, seed=13)


def write(path, text):
    path.write_text(text)
    return path


# -- acceptance summary ---------------------------------------------------

_criteria: dict[str, dict] = {}


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("acceptance")
        if mark and mark.args:
            item.user_properties.append(("criterion", mark.args))


def pytest_runtest_logreport(report):
    props = dict(report.user_properties)
    if "criterion" not in props:
        return
    entry = _criteria.setdefault(report.nodeid, {"criterion": props["criterion"], "passed": True})
    if report.failed:
        entry["passed"] = False


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for entry in sorted(_criteria.values(), key=lambda e: e["criterion"][0]):
        number, title = entry["criterion"]
        verdict = "PASS" if entry["passed"] else "FAIL"
        terminalreporter.write_line(f"criterion {number:>2}: {verdict}  {title}")
