import hypothesis
import numpy as np
import pytest

from fairobnc.data import Dataset, SyntheticSpec, generate_synthetic

hypothesis.settings.register_profile("default", max_examples=60, deadline=None)
hypothesis.settings.register_profile("fast", max_examples=10, deadline=None)
hypothesis.settings.load_profile("default")

ACCEPTANCE_LINES = []


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and report.failed):
        number, title = marker.args
        status = "PASS" if report.passed else "FAIL"
        detail = "; ".join(v for k, v in item.user_properties if k == "detail")
        line = f"criterion {number:>2} {status}  {title}"
        ACCEPTANCE_LINES.append(line + (f"  [{detail}]" if detail else ""))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split()[1])):
        terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def small_ds():
    return generate_synthetic(SyntheticSpec(n_rows=600, n_features=3, class_separation=2.5,
                                            base_prevalence=0.3, seed=3))


def make_ds(labels, groups, split=None, features=None):
    labels = np.asarray(labels)
    n = len(labels)
    if features is None:
        features = np.arange(n, dtype=float).reshape(-1, 1)
    return Dataset(
        features=features,
        labels=labels,
        group=np.asarray(groups),
        split=np.asarray(split if split is not None else ["train"] * n),
        feature_names=tuple(f"x{j}" for j in range(np.asarray(features).shape[1])),
    )
