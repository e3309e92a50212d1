import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from decmilp.cli import resolve_instance
from decmilp.model import DecPomdp

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def mabc():
    return resolve_instance("mabc")[0]


@pytest.fixture(scope="session")
def matiger():
    return resolve_instance("matiger")[0]


def random_model(rng, n_agents=2, n_states=2, actions=(2, 2), observations=(2, 2), sparse=False):
    """A random valid Dec-POMDP; with ``sparse`` some probabilities are zero."""
    nA = int(np.prod(actions))
    nO = int(np.prod(observations))

    def dist(*shape):
        p = rng.random(shape)
        if sparse:
            p *= rng.random(shape) > 0.4
            flat = p.reshape(-1, shape[-1])
            empty = flat.sum(axis=1) == 0
            flat[empty, rng.integers(0, shape[-1], empty.sum())] = 1.0
        return p / p.sum(axis=-1, keepdims=True)

    return DecPomdp(n_agents, n_states, tuple(actions), tuple(observations), dist(nA, n_states, n_states),
                    dist(nA, n_states, nO), np.round(rng.normal(size=(nA, n_states)) * 4, 2), dist(n_states),
                    name="random")


# -- acceptance summary ------------------------------------------------------

_CRITERIA: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, summary): acceptance criterion")


def pytest_runtest_logreport(report):
    marker = getattr(report, "criterion", None)
    if marker is None:
        return
    number, summary = marker
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _CRITERIA[number] = (summary, "PASS" if report.outcome == "passed" else "FAIL")



@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    marker = item.get_closest_marker("criterion")
    if marker is not None:
        outcome.get_result().criterion = tuple(marker.args)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        summary, verdict = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number}: {verdict}  {summary}")
