import numpy as np
import pytest

from altproj.experiment import random_exp_model


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, text): acceptance criterion")


def pytest_collection_modifyitems(items):
    for item in items:
        m = item.get_closest_marker("criterion")
        if m is not None:
            item.user_properties.append(("criterion", m.args))


def pytest_terminal_summary(terminalreporter):
    # one line per criterion; parametrized cases must all pass
    results = {}
    for key in ("passed", "failed"):
        for rep in terminalreporter.stats.get(key, []):
            props = dict(getattr(rep, "user_properties", ()))
            if rep.when == "call" and "criterion" in props:
                number, text = props["criterion"]
                ok, _ = results.get(number, (True, text))
                results[number] = (ok and rep.passed, text)
    if results:
        terminalreporter.section("acceptance criteria")
        for number in sorted(results):
            ok, text = results[number]
            terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {text}")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def make_model(rng):
    def make(k, n):
        return random_exp_model(k, n, rng)
    return make
