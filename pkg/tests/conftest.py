import numpy as np
import pytest

from manisolve import eigenvalue_problem, make_instance

ACCEPTANCE_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE_KEY] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for line in lines:
        terminalreporter.write_line(line)


@pytest.fixture
def acceptance_log(request):
    log = request.config.stash[ACCEPTANCE_KEY]

    def record(name, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
        log.append(line)
        print(line)
        return ok

    return record


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="module")
def inst20():
    return make_instance(20, 10.0, 3)


@pytest.fixture(scope="module")
def prob20(inst20):
    return eigenvalue_problem(inst20)


@pytest.fixture(scope="module")
def inst50():
    return make_instance(50, 10.0, 4)


@pytest.fixture(scope="module")
def prob50(inst50):
    return eigenvalue_problem(inst50)


def central_diff(fun, x, h=1e-6):
    """Reference Jacobian by central differences, columns indexed by x."""
    cols = []
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        cols.append((np.atleast_1d(fun(x + e)) - np.atleast_1d(fun(x - e))) / (2 * h))
    return np.stack(cols, axis=-1)
