import numpy as np
import pytest

from synthetic import make_census, write_census_csv


def random_density(rng, dim, rank=None):
    """Wishart-style density matrix of the given (or random) rank."""
    rank = rank or int(rng.integers(1, dim + 1))
    a = rng.standard_normal((dim, rank))
    m = a @ a.T
    return m / np.trace(m)


def random_unit(rng, dim, nonneg=False):
    u = rng.standard_normal(dim)
    if nonneg:
        u = np.abs(u)
    return u / np.linalg.norm(u)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def census_csv(tmp_path_factory):
    return write_census_csv(tmp_path_factory.mktemp("census") / "census.csv", make_census())


_acceptance_lines: list[str] = []


@pytest.fixture
def acceptance():
    """Record one pass/fail line per criterion; lines are echoed in the terminal summary."""

    def record(number, title, ok, detail):
        line = f"criterion {number} [{'PASS' if ok else 'FAIL'}] {title}: {detail}"
        _acceptance_lines.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_acceptance_lines, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
