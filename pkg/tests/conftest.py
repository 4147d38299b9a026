import pytest
from hypothesis import settings

from regsub.core import IndependentPrior, Instance
from regsub.instances import demo2
from regsub.objective import TableRevenue

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture
def demo():
    return demo2()


def table_instance(entries, costs, marginals=None, name="hand"):
    """Small table instance; default prior is a point mass on state 0."""
    n = len(costs)
    marginals = marginals or tuple((1.0,) for _ in range(n))
    prior = IndependentPrior(marginals)
    return Instance(name, costs, prior, TableRevenue(n, prior.n_states, entries))


# lines recorded by test_acceptance.py, echoed at the end of the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
