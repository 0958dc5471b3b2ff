import numpy as np
import pandas as pd
import pytest

from benporath import lifecycle as lc
from benporath.lifehist import PANEL_COLUMNS


@pytest.fixture(scope="session")
def prefs():
    return lc.Preferences()


@pytest.fixture(scope="session")
def tech():
    return lc.Technology.linear(1 / 0.3)


@pytest.fixture(scope="session")
def d2_tech():
    return lc.Technology.linear(4.0)


@pytest.fixture(scope="session")
def baseline(prefs, tech):
    return lc.solve_ex_ante(prefs, tech)


@pytest.fixture(scope="session")
def d2_plan(prefs, d2_tech):
    return lc.solve_ex_ante(prefs, d2_tech)


def make_panel(rows):
    """Build a panel frame from (id, birth_year, age, state, exited, displaced) tuples."""
    records = []
    for agent_id, by, age, state, exited, displaced in rows:
        records.append((agent_id, by, age, by + age, state, exited, displaced, 0, 0, 0))
    return pd.DataFrame.from_records(records, columns=list(PANEL_COLUMNS))


def two_period_panel(exit_rates, n_per_group, rng=None, birth_year=1920):
    """Panel observed in 1938 and 1946 only.

    ``exit_rates`` maps (treated, year) to the exit share. Without ``rng``
    the share is realised exactly (the first round(p*n) agents exit).
    """
    rows = []
    agent = 0
    for treated in (0, 1):
        for _ in range(n_per_group):
            for year in (1938, 1946):
                p = exit_rates[(treated, year)]
                if rng is None:
                    exited = int(agent % n_per_group < round(p * n_per_group))
                else:
                    exited = int(rng.random() < p)
                rows.append((agent, birth_year, year - birth_year, "out" if exited else "employment",
                             exited, treated))
            agent += 1
    return make_panel(rows)


def pytest_terminal_summary(terminalreporter):
    try:
        import test_acceptance
    except ImportError:
        return
    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(test_acceptance.RESULTS):
            terminalreporter.write_line(line)
