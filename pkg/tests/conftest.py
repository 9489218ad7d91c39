import math
import sys

import pytest

from ifaq.aggopt import join_spec_from_schema
from ifaq.apps import LRConfig, build_linear_regression_program
from ifaq.data import retail_schema
from ifaq.interp import Database

FEATURES = ["i", "s", "c", "p"]

# Two sales joining one item and two stores: Q = {(i=1,s=1,c=10,p=5,u=3), (i=1,s=2,c=20,p=5,u=4)}.
TOY_ROWS = {"S": [(1, 1, 3), (1, 2, 4)], "R": [(1, 10), (2, 20)], "I": [(1, 5)]}


@pytest.fixture
def schema():
    return retail_schema()


@pytest.fixture
def toy_db(schema):
    return Database.from_rows(schema, TOY_ROWS)


@pytest.fixture
def query(schema):
    return join_spec_from_schema(schema)


@pytest.fixture
def lr_program(query):
    def build(**kw):
        return build_linear_regression_program(LRConfig(FEATURES, "u", **kw), query)
    return build


def json_close(a, b, rel=1e-9) -> bool:
    """Compare JSON views of values with a relative tolerance on numbers."""
    if isinstance(a, dict) and isinstance(b, dict):
        return a.keys() == b.keys() and all(json_close(a[k], b[k], rel) for k in a)
    if isinstance(a, list) and isinstance(b, list):
        return len(a) == len(b) and all(json_close(x, y, rel) for x, y in zip(a, b))
    if isinstance(a, (int, float)) and isinstance(b, (int, float)):
        return math.isclose(a, b, rel_tol=rel, abs_tol=1e-300)
    return a == b


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("tests.test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
