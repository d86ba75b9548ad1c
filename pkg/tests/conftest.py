from __future__ import annotations

from pathlib import Path

import pytest

from datamator.dataset import Table, load_table

FIXTURES = Path(__file__).parent / "fixtures"


def load_fixture(name: str, table_name: str) -> Table:
    return load_table((FIXTURES / name).read_bytes(), table_name)


@pytest.fixture(scope="session")
def students() -> Table:
    return load_fixture("students.csv", "students")


@pytest.fixture(scope="session")
def flights() -> Table:
    return load_fixture("flights.csv", "flights")


@pytest.fixture(scope="session")
def cars() -> Table:
    return load_fixture("cars.csv", "cars")


@pytest.fixture(scope="session")
def students_count_script() -> str:
    return (FIXTURES / "students_count.qdmr").read_text()
