import functools

import pytest

from steklov_lab.field import ConstantField, MonomialField
from steklov_lab.geometry import DomainSpec, build_mesh

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict = {}


@functools.lru_cache(maxsize=None)
def disk_mesh(h: float):
    return build_mesh(DomainSpec.disk(), h)


@pytest.fixture(scope="session")
def disk02():
    return disk_mesh(0.02)


@pytest.fixture(scope="session")
def disk05():
    return disk_mesh(0.05)


@pytest.fixture(scope="session")
def const_field():
    return ConstantField.make(1.0)


@pytest.fixture(scope="session")
def mono_field():
    return MonomialField.make(1)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
