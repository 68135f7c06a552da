from pathlib import Path

import pytest

from erwlab.arrows import ArrowSystem
from erwlab.coupling import CouplingKernel
from erwlab.env import CookieEnvironment

FIXTURES = Path(__file__).resolve().parent / "fixtures"


def load_arrows(name: str) -> ArrowSystem:
    return ArrowSystem.from_table((FIXTURES / name).read_text(encoding="utf-8")).freeze()


@pytest.fixture
def single_cookie():
    return CookieEnvironment.finite([0.9])


@pytest.fixture
def three_cookies():
    return CookieEnvironment.finite([0.9, 0.9, 0.9])


@pytest.fixture
def boundary_cookies():
    return CookieEnvironment.finite([0.7, 0.9, 0.9])


@pytest.fixture
def fair():
    return CookieEnvironment.finite([0.5])


@pytest.fixture
def identity_kernel(three_cookies):
    return CouplingKernel.identity(three_cookies)


@pytest.fixture
def pointwise_kernel(three_cookies):
    return CouplingKernel.pointwise(three_cookies, CookieEnvironment.finite([0.95, 0.9, 0.9]))


@pytest.fixture
def swap_kernel(boundary_cookies):
    return CouplingKernel.swap(boundary_cookies, 1, 2)


@pytest.fixture
def composed_kernel(boundary_cookies):
    first = CouplingKernel.swap(boundary_cookies, 1, 2)
    second = CouplingKernel.pointwise(first.q_env, CookieEnvironment.finite([0.95, 0.7, 0.9]))
    return CouplingKernel.compose([first, second])
