import numpy as np
import pytest

from ldp_portfolio import AffineModel, GeneralModel1D, load_fixture

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def R():
    return load_fixture("R")


@pytest.fixture(scope="session")
def R2():
    return load_fixture("R2")


@pytest.fixture(scope="session")
def R3():
    return load_fixture("R3")


@pytest.fixture(scope="session")
def R_general(R):
    return GeneralModel1D.from_affine(R)


def random_affine(rng: np.random.Generator, n: int | None = None, l: int | None = None) -> AffineModel:
    """Random valid affine model with symmetric negative definite Theta1
    and k = n + l + 1 (so both parts of the nondegeneracy condition hold
    generically)."""
    n = n or int(rng.integers(1, 3))
    l = l or int(rng.integers(1, 3))
    k = n + l + 1
    M = rng.normal(size=(l, l))
    return AffineModel(
        A1=rng.normal(scale=0.5, size=(n, l)),
        a2=rng.normal(scale=0.1, size=n),
        r1=rng.normal(scale=0.1, size=l),
        r2=float(rng.normal(scale=0.02)),
        alpha1=rng.normal(scale=0.1, size=l),
        alpha2=float(rng.normal(scale=0.02)),
        Theta1=-(M @ M.T + 0.5 * np.eye(l)),
        theta2=rng.normal(scale=0.1, size=l),
        b=rng.normal(size=(n, k)),
        beta=rng.normal(size=k),
        sigma=rng.normal(size=(l, k)),
    )


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
