import numpy as np
import pytest

from mkvsim.coefficients import (
    CoefficientModel,
    LevyMeasureSpec,
    ModelConstants,
    builtin_model,
    default_params,
)

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def _const(value, dim):
    m = np.asarray(value, dtype=float) * np.eye(dim)

    def f(x, mu, t):
        return np.broadcast_to(m, (x.shape[0], dim, dim))

    return f


def make_model(dim=1, b=None, sigma=0.0, sigma0=0.0, c=0.0, jump_law=None, name="custom", x0=None, **consts):
    """Small user-defined model with constant noise coefficients."""
    if b is None:
        def b(x, mu, t):
            return np.zeros_like(x)
    base = dict(L=1.0, L1=0.0, L2=0.0, L3=1.0, Ltilde1=0.0, Ltilde2=0.0,
                gamma1=0.0, gamma2=0.0, eta=0.0, ell=0.0, p0=2)
    base.update(consts)
    return CoefficientModel(
        dim,
        b,
        _const(sigma, dim),
        _const(sigma0, dim),
        _const(c, dim),
        jump_law or LevyMeasureSpec.none(dim),
        ModelConstants(**base),
        name,
        tuple(x0) if x0 is not None else (0.0,) * dim,
        {},
    )


@pytest.fixture
def zero_model():
    return make_model(x0=(2.0,))


@pytest.fixture
def ou():
    return builtin_model("ou_contractive", default_params("ou_contractive"))


@pytest.fixture
def model1():
    return builtin_model("model1_lq", default_params("model1_lq"))


@pytest.fixture
def cubic():
    return builtin_model("cubic_superlinear", default_params("cubic_superlinear"))
