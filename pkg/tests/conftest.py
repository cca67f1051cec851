import functools

import numpy as np
import pytest

from redcolloc import precond as pc
from redcolloc.greedy import train_ercm, train_lsrcm
from redcolloc.problem import build_problem, training_grid
from redcolloc.reduced import precompute


@functools.lru_cache(maxsize=None)
def diffusion(nx):
    return build_problem("diffusion2d", nx)


@functools.lru_cache(maxsize=None)
def trained(method, kind, nx=25, n_max=10, counts=(16, 16)):
    """``(model, basis, history, precond_data)`` for a diffusion2d training run, cached per session."""
    problem = diffusion(nx)
    data = pc.build(kind, problem)
    trainer = train_lsrcm if method == "lsrcm" else train_ercm
    basis, history = trainer(problem, training_grid(problem.domain, counts), data, n_max=n_max)
    return precompute(basis, problem, data), basis, history, data


def philox_uniform(domain, count, seed):
    rng = np.random.Generator(np.random.Philox(seed))
    lo, hi = np.asarray(domain.lower), np.asarray(domain.upper)
    return lo + (hi - lo) * rng.random((count, domain.dim))


@pytest.fixture(scope="session")
def p25():
    return diffusion(25)


@pytest.fixture(scope="session")
def p17():
    return diffusion(17)


ACCEPTANCE_LINES = []


def report(number, ok, detail):
    """Record and print one acceptance line, then fail the test if the criterion is not met."""
    line = f"ACCEPTANCE {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append((number, line))
    print("\n" + line)
    assert ok, line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
