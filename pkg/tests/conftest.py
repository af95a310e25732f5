"""Shared helpers: finite-difference oracles and tiny corpora."""

import numpy as np
import pytest

from paag import autograd as ag
from paag.autograd import Tensor

FD_STEP = 1e-6


def fd_gradient(fn, t: Tensor, step: float = FD_STEP) -> np.ndarray:
    """Central-difference d fn() / d t, perturbing t.data in place.

    ``fn`` takes no arguments and returns a scalar Tensor; it must read
    ``t.data`` afresh on every call.
    """
    # Rebinding through asarray restores 0-d ndarray-ness in case a test
    # assigned a numpy scalar to .data; reshape(-1) then aliases it.
    t.data = np.asarray(t.data, dtype=np.float64)
    out = np.zeros(t.data.shape)
    flat = t.data.reshape(-1)
    for i in range(flat.size):
        saved = flat[i]
        flat[i] = saved + step
        hi = fn().item()
        flat[i] = saved - step
        lo = fn().item()
        flat[i] = saved
        out.reshape(-1)[i] = (hi - lo) / (2.0 * step)
    return out


def analytic_gradients(fn, tensors):
    for t in tensors:
        t.grad = None
    out = fn()
    ag.backward(out)
    return [t.grad if t.grad is not None else np.zeros(t.shape) for t in tensors]


def assert_matches_fd(fn, tensors, tol: float = 1e-7):
    """Compare backward() against central differences for every tensor."""
    got = analytic_gradients(fn, tensors)
    for t, g in zip(tensors, got):
        want = fd_gradient(fn, t)
        scale = max(1.0, float(np.max(np.abs(want))))
        err = float(np.max(np.abs(g - want))) / scale
        assert err < tol, f"gradient mismatch {err:.3e} on shape {t.shape}"


def leaf(rng, *shape) -> Tensor:
    return Tensor(rng.standard_normal(shape), requires_grad=True)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


# Release-criteria tests append one line each; echoing them in the
# terminal summary keeps the verdicts visible without -s.
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("release criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
