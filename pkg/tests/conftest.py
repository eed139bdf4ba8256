import sys

import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=25, deadline=None)
settings.load_profile("default")


def rand_herm(rng, n, scale=1.0):
    g = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return scale * 0.5 * (g + g.conj().T)


def rand_psd(rng, n, rank=None):
    g = rng.normal(size=(n, rank or n)) + 1j * rng.normal(size=(n, rank or n))
    return g @ g.conj().T


def rand_density(rng, n, rank=None):
    r = rand_psd(rng, n, rank)
    return r / np.trace(r).real


def rand_kraus(rng, n_v, n_w, r=2):
    """Kraus operators of a random channel, via an isometry from a QR factorization."""
    g = rng.normal(size=(n_w * r, n_v)) + 1j * rng.normal(size=(n_w * r, n_v))
    q, _ = np.linalg.qr(g)
    return [q[k * n_w:(k + 1) * n_w, :] for k in range(r)]


def rand_unitary(rng, n):
    q, r = np.linalg.qr(rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n)))
    return q * (np.diag(r) / np.abs(np.diag(r)))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(mod.acceptance_line(n))
