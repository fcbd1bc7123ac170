from __future__ import annotations

import numpy as np
import pytest

from csbench.channel_core import QuantumChannel, random_unitary


def random_density_matrix(d: int, rng: np.random.Generator) -> np.ndarray:
    g = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    rho = g @ g.conj().T
    return rho / np.trace(rho)


def random_channel(d: int, rng: np.random.Generator, n_kraus: int = 3) -> QuantumChannel:
    """Random CPTP map from a Stiefel isometry split into Kraus blocks."""
    v = random_unitary(d * n_kraus, rng)[:, :d]
    return QuantumChannel(tuple(v[i * d:(i + 1) * d] for i in range(n_kraus)))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
