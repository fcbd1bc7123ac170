"""Linear algebra for quantum channels.

Channels are stored as Kraus operators and mapped to d^2 x d^2 transfer
matrices acting on column-stacked density matrices, G = sum_i conj(R_i) (x) R_i.
The eigenbasis frame of a unitary gate diagonalises its ideal channel, and the
process fidelity computed here is the exact oracle used to validate estimates.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.linalg

VALIDATION_TOL = 1e-10
RECONSTRUCTION_TOL = 1e-9


class DimensionError(ValueError):
    """Raised when matrix or channel dimensions do not line up."""


def _as_square(matrix, name: str = "matrix") -> np.ndarray:
    arr = np.asarray(matrix, dtype=complex)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {arr.shape}")
    return arr


def _max_dev(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.max(np.abs(a - b))) if a.size else 0.0


# ---------------------------------------------------------------------------
# Vectorisation
# ---------------------------------------------------------------------------

def vectorize(rho) -> np.ndarray:
    """Stack the columns of a square matrix: entry ``r + c*d`` is ``rho[r, c]``."""
    rho = _as_square(rho, "rho")
    return rho.reshape(-1, order="F").copy()


def devectorize(vec) -> np.ndarray:
    """Inverse of :func:`vectorize`."""
    vec = np.asarray(vec, dtype=complex).ravel()
    d = int(round(np.sqrt(vec.size)))
    if d * d != vec.size:
        raise DimensionError(f"length {vec.size} is not a perfect square")
    return vec.reshape(d, d, order="F").copy()


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class UnitaryGate:
    """A d x d unitary together with its spectral decomposition U = A diag(lam) A^dag.

    Use :meth:`from_matrix` to diagonalise an arbitrary unitary; the raw
    constructor is for callers that already hold an orthonormal eigenbasis
    (see :func:`toffoli`).
    """

    matrix: np.ndarray
    eigenvectors: np.ndarray
    eigenphases: np.ndarray
    name: str = "custom"

    def __post_init__(self):
        u = _as_square(self.matrix, "U")
        a = _as_square(self.eigenvectors, "A")
        lam = np.asarray(self.eigenphases, dtype=complex).ravel()
        if a.shape != u.shape or lam.size != u.shape[0]:
            raise DimensionError("eigenbasis does not match the gate dimension")
        eye = np.eye(u.shape[0])
        if _max_dev(u @ u.conj().T, eye) > VALIDATION_TOL:
            raise ValueError("matrix is not unitary")
        if _max_dev(a @ a.conj().T, eye) > VALIDATION_TOL:
            raise ValueError("eigenvectors are not orthonormal")
        if _max_dev(np.abs(lam), np.ones(lam.size)) > VALIDATION_TOL:
            raise ValueError("eigenvalues must have unit modulus")
        if _max_dev(a @ np.diag(lam) @ a.conj().T, u) > VALIDATION_TOL:
            raise ValueError("A diag(lam) A^dag does not reproduce U")
        for attr, value in (("matrix", u), ("eigenvectors", a), ("eigenphases", lam)):
            value.flags.writeable = False
            object.__setattr__(self, attr, value)

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def from_matrix(cls, matrix, name: str = "custom") -> "UnitaryGate":
        """Diagonalise a unitary via complex Schur decomposition.

        For a normal matrix the Schur factor is diagonal and the Schur vectors
        are orthonormal even inside degenerate eigenspaces, which a general
        eigensolver does not guarantee.  Columns are re-orthonormalised with a
        QR pass to remove rounding drift.
        """
        u = _as_square(matrix, "U")
        if _max_dev(u @ u.conj().T, np.eye(u.shape[0])) > VALIDATION_TOL:
            raise ValueError("matrix is not unitary")
        t, z = scipy.linalg.schur(u, output="complex")
        lam = np.diag(t).copy()
        lam /= np.abs(lam)
        q, r = np.linalg.qr(z)
        q = q * (np.diag(r) / np.abs(np.diag(r)))
        return cls(u, q, lam, name=name)

    def to_unitary_channel(self) -> "QuantumChannel":
        return QuantumChannel((self.matrix,))


@dataclass(frozen=True, eq=False)
class QuantumChannel:
    """A CPTP map rho -> sum_i R_i rho R_i^dag."""

    kraus_ops: tuple

    def __post_init__(self):
        ops = tuple(_as_square(k, "Kraus operator") for k in self.kraus_ops)
        if not ops:
            raise ValueError("a channel needs at least one Kraus operator")
        d = ops[0].shape[0]
        if any(k.shape != (d, d) for k in ops):
            raise DimensionError("Kraus operators must share one dimension")
        completeness = sum(k.conj().T @ k for k in ops)
        if _max_dev(completeness, np.eye(d)) > VALIDATION_TOL:
            raise ValueError("Kraus operators violate completeness sum R^dag R = I")
        for k in ops:
            k.flags.writeable = False
        object.__setattr__(self, "kraus_ops", ops)

    @property
    def dimension(self) -> int:
        return self.kraus_ops[0].shape[0]

    @cached_property
    def transfer(self) -> np.ndarray:
        g = sum(np.kron(k.conj(), k) for k in self.kraus_ops)
        g.flags.writeable = False
        return g

    def apply(self, rho) -> np.ndarray:
        rho = _as_square(rho, "rho")
        return sum(k @ rho @ k.conj().T for k in self.kraus_ops)


def identity_channel(d: int) -> QuantumChannel:
    return QuantumChannel((np.eye(d, dtype=complex),))


def transfer_matrix(channel: QuantumChannel) -> np.ndarray:
    """Return G with vectorize(R(rho)) = G @ vectorize(rho)."""
    return channel.transfer


@dataclass(frozen=True, eq=False)
class EigenbasisFrame:
    """The unitary C = conj(A) (x) A that diagonalises the ideal gate channel.

    Ordered pair (a, b) labels the eigenoperator |psi_a><psi_b|, stored at flat
    index ``a + b*d`` (the same column-stacking convention as :func:`vectorize`);
    its ideal eigenvalue is ``lam[a] * conj(lam[b])``.
    """

    gate: UnitaryGate
    c: np.ndarray = field(repr=False)
    k_u: np.ndarray = field(repr=False)

    @property
    def dimension(self) -> int:
        return self.gate.dimension

    def index(self, a: int, b: int) -> int:
        return a + b * self.dimension

    def pair_eigenvalues(self, a: int, b: int) -> tuple:
        """Ideal eigenvalues at indices (aa, ab, ba, bb)."""
        k = self.k_u
        return (k[self.index(a, a)], k[self.index(a, b)],
                k[self.index(b, a)], k[self.index(b, b)])

    def trivial_mask(self, tol: float = RECONSTRUCTION_TOL) -> np.ndarray:
        return np.abs(self.k_u - 1.0) <= tol

    @property
    def d_ts(self) -> int:
        """Multiplicity of the ideal channel eigenvalue +1."""
        return int(np.count_nonzero(self.trivial_mask()))

    @property
    def d_ns(self) -> int:
        return self.dimension ** 2 - self.d_ts


def eigenbasis_frame(gate: UnitaryGate) -> EigenbasisFrame:
    a = gate.eigenvectors
    c = np.kron(a.conj(), a)
    k_u = np.kron(gate.eigenphases.conj(), gate.eigenphases)
    if _max_dev(c @ c.conj().T, np.eye(c.shape[0])) > VALIDATION_TOL:
        raise ValueError("eigenbasis frame is not unitary")
    c.flags.writeable = False
    k_u.flags.writeable = False
    return EigenbasisFrame(gate, c, k_u)


def channel_in_eigenbasis(channel: QuantumChannel, frame: EigenbasisFrame) -> np.ndarray:
    """K = C^dag G C, the channel written in the ideal gate's eigenbasis."""
    if channel.dimension != frame.dimension:
        raise DimensionError(
            f"channel dimension {channel.dimension} != frame dimension {frame.dimension}")
    return frame.c.conj().T @ channel.transfer @ frame.c


def process_fidelity(ideal: UnitaryGate, noisy: QuantumChannel) -> float:
    """tr(G_U^dag G_noisy) / d^2, the exact process fidelity."""
    if ideal.dimension != noisy.dimension:
        raise DimensionError(
            f"gate dimension {ideal.dimension} != channel dimension {noisy.dimension}")
    g_u = np.kron(ideal.matrix.conj(), ideal.matrix)
    value = np.trace(g_u.conj().T @ noisy.transfer) / ideal.dimension ** 2
    if abs(value.imag) > 1e-12:
        raise ValueError(f"process fidelity has imaginary residue {value.imag:.3e}")
    return float(value.real)


# ---------------------------------------------------------------------------
# Gates
# ---------------------------------------------------------------------------

def toffoli() -> UnitaryGate:
    """Three-qubit Toffoli with its analytic eigenbasis.

    Qubit 0 is the most significant bit.  Eigenvectors are ordered
    |000>, |001>, |010>, |011>, |100>, |101>, |11+> (all +1) and |11-> (-1).
    """
    u = np.eye(8, dtype=complex)
    u[6:, 6:] = [[0, 1], [1, 0]]
    a = np.eye(8, dtype=complex)
    a[6:, 6:] = np.array([[1, 1], [1, -1]]) / np.sqrt(2)
    lam = np.array([1] * 7 + [-1], dtype=complex)
    return UnitaryGate(u, a, lam, name="toffoli")


# ---------------------------------------------------------------------------
# Matrix JSON: array-of-arrays of [re, im] pairs
# ---------------------------------------------------------------------------

def matrix_to_json(matrix) -> list:
    m = np.asarray(matrix, dtype=complex)
    return [[[float(x.real), float(x.imag)] for x in row] for row in m]


def matrix_from_json(data) -> np.ndarray:
    try:
        arr = np.asarray(data, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ValueError(f"malformed matrix JSON: {exc}") from None
    if arr.ndim != 3 or arr.shape[2] != 2:
        raise ValueError("matrix JSON must be an array of rows of [re, im] pairs")
    return arr[..., 0] + 1j * arr[..., 1]


def load_gate(spec: str | Path) -> UnitaryGate:
    """Resolve a gate spec: ``"toffoli"`` or a path to a matrix JSON file."""
    if str(spec).lower() == "toffoli":
        return toffoli()
    path = Path(spec)
    with path.open() as fh:
        data = json.load(fh)
    if isinstance(data, dict):
        data = data["matrix"]
    return UnitaryGate.from_matrix(matrix_from_json(data), name=path.stem)


def random_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random unitary (QR of a complex Ginibre matrix)."""
    z = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def kron_all(mats: Sequence[np.ndarray]) -> np.ndarray:
    out = np.eye(1, dtype=complex)
    for m in mats:
        out = np.kron(out, m)
    return out
