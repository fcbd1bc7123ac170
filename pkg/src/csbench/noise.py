"""Parametric noise channels and their placement around the benchmarked gate.

A :class:`NoiseSpec` describes one noise location (gate, preparation or
measurement) as a list of single-qubit factors applied in order and then
tensored across all qubits.  With the default factor list
``[YRotation, AmplitudeDamping]`` each qubit sees AD(gamma) o RY(theta).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .channel_core import (
    DimensionError,
    QuantumChannel,
    UnitaryGate,
    identity_channel,
    process_fidelity,
    toffoli,
)

PLACEMENTS = ("gate", "prep", "meas")
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)


class CalibrationError(ValueError):
    """Raised when no noise strength reaches the requested fidelity."""


# ---------------------------------------------------------------------------
# Elementary channels
# ---------------------------------------------------------------------------

def amplitude_damping(gamma: float) -> QuantumChannel:
    """Single-qubit amplitude damping with decay probability ``gamma``."""
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"gamma must lie in [0, 1], got {gamma}")
    k0 = np.diag([1.0, np.sqrt(1.0 - gamma)]).astype(complex)
    k1 = np.zeros((2, 2), dtype=complex)
    k1[0, 1] = np.sqrt(gamma)
    return QuantumChannel((k0, k1))


def y_rotation(theta: float) -> QuantumChannel:
    """Unitary channel exp(-i theta Y / 2)."""
    if not np.isfinite(theta):
        raise ValueError("theta must be finite")
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return QuantumChannel((c * np.eye(2, dtype=complex) - 1j * s * PAULI_Y,))


def weyl_operators(d: int) -> list:
    """The d^2 clock-and-shift operators X^j Z^k, identity first."""
    omega = np.exp(2j * np.pi / d)
    x = np.roll(np.eye(d, dtype=complex), 1, axis=0)
    z = np.diag(omega ** np.arange(d))
    return [np.linalg.matrix_power(x, j) @ np.linalg.matrix_power(z, k)
            for j in range(d) for k in range(d)]


def depolarizing(p: float, d: int = 2) -> QuantumChannel:
    """rho -> (1 - p) rho + p tr(rho) I / d.

    Built from the Weyl operators, which form a unitary 1-design, so the
    uniform twirl over all d^2 of them is the completely depolarizing map.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    ops = weyl_operators(d)
    kraus = [np.sqrt(1.0 - p + p / d**2) * ops[0]]
    kraus += [np.sqrt(p) / d * w for w in ops[1:]]
    if p == 0.0:
        kraus = kraus[:1]
    return QuantumChannel(tuple(kraus))


def unitary_channel(u) -> QuantumChannel:
    if isinstance(u, UnitaryGate):
        u = u.matrix
    return QuantumChannel((np.asarray(u, dtype=complex),))


def tensor_channels(factors: Sequence[QuantumChannel]) -> QuantumChannel:
    """Kronecker product of channels; the first factor is the most significant qubit."""
    factors = list(factors)
    if not factors:
        raise ValueError("tensor_channels needs at least one factor")
    kraus = []
    for combo in itertools.product(*(f.kraus_ops for f in factors)):
        op = combo[0]
        for k in combo[1:]:
            op = np.kron(op, k)
        kraus.append(op)
    return QuantumChannel(tuple(kraus))


def compose(later: QuantumChannel, earlier: QuantumChannel) -> QuantumChannel:
    """The channel ``later o earlier`` (earlier acts first)."""
    if later.dimension != earlier.dimension:
        raise DimensionError(
            f"cannot compose dimension {later.dimension} with {earlier.dimension}")
    return QuantumChannel(tuple(a @ b for a in later.kraus_ops for b in earlier.kraus_ops))


# ---------------------------------------------------------------------------
# Noise specifications
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AmplitudeDamping:
    gamma: float

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in [0, 1], got {self.gamma}")

    def channel(self) -> QuantumChannel:
        return amplitude_damping(self.gamma)

    def to_json(self) -> dict:
        return {"type": "amplitude_damping", "gamma": float(self.gamma)}


@dataclass(frozen=True)
class YRotation:
    theta: float

    def __post_init__(self):
        if not np.isfinite(self.theta):
            raise ValueError("theta must be finite")

    def channel(self) -> QuantumChannel:
        return y_rotation(self.theta)

    def to_json(self) -> dict:
        return {"type": "y_rotation", "theta": float(self.theta)}


@dataclass(frozen=True)
class Depolarizing:
    p: float

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"p must lie in [0, 1], got {self.p}")

    def channel(self) -> QuantumChannel:
        return depolarizing(self.p, 2)

    def to_json(self) -> dict:
        return {"type": "depolarizing", "p": float(self.p)}


Factor = Union[AmplitudeDamping, YRotation, Depolarizing]

_FACTOR_TYPES = {
    "amplitude_damping": (AmplitudeDamping, "gamma"),
    "y_rotation": (YRotation, "theta"),
    "depolarizing": (Depolarizing, "p"),
}


def factor_from_json(record: dict) -> Factor:
    if not isinstance(record, dict) or "type" not in record:
        raise ValueError(f"noise factor must be a tagged record, got {record!r}")
    kind = record["type"]
    if kind not in _FACTOR_TYPES:
        raise ValueError(f"unknown noise factor type {kind!r}")
    cls, key = _FACTOR_TYPES[kind]
    if key not in record:
        raise ValueError(f"noise factor {kind!r} is missing {key!r}")
    return cls(float(record[key]))


@dataclass(frozen=True)
class NoiseSpec:
    """Single-qubit factors (in application order) repeated on every qubit.

    An empty factor list means no noise at this location.
    """

    factors: tuple = ()
    n_qubits: int = 3
    placement: str = "gate"

    def __post_init__(self):
        if self.placement not in PLACEMENTS:
            raise ValueError(f"placement must be one of {PLACEMENTS}, got {self.placement!r}")
        if self.n_qubits < 1:
            raise ValueError("n_qubits must be positive")
        object.__setattr__(self, "factors", tuple(self.factors))

    @property
    def dimension(self) -> int:
        return 2 ** self.n_qubits

    def single_qubit_channel(self) -> QuantumChannel:
        out = identity_channel(2)
        for factor in self.factors:
            out = compose(factor.channel(), out)
        return out

    def channel(self) -> QuantumChannel:
        if not self.factors:
            return identity_channel(self.dimension)
        return tensor_channels([self.single_qubit_channel()] * self.n_qubits)

    def to_json(self) -> dict:
        return {
            "placement": self.placement,
            "n_qubits": self.n_qubits,
            "factors": [f.to_json() for f in self.factors],
        }

    @classmethod
    def from_json(cls, data, placement: str | None = None, n_qubits: int | None = None) -> "NoiseSpec":
        if isinstance(data, list):
            data = {"factors": data}
        if not isinstance(data, dict):
            raise ValueError(f"noise spec must be an object or list, got {type(data).__name__}")
        return cls(
            factors=tuple(factor_from_json(r) for r in data.get("factors", [])),
            n_qubits=int(data.get("n_qubits", n_qubits if n_qubits is not None else 3)),
            placement=placement or data.get("placement", "gate"),
        )


def default_factors(gamma: float, theta_ratio: float = 5.0) -> tuple:
    """AD(gamma) o RY(theta_ratio * gamma), listed in application order."""
    return (YRotation(theta_ratio * gamma), AmplitudeDamping(gamma))


@dataclass(frozen=True)
class NoiseTriple:
    """Noise at the three circuit locations: after each gate, after preparation, before measurement."""

    gate: NoiseSpec
    prep: NoiseSpec
    meas: NoiseSpec
    gamma: float | None = None
    theta: float | None = None
    oracle_fidelity: float | None = field(default=None, compare=False)

    def to_json(self) -> dict:
        out = {"gate": self.gate.to_json(), "prep": self.prep.to_json(), "meas": self.meas.to_json()}
        if self.gamma is not None:
            out["calibration"] = {"gamma": self.gamma, "theta": self.theta,
                                  "oracle_fidelity": self.oracle_fidelity}
        return out


def noiseless(n_qubits: int = 3) -> NoiseTriple:
    return NoiseTriple(*(NoiseSpec((), n_qubits, p) for p in PLACEMENTS))


def _calibration_fidelity(gate: UnitaryGate, gamma: float, n_qubits: int, theta_ratio: float) -> float:
    noise = NoiseSpec(default_factors(gamma, theta_ratio), n_qubits, "gate").channel()
    return process_fidelity(gate, compose(noise, unitary_channel(gate)))


def calibrated_default_noise(
    target_fidelity: float,
    tolerance: float = 0.005,
    gate: UnitaryGate | None = None,
    theta_ratio: float = 5.0,
    gamma_max: float = 0.2,
    iterations: int = 60,
) -> NoiseTriple:
    """Find gamma so the gate-noise oracle fidelity matches ``target_fidelity``.

    The same spec AD(gamma) o RY(theta_ratio * gamma) on every qubit is used
    at all three locations.  The search is a fixed-length bisection over
    ``[0, gamma_max]``, so the result is deterministic.
    """
    gate = gate or toffoli()
    n_qubits = int(round(np.log2(gate.dimension)))
    if 2 ** n_qubits != gate.dimension:
        raise CalibrationError("calibrated noise needs a qubit register (d = 2^n)")
    if not np.isfinite(target_fidelity) or target_fidelity <= 0.0:
        raise CalibrationError(f"invalid target fidelity {target_fidelity}")

    if target_fidelity >= 1.0:
        gamma = 0.0
    else:
        lo, hi = 0.0, gamma_max
        if _calibration_fidelity(gate, hi, n_qubits, theta_ratio) > target_fidelity:
            raise CalibrationError(
                f"target fidelity {target_fidelity} unreachable with gamma <= {gamma_max}")
        for _ in range(iterations):
            mid = 0.5 * (lo + hi)
            if _calibration_fidelity(gate, mid, n_qubits, theta_ratio) > target_fidelity:
                lo = mid
            else:
                hi = mid
        gamma = 0.5 * (lo + hi)

    achieved = _calibration_fidelity(gate, gamma, n_qubits, theta_ratio)
    if abs(achieved - min(target_fidelity, 1.0)) > tolerance:
        raise CalibrationError(
            f"calibration reached {achieved:.6f}, outside {target_fidelity} +/- {tolerance}")
    factors = default_factors(gamma, theta_ratio) if gamma > 0 else ()
    specs = [NoiseSpec(factors, n_qubits, p) for p in PLACEMENTS]
    return NoiseTriple(*specs, gamma=gamma, theta=theta_ratio * gamma, oracle_fidelity=achieved)
