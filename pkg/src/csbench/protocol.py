"""Survival-probability curves for eigenstate superpositions under repeated gates.

For each ordered pair a <= b of gate eigenstates the state
|psi_ab> = (|psi_a> + |psi_b>)/sqrt(2) (or |psi_a> when a == b) is prepared,
passed through preparation noise, L noisy gate applications and measurement
noise, then projected back onto itself.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .channel_core import DimensionError, EigenbasisFrame, QuantumChannel, UnitaryGate, eigenbasis_frame, vectorize
from .noise import NoiseTriple, noiseless

PROB_TOL = 1e-9
SEED_MULTIPLIER = 0x9E3779B97F4A7C15
SEED_MASK = (1 << 64) - 1


class DataError(ValueError):
    """Raised for malformed or inconsistent curve data."""


@dataclass(frozen=True, eq=False)
class PreparationPair:
    a: int
    b: int
    state: np.ndarray = field(repr=False)
    ideal_eigenvalues: tuple = field(repr=False)

    @property
    def key(self) -> tuple:
        return (self.a, self.b)


def make_preparation(frame: EigenbasisFrame, a: int, b: int) -> PreparationPair:
    d = frame.dimension
    if not 0 <= a <= b < d:
        raise ValueError(f"need 0 <= a <= b < {d}, got ({a}, {b})")
    vecs = frame.gate.eigenvectors
    state = vecs[:, a].copy() if a == b else (vecs[:, a] + vecs[:, b]) / np.sqrt(2)
    state.flags.writeable = False
    return PreparationPair(a, b, state, frame.pair_eigenvalues(a, b))


def enumerate_preparations(gate: UnitaryGate | EigenbasisFrame) -> list:
    """All pairs 0 <= a <= b < d in lexicographic order."""
    frame = gate if isinstance(gate, EigenbasisFrame) else eigenbasis_frame(gate)
    d = frame.dimension
    return [make_preparation(frame, a, b) for a in range(d) for b in range(a, d)]


def _check_probability(value: complex) -> float:
    if abs(value.imag) > PROB_TOL:
        raise ValueError(f"survival probability has imaginary part {value.imag:.3e}")
    p = value.real
    if p < -PROB_TOL or p > 1 + PROB_TOL:
        raise ValueError(f"survival probability {p} outside [0, 1]")
    return float(min(max(p, 0.0), 1.0))


def exact_curve(prep_noise: QuantumChannel, gate_noise: QuantumChannel, meas_noise: QuantumChannel,
                gate: UnitaryGate, pair: PreparationPair, l_max: int) -> np.ndarray:
    """Exact survival probabilities for L = 0..l_max, computed by iterating the gate map."""
    d = gate.dimension
    for ch in (prep_noise, gate_noise, meas_noise):
        if ch.dimension != d:
            raise DimensionError(f"channel dimension {ch.dimension} != gate dimension {d}")
    if l_max < 0:
        raise ValueError("l_max must be non-negative")
    rho = vectorize(np.outer(pair.state, pair.state.conj()))
    step = gate_noise.transfer @ np.kron(gate.matrix.conj(), gate.matrix)
    bra = rho.conj() @ meas_noise.transfer
    x = prep_noise.transfer @ rho
    out = np.empty(l_max + 1)
    for L in range(l_max + 1):
        out[L] = _check_probability(bra @ x)
        x = step @ x
    return out


def exact_survival_probability(prep_noise: QuantumChannel, gate_noise: QuantumChannel,
                               meas_noise: QuantumChannel, gate: UnitaryGate,
                               pair: PreparationPair, L: int) -> float:
    """<<rho_ab| G_meas (G_gate_noise G_U)^L G_prep |rho_ab>>."""
    if L < 0:
        raise ValueError("L must be non-negative")
    return float(exact_curve(prep_noise, gate_noise, meas_noise, gate, pair, L)[-1])


@dataclass(frozen=True, eq=False)
class DecayCurve:
    a: int
    b: int
    depths: np.ndarray
    p_hat: np.ndarray
    shots: int
    exact: bool = False

    def __post_init__(self):
        depths = np.asarray(self.depths, dtype=int)
        p_hat = np.asarray(self.p_hat, dtype=float)
        if depths.shape != p_hat.shape or depths.ndim != 1:
            raise DataError("depths and p_hat must be 1-D sequences of equal length")
        if np.any(p_hat < 0) or np.any(p_hat > 1) or not np.all(np.isfinite(p_hat)):
            raise DataError(f"p_hat values for pair ({self.a}, {self.b}) must lie in [0, 1]")
        if self.shots < 1:
            raise DataError("shots must be positive")
        depths.flags.writeable = False
        p_hat.flags.writeable = False
        object.__setattr__(self, "depths", depths)
        object.__setattr__(self, "p_hat", p_hat)

    @property
    def pair(self) -> tuple:
        return (self.a, self.b)

    def is_uniform(self) -> bool:
        return len(self.depths) > 0 and np.array_equal(self.depths, np.arange(len(self.depths)) + self.depths[0])


def subseed(master_seed: int, index: int) -> int:
    """Independent stream seed for curve ``index``: master XOR (index * odd constant), mod 2^64."""
    return (int(master_seed) ^ (int(index) * SEED_MULTIPLIER)) & SEED_MASK


def sample_curve(probabilities: Sequence[float], shots: int, seed: int,
                 a: int = 0, b: int = 0) -> DecayCurve:
    """Binomial shot sampling at every depth from one seeded stream."""
    if shots < 1:
        raise ValueError("shots must be positive")
    probs = np.asarray(probabilities, dtype=float)
    if np.any(probs < 0) or np.any(probs > 1):
        raise ValueError("probabilities must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    counts = rng.binomial(shots, probs)
    return DecayCurve(a, b, np.arange(len(probs)), counts / shots, shots, exact=False)


@dataclass(frozen=True)
class ProtocolConfig:
    gate: UnitaryGate
    noise: NoiseTriple | None = None
    l_max: int = 40
    shots: int = 1000
    seed: int = 0
    exact: bool = False


def run_protocol(config: ProtocolConfig) -> list:
    """One curve per enumerated pair, sampled with per-pair sub-seeds of the master seed."""
    gate = config.gate
    n_qubits = int(round(np.log2(gate.dimension)))
    noise = config.noise or noiseless(n_qubits)
    prep, gnoise, meas = noise.prep.channel(), noise.gate.channel(), noise.meas.channel()
    curves = []
    for idx, pair in enumerate(enumerate_preparations(gate)):
        probs = exact_curve(prep, gnoise, meas, gate, pair, config.l_max)
        if config.exact:
            curves.append(DecayCurve(pair.a, pair.b, np.arange(config.l_max + 1), probs,
                                     config.shots, exact=True))
        else:
            curves.append(sample_curve(probs, config.shots, subseed(config.seed, idx), pair.a, pair.b))
    return curves


# ---------------------------------------------------------------------------
# Curve file: flat JSON array of {"a", "b", "L", "p_hat", "shots"}
# ---------------------------------------------------------------------------

def curves_to_records(curves: Sequence[DecayCurve]) -> list:
    return [{"a": int(c.a), "b": int(c.b), "L": int(L), "p_hat": float(p), "shots": int(c.shots)}
            for c in curves for L, p in zip(c.depths, c.p_hat)]


def curves_from_records(records) -> list:
    if not isinstance(records, list):
        raise DataError("curve file must hold a JSON array of records")
    grouped: dict = {}
    for i, rec in enumerate(records):
        if not isinstance(rec, dict):
            raise DataError(f"record {i} is not an object")
        missing = {"a", "b", "L", "p_hat", "shots"} - set(rec)
        if missing:
            raise DataError(f"record {i} is missing fields {sorted(missing)}")
        try:
            a, b, L, shots = int(rec["a"]), int(rec["b"]), int(rec["L"]), int(rec["shots"])
            p = float(rec["p_hat"])
        except (TypeError, ValueError):
            raise DataError(f"record {i} has non-numeric fields") from None
        if a > b or a < 0:
            raise DataError(f"record {i}: need 0 <= a <= b, got ({a}, {b})")
        grouped.setdefault((a, b), []).append((L, p, shots))
    curves = []
    for (a, b), rows in sorted(grouped.items()):
        rows.sort()
        depths = [r[0] for r in rows]
        if len(set(depths)) != len(depths):
            raise DataError(f"pair ({a}, {b}) has duplicate depths")
        shot_set = {r[2] for r in rows}
        if len(shot_set) != 1:
            raise DataError(f"pair ({a}, {b}) mixes shot counts {sorted(shot_set)}")
        curve = DecayCurve(a, b, depths, [r[1] for r in rows], shot_set.pop())
        if not curve.is_uniform():
            raise DataError(f"pair ({a}, {b}) does not cover a contiguous depth grid")
        curves.append(curve)
    return curves
