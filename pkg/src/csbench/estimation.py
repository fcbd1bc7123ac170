"""From fitted exponentials to fidelity estimates.

Each fitted base z is matched to the nearest ideal eigenvalue lam_U of its
preparation pair by circular phase distance, and the noise eigenvalue is
lam_E = z / lam_U.  Terms with tiny amplitude or a phase far from every ideal
value are discarded.  The pooled real parts of the kept lam_E feed a bootstrap
over samples of size d^2, whose quantiles form the fidelity estimate interval.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .channel_core import EigenbasisFrame, RECONSTRUCTION_TOL
from .fitting import ExponentialFit

KEPT = "none"
SMALL_AMPLITUDE = "small_amplitude"
PHASE_OUTLIER = "phase_outlier"
BOOTSTRAP_STREAM = 0xB0075742


class EstimationError(RuntimeError):
    """Raised when no usable eigenvalue estimates remain."""


@dataclass(frozen=True)
class FilteredEigenvalue:
    z: complex
    f: complex
    assigned_ideal: complex
    lambda_e: complex
    a: int
    b: int
    reason: str = KEPT

    @property
    def kept(self) -> bool:
        return self.reason == KEPT

    @property
    def trivial(self) -> bool:
        return abs(self.assigned_ideal - 1.0) <= RECONSTRUCTION_TOL

    def to_json(self) -> dict:
        return {
            "a": self.a,
            "b": self.b,
            "z": [self.z.real, self.z.imag],
            "f": [self.f.real, self.f.imag],
            "assigned_ideal": [self.assigned_ideal.real, self.assigned_ideal.imag],
            "lambda_e": [self.lambda_e.real, self.lambda_e.imag],
            "reason": self.reason,
        }


def phase_distance(z: complex, w: complex) -> float:
    """Circular distance between the phases of z and w, in [0, pi]."""
    diff = (np.angle(z) - np.angle(w) + np.pi) % (2 * np.pi) - np.pi
    return float(abs(diff))


def distinct_ideals(ideal_pair_eigenvalues, tol: float = RECONSTRUCTION_TOL) -> list:
    out = []
    for lam in np.asarray(ideal_pair_eigenvalues, dtype=complex).ravel():
        if not any(abs(lam - u) <= tol for u in out):
            out.append(complex(lam))
    return out


def nearest_ideal(z: complex, ideals: Sequence[complex]) -> tuple:
    """Nearest ideal eigenvalue by phase; ties go to the smaller principal phase."""
    ranked = sorted(ideals, key=lambda u: (round(phase_distance(z, u), 12), float(np.angle(u))))
    best = ranked[0]
    return best, phase_distance(z, best)


def filter_eigenvalues(fit: ExponentialFit, ideal_pair_eigenvalues, amp_threshold: float = 0.01,
                       phase_threshold: float = np.pi / 2) -> list:
    """Assign every fitted term to an ideal eigenvalue and mark rejects.

    The amplitude rule is applied first, so a term that fails both rules is
    reported as ``small_amplitude``.
    """
    if not fit.terms:
        raise EstimationError(f"fit for pair ({fit.a}, {fit.b}) has no terms")
    if amp_threshold < 0 or not 0 <= phase_threshold <= np.pi:
        raise ValueError("need amp_threshold >= 0 and 0 <= phase_threshold <= pi")
    ideals = distinct_ideals(ideal_pair_eigenvalues)
    out = []
    for z, f in fit.terms:
        lam_u, dist = nearest_ideal(z, ideals)
        if abs(f) < amp_threshold:
            reason = SMALL_AMPLITUDE
        elif dist > phase_threshold:
            reason = PHASE_OUTLIER
        else:
            reason = KEPT
        out.append(FilteredEigenvalue(z, f, lam_u, z / lam_u, fit.a, fit.b, reason))
    return out


def noise_eigenvalues(filtered: Sequence[FilteredEigenvalue]) -> np.ndarray:
    """Real parts of lam_E for the kept entries."""
    values = [e.lambda_e.real for e in filtered if e.kept]
    if not values:
        raise EstimationError("no kept eigenvalues")
    return np.array(values, dtype=float)


def nearest_rank_quantile(sorted_values: np.ndarray, p: float) -> float:
    """Smallest value whose empirical CDF reaches p (rank ceil(p n), 1-based)."""
    n = len(sorted_values)
    rank = max(1, min(n, math.ceil(p * n - 1e-9)))
    return float(sorted_values[rank - 1])


@dataclass(frozen=True)
class FEIResult:
    low: float
    high: float
    midpoint: float
    samples: np.ndarray = field(repr=False)


def fei(estimates, d_squared: int, resamples: int = 2000, seed=0,
        quantiles: tuple = (0.025, 0.975)) -> FEIResult:
    """Bootstrap interval of the mean over samples of size ``d_squared``.

    Each resample draws ``d_squared`` values with replacement and averages
    them.  Bounds are nearest-rank quantiles of the sorted resample means.
    """
    values = np.asarray(estimates, dtype=float).ravel()
    if values.size == 0:
        raise EstimationError("no estimates to resample")
    if resamples < 100:
        raise ValueError("need at least 100 resamples")
    rng = np.random.default_rng(seed)
    means = np.sort(rng.choice(values, size=(resamples, d_squared), replace=True).mean(axis=1))
    low = nearest_rank_quantile(means, quantiles[0])
    high = nearest_rank_quantile(means, quantiles[1])
    return FEIResult(low, high, 0.5 * (low + high), means)


def degenerate_point_estimate(trivial, nontrivial, d_ts: int, d_ns: int) -> tuple:
    """(d_ts mean_trivial + d_ns mean_nontrivial) / d^2.

    When one group is empty the other group's mean stands in for it and the
    returned flag is True.
    """
    trivial = np.asarray(trivial, dtype=float)
    nontrivial = np.asarray(nontrivial, dtype=float)
    if trivial.size == 0 and nontrivial.size == 0:
        raise EstimationError("no kept eigenvalues for the point estimate")
    fallback = trivial.size == 0 or nontrivial.size == 0
    m_t = trivial.mean() if trivial.size else nontrivial.mean()
    m_n = nontrivial.mean() if nontrivial.size else trivial.mean()
    return float((d_ts * m_t + d_ns * m_n) / (d_ts + d_ns)), fallback


def _grouped(filtered: Sequence[FilteredEigenvalue]) -> tuple:
    kept = [e for e in filtered if e.kept]
    trivial = [e.lambda_e.real for e in kept if e.trivial]
    nontrivial = [e.lambda_e.real for e in kept if not e.trivial]
    return trivial, nontrivial


@dataclass(frozen=True)
class EstimationConfig:
    amp_threshold: float = 0.01
    phase_threshold: float = np.pi / 2
    resamples: int = 2000
    quantiles: tuple = (0.025, 0.975)

    def to_json(self) -> dict:
        return {
            "amp_threshold": self.amp_threshold,
            "phase_threshold": self.phase_threshold,
            "resamples": self.resamples,
            "quantiles": list(self.quantiles),
        }


def bootstrap_seed(master_seed: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(master_seed), BOOTSTRAP_STREAM])


@dataclass(frozen=True)
class FidelityReport:
    fei_low: float
    fei_high: float
    midpoint: float
    degenerate_estimate: float
    degenerate_fallback: bool
    resamples: int
    quantiles: tuple
    eigenvalues: tuple
    d_ts: int
    d_ns: int
    seed: int
    settings: dict
    samples: np.ndarray = field(repr=False, compare=False)
    oracle_fidelity: float | None = None
    baseline_estimate: float | None = None

    @property
    def kept(self) -> list:
        return [e for e in self.eigenvalues if e.kept]

    @property
    def kept_count(self) -> int:
        return len(self.kept)

    @property
    def width(self) -> float:
        return self.fei_high - self.fei_low

    def to_json(self) -> dict:
        out = {
            "fei_low": self.fei_low,
            "fei_high": self.fei_high,
            "midpoint": self.midpoint,
            "degenerate_estimate": self.degenerate_estimate,
            "degenerate_fallback": self.degenerate_fallback,
            "resamples": self.resamples,
            "quantiles": list(self.quantiles),
            "kept_count": self.kept_count,
            "rejected_count": len(self.eigenvalues) - self.kept_count,
            "eigenvalues": [e.to_json() for e in self.eigenvalues],
            "d_ts": self.d_ts,
            "d_ns": self.d_ns,
            "seed": self.seed,
            "settings": self.settings,
        }
        if self.oracle_fidelity is not None:
            out["oracle_fidelity"] = self.oracle_fidelity
        if self.baseline_estimate is not None:
            out["baseline_estimate"] = self.baseline_estimate
        return out


def filter_all(fits: Sequence[ExponentialFit], frame: EigenbasisFrame, amp_threshold: float,
               phase_threshold: float) -> list:
    out = []
    for fit in fits:
        out += filter_eigenvalues(fit, frame.pair_eigenvalues(fit.a, fit.b), amp_threshold, phase_threshold)
    return out


def baseline_estimate(fits: Sequence[ExponentialFit], frame: EigenbasisFrame) -> float:
    """Degenerate-weighted estimate with every term kept and matched to its nearest ideal value."""
    filtered = filter_all(fits, frame, 0.0, np.pi)
    trivial, nontrivial = _grouped(filtered)
    return degenerate_point_estimate(trivial, nontrivial, frame.d_ts, frame.d_ns)[0]


def build_report(fits: Sequence[ExponentialFit], frame: EigenbasisFrame,
                 config: EstimationConfig | None = None, seed: int = 0,
                 oracle_fidelity: float | None = None, baseline_fits=None,
                 settings: dict | None = None) -> FidelityReport:
    """Filter all fits, pool the kept estimates and assemble the report."""
    config = config or EstimationConfig()
    if not fits:
        raise EstimationError("no fits supplied")
    filtered = filter_all(fits, frame, config.amp_threshold, config.phase_threshold)
    pool = noise_eigenvalues(filtered)
    d2 = frame.dimension ** 2
    interval = fei(pool, d2, config.resamples, bootstrap_seed(seed), tuple(config.quantiles))
    trivial, nontrivial = _grouped(filtered)
    degenerate, fallback = degenerate_point_estimate(trivial, nontrivial, frame.d_ts, frame.d_ns)
    baseline = baseline_estimate(baseline_fits, frame) if baseline_fits else None
    merged = {"estimation": config.to_json()}
    merged.update(settings or {})
    return FidelityReport(
        fei_low=interval.low,
        fei_high=interval.high,
        midpoint=interval.midpoint,
        degenerate_estimate=degenerate,
        degenerate_fallback=fallback,
        resamples=config.resamples,
        quantiles=tuple(config.quantiles),
        eigenvalues=tuple(filtered),
        d_ts=frame.d_ts,
        d_ns=frame.d_ns,
        seed=int(seed),
        settings=merged,
        samples=interval.samples,
        oracle_fidelity=oracle_fidelity,
        baseline_estimate=baseline,
    )
