"""End-to-end helpers shared by the command line and the test-suite."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .channel_core import EigenbasisFrame, UnitaryGate, eigenbasis_frame, process_fidelity
from .estimation import EstimationConfig, FidelityReport, build_report
from .fitting import MODEL_MP, MODEL_SIX, ExponentialFit, matrix_pencil_fit, six_term_fit
from .noise import NoiseTriple, compose, unitary_channel
from .protocol import DecayCurve, ProtocolConfig, run_protocol


def oracle_fidelity(gate: UnitaryGate, noise: NoiseTriple) -> float:
    """Process fidelity of the noisy gate (gate noise after the ideal gate)."""
    return process_fidelity(gate, compose(noise.gate.channel(), unitary_channel(gate)))


def fit_curves(curves: Sequence[DecayCurve], frame: EigenbasisFrame, model: str = MODEL_SIX,
               weighting: str = "none") -> list:
    fits: list[ExponentialFit] = []
    for curve in curves:
        if curve.b >= frame.dimension:
            raise ValueError(f"pair ({curve.a}, {curve.b}) outside gate dimension {frame.dimension}")
        if model == MODEL_SIX:
            fits.append(six_term_fit(curve, frame.pair_eigenvalues(curve.a, curve.b), weighting=weighting))
        elif model == MODEL_MP:
            fits.append(matrix_pencil_fit(curve, order=4))
        else:
            raise ValueError(f"unknown model {model!r}")
    return fits


@dataclass(frozen=True)
class RunResult:
    curves: list
    fits: list
    baseline_fits: list | None
    report: FidelityReport


def process_curves(curves: Sequence[DecayCurve], gate: UnitaryGate, seed: int = 0,
                   estimation: EstimationConfig | None = None, model: str = MODEL_SIX,
                   baseline: bool = False, oracle: float | None = None,
                   weighting: str = "none", settings: dict | None = None) -> RunResult:
    frame = eigenbasis_frame(gate)
    fits = fit_curves(curves, frame, model, weighting)
    base = fit_curves(curves, frame, MODEL_MP) if baseline else None
    report = build_report(fits, frame, estimation, seed=seed, oracle_fidelity=oracle,
                          baseline_fits=base, settings=settings)
    return RunResult(list(curves), fits, base, report)


def simulate_and_process(config: ProtocolConfig, estimation: EstimationConfig | None = None,
                         baseline: bool = False) -> RunResult:
    curves = run_protocol(config)
    oracle = oracle_fidelity(config.gate, config.noise) if config.noise is not None else 1.0
    return process_curves(curves, config.gate, config.seed, estimation, baseline=baseline, oracle=oracle)
