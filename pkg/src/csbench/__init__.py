"""Channel spectrum benchmarking of quantum gates."""

from .channel_core import (
    EigenbasisFrame,
    QuantumChannel,
    UnitaryGate,
    channel_in_eigenbasis,
    devectorize,
    eigenbasis_frame,
    process_fidelity,
    toffoli,
    transfer_matrix,
    vectorize,
)
from .estimation import FidelityReport, FilteredEigenvalue, build_report, fei, filter_eigenvalues
from .fitting import ExponentialFit, matrix_pencil_fit, model_eval, six_term_fit
from .noise import NoiseSpec, amplitude_damping, calibrated_default_noise, compose, depolarizing, y_rotation
from .pipeline import RunResult, process_curves, simulate_and_process
from .protocol import DecayCurve, PreparationPair, ProtocolConfig, enumerate_preparations, run_protocol

__version__ = "0.1.0"
