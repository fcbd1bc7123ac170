"""Experiment configuration files.

A config is a JSON object with a versioned ``schema`` field::

    {
      "schema": "csbench.config/1",
      "gate": "toffoli",
      "noise": "calibrated:0.890",
      "shots": 1000,
      "l_max": 40,
      "seed": 0,
      "fit": {"model": "six_term_opt", "weighting": "none"},
      "estimation": {"amp_threshold": 0.01, "phase_threshold": 1.5707963267948966,
                     "resamples": 2000, "quantiles": [0.025, 0.975]}
    }

``gate`` is ``"toffoli"``, a path to a matrix JSON file (relative to the config
file) or an inline ``{"name": ..., "matrix": [[[re, im], ...], ...]}`` object.
``noise`` is ``"none"``, ``"calibrated:<fidelity>"`` or an object with
``gate``/``prep``/``meas`` entries, each a list of tagged factor records.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .channel_core import UnitaryGate, load_gate, matrix_from_json, matrix_to_json, toffoli
from .estimation import EstimationConfig
from .fitting import MODEL_MP, MODEL_SIX
from .noise import CalibrationError, NoiseSpec, NoiseTriple, calibrated_default_noise, noiseless

SCHEMA = "csbench.config/1"


class ConfigError(ValueError):
    """Raised for invalid or inconsistent configuration."""


@dataclass(frozen=True)
class ExperimentConfig:
    gate: object = "toffoli"
    noise: object = "calibrated:0.890"
    shots: int = 1000
    l_max: int = 40
    seed: int = 0
    model: str = MODEL_SIX
    weighting: str = "none"
    estimation: EstimationConfig = field(default_factory=EstimationConfig)
    base_dir: Path = field(default=Path("."), compare=False)

    def __post_init__(self):
        if not isinstance(self.shots, int) or self.shots < 1:
            raise ConfigError("shots must be a positive integer")
        if not isinstance(self.l_max, int) or self.l_max < 12:
            raise ConfigError("l_max must be an integer >= 12")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError("seed must be a non-negative integer")
        if self.model not in (MODEL_SIX, MODEL_MP):
            raise ConfigError(f"unknown fitting model {self.model!r}")
        if self.weighting not in ("none", "binomial"):
            raise ConfigError(f"unknown weighting {self.weighting!r}")
        est = self.estimation
        q = tuple(est.quantiles)
        if len(q) != 2 or not (0 < q[0] < 0.5 < q[1] < 1) or abs(q[0] + q[1] - 1) > 1e-12:
            raise ConfigError("quantiles must be a pair in (0, 0.5) and (0.5, 1) symmetric about 0.5")
        if est.amp_threshold < 0:
            raise ConfigError("amp_threshold must be non-negative")
        if not 0 < est.phase_threshold <= np.pi:
            raise ConfigError("phase_threshold must lie in (0, pi]")
        if est.resamples < 100:
            raise ConfigError("resamples must be at least 100")

    def with_seed(self, seed: int | None) -> "ExperimentConfig":
        return self if seed is None else replace(self, seed=seed)

    # -- resolution ---------------------------------------------------------

    def resolve_gate(self) -> UnitaryGate:
        spec = self.gate
        try:
            if isinstance(spec, dict):
                return UnitaryGate.from_matrix(matrix_from_json(spec["matrix"]),
                                               name=spec.get("name", "custom"))
            if isinstance(spec, str):
                if spec.lower() == "toffoli":
                    return toffoli()
                path = Path(spec)
                if not path.is_absolute():
                    path = self.base_dir / path
                return load_gate(path)
        except (OSError, KeyError, ValueError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot load gate {spec!r}: {exc}") from None
        raise ConfigError(f"invalid gate spec {spec!r}")

    def resolve_noise(self, gate: UnitaryGate) -> NoiseTriple:
        n_qubits = int(round(np.log2(gate.dimension)))
        spec = self.noise
        try:
            if spec in (None, "none"):
                return noiseless(n_qubits)
            if isinstance(spec, str) and spec.startswith("calibrated:"):
                target = float(spec.split(":", 1)[1])
                return calibrated_default_noise(target, gate=gate)
            if isinstance(spec, dict):
                specs = {p: NoiseSpec.from_json(spec.get(p, []), placement=p, n_qubits=n_qubits)
                         for p in ("gate", "prep", "meas")}
                if any(s.dimension != gate.dimension for s in specs.values()):
                    raise ConfigError("noise qubit count does not match the gate")
                return NoiseTriple(specs["gate"], specs["prep"], specs["meas"])
        except CalibrationError as exc:
            raise ConfigError(f"noise calibration failed: {exc}") from None
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"invalid noise spec: {exc}") from None
        raise ConfigError(f"invalid noise spec {spec!r}")

    # -- serialisation ------------------------------------------------------

    def echo(self, gate: UnitaryGate | None = None) -> dict:
        """A self-contained config that reproduces this run (custom gates are inlined)."""
        gate_spec = self.gate
        if gate is not None and not (isinstance(gate_spec, str) and gate_spec.lower() == "toffoli"):
            gate_spec = {"name": gate.name, "matrix": matrix_to_json(gate.matrix)}
        return {
            "schema": SCHEMA,
            "gate": gate_spec,
            "noise": self.noise,
            "shots": self.shots,
            "l_max": self.l_max,
            "seed": self.seed,
            "fit": {"model": self.model, "weighting": self.weighting},
            "estimation": self.estimation.to_json(),
        }


def config_from_dict(data, base_dir: Path | str = ".") -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    if data.get("schema") != SCHEMA:
        raise ConfigError(f"config schema must be {SCHEMA!r}, got {data.get('schema')!r}")
    known = {"schema", "gate", "noise", "shots", "l_max", "seed", "fit", "estimation", "output_dir"}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config fields {sorted(unknown)}")
    fit = data.get("fit", {})
    est = data.get("estimation", {})
    if not isinstance(fit, dict) or not isinstance(est, dict):
        raise ConfigError("'fit' and 'estimation' must be objects")
    try:
        estimation = EstimationConfig(
            amp_threshold=float(est.get("amp_threshold", 0.01)),
            phase_threshold=float(est.get("phase_threshold", np.pi / 2)),
            resamples=int(est.get("resamples", 2000)),
            quantiles=tuple(float(x) for x in est.get("quantiles", (0.025, 0.975))),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid estimation settings: {exc}") from None
    defaults = ExperimentConfig()
    return ExperimentConfig(
        gate=data.get("gate", defaults.gate),
        noise=data.get("noise", defaults.noise),
        shots=data.get("shots", defaults.shots),
        l_max=data.get("l_max", defaults.l_max),
        seed=data.get("seed", defaults.seed),
        model=fit.get("model", defaults.model),
        weighting=fit.get("weighting", defaults.weighting),
        estimation=estimation,
        base_dir=Path(base_dir),
    )


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        with path.open() as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    return config_from_dict(data, base_dir=path.parent)
