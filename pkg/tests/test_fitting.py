from __future__ import annotations

import json

import numpy as np
import pytest

from csbench.channel_core import eigenbasis_frame, toffoli
from csbench.fitting import (
    MODEL_MP,
    MODEL_SIX,
    ExponentialFit,
    FitError,
    envelope_decay,
    initialize_from_ideal,
    is_conjugate_closed,
    matrix_pencil_fit,
    model_eval,
    six_term_fit,
)
from csbench.noise import calibrated_default_noise
from csbench.protocol import DecayCurve, ProtocolConfig, run_protocol

DEPTHS = np.arange(41)


def curve_of(values, a=0, b=1) -> DecayCurve:
    return DecayCurve(a, b, np.arange(len(values)), values, 1000, exact=True)


def random_pair_set(rng, r_range=(0.5, 0.99), n_pairs=3, min_gap=0.3):
    """Conjugate-closed terms whose 41-point curve lies in [0, 1] (rejection sampled)."""
    while True:
        phases = np.sort(rng.uniform(0.05, np.pi - 0.05, n_pairs))
        if np.min(np.diff(phases)) < min_gap:
            continue
        z = rng.uniform(*r_range, n_pairs) * np.exp(1j * phases)
        f = rng.uniform(0.02, 0.3, n_pairs) * np.exp(1j * rng.uniform(-np.pi, np.pi, n_pairs))
        y = 2 * (f[:, None] * z[:, None] ** DEPTHS).real.sum(axis=0)
        if y.min() >= 0 and y.max() <= 1:
            terms = [t for zz, ff in zip(z, f) for t in ((zz, ff), (zz.conjugate(), ff.conjugate()))]
            return terms, y


def max_root_error(true_terms, fit: ExponentialFit) -> float:
    fitted = np.array([z for z, _ in fit.terms])
    return max(np.min(np.abs(fitted - z)) for z, _ in true_terms)


def test_model_eval_constant():
    assert model_eval([(1, 1)], 0) == 1.0
    assert np.all(model_eval([(1, 1)], DEPTHS) == 1.0)


def test_model_eval_cosine():
    z = 0.9 * np.exp(1j * np.pi / 4)
    assert model_eval([(z, 0.5), (z.conjugate(), 0.5)], 2) == pytest.approx(0.0, abs=1e-15)
    assert model_eval([(z, 0.5), (z.conjugate(), 0.5)], 1) == pytest.approx(0.9 * np.cos(np.pi / 4))


def test_model_eval_negative_base_alternates():
    values = model_eval([(-0.95, 1.0)], np.arange(6))
    assert np.all(np.sign(values) == [1, -1, 1, -1, 1, -1])
    assert np.all(np.diff(np.abs(values)) < 0)


def test_model_eval_rejects_unpaired():
    with pytest.raises(FitError):
        model_eval([(0.5 + 0.5j, 1.0)], 3)


def test_pencil_single_exponential():
    fit = matrix_pencil_fit(curve_of(0.95 ** DEPTHS))
    assert fit.model == MODEL_MP and "rank_collapse" in fit.flags
    assert len(fit.terms) == 1
    assert abs(fit.terms[0][0] - 0.95) < 1e-8


def test_pencil_two_real_exponentials():
    fit = matrix_pencil_fit(curve_of(0.5 * (-0.9) ** DEPTHS + 0.5 * 0.95 ** DEPTHS))
    roots = sorted(z.real for z, _ in fit.terms)
    assert np.allclose(roots, [-0.9, 0.95], atol=1e-8)


def test_pencil_constant_curve():
    fit = matrix_pencil_fit(curve_of(np.ones(41)))
    assert fit.terms == ((1.0, 1.0),)


def test_pencil_exact_up_to_order(rng):
    for _ in range(20):
        terms, y = random_pair_set(rng, n_pairs=2, min_gap=0.3)
        fit = matrix_pencil_fit(curve_of(y), order=4)
        assert max_root_error(terms, fit) < 1e-8


def test_pencil_too_short():
    with pytest.raises(FitError):
        matrix_pencil_fit(curve_of(np.ones(7)), order=4)


def test_six_term_round_trip_high_radius(rng):
    for _ in range(10):
        terms, y = random_pair_set(rng, r_range=(0.85, 0.99))
        curve = curve_of(y)
        fit = six_term_fit(curve, (1, 1, 1, 1), seed_fit=matrix_pencil_fit(curve, order=6))
        assert fit.model == MODEL_SIX
        assert max_root_error(terms, fit) < 1e-6


def test_six_term_constant_curve():
    fit = six_term_fit(curve_of(np.full(41, 0.97)), (1, 1, 1, 1))
    assert fit.terms == ((1.0, 0.97),)


def test_six_term_needs_twelve_points():
    with pytest.raises(FitError):
        six_term_fit(curve_of(0.9 ** np.arange(11)), (1, 1, 1, 1))


def _shot_noise_fit(seed):
    y = np.random.default_rng(seed).binomial(1000, np.full(41, 0.995)) / 1000
    return six_term_fit(DecayCurve(0, 0, DEPTHS, y, 1000), (1, 1, 1, 1))


@pytest.mark.xfail(reason="six terms overfit pure shot noise with a slow cancelling pair; "
                          "the largest-amplitude base lands 0.01-0.03 from 1", strict=False)
def test_six_term_near_one_from_shot_noise():
    fit = _shot_noise_fit(3)
    dominant = max(fit.terms, key=lambda t: abs(t[1]))
    assert abs(dominant[0] - 1) < 0.01


def test_six_term_shot_noise_bases_stay_near_one():
    for seed in range(5):
        fit = _shot_noise_fit(seed)
        assert fit.rms_residual < 2 / np.sqrt(1000)
        big = [z for z, f in fit.terms if abs(f) >= 0.01]
        assert big and all(abs(z - 1) < 0.05 for z in big)


def test_six_term_never_worse_than_start():
    curves = run_protocol(ProtocolConfig(toffoli(), calibrated_default_noise(0.89), 40, 1000, 99))
    frame = eigenbasis_frame(toffoli())
    for c in curves[::5]:
        ideal = frame.pair_eigenvalues(c.a, c.b)
        start = initialize_from_ideal(ideal, c)
        start_rms = np.sqrt(np.mean((model_eval(start, c.depths) - c.p_hat) ** 2))
        fit = six_term_fit(c, ideal)
        assert fit.rms_residual <= start_rms + 1e-12
        assert "no_improvement" not in fit.flags


def test_six_term_tracks_oscillating_toffoli_curve():
    curves = run_protocol(ProtocolConfig(toffoli(), calibrated_default_noise(0.89), 40, 1000, 5))
    frame = eigenbasis_frame(toffoli())
    curve = next(c for c in curves if (c.a, c.b) == (4, 7))
    fit = six_term_fit(curve, frame.pair_eigenvalues(4, 7))
    assert fit.rms_residual < 2 / np.sqrt(1000)


def test_six_term_beats_pencil_on_average():
    curves = run_protocol(ProtocolConfig(toffoli(), calibrated_default_noise(0.89), 40, 1000, 21))
    frame = eigenbasis_frame(toffoli())
    six = [six_term_fit(c, frame.pair_eigenvalues(c.a, c.b)).rms_residual for c in curves]
    mp = [matrix_pencil_fit(c).rms_residual for c in curves]
    assert np.mean(six) <= np.mean(mp)


def test_fits_are_conjugate_closed_and_bounded():
    curves = run_protocol(ProtocolConfig(toffoli(), calibrated_default_noise(0.89), 40, 1000, 8))
    frame = eigenbasis_frame(toffoli())
    for c in curves:
        six = six_term_fit(c, frame.pair_eigenvalues(c.a, c.b))
        for fit in (six, matrix_pencil_fit(c)):
            assert is_conjugate_closed(fit.terms)
            assert fit.evaluate(c.depths).dtype == float
        assert all(abs(z) <= 1 + 1e-3 + 1e-12 for z, _ in six.terms)


def test_initialize_constant_curve():
    assert initialize_from_ideal((1, 1, 1, 1), curve_of(np.ones(41))) == [(1.0, 1.0)]


def test_initialize_mixed_pair_phases():
    frame = eigenbasis_frame(toffoli())
    curve = curve_of(0.5 * 0.9 ** DEPTHS + 0.4 * (-0.9) ** DEPTHS + 0.05, a=4, b=7)
    start = initialize_from_ideal(frame.pair_eigenvalues(4, 7), curve, phase_offset=0.0)
    phases = {round(abs(np.angle(z)), 12) for z, _ in start}
    assert 0.0 in phases and round(np.pi, 12) in phases
    shifted = initialize_from_ideal(frame.pair_eigenvalues(4, 7), curve)
    folded = sorted(abs(np.angle(z)) for z, _ in shifted)
    assert min(folded) == pytest.approx(0.1) and max(folded) == pytest.approx(np.pi - 0.1)


def test_envelope_estimate():
    assert envelope_decay(DEPTHS.astype(float), 0.9 ** DEPTHS) == pytest.approx(0.9, abs=0.02)


def test_fit_json_round_trip():
    fit = matrix_pencil_fit(curve_of(0.5 * (-0.9) ** DEPTHS + 0.5 * 0.95 ** DEPTHS))
    again = ExponentialFit.from_json(json.loads(json.dumps(fit.to_json())))
    assert again == fit
    assert set(fit.to_json()) >= {"a", "b", "model", "terms", "rms_residual"}
