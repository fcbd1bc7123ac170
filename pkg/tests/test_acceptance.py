"""Acceptance checks, one test per criterion.

Each test prints a single ``PASS``/``FAIL`` line; run with ``pytest -s`` to see
them.  Criteria 5 to 7 share one batch of 20 simulated runs on master seeds that
were not used while tuning the fit initialisation.
"""

from __future__ import annotations

import itertools
import json
import time

import numpy as np
import pytest

from csbench.channel_core import (
    UnitaryGate,
    eigenbasis_frame,
    process_fidelity,
    random_unitary,
    toffoli,
)
from csbench.cli import main
from csbench.config import SCHEMA
from csbench.estimation import fei, nearest_rank_quantile
from csbench.fitting import matrix_pencil_fit, six_term_fit
from csbench.noise import calibrated_default_noise, compose, depolarizing, unitary_channel
from csbench.pipeline import simulate_and_process
from csbench.protocol import DecayCurve, ProtocolConfig, run_protocol

ACCEPTANCE_SEEDS = tuple(range(101, 121))
TARGET_FIDELITY = 0.890


def report(number: int, name: str, ok: bool, detail: str) -> None:
    print(f"\n[criterion {number}] {'PASS' if ok else 'FAIL'} {name}: {detail}")


def pair_sets(rng, count, n_pairs, depths, r_range=(0.5, 0.99), min_gap=0.3):
    """``count`` random conjugate-closed pair sets whose curves stay in [0, 1].

    Candidates are drawn in batches and rejected when the phases crowd together
    or the curve leaves the unit interval.
    """
    found = []
    while len(found) < count:
        n = 20000
        phases = np.sort(rng.uniform(0.05, np.pi - 0.05, (n, n_pairs)), axis=1)
        z = rng.uniform(*r_range, (n, n_pairs)) * np.exp(1j * phases)
        f = rng.uniform(0.02, 0.3, (n, n_pairs)) * np.exp(1j * rng.uniform(-np.pi, np.pi, (n, n_pairs)))
        y = 2 * (f[:, :, None] * z[:, :, None] ** depths).real.sum(axis=1)
        good = (y.min(axis=1) >= 0) & (y.max(axis=1) <= 1)
        if n_pairs > 1:
            good &= np.diff(phases, axis=1).min(axis=1) >= min_gap
        found.extend((np.concatenate([z[i], z[i].conj()]), y[i]) for i in np.flatnonzero(good))
    return found[:count]


def root_error(true_z, terms) -> float:
    fitted = np.array([z for z, _ in terms])
    return float(max(np.min(np.abs(fitted - z)) for z in true_z))


def test_criterion_1_oracle_equivalence():
    start = time.perf_counter()
    rng = np.random.default_rng(1)
    worst = 0.0
    for d in (2, 4, 8):
        for _ in range(10):
            u = UnitaryGate.from_matrix(random_unitary(d, rng))
            p = float(rng.uniform(0, 1))
            noisy = compose(depolarizing(p, d), unitary_channel(u))
            expected = (1 - p) + p / d**2
            worst = max(worst, abs(process_fidelity(u, noisy) - expected))
    elapsed = time.perf_counter() - start
    ok = worst < 1e-10 and elapsed < 1
    report(1, "oracle equivalence", ok, f"max deviation {worst:.2e}, {elapsed:.2f} s")
    assert ok


def test_criterion_2_toffoli_spectrum():
    start = time.perf_counter()
    k = eigenbasis_frame(toffoli()).k_u
    plus, minus = int(np.sum(k == 1)), int(np.sum(k == -1))
    elapsed = time.perf_counter() - start
    ok = plus == 50 and minus == 14 and elapsed < 1
    report(2, "Toffoli spectrum", ok, f"+1 x{plus}, -1 x{minus}, {elapsed:.2f} s")
    assert ok


def test_criterion_3_noiseless_protocol():
    start = time.perf_counter()
    gate = toffoli()
    curves = run_protocol(ProtocolConfig(gate, None, 40, 1000, 0, exact=True))
    lam = gate.eigenphases
    L = np.arange(41)
    worst = 0.0
    for c in curves:
        analytic = np.abs((lam[c.a] ** L + lam[c.b] ** L) / 2) ** 2
        shape = np.ones(41) if np.isclose(lam[c.a], lam[c.b]) else (L % 2 == 0).astype(float)
        worst = max(worst, np.max(np.abs(c.p_hat - analytic)), np.max(np.abs(c.p_hat - shape)))
    elapsed = time.perf_counter() - start
    ok = len(curves) == 36 and worst < 1e-9 and elapsed < 5
    report(3, "noiseless protocol", ok, f"{len(curves)} curves, max deviation {worst:.2e}, {elapsed:.2f} s")
    assert ok


def test_criterion_4_fit_round_trips():
    start = time.perf_counter()
    rng = np.random.default_rng(4)
    depths = np.arange(41)
    six_worst = 0.0
    for z, y in pair_sets(rng, 100, 3, depths):
        curve = DecayCurve(0, 1, depths, y, 1000, exact=True)
        fit = six_term_fit(curve, (1, 1, 1, 1), seed_fit=matrix_pencil_fit(curve, order=6))
        six_worst = max(six_worst, root_error(z, fit.terms))
    mp_worst = 0.0
    for n_pairs in (1, 2):
        for z, y in pair_sets(rng, 50, n_pairs, depths):
            curve = DecayCurve(0, 1, depths, y, 1000, exact=True)
            mp_worst = max(mp_worst, root_error(z, matrix_pencil_fit(curve, order=4).terms))
    # real bases, including negative (alternating) ones, with weights keeping y in [0, 1]
    real_sets = (((0.95,), (0.9,)), ((-0.9, 0.95), (0.3, 0.6)), ((0.99, 0.7, -0.8), (0.5, 0.3, 0.15)),
                 ((0.97, 0.9, 0.6, -0.85), (0.4, 0.3, 0.2, 0.1)))
    for bases, weights in real_sets:
        y = sum(w * np.power(b, depths.astype(float)) for b, w in zip(bases, weights))
        curve = DecayCurve(0, 1, depths, y, 1000, exact=True)
        mp_worst = max(mp_worst, root_error(np.array(bases), matrix_pencil_fit(curve, order=4).terms))
    elapsed = time.perf_counter() - start
    ok = six_worst < 1e-5 and mp_worst < 1e-8 and elapsed < 30
    report(4, "fit round trips", ok,
           f"six-term max |dz| {six_worst:.2e}, pencil max |dz| {mp_worst:.2e}, {elapsed:.2f} s")
    assert ok


@pytest.fixture(scope="module")
def full_scale_runs():
    start = time.perf_counter()
    gate = toffoli()
    noise = calibrated_default_noise(TARGET_FIDELITY)
    rows = []
    for seed in ACCEPTANCE_SEEDS:
        res = simulate_and_process(ProtocolConfig(gate, noise, 40, 1000, seed), baseline=True).report
        rows.append((res.fei_low, res.fei_high, res.midpoint, res.degenerate_estimate,
                     res.baseline_estimate, res.oracle_fidelity))
        print(f"\n  seed {seed}: FEI [{res.fei_low:.4f}, {res.fei_high:.4f}] mid {res.midpoint:.4f} "
              f"deg {res.degenerate_estimate:.4f} MP {res.baseline_estimate:.4f}", end="")
    elapsed = time.perf_counter() - start
    return np.array(rows), elapsed


def test_criterion_5_end_to_end(full_scale_runs):
    rows, elapsed = full_scale_runs
    low, high, mid, _, _, oracle = rows.T
    target = float(oracle[0])
    contains = int(np.sum((low <= target) & (target <= high)))
    close = int(np.sum(np.abs(mid - target) <= 0.015))
    width = float(np.median(high - low))
    parts = {
        "a": contains >= 18,
        "b": close >= 18,
        "c": width <= 0.05,
    }
    calibrated = 0.885 <= target <= 0.895
    ok = calibrated and all(parts.values()) and elapsed < 600
    report(5, "end-to-end reproduction", ok,
           f"F*={target:.6f}; (a) contains {contains}/20 {'ok' if parts['a'] else 'FAIL'}; "
           f"(b) |mid-F*|<=0.015 {close}/20 {'ok' if parts['b'] else 'FAIL'}; "
           f"(c) median width {width:.4f} {'ok' if parts['c'] else 'FAIL'}; {elapsed:.0f} s")
    assert ok


def test_criterion_6_baseline_inferiority(full_scale_runs):
    rows, _ = full_scale_runs
    _, _, mid, _, baseline, oracle = rows.T
    worse = int(np.sum(np.abs(baseline - oracle) > np.abs(mid - oracle)))
    ok = worse >= 15
    report(6, "baseline inferiority", ok,
           f"pencil estimate further from F* in {worse}/20 runs (median {np.median(baseline):.4f})")
    assert ok


def test_criterion_7_degenerate_estimate_in_interval(full_scale_runs):
    rows, _ = full_scale_runs
    low, high, _, degenerate, _, _ = rows.T
    inside = int(np.sum((low <= degenerate) & (degenerate <= high)))
    ok = inside >= 18
    report(7, "degenerate estimate inside interval", ok, f"{inside}/20 runs")
    assert ok


def test_criterion_8_bootstrap_oracle():
    start = time.perf_counter()
    pool = np.array([1.0, 0.8])
    means = np.sort([np.mean(c) for c in itertools.product(pool, repeat=4)])
    expected = [nearest_rank_quantile(means, q) for q in (0.025, 0.975)]
    res = fei(pool, 4, 100_000, seed=8)
    elapsed = time.perf_counter() - start
    dev = max(abs(res.low - expected[0]), abs(res.high - expected[1]))
    ok = dev <= 0.01 and elapsed < 1
    report(8, "bootstrap oracle", ok,
           f"FEI [{res.low:.4f}, {res.high:.4f}] vs enumeration [{expected[0]:.4f}, {expected[1]:.4f}], "
           f"{elapsed:.2f} s")
    assert ok


def test_criterion_9_determinism(tmp_path):
    start = time.perf_counter()
    config = {"schema": SCHEMA, "gate": "toffoli", "noise": f"calibrated:{TARGET_FIDELITY}",
              "shots": 1000, "l_max": 40, "seed": 7}
    (tmp_path / "config.json").write_text(json.dumps(config))
    outputs = []
    for run in ("first", "second"):
        out = tmp_path / run
        assert main(["simulate", "--config", str(tmp_path / "config.json"), "--out", str(out)]) == 0
        assert main(["process", "--curves", str(out / "curves.json"), "--out", str(out)]) == 0
        outputs.append((out / "report.json").read_bytes())
    elapsed = time.perf_counter() - start
    ok = outputs[0] == outputs[1] and elapsed < 120
    report(9, "determinism", ok, f"report.json identical: {outputs[0] == outputs[1]}, {elapsed:.1f} s")
    assert ok
