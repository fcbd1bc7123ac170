"""Sums of damped complex exponentials fitted to survival curves.

Two fitters are provided:

* :func:`matrix_pencil_fit` is the subspace baseline (Hankel SVD plus a shifted
  pencil eigenproblem) used with four terms.
* :func:`six_term_fit` minimises the squared residual over three conjugate
  pairs with a projected Levenberg-Marquardt loop and an analytic Jacobian.

Internally a model is a set of "slots".  A slot (r, phi, Re f, Im f) contributes
2 Re(f z^L) with z = r e^{i phi}, i.e. the conjugate pair (z, f), (z*, f*).
Returned fits expand slots into explicit conjugate-closed term lists.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .protocol import DecayCurve

CLOSURE_TOL = 1e-8
IMAG_TOL = 1e-9
RADIUS_MAX = 1.0 + 1e-3
REAL_SLOT_TOL = 1e-9
RANK_TOL = 1e-10
MODEL_MP = "four_term_mp"
MODEL_SIX = "six_term_opt"

DEFAULT_PHASE_OFFSET = 0.1
DEFAULT_PAD_STEP = 0.2


class FitError(ValueError):
    """Raised when a curve cannot be fitted."""


# ---------------------------------------------------------------------------
# Terms and evaluation
# ---------------------------------------------------------------------------

def _as_terms(terms) -> list:
    return [(complex(z), complex(f)) for z, f in terms]


def is_conjugate_closed(terms, tol: float = CLOSURE_TOL) -> bool:
    """True if the multiset of terms is invariant under (z, f) -> (z*, f*)."""
    terms = _as_terms(terms)
    unmatched = list(range(len(terms)))
    while unmatched:
        i = unmatched.pop(0)
        z, f = terms[i]
        if abs(z.imag) <= tol and abs(f.imag) <= tol:
            continue
        partner = None
        for j in unmatched:
            zj, fj = terms[j]
            if abs(zj - z.conjugate()) <= tol and abs(fj - f.conjugate()) <= tol:
                partner = j
                break
        if partner is None:
            return False
        unmatched.remove(partner)
    return True


def model_eval(terms, L):
    """Evaluate sum_i f_i z_i^L for integer depth(s) L.

    Returns a float for scalar ``L`` and an array otherwise.
    """
    terms = _as_terms(terms)
    if not is_conjugate_closed(terms):
        raise FitError("terms are not closed under complex conjugation")
    depths = np.asarray(L)
    if terms:
        z = np.array([t[0] for t in terms])
        f = np.array([t[1] for t in terms])
        value = (f[:, None] * z[:, None] ** depths.ravel()[None, :]).sum(axis=0)
    else:
        value = np.zeros(depths.size, dtype=complex)
    if np.any(np.abs(value.imag) > IMAG_TOL):
        raise FitError(f"model value has imaginary residue {np.max(np.abs(value.imag)):.3e}")
    out = value.real.reshape(depths.shape)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class ExponentialFit:
    a: int
    b: int
    model: str
    terms: tuple
    rms_residual: float
    converged: bool = True
    flags: tuple = ()

    def __post_init__(self):
        terms = tuple(_as_terms(self.terms))
        if not is_conjugate_closed(terms):
            raise FitError("fit terms are not closed under complex conjugation")
        object.__setattr__(self, "terms", terms)
        object.__setattr__(self, "flags", tuple(self.flags))

    @property
    def pair(self) -> tuple:
        return (self.a, self.b)

    def evaluate(self, L):
        return model_eval(self.terms, L)

    def to_json(self) -> dict:
        return {
            "a": int(self.a),
            "b": int(self.b),
            "model": self.model,
            "terms": [{"z": [z.real, z.imag], "f": [f.real, f.imag]} for z, f in self.terms],
            "rms_residual": float(self.rms_residual),
            "converged": bool(self.converged),
            "flags": list(self.flags),
        }

    @classmethod
    def from_json(cls, data: dict) -> "ExponentialFit":
        terms = [(complex(*t["z"]), complex(*t["f"])) for t in data["terms"]]
        return cls(int(data["a"]), int(data["b"]), data["model"], tuple(terms),
                   float(data["rms_residual"]), bool(data.get("converged", True)),
                   tuple(data.get("flags", ())))


# ---------------------------------------------------------------------------
# Slot parametrisation
# ---------------------------------------------------------------------------

def _slots_to_terms(slots: np.ndarray) -> list:
    """Expand slots into conjugate-closed terms; near-real slots become one real term."""
    terms = []
    for r, phi, fr, fi in np.asarray(slots).reshape(-1, 4):
        z = r * np.exp(1j * phi)
        f = complex(fr, fi)
        if abs(z.imag) <= REAL_SLOT_TOL * max(1.0, abs(z)):
            terms.append((complex(z.real), complex(2 * f.real)))
        else:
            terms += [(z, f), (z.conjugate(), f.conjugate())]
    return terms


def _terms_to_slots(terms) -> np.ndarray:
    """Collapse a conjugate-closed term list into slots (upper half-plane plus reals)."""
    slots = []
    for z, f in _as_terms(terms):
        if z.imag > CLOSURE_TOL:
            slots.append((abs(z), np.angle(z), f.real, f.imag))
        elif abs(z.imag) <= CLOSURE_TOL:
            slots.append((abs(z.real), 0.0 if z.real >= 0 else np.pi, f.real / 2, 0.0))
    return np.array(slots, dtype=float).reshape(-1, 4)


def _slot_basis(z: np.ndarray, L: np.ndarray) -> np.ndarray:
    zl = z[None, :] ** L[:, None]
    return np.concatenate([2 * zl.real, -2 * zl.imag], axis=1)


def _amplitudes_at_fixed_z(z: np.ndarray, L: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Linear least squares for slot amplitudes with the bases held fixed."""
    coef = np.linalg.lstsq(_slot_basis(z, L), y, rcond=None)[0]
    k = len(z)
    return coef[:k] + 1j * coef[k:]


def _residual(params: np.ndarray, L: np.ndarray, y: np.ndarray, w: np.ndarray) -> np.ndarray:
    q = params.reshape(-1, 4)
    zl = (q[:, :1] ** L[None, :]) * np.exp(1j * q[:, 1:2] * L[None, :])
    f = q[:, 2] + 1j * q[:, 3]
    return w * (2 * (f[:, None] * zl).real.sum(axis=0) - y)


def _residual_and_jacobian(params: np.ndarray, L: np.ndarray, y: np.ndarray, w: np.ndarray):
    q = params.reshape(-1, 4)
    r, phi = q[:, 0], q[:, 1]
    f = q[:, 2] + 1j * q[:, 3]
    rot = np.exp(1j * phi[:, None] * L[None, :])
    zl = (r[:, None] ** L[None, :]) * rot
    fz = f[:, None] * zl
    res = w * (2 * fz.real.sum(axis=0) - y)
    # d/dr (r^L) = L r^(L-1), written without dividing by r so r = 0 is safe
    dpow = np.where(L[None, :] > 0, L[None, :] * r[:, None] ** np.maximum(L - 1, 0)[None, :], 0.0)
    jac = np.empty((q.shape[0], 4, L.size))
    jac[:, 0] = 2 * (f[:, None] * dpow * rot).real
    jac[:, 1] = -2 * L[None, :] * fz.imag
    jac[:, 2] = 2 * zl.real
    jac[:, 3] = -2 * zl.imag
    jac *= w[None, None, :]
    return res, jac.reshape(-1, L.size).T


def _project(params: np.ndarray, r_max: float) -> np.ndarray:
    q = params.reshape(-1, 4)
    q[:, 0] = np.clip(q[:, 0], 0.0, r_max)
    return params


@dataclass
class _LMResult:
    params: np.ndarray
    cost: float
    status: str
    iterations: int


def levenberg_marquardt(params: np.ndarray, L: np.ndarray, y: np.ndarray, w: np.ndarray | None = None,
                        r_max: float = RADIUS_MAX, max_iter: int = 500, gtol: float = 1e-10) -> _LMResult:
    """Projected Levenberg-Marquardt on slot parameters.

    Steps solve (J^T J + lam diag(J^T J)) dx = -J^T r; a step is accepted only
    if it lowers the cost, so the cost is monotone.  Radii are clipped to
    [0, r_max] after every step.  Status is "gradient" (gradient norm below
    ``gtol``), "stalled" (no decreasing step found even under heavy damping)
    or "max_iterations".
    """
    L = np.asarray(L, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.ones_like(y) if w is None else np.asarray(w, dtype=float)
    p = _project(np.array(params, dtype=float), r_max)
    lam = 1e-3
    res, jac = _residual_and_jacobian(p, L, y, w)
    cost = float(res @ res)
    for it in range(max_iter):
        grad = jac.T @ res
        if np.linalg.norm(grad) < gtol:
            return _LMResult(p, cost, "gradient", it)
        hess = jac.T @ jac
        damp = np.diag(np.diag(hess) + 1e-12)
        while True:
            try:
                step = np.linalg.solve(hess + lam * damp, -grad)
            except np.linalg.LinAlgError:
                step = np.linalg.lstsq(hess + lam * damp, -grad, rcond=None)[0]
            trial = _project(p + step, r_max)
            res_t = _residual(trial, L, y, w)
            cost_t = float(res_t @ res_t)
            if cost_t < cost:
                p, cost = trial, cost_t
                res, jac = _residual_and_jacobian(p, L, y, w)
                lam = max(lam / 3, 1e-12)
                break
            lam *= 4
            if lam > 1e12:
                return _LMResult(p, cost, "stalled", it)
    return _LMResult(p, cost, "max_iterations", max_iter)


# ---------------------------------------------------------------------------
# Helpers on curves
# ---------------------------------------------------------------------------

def _curve_arrays(curve: DecayCurve) -> tuple:
    if not curve.is_uniform():
        raise FitError("fitting needs a contiguous depth grid")
    return curve.depths.astype(float), curve.p_hat.astype(float)


def _rms(terms, L: np.ndarray, y: np.ndarray) -> float:
    return float(np.sqrt(np.mean((model_eval(terms, L.astype(int)) - y) ** 2)))


def _constant_fit(curve: DecayCurve, model: str) -> ExponentialFit:
    c = float(curve.p_hat[0])
    return ExponentialFit(curve.a, curve.b, model, ((1.0, c),), 0.0, True, ("constant_curve",))


def _is_constant(y: np.ndarray) -> bool:
    return bool(np.ptp(y) == 0.0)


def envelope_decay(L: np.ndarray, y: np.ndarray, floor: float = 1e-3) -> float:
    """Per-step decay of |y| from a log-linear regression, capped at 1."""
    mag = np.abs(y)
    ok = mag > floor
    if np.count_nonzero(ok) < 2:
        return 1.0
    slope = np.polyfit(L[ok], np.log(mag[ok]), 1)[0]
    return float(min(np.exp(slope), 1.0))


def _ideal_phases(ideal_pair_eigenvalues) -> list:
    """Distinct ideal phases folded to [0, pi], since slots carry conjugate pairs."""
    phases = []
    for lam in np.asarray(ideal_pair_eigenvalues, dtype=complex).ravel():
        ph = abs(float(np.angle(lam)))
        if not any(abs(ph - q) <= 1e-9 for q in phases):
            phases.append(ph)
    return sorted(phases)


# ---------------------------------------------------------------------------
# Fitters
# ---------------------------------------------------------------------------

def _pencil_roots(y: np.ndarray, order: int) -> tuple:
    n = len(y)
    p = n // 2
    hankel = np.array([y[i:i + p + 1] for i in range(n - p)])
    _, s, vt = np.linalg.svd(hankel)
    rank = int(np.count_nonzero(s > RANK_TOL * s[0])) if s[0] > 0 else 0
    k = min(order, rank)
    if k == 0:
        return np.zeros(0, dtype=complex), rank
    v = vt[:k].conj().T
    roots = np.linalg.eigvals(np.linalg.pinv(v[:-1]) @ v[1:])
    return roots, rank


def _roots_to_slot_bases(roots: np.ndarray) -> np.ndarray:
    """Upper half-plane representatives plus real roots; the lower half is implied."""
    keep = []
    for z in roots:
        if abs(z.imag) <= REAL_SLOT_TOL * max(1.0, abs(z)):
            keep.append(complex(z.real))
        elif z.imag > 0:
            keep.append(complex(z))
    return np.array(keep, dtype=complex)


def _fit_real_and_pair_amplitudes(bases: np.ndarray, L: np.ndarray, y: np.ndarray) -> list:
    """Least-squares amplitudes with conjugate closure built in."""
    cols, layout = [], []
    for z in bases:
        zl = z ** L
        if z.imag == 0:
            cols.append(zl.real)
            layout.append(("real", z))
        else:
            cols += [2 * zl.real, -2 * zl.imag]
            layout.append(("pair", z))
    coef = np.linalg.lstsq(np.column_stack(cols), y, rcond=None)[0]
    terms, i = [], 0
    for kind, z in layout:
        if kind == "real":
            terms.append((z, complex(coef[i])))
            i += 1
        else:
            f = complex(coef[i], coef[i + 1])
            terms += [(z, f), (z.conjugate(), f.conjugate())]
            i += 2
    return terms


def matrix_pencil_fit(curve: DecayCurve, order: int = 4) -> ExponentialFit:
    """Matrix pencil estimate with at most ``order`` exponentials.

    The pencil parameter is floor(len/2).  Singular values below 1e-10 of the
    largest are treated as noise, so data with fewer exponentials than
    ``order`` returns fewer terms with a "rank_collapse" flag.
    """
    if order < 1:
        raise FitError("order must be positive")
    L, y = _curve_arrays(curve)
    if len(y) < 2 * order:
        raise FitError(f"curve of length {len(y)} too short for order {order}")
    if _is_constant(y):
        return _constant_fit(curve, MODEL_MP)
    roots, rank = _pencil_roots(y, order)
    flags = ("rank_collapse",) if rank < order else ()
    if len(roots) == 0:
        return ExponentialFit(curve.a, curve.b, MODEL_MP, (), _rms([], L, y), False, flags)
    terms = _fit_real_and_pair_amplitudes(_roots_to_slot_bases(roots), L, y)
    return ExponentialFit(curve.a, curve.b, MODEL_MP, tuple(terms), _rms(terms, L, y), True, flags)


def _initial_slots(ideal_pair_eigenvalues, L: np.ndarray, y: np.ndarray, n_slots: int,
                   phase_offset: float, pad_step: float) -> np.ndarray:
    scale = envelope_decay(L, y)
    phases = _ideal_phases(ideal_pair_eigenvalues) or [0.0]
    angles = [ph + phase_offset for ph in phases][:n_slots]
    while len(angles) < n_slots:
        angles.append(phases[0] + pad_step * len(angles))
    z = scale * np.exp(1j * np.array(angles))
    f = _amplitudes_at_fixed_z(z, L, y)
    return np.column_stack([np.abs(z), np.angle(z), f.real, f.imag])


def initialize_from_ideal(ideal_pair_eigenvalues, curve: DecayCurve,
                          phase_offset: float = DEFAULT_PHASE_OFFSET,
                          pad_step: float = DEFAULT_PAD_STEP, n_slots: int = 3) -> list:
    """Starting terms for :func:`six_term_fit`.

    Each distinct ideal phase of the pair gives one conjugate pair with radius
    equal to the envelope decay of the curve.  Phases are rotated by
    ``phase_offset`` so that the optimiser does not start on the real axis,
    where the phase gradient vanishes.  Remaining slots sit at the first
    (trivial) ideal phase, stepped by ``pad_step``.  Amplitudes come from linear
    least squares at the fixed bases.  A constant curve c gives the single
    term (1, c).
    """
    L, y = _curve_arrays(curve)
    if _is_constant(y):
        return [(1.0 + 0j, complex(y[0]))]
    slots = _initial_slots(ideal_pair_eigenvalues, L, y, n_slots, phase_offset, pad_step)
    return _slots_to_terms(slots.ravel())


def _binomial_weights(y: np.ndarray, shots: int) -> np.ndarray:
    var = np.clip(y * (1 - y), 1.0 / shots, None) / shots
    return 1.0 / np.sqrt(var)


def _pad_slots(slots: np.ndarray, n_slots: int) -> np.ndarray:
    """Keep the ``n_slots`` largest-amplitude slots, padding with zero-amplitude ones."""
    slots = slots[np.argsort(-np.abs(slots[:, 2] + 1j * slots[:, 3]), kind="stable")][:n_slots]
    while len(slots) < n_slots:
        slots = np.vstack([slots, [0.5, 0.3 + 0.5 * len(slots), 0.0, 0.0]])
    return slots


def _exact_low_rank_terms(curve: DecayCurve, n_terms: int = 6, tol: float = 1e-12):
    """Terms reproducing the curve exactly when it holds fewer than ``n_terms`` exponentials.

    Noiseless data of low rank is a zero-residual minimiser of the six-term
    problem, but the slot parametrisation approaches real bases only slowly,
    so the pencil solution is used directly.  Returns None otherwise.
    """
    fit = matrix_pencil_fit(curve, order=n_terms)
    if "rank_collapse" not in fit.flags or fit.rms_residual > tol:
        return None
    if any(abs(z) > RADIUS_MAX for z, _ in fit.terms):
        return None
    return list(fit.terms)


def six_term_fit(curve: DecayCurve, ideal_pair_eigenvalues, seed_fit: ExponentialFit | None = None,
                 weighting: str = "none", phase_offset: float = DEFAULT_PHASE_OFFSET,
                 pad_step: float = DEFAULT_PAD_STEP, max_iter: int = 500,
                 gtol: float = 1e-10) -> ExponentialFit:
    """Three conjugate pairs fitted by projected Levenberg-Marquardt.

    The optimiser starts from :func:`initialize_from_ideal`, or from the terms
    of ``seed_fit`` when one is given (for example a matrix pencil fit of the
    same curve).  Radii are bounded by 1 + 1e-3.  Slots that end on the real
    axis are returned as single real terms.
    """
    L, y = _curve_arrays(curve)
    if len(y) < 12:
        raise FitError(f"six-term fit needs at least 12 points, got {len(y)}")
    if _is_constant(y):
        return _constant_fit(curve, MODEL_SIX)
    if weighting == "none":
        w = np.ones_like(y)
    elif weighting == "binomial":
        w = _binomial_weights(y, curve.shots)
    else:
        raise FitError(f"unknown weighting {weighting!r}")

    if seed_fit is None:
        exact = _exact_low_rank_terms(curve)
        if exact is not None:
            return ExponentialFit(curve.a, curve.b, MODEL_SIX, tuple(exact), _rms(exact, L, y),
                                  True, ("exact_low_rank",))

    if seed_fit is not None and seed_fit.terms:
        start = _pad_slots(_terms_to_slots(seed_fit.terms), 3)
    else:
        start = _initial_slots(ideal_pair_eigenvalues, L, y, 3, phase_offset, pad_step)
    start = _project(start.ravel(), RADIUS_MAX)
    res0 = _residual(start, L, y, w)
    start_cost = float(res0 @ res0)
    best = levenberg_marquardt(start, L, y, w, max_iter=max_iter, gtol=gtol)

    flags = []
    if best.status == "max_iterations":
        flags.append("not_converged")
    elif best.status == "stalled":
        flags.append("stalled")
    terms = _slots_to_terms(best.params)
    rms = _rms(terms, L, y)
    if best.cost > start_cost:
        flags.append("no_improvement")
    return ExponentialFit(curve.a, curve.b, MODEL_SIX, tuple(terms), rms,
                          best.status != "max_iterations", tuple(flags))


def fits_to_json(fits: Sequence[ExponentialFit]) -> list:
    return [f.to_json() for f in fits]
