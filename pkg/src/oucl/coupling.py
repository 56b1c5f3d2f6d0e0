"""Mineka coupling of the jump-weighted random walks and its tail bounds.

Given jump times ``tau_1 < tau_2 < ...`` the time-t law of the compound
Poisson part is that of ``sum_i e^{tau_i A} B U_i``.  Pairing each ``U_i``
with ``U_i' = U_i + dU_i``, ``dU_i in {-a_i, 0, a_i}`` and
``a_i = Bbar e^{(t - tau_i)A}(x - y)``, makes the rotated first-coordinate
difference of the two walks a lazy symmetric walk on ``g Z`` with
``g = |e^{tA}(x - y)|``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .errors import PreconditionError, RepresentationError, SpectralGateError
from .measures import (Atomic, DensityOnIntervals, IntervalAutocorrelation, LevyMeasure,
                       overlap_certificate, overlap_mass, shift_measure)
from .rng import as_generator
from .sampler import _jump_kernel
from .spectral import matrix_exponential, operator_norm, spectral_report
from .symbol import OUModel

MASS_TOL = 1e-9


@dataclass(frozen=True)
class RotationOp:
    """Orthogonal ``R`` with ``R a = |a| e_1`` (Householder, det +1 for n >= 2)."""

    target: np.ndarray
    matrix: np.ndarray

    def __call__(self, v) -> np.ndarray:
        return np.asarray(v, dtype=float) @ self.matrix.T


def rotation_for(a) -> RotationOp:
    a = np.atleast_1d(np.asarray(a, dtype=float))
    n = a.size
    norm = float(np.linalg.norm(a))
    if norm == 0:
        raise ValueError("rotation target must be nonzero")
    if n == 1:
        return RotationOp(a, np.array([[math.copysign(1.0, a[0])]]))
    e1 = np.zeros(n)
    e1[0] = 1.0
    v = a / norm - e1
    if np.linalg.norm(v) < 1e-15:
        R = np.eye(n)
    else:
        H = np.eye(n) - 2.0 * np.outer(v, v) / (v @ v)
        # a second reflection in e_2 fixes e_1 and restores det = +1
        R = H.copy()
        R[1] *= -1.0
    return RotationOp(a, R)


@dataclass
class MinekaDraw:
    u: np.ndarray
    delta_u: np.ndarray


def _point_weight(nu: LevyMeasure, z) -> np.ndarray:
    """Density (or atom mass) of ``nu`` at each row of ``z``."""
    if isinstance(nu, Atomic):
        return nu.mass_at(z)
    if isinstance(nu, DensityOnIntervals):
        return nu.pdf(np.asarray(z, dtype=float).reshape(-1))
    raise RepresentationError(f"Mineka thinning needs atomic or interval-density measures, got {type(nu).__name__}")


def _check_probability(nu_bar):
    if abs(nu_bar.total_mass - 1.0) > MASS_TOL:
        raise PreconditionError(f"expected a probability measure, total mass is {nu_bar.total_mass:.12g}")


def _thin(nu_bar, U, shifts, gen) -> np.ndarray:
    """Draw ``dU`` given ``U ~ nu_bar`` so that ``(U, dU)`` follows the Mineka table.

    With density ``f``: ``P(dU = a | U = u) = min(f(u), f(u + a)) / (2 f(u))``
    and ``P(dU = -a | U = u) = min(f(u), f(u - a)) / (2 f(u))``.
    """
    f0 = _point_weight(nu_bar, U)
    fp = _point_weight(nu_bar, U + shifts)
    fm = _point_weight(nu_bar, U - shifts)
    with np.errstate(invalid="ignore", divide="ignore"):
        qp = np.where(f0 > 0, 0.5 * np.minimum(f0, fp) / f0, 0.0)
        qm = np.where(f0 > 0, 0.5 * np.minimum(f0, fm) / f0, 0.0)
    qp = np.nan_to_num(qp, nan=0.5)
    qm = np.nan_to_num(qm, nan=0.5)
    V = gen.random(len(U))
    sign = np.where(V < qp, 1, np.where(V < qp + qm, -1, 0))
    zero = ~np.any(shifts != 0, axis=1)
    sign[zero] = 0
    return sign


def mineka_pair(nu_bar: LevyMeasure, a, rng, size: Optional[int] = None) -> MinekaDraw:
    """Sample ``(U, dU)``; with ``size=None`` a single pair, else ``size`` rows."""
    _check_probability(nu_bar)
    gen = as_generator(rng)
    a = np.atleast_1d(np.asarray(a, dtype=float))
    m = 1 if size is None else int(size)
    U = nu_bar.sample(m, gen).reshape(m, -1)
    shifts = np.tile(a, (m, 1))
    sign = _thin(nu_bar, U, shifts, gen)
    dU = sign[:, None] * shifts
    if size is None:
        return MinekaDraw(U[0], dU[0])
    return MinekaDraw(U, dU)


def stay_probability(nu_bar: LevyMeasure, a) -> float:
    """``p = 1 - (nu_bar ∧ delta_{-a} * nu_bar)(R^d)``."""
    a = np.atleast_1d(np.asarray(a, dtype=float))
    if not np.any(a):
        return 0.0
    return 1.0 - overlap_mass(nu_bar, shift_measure(nu_bar, -a))


@dataclass
class CouplingRun:
    t: float
    jump_times: np.ndarray
    a_list: np.ndarray
    walk: np.ndarray
    walk_mirror: np.ndarray
    gap_steps: np.ndarray
    stay_probs: np.ndarray
    coupling_step: Optional[int]
    gap: float

    @property
    def jump_count(self) -> int:
        return len(self.jump_times)

    @property
    def coupled(self) -> bool:
        return self.coupling_step is not None


def _gate(model: OUModel):
    if model.B_bar is None:
        raise PreconditionError("the coupling needs rank(B) = n")
    rep = spectral_report(model.A)
    if not rep.couplable:
        raise SpectralGateError(
            f"drift matrix has stability class {rep.stability}; the coupling needs non-positive real parts "
            "and semisimple imaginary eigenvalues", hypothesis="spectral")
    return rep


def _normalized_truncation(model, epsilon):
    nu = model.nu
    if nu is None:
        raise PreconditionError("the coupling needs a jump part")
    nu_eps = nu.truncate(epsilon)
    C = nu_eps.total_mass
    if not C > 0:
        raise PreconditionError("truncated Levy measure has zero mass")
    return nu_eps.normalized(), C


def run_coupled_walks(model: OUModel, epsilon: float, t: float, x, y, rng) -> CouplingRun:
    """One realisation of the coupled pair ``(S_k, S_k')`` up to the last jump before ``t``.

    After the difference walk reaches ``+g`` the two chains share their
    increments, so ``walk - walk_mirror`` stays at ``g``.
    """
    rep = _gate(model)
    nu_bar, C = _normalized_truncation(model, epsilon)
    gen = as_generator(rng)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    diff = x - y
    g_vec = matrix_exponential(model.A, t) @ diff
    g = float(np.linalg.norm(g_vec))
    R = rotation_for(g_vec).matrix if g > 0 else np.eye(model.n)
    a_cap = rep.c_a * operator_norm(model.B_bar) * float(np.linalg.norm(diff))

    times = []
    s = gen.exponential(1.0 / C)
    while s <= t:
        times.append(s)
        s += gen.exponential(1.0 / C)
    times = np.array(times)
    K = len(times)
    d = model.d

    a_list = np.zeros((K, d))
    p = np.zeros(K)
    U = nu_bar.sample(K, gen).reshape(K, d) if K else np.zeros((0, d))
    dU = np.zeros((K, d))
    steps = np.zeros(K, dtype=np.int64)
    level = 0
    coupled = 0 if g == 0 else None
    for i in range(K):
        a = model.B_bar @ (matrix_exponential(model.A, t - times[i]) @ diff)
        if np.linalg.norm(a) > a_cap * (1 + 1e-9) + 1e-300:
            raise AssertionError(f"|a_{i + 1}| exceeds C_A |Bbar| |x - y|")
        a_list[i] = a
        p[i] = stay_probability(nu_bar, a)
        if coupled is None:
            sign = int(_thin(nu_bar, U[i:i + 1], a[None, :], gen)[0])
            dU[i] = sign * a
            # S - S' moves by -R e^{tau A} B dU = -sign * g e_1
            steps[i] = -sign
            level -= sign
            if level == 1:
                coupled = i + 1
    E = _jump_kernel(model.A, times, U @ model.B.T) if K else np.zeros((0, model.n))
    Ep = _jump_kernel(model.A, times, (U + dU) @ model.B.T) if K else np.zeros((0, model.n))
    walk = np.cumsum((E @ R.T)[:, 0])
    mirror = np.cumsum((Ep @ R.T)[:, 0])
    return CouplingRun(float(t), times, a_list, walk, mirror, steps, p, coupled, g)


@dataclass
class CouplingBatch:
    coupling_steps: np.ndarray  # -1 when not coupled before the horizon
    jump_counts: np.ndarray
    gap: float
    meta: dict = field(default_factory=dict)

    def tail(self, ks: Sequence[int]):
        """``P(T^S > k)`` among runs whose status at step k is known.

        A run that has not coupled and has fewer than ``k`` jumps is censored
        at ``k``.  Returns ``(probabilities, known_counts)``.
        """
        T = self.coupling_steps
        N = self.jump_counts
        probs, known = [], []
        for k in ks:
            coupled_by_k = (T >= 0) & (T <= k)
            alive = ((T < 0) | (T > k)) & (N >= k)
            n_known = int(coupled_by_k.sum() + alive.sum())
            known.append(n_known)
            probs.append(alive.sum() / n_known if n_known else float("nan"))
        return np.array(probs), np.array(known)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["run_id", "jump_count", "coupling_step", "gap"])
            for i, (n, T) in enumerate(zip(self.jump_counts, self.coupling_steps)):
                w.writerow([i, int(n), int(T), repr(self.gap)])


def _arrival_times(gen, C, t, runs):
    k = int(math.ceil(C * t + 10 * math.sqrt(C * t + 1) + 10))
    gaps = gen.exponential(1.0 / C, (runs, k))
    arr = np.cumsum(gaps, axis=1)
    while np.any(arr[:, -1] <= t):
        more = np.cumsum(gen.exponential(1.0 / C, (runs, k)), axis=1) + arr[:, -1:]
        arr = np.concatenate([arr, more], axis=1)
    counts = (arr <= t).sum(axis=1)
    return arr[:, :max(int(counts.max()), 1)], counts


def run_coupling_batch(model: OUModel, epsilon: float, t: float, x, y, runs: int, rng) -> CouplingBatch:
    """``runs`` independent coupling times, vectorised over runs."""
    _gate(model)
    nu_bar, C = _normalized_truncation(model, epsilon)
    gen = as_generator(rng)
    diff = np.atleast_1d(np.asarray(x, dtype=float)) - np.atleast_1d(np.asarray(y, dtype=float))
    g = float(np.linalg.norm(matrix_exponential(model.A, t) @ diff))
    times, counts = _arrival_times(gen, C, t, runs)
    K = times.shape[1]
    d = model.d
    if g == 0:
        return CouplingBatch(np.zeros(runs, dtype=np.int64), counts, g, {"C": C})
    back = np.clip(t - times.ravel(), 0.0, None)
    a = _jump_kernel(model.A, back, np.tile(diff, (runs * K, 1))) @ model.B_bar.T
    U = nu_bar.sample(runs * K, gen).reshape(runs * K, d)
    sign = _thin(nu_bar, U, a, gen).reshape(runs, K)
    valid = np.arange(K)[None, :] < counts[:, None]
    level = np.cumsum(np.where(valid, -sign, 0), axis=1)
    hit = (level == 1) & valid
    first = np.where(hit.any(axis=1), hit.argmax(axis=1) + 1, -1)
    return CouplingBatch(first.astype(np.int64), counts, g, {"C": C, "max_steps": K})


def batch_stay_probabilities(nu_bar: DensityOnIntervals, shifts) -> np.ndarray:
    """Vectorised ``p = 1 - overlap`` for constant interval densities."""
    if not (isinstance(nu_bar, DensityOnIntervals) and nu_bar.constant):
        raise RepresentationError("vectorised stay probabilities need a constant interval density")
    prof = IntervalAutocorrelation(nu_bar.intervals)
    return 1.0 - nu_bar.weight * prof(np.abs(np.asarray(shifts, dtype=float)))


def gamma_delta(nu_bar: LevyMeasure, delta: float, grid: int = 201) -> float:
    """Certified lower bound on ``inf_{|a|<=delta} (nu_bar ∧ delta_a * nu_bar)(R^d)`` after normalising."""
    cert = overlap_certificate(nu_bar.normalized(), delta, grid)
    return max(0.0, cert.certified_lower)


def coupling_tail_bound(gamma: float, k, c_clt: float):
    """``c_clt / sqrt(k) + 4 (1 - gamma) / (gamma k)``."""
    if not 0 < gamma <= 1:
        raise ValueError("gamma must lie in (0, 1]")
    k = np.asarray(k, dtype=float)
    out = c_clt / np.sqrt(k) + 4.0 * (1.0 - gamma) / (gamma * k)
    return float(out) if out.ndim == 0 else out


def fit_c_clt(tail_prob: float, k0: int) -> float:
    """Smallest ``c`` with ``c / sqrt(k0)`` alone covering the observed tail at ``k0``."""
    return float(tail_prob) * math.sqrt(k0)


def fit_tail_slope(ks, probs):
    ks = np.asarray(ks, dtype=float)
    probs = np.asarray(probs, dtype=float)
    ok = probs > 0
    if ok.sum() < 2:
        raise ValueError("need at least two positive tail values")
    slope, _ = np.polyfit(np.log(ks[ok]), np.log(probs[ok]), 1)
    return float(slope)


# ---------------------------------------------------------------------------
# exact reflection-inequality oracle


@dataclass(frozen=True)
class ReflectionProbabilities:
    k: int
    a: int
    r: Fraction
    p_max_ge: Fraction
    p_end_ge: Fraction
    p_end_gt: Fraction
    p_max_lt: Fraction
    p_mid_closed: Fraction
    p_mid_open: Fraction

    def inequalities(self):
        """The four reflection inequalities as ``(name, lhs, rhs, holds)``."""
        rows = [
            ("2P(S_k>a) <= P(max>=a)", 2 * self.p_end_gt, self.p_max_ge),
            ("P(max>=a) <= 2P(S_k>=a)", self.p_max_ge, 2 * self.p_end_ge),
            ("2P(0<S_k<a) <= P(max<a)", 2 * self.p_mid_open, self.p_max_lt),
            ("P(max<a) <= 2P(0<=S_k<=a)", self.p_max_lt, 2 * self.p_mid_closed),
        ]
        return [(name, lhs, rhs, lhs <= rhs) for name, lhs, rhs in rows]


def _as_fraction(r) -> Fraction:
    return r if isinstance(r, Fraction) else Fraction(r)


def walk_joint_law(k: int, r) -> dict:
    """Exact law of ``(S_k, max_{1<=i<=k} S_i)`` for the lazy ternary walk.

    Dynamic programming over (position, running max); floats are converted
    to the exact rational they represent.
    """
    r = _as_fraction(r)
    if not 0 <= r < 1:
        raise PreconditionError("the reflection inequalities need 0 <= r < 1")
    if not 1 <= k <= 18:
        raise PreconditionError("k must lie in 1..18")
    q = (1 - r) / 2
    law = {(-1, -1): q, (0, 0): r, (1, 1): q} if r else {(-1, -1): q, (1, 1): q}
    for _ in range(k - 1):
        nxt = {}
        for (s, m), p in law.items():
            for step, w in ((-1, q), (0, r), (1, q)):
                if w:
                    s2 = s + step
                    key = (s2, max(m, s2))
                    nxt[key] = nxt.get(key, 0) + p * w
        law = nxt
    return law


def _reflection_from_law(law, k, a, r) -> ReflectionProbabilities:
    zero = Fraction(0)
    p_max_ge = sum((p for (s, m), p in law.items() if m >= a), zero)
    p_end_ge = sum((p for (s, m), p in law.items() if s >= a), zero)
    p_end_gt = sum((p for (s, m), p in law.items() if s > a), zero)
    p_mid_closed = sum((p for (s, m), p in law.items() if 0 <= s <= a), zero)
    p_mid_open = sum((p for (s, m), p in law.items() if 0 < s < a), zero)
    return ReflectionProbabilities(k, a, r, p_max_ge, p_end_ge, p_end_gt, 1 - p_max_ge, p_mid_closed, p_mid_open)


def rw_exact_tail(k: int, r, a: int) -> ReflectionProbabilities:
    if a < 1:
        raise PreconditionError("a must be a positive integer")
    r = _as_fraction(r)
    return _reflection_from_law(walk_joint_law(k, r), k, int(a), r)


def reflection_table(kmax: int = 12, rs=(Fraction(0), Fraction(3, 10), Fraction(3, 5))):
    """Rows ``(k, a, r, name, lhs, rhs, holds)`` for ``k <= kmax``, ``1 <= a <= k`` and each ``r``."""
    rows = []
    for r in rs:
        r = _as_fraction(r)
        for k in range(1, kmax + 1):
            law = walk_joint_law(k, r)
            for a in range(1, k + 1):
                rp = _reflection_from_law(law, k, a, r)
                for name, lhs, rhs, ok in rp.inequalities():
                    rows.append((k, a, r, name, lhs, rhs, ok))
    return rows


def reflection_sweep(kmax: int = 12, rs=(Fraction(0), Fraction(3, 10), Fraction(3, 5))):
    """Check every inequality for ``k <= kmax``, ``1 <= a <= k`` and each ``r``.

    Returns ``(checked, violations)`` with violations as readable tuples.
    """
    rows = reflection_table(kmax, rs)
    violations = [(k, a, str(r), name, str(lhs), str(rhs)) for k, a, r, name, lhs, rhs, ok in rows if not ok]
    return len(rows), violations
