"""Exact endpoint sampling of OU processes.

Compound-Poisson drivers use the jump-time series representation
``sum_k e^{s_k A} B U_k``; symmetric-stable and Gaussian drivers use their
closed-form time-t marginals.  A path discretisation is available as a
fallback and for cross-checks.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .errors import DegenerateError, ModeError, RepresentationError
from .measures import Atomic, DensityOnIntervals, LevyMeasure, SymmetricStable
from .rng import as_generator
from .spectral import expm_batch, matrix_exponential
from .symbol import OUModel

log = logging.getLogger(__name__)

MODES = ("cp_truncated", "stable_exact", "gaussian_exact", "path_euler")


@dataclass
class EndpointSample:
    value: np.ndarray
    jump_count: int
    jump_times: np.ndarray


@dataclass
class SampleBatch:
    values: np.ndarray
    mode: str
    diagnostics: dict = field(default_factory=dict)


def sample_stable(alpha: float, size, rng) -> np.ndarray:
    """Standard symmetric alpha-stable draws, ``E e^{i xi X} = e^{-|xi|^alpha}``.

    Chambers-Mallows-Stuck; ``alpha = 2`` gives Normal(0, 2).
    """
    if not 0 < alpha <= 2:
        raise ValueError("alpha must lie in (0, 2]")
    gen = as_generator(rng)
    V = gen.uniform(-math.pi / 2, math.pi / 2, size)
    W = gen.standard_exponential(size)
    if alpha == 1.0:
        return np.tan(V)
    return (np.sin(alpha * V) / np.cos(V) ** (1 / alpha)
            * (np.cos((1 - alpha) * V) / W) ** ((1 - alpha) / alpha))


def sample_positive_stable(beta: float, size, rng) -> np.ndarray:
    """Positive stable draws with ``E e^{-lam S} = e^{-lam^beta}``, 0 < beta < 1 (Kanter)."""
    gen = as_generator(rng)
    U = gen.random(size)
    E = gen.standard_exponential(size)
    a = (np.sin(beta * math.pi * U) / np.sin(math.pi * U)) ** (1 / beta)
    b = (np.sin((1 - beta) * math.pi * U) / E) ** ((1 - beta) / beta)
    return a * b


def sample_isotropic_stable(alpha: float, dim: int, size: int, rng) -> np.ndarray:
    """Rotationally symmetric draws with ``E e^{i<xi,X>} = e^{-|xi|^alpha}``."""
    gen = as_generator(rng)
    if dim == 1:
        return sample_stable(alpha, size, gen).reshape(-1, 1)
    G = gen.standard_normal((size, dim)) * math.sqrt(2.0)
    if alpha == 2:
        return G
    # sub-Gaussian: sqrt(S) G with S positive (alpha/2)-stable
    S = sample_positive_stable(alpha / 2, size, gen)
    return np.sqrt(S)[:, None] * G


def _flow_integral(A, t, v):
    """``∫_0^t e^{sA} v ds`` from one block exponential."""
    n = A.shape[0]
    M = np.zeros((n + 1, n + 1))
    M[:n, :n] = A
    M[:n, n] = v
    return linalg.expm(t * M)[:n, n]


def gaussian_covariance(A, BQBt, t) -> np.ndarray:
    """``∫_0^t e^{sA} BQB^T e^{sA^T} ds`` (Van Loan block exponential)."""
    n = A.shape[0]
    M = np.zeros((2 * n, 2 * n))
    M[:n, :n] = -A
    M[:n, n:] = BQBt
    M[n:, n:] = A.T
    F = linalg.expm(t * M)
    S = F[n:, n:].T @ F[:n, n:]
    return (S + S.T) / 2


def small_jump_mean(nu: LevyMeasure) -> np.ndarray:
    """``∫_{|z|<1} z nu(dz)`` for a finite measure."""
    if nu.symmetric:
        return np.zeros(nu.dim)
    if isinstance(nu, Atomic):
        inside = np.linalg.norm(nu.locations, axis=1) < 1.0
        return (nu.locations[inside] * nu.masses[inside, None]).sum(axis=0)
    if isinstance(nu, DensityOnIntervals):
        if nu.constant:
            tot = 0.0
            for a, b in nu.intervals.as_float_array():
                lo, hi = max(a, -1.0), min(b, 1.0)
                if hi > lo:
                    tot += (hi * hi - lo * lo) / 2
            return np.array([nu.weight * tot])
        z, w = nu._nodes()
        f = np.where(np.isfinite(nu.pdf(z)), nu.pdf(z), 0.0) * w
        return np.array([float(np.sum(z * f * (np.abs(z) < 1.0)))])
    raise RepresentationError(f"no small-jump mean for {type(nu).__name__}")


def _jump_kernel(A, times, jumps):
    """Rows ``e^{s_k A} v_k`` for jump vectors ``v_k`` (rows of ``jumps``)."""
    if len(times) == 0:
        return np.zeros((0, A.shape[0]))
    if A.shape[0] == 1:
        return np.exp(times * A[0, 0])[:, None] * jumps
    if not A.any():
        return jumps
    out = np.empty_like(jumps)
    step = 4096
    for i in range(0, len(times), step):
        E = expm_batch(A, times[i:i + step])
        out[i:i + step] = np.einsum("kij,kj->ki", E, jumps[i:i + step])
    return out


def _truncated(model: OUModel, epsilon):
    nu = model.nu
    if nu is None:
        raise ModeError("cp_truncated needs a Levy measure")
    nu_eps = nu.truncate(epsilon) if epsilon is not None else nu
    if not nu_eps.finite:
        raise ModeError("truncation level required for an infinite Levy measure")
    C = nu_eps.total_mass
    if C <= 0:
        raise DegenerateError("truncated Levy measure has zero mass")
    return nu_eps, C


def _cp_drift(model, nu_eps):
    # +i<b, xi> in the exponent is a drift of -b; the compensator of the
    # retained small jumps is pulled out of the compound Poisson sum
    return -model.B @ (model.triplet.b + small_jump_mean(nu_eps))


def sample_compound_poisson_ou(model: OUModel, epsilon, t: float, x, rng, kernel: str = "reversed",
                               include_drift: bool = True) -> EndpointSample:
    """One endpoint from exponential inter-arrivals and iid jumps of ``nu_eps``.

    ``kernel="reversed"`` weights the k-th jump by ``e^{(xi_1+...+xi_k)A}``,
    ``"forward"`` by ``e^{(t - xi_1 - ... - xi_k)A}``; both give the same law.
    The Gaussian part of the triplet is ignored.
    """
    nu_eps, C = _truncated(model, epsilon)
    gen = as_generator(rng)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if t == 0:
        return EndpointSample(x.copy(), 0, np.zeros(0))
    times = []
    s = gen.exponential(1.0 / C)
    while s <= t:
        times.append(s)
        s += gen.exponential(1.0 / C)
    times = np.array(times)
    U = nu_eps.sample(len(times), gen).reshape(len(times), -1) if len(times) else np.zeros((0, model.d))
    k = times if kernel == "reversed" else t - times
    value = matrix_exponential(model.A, t) @ x + _jump_kernel(model.A, k, U @ model.B.T).sum(axis=0)
    if include_drift:
        value = value + _flow_integral(model.A, t, _cp_drift(model, nu_eps))
    return EndpointSample(value, len(times), times)


def sample_compound_poisson_batch(model: OUModel, epsilon, t: float, x, size: int, rng,
                                  kernel: str = "reversed") -> np.ndarray:
    """``size`` endpoints; Poisson counts with uniform order statistics for the times."""
    nu_eps, C = _truncated(model, epsilon)
    gen = as_generator(rng)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    base = matrix_exponential(model.A, t) @ x + _flow_integral(model.A, t, _cp_drift(model, nu_eps))
    out = np.tile(base, (size, 1))
    if t == 0:
        return out
    counts = gen.poisson(C * t, size)
    J = int(counts.sum())
    times = gen.random(J) * t
    U = nu_eps.sample(J, gen).reshape(J, -1)
    k = times if kernel == "reversed" else t - times
    contrib = _jump_kernel(model.A, k, U @ model.B.T)
    owner = np.repeat(np.arange(size), counts)
    np.add.at(out, owner, contrib)
    return out


def _stable_scale(model: OUModel, t):
    """Scale ``sigma`` with ``X_t - mean = sigma R S`` for an isotropic stable ``S``, if closed form."""
    nu = model.nu
    a = nu.alpha
    A, B = model.A, model.B
    n = model.n
    if n == 1:
        lam = A[0, 0]
        integral = t if lam == 0 else math.expm1(a * lam * t) / (a * lam)
        return (nu.scale * integral) ** (1 / a) * abs(B[0, 0]) if model.d == 1 else None
    lam = A[0, 0]
    BBt = B @ B.T
    if model.d == n and np.allclose(A, lam * np.eye(n)) and np.allclose(BBt, BBt[0, 0] * np.eye(n)):
        integral = t if lam == 0 else math.expm1(a * lam * t) / (a * lam)
        return (nu.scale * integral) ** (1 / a) * math.sqrt(BBt[0, 0])
    return None


def _sample_stable_exact(model, t, x, size, gen):
    nu = model.nu
    if not isinstance(nu, SymmetricStable) or np.any(model.triplet.Q != 0):
        raise ModeError("stable_exact needs a pure symmetric-stable driver")
    sigma = _stable_scale(model, t)
    if sigma is None:
        raise ModeError("no closed-form stable marginal for this (A, B); use path_euler")
    mean = matrix_exponential(model.A, t) @ x + _flow_integral(model.A, t, -model.B @ model.triplet.b)
    if t == 0:
        return np.tile(mean, (size, 1))
    S = sample_isotropic_stable(nu.alpha, model.n, size, gen)
    return mean + sigma * S


def _sample_gaussian_exact(model, t, x, size, gen):
    if model.nu is not None:
        raise ModeError("gaussian_exact needs a driver without jumps")
    mean = matrix_exponential(model.A, t) @ x + _flow_integral(model.A, t, -model.B @ model.triplet.b)
    cov = gaussian_covariance(model.A, model.B @ model.triplet.Q @ model.B.T, t)
    if t == 0:
        return np.tile(mean, (size, 1))
    return gen.multivariate_normal(mean, cov, size=size, method="eigh")


def _sample_path_euler(model, t, x, size, gen, steps, epsilon):
    """Exponential Euler on ``steps`` intervals with exact driver increments."""
    h = t / steps
    E = matrix_exponential(model.A, h)
    X = np.tile(x, (size, 1))
    nu = model.nu
    Q = model.triplet.Q
    L = np.linalg.cholesky(Q + 1e-300 * np.eye(model.d)) if np.any(Q) else None
    nu_eps = None
    if nu is not None and not isinstance(nu, SymmetricStable):
        nu_eps, C = _truncated(model, epsilon)
        drift = -(model.triplet.b + small_jump_mean(nu_eps))
    else:
        drift = -model.triplet.b
    for _ in range(steps):
        dZ = np.tile(drift * h, (size, 1))
        if L is not None:
            dZ += gen.standard_normal((size, model.d)) @ L.T * math.sqrt(h)
        if isinstance(nu, SymmetricStable):
            dZ += (nu.scale * h) ** (1 / nu.alpha) * sample_isotropic_stable(nu.alpha, model.d, size, gen)
        elif nu_eps is not None:
            counts = gen.poisson(C * h, size)
            J = int(counts.sum())
            if J:
                np.add.at(dZ, np.repeat(np.arange(size), counts), nu_eps.sample(J, gen).reshape(J, -1))
        X = X @ E.T + dZ @ model.B.T
    return X


def sample_ou_endpoint(model: OUModel, t: float, x, mode: str, rng, size: int = 1, epsilon=None,
                       steps: int = 256) -> SampleBatch:
    """``size`` draws from ``P_t(x, .)`` (rows of ``values``)."""
    if mode not in MODES:
        raise ModeError(f"unknown driver mode {mode!r}; expected one of {MODES}")
    if t < 0:
        raise ValueError("t must be nonnegative")
    gen = as_generator(rng)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.size != model.n:
        raise ValueError("x must have the state dimension")
    diag = {}
    if t == 0:
        return SampleBatch(np.tile(x, (size, 1)), mode, diag)
    if mode == "cp_truncated":
        if np.any(model.triplet.Q != 0):
            raise ModeError("cp_truncated ignores the Gaussian part; use path_euler")
        if model.nu is not None and epsilon is not None:
            diag["neglected_second_moment"] = model.nu.small_jump_second_moment(epsilon)
        values = sample_compound_poisson_batch(model, epsilon, t, x, size, gen)
    elif mode == "stable_exact":
        values = _sample_stable_exact(model, t, x, size, gen)
    elif mode == "gaussian_exact":
        values = _sample_gaussian_exact(model, t, x, size, gen)
    else:
        values = _sample_path_euler(model, t, x, size, gen, int(steps), epsilon)
        diag["steps"] = int(steps)
    return SampleBatch(values, mode, diag)


def write_samples_csv(path, values) -> None:
    values = np.asarray(values).reshape(len(values), -1)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{i + 1}" for i in range(values.shape[1])])
        for row in values:
            w.writerow([repr(float(v)) for v in row])
