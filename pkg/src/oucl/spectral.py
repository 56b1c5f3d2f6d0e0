"""Matrix exponentials and spectral classification of the drift matrix."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import MatrixOverflowError

STABILITY_CLASSES = ("all_negative", "nonpositive_semisimple", "has_positive", "nonpositive_defective")
COUPLABLE = ("all_negative", "nonpositive_semisimple")

ZERO_TOL = 1e-9
# Defective eigenvalues split by roughly sqrt(eps) under rounding, so
# clustering needs a looser tolerance than the zero test.
CLUSTER_TOL = 1e-6


def as_square_matrix(A) -> np.ndarray:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] < 1:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix entries must be finite")
    return A


def matrix_exponential(A, t: float = 1.0) -> np.ndarray:
    """Return ``exp(t A)`` (scaling and squaring with Pade approximants).

    Raises MatrixOverflowError instead of returning non-finite entries.
    """
    A = as_square_matrix(A)
    t = float(t)
    if not math.isfinite(t):
        raise ValueError("t must be finite")
    with np.errstate(over="ignore", invalid="ignore"):
        E = scipy.linalg.expm(t * A)
    if not np.all(np.isfinite(E)):
        raise MatrixOverflowError(f"exp(tA) overflows at t={t}")
    return E


def expm_batch(A, ts) -> np.ndarray:
    """``exp(t A)`` for every t in ``ts``; shape ``(len(ts), n, n)``."""
    A = as_square_matrix(A)
    ts = np.asarray(ts, dtype=float).reshape(-1)
    n = A.shape[0]
    if n == 1:
        with np.errstate(over="ignore"):
            E = np.exp(ts * A[0, 0]).reshape(-1, 1, 1)
    elif not A.any():
        E = np.broadcast_to(np.eye(n), (ts.size, n, n)).copy()
    else:
        with np.errstate(over="ignore", invalid="ignore"):
            E = scipy.linalg.expm(ts[:, None, None] * A[None])
    if not np.all(np.isfinite(E)):
        raise MatrixOverflowError("exp(tA) overflows on the requested times")
    return E


def operator_norm(M) -> float:
    return float(np.linalg.norm(np.atleast_2d(M), 2))


@dataclass(frozen=True)
class SpectralReport:
    eigenvalues: tuple
    alg_mult: tuple
    geom_mult: tuple
    semisimple_imaginary: bool
    stability: str
    c_a: float
    c_a_upper: float = math.inf
    grid: dict = field(default_factory=dict)

    @property
    def couplable(self) -> bool:
        return self.stability in COUPLABLE

    def to_dict(self) -> dict:
        return {
            "eigenvalues": [[z.real, z.imag] for z in self.eigenvalues],
            "alg_mult": list(self.alg_mult),
            "geom_mult": list(self.geom_mult),
            "semisimple_imaginary": self.semisimple_imaginary,
            "stability": self.stability,
            "c_a": self.c_a if math.isfinite(self.c_a) else "inf",
            "c_a_upper": self.c_a_upper if math.isfinite(self.c_a_upper) else "inf",
            "grid": self.grid,
        }


def _cluster(eigs, tol):
    clusters = []
    for lam in sorted(eigs, key=lambda z: (z.real, z.imag)):
        for c in clusters:
            if abs(lam - c[0]) <= tol:
                c.append(lam)
                break
        else:
            clusters.append([lam])
    return clusters


def spectral_report(A, time_horizon: float = 200.0, grid: int = 512) -> SpectralReport:
    """Classify ``A`` and estimate ``C_A = sup_t ||exp(tA)||``.

    The supremum is a grid estimate (log-spaced times up to ``time_horizon``),
    not a certified bound.  When ``A`` is diagonalizable the condition number
    of the eigenvector matrix is reported as ``c_a_upper``.
    """
    A = as_square_matrix(A)
    n = A.shape[0]
    scale = 1.0 + operator_norm(A)
    eigs = np.linalg.eigvals(A)
    clusters = _cluster(eigs, CLUSTER_TOL * scale)

    values, alg, geom = [], [], []
    for c in clusters:
        lam = complex(np.mean(c))
        if abs(lam.imag) <= ZERO_TOL * scale:
            lam = complex(lam.real, 0.0)
        sv = np.linalg.svd(A - lam * np.eye(n), compute_uv=False)
        rank = int(np.sum(sv > ZERO_TOL * scale))
        values.append(lam)
        alg.append(len(c))
        geom.append(min(n - rank, len(c)) if n - rank > 0 else 1)

    tol = ZERO_TOL * scale
    imaginary = [i for i, lam in enumerate(values) if abs(lam.real) <= tol]
    semisimple_imaginary = all(geom[i] == alg[i] for i in imaginary)
    if any(lam.real > tol for lam in values):
        stability = "has_positive"
    elif not imaginary:
        stability = "all_negative"
    elif semisimple_imaginary:
        stability = "nonpositive_semisimple"
    else:
        stability = "nonpositive_defective"

    grid_meta = {"time_horizon": float(time_horizon), "points": int(grid)}
    if stability not in COUPLABLE:
        return SpectralReport(tuple(values), tuple(alg), tuple(geom), semisimple_imaginary,
                              stability, math.inf, math.inf, grid_meta)

    ts = np.logspace(-4, math.log10(time_horizon), grid)
    norms = np.linalg.norm(expm_batch(A, ts), ord=2, axis=(1, 2))
    c_a = max(1.0, float(norms.max()))

    c_upper = math.inf
    if all(g == a for g, a in zip(geom, alg)):
        _, V = np.linalg.eig(A)
        c_upper = float(np.linalg.cond(V))
        # the grid max is a lower estimate of the supremum; never exceed the
        # analytic bound through rounding
        c_a = min(c_a, max(1.0, c_upper))
    grid_meta["t_argmax"] = float(ts[int(np.argmax(norms))])
    return SpectralReport(tuple(values), tuple(alg), tuple(geom), semisimple_imaginary,
                          stability, c_a, c_upper, grid_meta)
