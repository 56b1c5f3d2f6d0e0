"""Characteristic exponents and Fourier-side quantities of OU processes.

Conventions follow the Levy-Khintchine form

    Phi(xi) = 1/2 <Q xi, xi> + i <b, xi>
              + ∫ (1 - e^{i<xi,z>} + i <xi,z> 1{|z|<1}) nu(dz)

with ``E exp(i<xi, Z_t>) = exp(-t Phi(xi))``.  The law of
``∫_0^t e^{(t-s)A} B dZ_s`` has exponent
``Phi_t(xi) = ∫_0^t Phi(B^T e^{sA^T} xi) ds``.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import fft as sfft
from scipy import integrate

from .errors import AccuracyError, PreconditionError, UnboundedSearchError
from .measures import Atomic, LevyMeasure, Mixture, _AtomicUnchecked
from .rng import RngStream
from .spectral import as_square_matrix, expm_batch, matrix_exponential, operator_norm

log = logging.getLogger(__name__)

QUAD_EPSABS = 1e-10
QUAD_EPSREL = 1e-10


@dataclass(frozen=True)
class LevyTriplet:
    Q: np.ndarray
    b: np.ndarray
    nu: Optional[LevyMeasure] = None

    def __post_init__(self):
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        b = np.atleast_1d(np.asarray(self.b, dtype=float))
        if Q.shape != (b.size, b.size):
            raise ValueError(f"Q has shape {Q.shape} but b has {b.size} entries")
        if not np.allclose(Q, Q.T, atol=1e-10):
            raise ValueError("Q must be symmetric")
        if np.linalg.eigvalsh(Q).min() < -1e-10:
            raise ValueError("Q must be positive semidefinite")
        if self.nu is not None and self.nu.dim != b.size:
            raise ValueError("Levy measure dimension does not match the drift")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "b", b)

    @property
    def dim(self) -> int:
        return self.b.size

    @classmethod
    def pure_jump(cls, nu: LevyMeasure, b=None) -> "LevyTriplet":
        d = nu.dim
        return cls(np.zeros((d, d)), np.zeros(d) if b is None else b, nu)

    @classmethod
    def gaussian(cls, Q, b=None) -> "LevyTriplet":
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        return cls(Q, np.zeros(Q.shape[0]) if b is None else b, None)


@dataclass(frozen=True)
class OUModel:
    """``dX = A X dt + B dZ`` with ``Z`` given by its Levy triplet."""

    A: np.ndarray
    B: np.ndarray
    triplet: LevyTriplet

    def __post_init__(self):
        A = as_square_matrix(self.A)
        B = np.atleast_2d(np.asarray(self.B, dtype=float))
        if B.shape[0] != A.shape[0]:
            raise ValueError(f"B has {B.shape[0]} rows, A is {A.shape[0]}x{A.shape[0]}")
        if B.shape[1] != self.triplet.dim:
            raise ValueError(f"B has {B.shape[1]} columns, driver has dimension {self.triplet.dim}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        rank = int(np.linalg.matrix_rank(B))
        object.__setattr__(self, "rank_B", rank)
        # left inverse with B @ B_bar = I_n, available when rank(B) = n
        object.__setattr__(self, "B_bar", np.linalg.pinv(B) if rank == A.shape[0] else None)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def d(self) -> int:
        return self.B.shape[1]

    @property
    def nu(self):
        return self.triplet.nu


def _rows(xi, dim):
    xi = np.asarray(xi, dtype=float)
    single = xi.ndim == 0 or (xi.ndim == 1 and (dim > 1 or xi.size == 1) and xi.size == dim)
    if xi.ndim == 0:
        xi = xi.reshape(1, 1)
    elif xi.ndim == 1:
        xi = xi.reshape(-1, 1) if dim == 1 else xi.reshape(1, -1)
    if xi.shape[1] != dim:
        raise ValueError(f"expected points of dimension {dim}, got {xi.shape[1]}")
    return xi, single


def _exponent_rows(triplet: LevyTriplet, rows: np.ndarray) -> np.ndarray:
    out = 0.5 * np.einsum("ij,jk,ik->i", rows, triplet.Q, rows) + 1j * (rows @ triplet.b)
    if triplet.nu is not None:
        out = out + triplet.nu.exponent(rows)
    return out.astype(complex)


def characteristic_exponent(triplet: LevyTriplet, xi):
    """``Phi(xi)``; a scalar for a single point, an array for a batch of rows."""
    rows, single = _rows(xi, triplet.dim)
    out = _exponent_rows(triplet, rows)
    return complex(out[0]) if single else out


def pushforward_triplet(triplet: LevyTriplet, B) -> LevyTriplet:
    """Triplet of ``B Z``: ``(B Q B^T, B b + correction, nu o B^{-1})``.

    The drift correction is ``∫ Bz (1{|z|<1} - 1{|Bz|<1}) nu(dz)``, the sign
    that keeps the compensator convention of ``Phi`` intact.
    """
    B = np.atleast_2d(np.asarray(B, dtype=float))
    Q = B @ triplet.Q @ B.T
    b = B @ triplet.b
    nu = None
    if triplet.nu is not None:
        b = b + triplet.nu.compensator_shift(B)
        nu = triplet.nu.push(B)
    return LevyTriplet(Q, b, nu)


def pushforward_exponent(model: OUModel, xi):
    """``Phi_B(xi) = Phi(B^T xi)``."""
    rows, single = _rows(xi, model.n)
    out = _exponent_rows(model.triplet, rows @ model.B)
    return complex(out[0]) if single else out


def _flow_rows(model: OUModel, s: float, rows: np.ndarray) -> np.ndarray:
    # rows of B^T e^{sA^T} xi
    return rows @ (matrix_exponential(model.A, s) @ model.B)


def _integrate(fun, t, size):
    """Adaptive Gauss-Kronrod over [0, t] of a vector-valued integrand."""
    if t == 0:
        return np.zeros(size)
    val, err = integrate.quad_vec(fun, 0.0, t, epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL, norm="max",
                                  limit=2000)
    if not np.all(np.isfinite(val)) or err > max(1e-6, 1e-6 * float(np.max(np.abs(val)))):
        raise AccuracyError(f"time integral did not converge (error estimate {err:.3g})")
    return val


def time_integrated_exponent(model: OUModel, t: float, xi):
    """``Phi_t(xi) = ∫_0^t Phi(B^T e^{sA^T} xi) ds``."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    rows, single = _rows(xi, model.n)
    if t == 0:
        out = np.zeros(len(rows), dtype=complex)
    elif not model.A.any():
        out = t * _exponent_rows(model.triplet, rows @ model.B)
    else:
        m = len(rows)

        def f(s):
            v = _exponent_rows(model.triplet, _flow_rows(model, s, rows))
            return np.concatenate([v.real, v.imag])

        val = _integrate(f, t, 2 * m)
        out = val[:m] + 1j * val[m:]
    return complex(out[0]) if single else out


def real_time_integrated_exponent(model: OUModel, t: float, rows: np.ndarray) -> np.ndarray:
    """``∫_0^t Re Phi(B^T e^{sA^T} xi) ds`` for rows of xi; ``t`` may be ``inf``."""
    rows = np.asarray(rows, dtype=float).reshape(-1, model.n)
    if t == 0:
        return np.zeros(len(rows))
    if not model.A.any() and math.isfinite(t):
        return t * _exponent_rows(model.triplet, rows @ model.B).real
    f = lambda s: _exponent_rows(model.triplet, _flow_rows(model, s, rows)).real
    if math.isinf(t):
        val, err = integrate.quad_vec(f, 0.0, np.inf, epsabs=QUAD_EPSABS, epsrel=1e-8, norm="max", limit=2000)
        if not np.all(np.isfinite(val)):
            raise AccuracyError("integral to infinity diverges")
        return np.maximum(val, 0.0)
    return np.maximum(_integrate(f, t, len(rows)), 0.0)


def _gauss_legendre_nodes(t, panels, order):
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(0.0, t, panels + 1)
    half = np.diff(edges) / 2
    mid = (edges[:-1] + edges[1:]) / 2
    s = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    ws = (half[:, None] * w[None, :]).ravel()
    return s, ws


def ou_pushforward_triplet(model: OUModel, t: float, panels: int = 16, order: int = 16) -> LevyTriplet:
    """Triplet ``(0, b_t, nu_t)`` of the time-t marginal (``Q = 0`` only).

    ``nu_t = ∫_0^t (e^{sA} B)_# nu ds`` is realised as a Gauss-Legendre
    mixture of pushed-forward copies of ``nu``.
    """
    tr = model.triplet
    if np.any(tr.Q != 0):
        raise OUModelPrecondition("the time-t triplet is only materialised for Q = 0")
    n = model.n
    if t == 0:
        return LevyTriplet(np.zeros((n, n)), np.zeros(n), None)
    base = pushforward_triplet(tr, model.B)
    s, w = _gauss_legendre_nodes(float(t), panels, order)
    E = expm_batch(model.A, s)
    b_t = np.einsum("k,kij,j->i", w, E, base.b)
    nu = base.nu
    if nu is None:
        return LevyTriplet(np.zeros((n, n)), b_t, None)
    for wk, Ek in zip(w, E):
        b_t = b_t + wk * nu.compensator_shift(Ek)
    if isinstance(nu, Atomic):
        locs = np.concatenate([nu.locations @ Ek.T for Ek in E])
        masses = np.concatenate([wk * nu.masses for wk in w])
        keep = ~np.all(locs == 0, axis=1)
        nu_t = _AtomicUnchecked(locs[keep], masses[keep], n)
    else:
        nu_t = Mixture([(wk, nu.push(Ek)) for wk, Ek in zip(w, E)])
    return LevyTriplet(np.zeros((n, n)), b_t, nu_t)


class OUModelPrecondition(PreconditionError):
    pass


# ---------------------------------------------------------------------------
# phi_t and its inverse


def sphere_directions(n: int, samples: int = 64) -> np.ndarray:
    """Deterministic directions covering the unit sphere of R^n."""
    if n == 1:
        return np.array([[1.0], [-1.0]])
    if n == 2:
        th = 2 * math.pi * np.arange(samples) / samples
        return np.stack([np.cos(th), np.sin(th)], axis=1)
    if n == 3:
        k = np.arange(samples) + 0.5
        z = 1 - 2 * k / samples
        r = np.sqrt(1 - z ** 2)
        ph = math.pi * (1 + math.sqrt(5)) * k
        return np.stack([r * np.cos(ph), r * np.sin(ph), z], axis=1)
    g = RngStream(0, n).generator().standard_normal((samples, n))
    g = np.vstack([np.eye(n), -np.eye(n), g])
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def _radially_monotone(model: OUModel) -> bool:
    nu = model.nu
    return nu is None or bool(nu.radially_monotone)


def _ball_points(model, rho, sphere_samples, radii):
    dirs = sphere_directions(model.n, sphere_samples)
    if _radially_monotone(model):
        return rho * dirs
    rs = np.linspace(rho / radii, rho, radii)
    return (rs[:, None, None] * dirs[None]).reshape(-1, model.n)


def phi_sup(model: OUModel, t, rho: float, sphere_samples: int = 64, radii: int = 32) -> float:
    """``phi_t(rho) = sup_{|xi|<=rho} ∫_0^t Re Phi(B^T e^{sA^T} xi) ds``.

    ``t=None`` gives the un-integrated ``phi(rho) = sup Re Phi(B^T xi)``;
    ``t=inf`` integrates over the whole half line.
    """
    if rho <= 0:
        raise ValueError("rho must be positive")
    pts = _ball_points(model, float(rho), sphere_samples, radii)
    if t is None:
        vals = _exponent_rows(model.triplet, pts @ model.B).real
    else:
        vals = real_time_integrated_exponent(model, t, pts)
    return float(max(0.0, vals.max()))


def phi_sup_curve(model: OUModel, ts: Sequence[float], rho: float, sphere_samples: int = 64,
                  radii: int = 32) -> np.ndarray:
    """``phi_t(rho)`` along increasing ``ts``, nondecreasing by construction.

    The time integral is accumulated piecewise with nonnegative increments.
    """
    ts = np.asarray(ts, dtype=float)
    if np.any(np.diff(ts) < 0) or ts[0] < 0:
        raise ValueError("ts must be nonnegative and increasing")
    pts = _ball_points(model, float(rho), sphere_samples, radii)
    acc = np.zeros(len(pts))
    out = []
    prev = 0.0
    f = lambda s: _exponent_rows(model.triplet, _flow_rows(model, s, pts)).real
    for t in ts:
        if t > prev:
            if not model.A.any():
                inc = (t - prev) * f(0.0)
            else:
                val, _ = integrate.quad_vec(f, prev, t, epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL, norm="max")
                inc = val
            acc = acc + np.maximum(inc, 0.0)
            prev = t
        out.append(float(acc.max()))
    return np.maximum.accumulate(np.array(out))


def phi_inverse(model: OUModel, t, level: float = 1.0, rtol: float = 1e-8, rho_max: float = 1e12,
                **kw) -> float:
    """``inf{rho > 0 : phi_t(rho) >= level}`` by bisection in log(rho)."""
    if level <= 0:
        raise ValueError("level must be positive")
    phi = lambda r: phi_sup(model, t, r, **kw)
    hi = 1.0
    while phi(hi) < level:
        hi *= 4.0
        if hi > rho_max:
            raise UnboundedSearchError(f"phi_t stays below {level} up to rho = {rho_max:g}")
    lo = hi / 4.0
    while lo > 1e-300 and phi(lo) >= level:
        hi, lo = lo, lo / 4.0
    while hi / lo - 1.0 > rtol:
        mid = math.sqrt(lo * hi)
        if phi(mid) >= level:
            hi = mid
        else:
            lo = mid
    return hi


# ---------------------------------------------------------------------------
# condition checks


@dataclass
class ConditionFlags:
    cond_16: bool
    ratio_min: float
    threshold: float
    cond_19: bool
    bounded_integrals: list
    cond_17_implied: bool
    cond_17_diagnostics: Optional[list] = None
    grid: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)


def check_conditions(model: OUModel, t0: float = 1.0, xi_range: float = 1e6, sphere_samples: int = 32,
                     radii: int = 61, T_doublings: int = 10, diagnostics: bool = True) -> ConditionFlags:
    """Sampled checks of the growth, integrability and local-boundedness conditions.

    * growth: min over directions of ``∫_0^{t0} Re Phi ds / log(1+|xi|)`` on a
      log grid up to ``xi_range``; the running minimum over the top decade is
      compared with ``2n + 2``.  For a bounded symbol (finite nu, no Gaussian
      part) the analytic upper bound on the ratio is reported instead.
    * local boundedness: ``∫_0^T Re Phi ds`` at ``|xi| in {1/2, 1, 2}`` for
      ``T = 1, 2, 4, ...``; flagged bounded when the last doubling changes
      the integrals by less than 1e-3 relative.
    * the O(.) condition is reported as implied by the other two; sampled
      ratios are attached as diagnostics in 1-d.
    """
    n = model.n
    dirs = sphere_directions(n, sphere_samples)
    rs = np.logspace(0, math.log10(xi_range), radii)
    top = rs >= xi_range / 10
    bound = symbol_bound(model)
    if bound is not None:
        # bounded symbol: the ratio is at most t0 sup Re Phi / log(1 + |xi|) on the top decade
        ratio_min = float(t0 * bound / math.log1p(xi_range / 10))
    else:
        pts = (rs[:, None, None] * dirs[None]).reshape(-1, n)
        vals = real_time_integrated_exponent(model, t0, pts).reshape(len(rs), len(dirs)).min(axis=1)
        ratio = vals / np.log1p(rs)
        ratio_min = float(ratio[top].min())
    threshold = 2 * n + 2
    cond_16 = ratio_min > threshold

    probe = (np.array([0.5, 1.0, 2.0])[:, None, None] * dirs[None]).reshape(-1, n)
    Ts = [0.0] + [2.0 ** k for k in range(T_doublings + 1)]
    f = lambda s: _exponent_rows(model.triplet, _flow_rows(model, s, probe)).real
    acc = np.zeros(len(probe))
    integrals = []
    for a, b in zip(Ts[:-1], Ts[1:]):
        if not model.A.any():
            inc = (b - a) * f(0.0)
        else:
            inc, _ = integrate.quad_vec(f, a, b, epsabs=1e-12, epsrel=1e-10, norm="max", limit=2000)
        prev = acc.copy()
        acc = acc + inc
        integrals.append(float(acc.max()))
    cond_19 = bool(np.all(np.isfinite(acc)) and np.max(np.abs(acc - prev)) <= 1e-3 * (1.0 + np.max(acc)))

    diag = None
    if diagnostics and n == 1 and cond_16:
        diag = []
        for t in (t0, 2 * t0, 4 * t0, 8 * t0):
            try:
                inv = phi_inverse(model, t)
            except UnboundedSearchError:
                break
            g = lambda x: math.exp(-float(real_time_integrated_exponent(model, t, np.array([[x]]))[0])) * x ** (n + 2)
            val, _ = integrate.quad(g, 0, np.inf, limit=200)
            diag.append({"t": t, "ratio": 2 * val / inv ** (2 * n + 2)})
    return ConditionFlags(bool(cond_16), ratio_min, threshold, cond_19, integrals,
                          bool(cond_16 and cond_19), diag,
                          {"t0": t0, "xi_range": xi_range, "radii": radii, "directions": len(dirs),
                           "T_max": Ts[-1]})


# ---------------------------------------------------------------------------
# Fourier inversion


@dataclass(frozen=True)
class Lattice:
    """Uniform lattice ``start + step * j`` for ``j < count`` on each axis."""

    start: tuple
    step: tuple
    count: tuple

    @classmethod
    def symmetric(cls, half_width: float, count: int, dim: int = 1) -> "Lattice":
        step = 2 * half_width / (count - 1)
        return cls((-half_width,) * dim, (step,) * dim, (count,) * dim)

    @classmethod
    def from_spec(cls, spec) -> "Lattice":
        if isinstance(spec, Lattice):
            return spec
        if isinstance(spec, dict):
            spec = [spec]
        axes = [(float(a["lo"]), float(a["hi"]), int(a["count"])) for a in spec]
        return cls(tuple(lo for lo, _, _ in axes), tuple((hi - lo) / (m - 1) for lo, hi, m in axes),
                   tuple(m for _, _, m in axes))

    @property
    def dim(self) -> int:
        return len(self.count)

    def axes(self):
        return [s + h * np.arange(m) for s, h, m in zip(self.start, self.step, self.count)]

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.step))


@dataclass
class DensityGrid:
    lattice: Lattice
    values: np.ndarray
    raw_min: float

    @property
    def axes(self):
        return self.lattice.axes()

    def integral(self) -> float:
        return float(self.values.sum() * self.lattice.cell_volume)

    def to_csv(self, path):
        axes = self.axes
        with open(path, "w") as fh:
            if len(axes) == 1:
                fh.write("x,density\n")
                for x, v in zip(axes[0], self.values):
                    fh.write(f"{x!r},{v!r}\n")
            else:
                fh.write("x1,x2,density\n")
                for i, x in enumerate(axes[0]):
                    for j, y in enumerate(axes[1]):
                        fh.write(f"{x!r},{y!r},{self.values[i, j]!r}\n")


def symbol_bound(model: OUModel) -> Optional[float]:
    """``sup Re Phi`` when it is finite by construction (no Gaussian part, finite nu), else None."""
    tr = model.triplet
    if np.any(tr.Q != 0):
        return None
    if tr.nu is None:
        return 0.0
    return 2.0 * tr.nu.total_mass if tr.nu.finite else None


def _decay_radius(model, t, target=37.0, r_max=1e7):
    """Smallest tested |xi| beyond which Re Phi_t exceeds ``target`` in every direction."""
    if symbol_bound(model) is not None:
        # |e^{-Phi_t}| >= e^{-t sup Re Phi} > 0 everywhere
        raise PreconditionError("characteristic function is not integrable (bounded symbol)")
    dirs = sphere_directions(model.n, 16)
    r = 1.0
    while r <= r_max:
        v = real_time_integrated_exponent(model, t, r * dirs)
        if v.min() >= target:
            return r
        r *= 2.0
    raise PreconditionError("characteristic function is not integrable (Re Phi_t stays bounded)")


def _spread(model, t):
    """Length scale of the marginal: 1 / (radius where Re Phi_t reaches 1)."""
    dirs = sphere_directions(model.n, 16)
    r = 1e-6
    while r < 1e9:
        if real_time_integrated_exponent(model, t, r * dirs).min() >= 1.0:
            return 1.0 / r
        r *= 2.0
    return 1.0


def fourier_invert(model: OUModel, t: float, lattice: Lattice, shifts=((1.0, None),),
                   period: Optional[float] = None, max_modes: int = 1 << 22) -> np.ndarray:
    """Invert ``Σ_j c_j e^{i<xi, m_j>} e^{-Phi_t(xi)}`` on ``lattice``.

    ``shifts`` lists ``(c_j, m_j)`` pairs (``m_j=None`` is the origin), so
    the same call yields a density or a signed difference of shifted
    densities.  The frequency integral is a trapezoid sum folded onto the
    lattice and evaluated with one FFT; ``period`` is the aliasing period.
    """
    n = model.n
    if lattice.dim != n:
        raise ValueError("lattice dimension must match the state dimension")
    if t <= 0:
        raise PreconditionError("the marginal at t = 0 is a point mass")
    xi_max = _decay_radius(model, t)
    extent = max(max(abs(s), abs(s + h * (m - 1))) for s, h, m in zip(lattice.start, lattice.step, lattice.count))
    for c, m in shifts:
        if m is not None:
            extent += float(np.max(np.abs(m)))
    scale = _spread(model, t)
    if period is None:
        period = max(4.0 * extent, (4096.0 if n == 1 else 64.0) * scale)
    dims = []
    for h, cnt in zip(lattice.step, lattice.count):
        M = sfft.next_fast_len(max(int(math.ceil(period / h)), cnt))
        dxi = 2 * math.pi / (M * h)
        K = int(math.ceil(xi_max / dxi))
        dims.append((M, dxi, K))
    total = int(np.prod([2 * K + 1 for _, _, K in dims]))
    if total > max_modes:
        raise AccuracyError(f"Fourier inversion needs {total} modes (> {max_modes}); coarsen the period")

    ks = [np.arange(-K, K + 1) for _, _, K in dims]
    xis = [k * dxi for k, (_, dxi, _) in zip(ks, dims)]
    mesh = np.stack(np.meshgrid(*xis, indexing="ij"), -1).reshape(-1, n)
    phi_t = time_integrated_exponent(model, t, mesh) if n > 1 else time_integrated_exponent(model, t, mesh[:, 0])
    phi_t = np.asarray(phi_t).reshape(-1)
    cf = np.zeros(len(mesh), dtype=complex)
    for c, m in shifts:
        if m is None:
            cf += c
        else:
            cf += c * np.exp(1j * (mesh @ np.atleast_1d(np.asarray(m, dtype=float))))
    cf *= np.exp(-phi_t)
    cf *= np.exp(-1j * (mesh @ np.asarray(lattice.start, dtype=float)))

    shape = tuple(M for M, _, _ in dims)
    folded = np.zeros(shape, dtype=complex)
    idx = np.meshgrid(*[k % M for k, (M, _, _) in zip(ks, dims)], indexing="ij")
    np.add.at(folded, tuple(i.reshape(-1) for i in idx), cf)
    vals = sfft.fftn(folded).real
    vals *= np.prod([dxi / (2 * math.pi) for _, dxi, _ in dims])
    return vals[tuple(slice(0, c) for c in lattice.count)]


def density_via_fourier(model: OUModel, t: float, grid, period: Optional[float] = None) -> DensityGrid:
    """Density of ``∫_0^t e^{(t-s)A} B dZ_s`` on a 1-d or 2-d lattice.

    Values in ``[-1e-8, 0)`` are clipped to 0; larger negative excursions
    are logged, never silently hidden (``raw_min`` keeps the raw minimum).
    """
    lattice = Lattice.from_spec(grid)
    vals = fourier_invert(model, t, lattice, period=period)
    raw_min = float(vals.min())
    if raw_min < -1e-8:
        log.warning("Fourier density dips to %.3g below zero", raw_min)
    return DensityGrid(lattice, np.maximum(vals, 0.0), raw_min)


# ---------------------------------------------------------------------------
# bounds


@dataclass
class BoundReport:
    t: float
    phi_t_inverse: float
    tv_bound: float
    gradient_bound_small_t: float
    gradient_bound_large_t: float
    conditions: dict
    constants: dict

    def to_dict(self):
        return asdict(self)

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)


def bound_report(model: OUModel, t: float, x, y, C: float = 1.0, c: float = 1.0,
                 conditions: Optional[ConditionFlags] = None, **kw) -> BoundReport:
    """Structural factors of the TV and gradient bounds at time ``t``.

    ``C`` and ``c`` are caller-supplied constants (the theory only asserts
    their existence).
    """
    if conditions is None:
        conditions = check_conditions(model, diagnostics=False)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    E = matrix_exponential(model.A, t)
    inv_t = phi_inverse(model, t, 1.0, **kw)
    inv_small = phi_inverse(model, None, 1.0 / min(t, 1.0), **kw)
    return BoundReport(
        t=float(t),
        phi_t_inverse=inv_t,
        tv_bound=C * float(np.linalg.norm(E @ (x - y))) * inv_t,
        gradient_bound_small_t=c * inv_small,
        gradient_bound_large_t=c * operator_norm(E) * inv_t,
        conditions=conditions.to_dict(),
        constants={"C": C, "c": c},
    )
