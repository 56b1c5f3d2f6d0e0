"""Levy measures, truncation, overlap algebra and the fat Cantor example.

Four concrete representations are supported:

* :class:`Atomic` -- finitely many weighted points.
* :class:`DensityOnIntervals` -- a density on a finite union of closed
  intervals of the real line (constant densities are handled exactly).
* :class:`SymmetricStable` -- the rotationally symmetric alpha-stable
  measure ``c |z|^{-d-alpha} dz``, parametrised by the scale of its symbol
  ``Re Phi(xi) = scale |xi|^alpha``.
* :class:`SphericalStableLike` -- radial kernel ``s^{-1-alpha}`` below
  ``r0`` and ``s^{-1-beta}`` above, spread over finitely many directions.

Finite measures expose ``total_mass``, ``sample`` and ``shift``; the
overlap ``mu ^ nu`` is only defined between comparable representations.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import cached_property
from fractions import Fraction
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate, special

from .errors import AccuracyError, PreconditionError, RepresentationError

DEFAULT_QUAD_CELLS = 4096
SVC_MAX_LEVEL = 20


# ---------------------------------------------------------------------------
# interval unions


@dataclass(frozen=True)
class IntervalUnion:
    """Sorted, pairwise disjoint closed intervals ``[a_i, b_i]``.

    Endpoints may be Fractions; arithmetic then stays exact.
    """

    intervals: tuple

    def __post_init__(self):
        ivs = tuple((a, b) for a, b in self.intervals)
        for a, b in ivs:
            if b < a:
                raise ValueError(f"empty interval [{a}, {b}]")
        for (_, b), (a, _) in zip(ivs, ivs[1:]):
            if not b < a:
                raise ValueError("intervals must be sorted and disjoint")
        object.__setattr__(self, "intervals", ivs)

    @classmethod
    def from_pairs(cls, pairs) -> "IntervalUnion":
        return cls(tuple(sorted((a, b) for a, b in pairs)))

    def __len__(self):
        return len(self.intervals)

    @property
    def length(self):
        return sum((b - a for a, b in self.intervals), 0)

    @property
    def lo(self):
        return self.intervals[0][0]

    @property
    def hi(self):
        return self.intervals[-1][1]

    def shift(self, z) -> "IntervalUnion":
        return IntervalUnion(tuple((a + z, b + z) for a, b in self.intervals))

    def scale(self, c) -> "IntervalUnion":
        if c > 0:
            return IntervalUnion(tuple((c * a, c * b) for a, b in self.intervals))
        return IntervalUnion(tuple((c * b, c * a) for a, b in reversed(self.intervals)))

    @cached_property
    def _float_array(self) -> np.ndarray:
        arr = np.array([[float(a), float(b)] for a, b in self.intervals]).reshape(-1, 2)
        arr.flags.writeable = False
        return arr

    @cached_property
    def common_denominator(self) -> int:
        return math.lcm(*(Fraction(e).denominator for iv in self.intervals for e in iv))

    @cached_property
    def integer_intervals(self) -> tuple:
        """Endpoints times ``common_denominator``, as Python ints."""
        den = self.common_denominator
        return tuple((int(Fraction(a) * den), int(Fraction(b) * den)) for a, b in self.intervals)

    def as_float_array(self) -> np.ndarray:
        return self._float_array

    def contains(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        arr = self.as_float_array()
        idx = np.searchsorted(arr[:, 0], z, side="right") - 1
        ok = idx >= 0
        idx = np.clip(idx, 0, None)
        return ok & (z <= arr[idx, 1])

    def intersection_length(self, other: "IntervalUnion"):
        return _intersection_length(self.intervals, other.intervals)


def _intersection_length(u, v):
    """Length of the intersection of two sorted disjoint interval lists."""
    i = j = 0
    total = 0
    while i < len(u) and j < len(v):
        a = max(u[i][0], v[j][0])
        b = min(u[i][1], v[j][1])
        if b > a:
            total += b - a
        if u[i][1] < v[j][1]:
            i += 1
        else:
            j += 1
    return total


def _integer_form(u: IntervalUnion, den: int):
    f = den // u.common_denominator
    return [(a * f, b * f) for a, b in u.integer_intervals]


def interval_overlap(u: IntervalUnion, z):
    """Exact length of ``u  ∩  (u - z)`` by a sorted sweep.

    Rational inputs are scaled to a common denominator so that the sweep
    runs on integers.
    """
    if not isinstance(z, (Fraction, int)) or not all(isinstance(e, (Fraction, int)) for iv in u.intervals
                                                       for e in iv):
        return _intersection_length(u.intervals, u.shift(-z).intervals)
    z = Fraction(z)
    den = math.lcm(u.common_denominator, z.denominator)
    iu = _integer_form(u, den)
    zi = int(z * den)
    return Fraction(_intersection_length(iu, [(a - zi, b - zi) for a, b in iu]), den)


def svc_set(level: int, removed_total=Fraction(1, 4)) -> IntervalUnion:
    """Finite-level Smith-Volterra-Cantor set in [0, 1].

    Step k removes an open middle gap of length ``2 * removed_total * 4^-k``
    from each of the ``2^(k-1)`` current intervals, so the total removed at
    level n is ``removed_total * (1 - 2^-n)``.  Endpoints are Fractions.
    """
    level = int(level)
    if level < 0:
        raise ValueError("level must be nonnegative")
    removed_total = Fraction(removed_total)
    if not 0 < removed_total < 1:
        raise ValueError("removed_total must lie in (0, 1)")
    if level > SVC_MAX_LEVEL:
        warnings.warn(f"svc level {level} capped at {SVC_MAX_LEVEL}", RuntimeWarning, stacklevel=2)
        level = SVC_MAX_LEVEL
    ivs = [(Fraction(0), Fraction(1))]
    for k in range(1, level + 1):
        gap = 2 * removed_total / Fraction(4) ** k
        nxt = []
        for a, b in ivs:
            mid = (a + b) / 2
            nxt.append((a, mid - gap / 2))
            nxt.append((mid + gap / 2, b))
        ivs = nxt
    return IntervalUnion(tuple(ivs))


def svc_length(level: int, removed_total=Fraction(1, 4)) -> Fraction:
    removed_total = Fraction(removed_total)
    return 1 - removed_total * (1 - Fraction(1, 2 ** int(level)))


# ---------------------------------------------------------------------------
# measure representations


class LevyMeasure:
    dim: int = 1
    symmetric: bool = False
    # Re Phi is radially nondecreasing (true for every stable-type measure)
    radially_monotone: bool = False

    @property
    def total_mass(self) -> float:
        raise NotImplementedError

    @property
    def finite(self) -> bool:
        return math.isfinite(self.total_mass)

    def truncate(self, epsilon: float) -> "LevyMeasure":
        """``nu_eps``: the measure itself if finite, else ``nu`` on ``|z| >= eps``.

        ``epsilon`` may be None for finite measures.
        """
        if self.finite:
            return self
        if epsilon is None or not epsilon > 0:
            raise ValueError("epsilon must be positive for an infinite Levy measure")
        return self._truncate(float(epsilon))

    def _truncate(self, epsilon):
        raise NotImplementedError

    def small_jump_second_moment(self, epsilon: float) -> float:
        """``∫_{|z|<eps} |z|^2 nu(dz)``, the mass discarded by truncation."""
        if self.finite:
            return 0.0
        raise NotImplementedError

    def exponent(self, xi) -> np.ndarray:
        """Jump part of the symbol at each row of ``xi`` (shape ``(m, d)``)."""
        raise NotImplementedError

    def normalized(self) -> "LevyMeasure":
        return self.scaled(1.0 / self.total_mass)

    def scaled(self, c: float) -> "LevyMeasure":
        raise NotImplementedError

    def push(self, M) -> "LevyMeasure":
        """Image measure under the linear map ``z -> M z``."""
        raise RepresentationError(f"{type(self).__name__} has no image representation")

    def compensator_shift(self, M) -> np.ndarray:
        """``∫ M z (1{|z|<1} - 1{|Mz|<1}) nu(dz)``; zero for symmetric measures."""
        M = np.atleast_2d(np.asarray(M, dtype=float))
        if self.symmetric:
            return np.zeros(M.shape[0])
        raise RepresentationError(f"no compensator formula for {type(self).__name__}")


def _as_xi(xi, dim):
    """Rows of points: scalars and 1-d arrays are read as a batch when dim == 1."""
    xi = np.asarray(xi, dtype=float)
    if xi.ndim == 0:
        xi = xi.reshape(1, 1)
    elif xi.ndim == 1:
        xi = xi.reshape(-1, 1) if dim == 1 else xi.reshape(1, -1)
    if xi.shape[1] != dim:
        raise ValueError(f"xi has dimension {xi.shape[1]}, measure has {dim}")
    return xi


class Atomic(LevyMeasure):
    def __init__(self, atoms: Sequence, dim: Optional[int] = None):
        locs, masses = [], []
        for loc, m in atoms:
            locs.append(np.atleast_1d(np.asarray(loc, dtype=float)))
            masses.append(float(m))
        if dim is None:
            dim = locs[0].size if locs else 1
        self.dim = int(dim)
        self.locations = np.array(locs, dtype=float).reshape(-1, self.dim)
        self.masses = np.array(masses, dtype=float)
        if np.any(self.masses <= 0):
            raise ValueError("atom masses must be strictly positive")
        if np.any(np.all(self.locations == 0, axis=1)):
            raise ValueError("a Levy measure cannot charge the origin")

    def __repr__(self):
        return f"Atomic({len(self.masses)} atoms, dim={self.dim})"

    @property
    def total_mass(self):
        return float(self.masses.sum())

    def scaled(self, c):
        return Atomic(zip(self.locations, self.masses * c), self.dim)

    def shift(self, a) -> "Atomic":
        a = np.broadcast_to(np.asarray(a, dtype=float), (self.dim,))
        shifted = self.locations + a
        keep = ~np.all(shifted == 0, axis=1)
        return _AtomicUnchecked(shifted[keep], self.masses[keep], self.dim)

    def mass_at(self, z) -> np.ndarray:
        """Mass at each row of ``z`` (zero off the atoms)."""
        z = np.asarray(z, dtype=float).reshape(-1, self.dim)
        out = np.zeros(len(z))
        for loc, m in zip(self.locations, self.masses):
            out += m * np.all(np.isclose(z, loc, rtol=0, atol=1e-12), axis=1)
        return out

    def sample(self, size, gen) -> np.ndarray:
        p = self.masses / self.masses.sum()
        idx = gen.choice(len(p), size=size, p=p)
        return self.locations[idx]

    def exponent(self, xi):
        xi = _as_xi(xi, self.dim)
        ph = xi @ self.locations.T
        inside = np.linalg.norm(self.locations, axis=1) < 1.0
        terms = 1.0 - np.exp(1j * ph) + 1j * ph * inside
        return terms @ self.masses

    def push(self, M):
        M = np.atleast_2d(np.asarray(M, dtype=float))
        img = self.locations @ M.T
        keep = ~np.all(np.abs(img) == 0, axis=1)
        return _AtomicUnchecked(img[keep], self.masses[keep], M.shape[0])

    def compensator_shift(self, M):
        M = np.atleast_2d(np.asarray(M, dtype=float))
        img = self.locations @ M.T
        w = (np.linalg.norm(self.locations, axis=1) < 1.0).astype(float) - (
            np.linalg.norm(img, axis=1) < 1.0
        )
        return (img * (self.masses * w)[:, None]).sum(axis=0)


class _AtomicUnchecked(Atomic):
    """Atomic measure built from arrays (no origin check, for shifted copies)."""

    def __init__(self, locations, masses, dim):
        self.dim = int(dim)
        self.locations = np.asarray(locations, dtype=float).reshape(-1, self.dim)
        self.masses = np.asarray(masses, dtype=float)

    def scaled(self, c):
        return _AtomicUnchecked(self.locations, self.masses * c, self.dim)


class DensityOnIntervals(LevyMeasure):
    """``weight * density(z - offset)`` on a union of intervals (1-d).

    ``density=None`` means the constant 1, in which case masses, overlaps
    and the symbol are computed in closed form.
    """

    dim = 1

    def __init__(self, intervals, density: Optional[Callable] = None, quad_cells: int = DEFAULT_QUAD_CELLS,
                 weight: float = 1.0, offset: float = 0.0):
        if not isinstance(intervals, IntervalUnion):
            intervals = IntervalUnion.from_pairs(intervals)
        self.intervals = intervals
        self.density = density
        self.quad_cells = int(quad_cells)
        self.weight = float(weight)
        self.offset = float(offset)
        if self.weight <= 0:
            raise ValueError("density weight must be positive")
        self._cdf_cache = None

    def __repr__(self):
        kind = "const" if self.constant else "density"
        return f"DensityOnIntervals({len(self.intervals)} intervals, {kind}, weight={self.weight:g})"

    @property
    def constant(self) -> bool:
        return self.density is None

    def pdf(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        inside = self.intervals.contains(z)
        if self.constant:
            return np.where(inside, self.weight, 0.0)
        out = np.zeros(z.shape)
        if np.any(inside):
            with np.errstate(all="ignore"):
                out[inside] = self.weight * np.asarray(self.density(z[inside] - self.offset), dtype=float)
        return out

    def _nodes(self):
        """Midpoint nodes and weights (quad_cells per interval)."""
        arr = self.intervals.as_float_array()
        n = self.quad_cells
        h = (arr[:, 1] - arr[:, 0]) / n
        frac = (np.arange(n) + 0.5)
        nodes = arr[:, :1] + h[:, None] * frac[None, :]
        weights = np.broadcast_to(h[:, None], nodes.shape)
        return nodes.ravel(), weights.ravel()

    @property
    def total_mass(self):
        if self.constant:
            return self.weight * float(self.intervals.length)
        z, w = self._nodes()
        vals = _finite(self.pdf(z))
        return float(vals @ w)

    def scaled(self, c):
        return DensityOnIntervals(self.intervals, self.density, self.quad_cells, self.weight * c, self.offset)

    def shift(self, a) -> "DensityOnIntervals":
        a = float(np.asarray(a, dtype=float).reshape(-1)[0])
        return DensityOnIntervals(self.intervals.shift(a), self.density, self.quad_cells, self.weight,
                                  self.offset + a)

    def sample(self, size, gen) -> np.ndarray:
        arr = self.intervals.as_float_array()
        if self.constant:
            lengths = arr[:, 1] - arr[:, 0]
            cum = np.cumsum(lengths)
            u = gen.random(size) * cum[-1]
            idx = np.minimum(np.searchsorted(cum, u, side="right"), len(cum) - 1)
            start = cum[idx] - lengths[idx]
            return (arr[idx, 0] + (u - start)).reshape(-1, 1)
        # piecewise-constant inverse cdf on the midpoint cells
        if self._cdf_cache is None:
            z, w = self._nodes()
            mass = _finite(self.pdf(z)) * w
            self._cdf_cache = (z, w, np.cumsum(mass))
        z, w, cum = self._cdf_cache
        u = gen.random(size) * cum[-1]
        idx = np.minimum(np.searchsorted(cum, u, side="right"), len(cum) - 1)
        v = gen.random(size)
        return (z[idx] + (v - 0.5) * w[idx]).reshape(-1, 1)

    def exponent(self, xi):
        xi = _as_xi(xi, 1)[:, 0]
        if self.constant:
            return self.weight * _const_interval_exponent(self.intervals.as_float_array(), xi)
        return self._quad_exponent(xi)

    def _quad_exponent(self, xi):
        arr = _split_at(self.intervals.as_float_array(), (-1.0, 1.0))
        out = None
        est = None
        for cells in (self.quad_cells, self.quad_cells // 2):
            h = (arr[:, 1] - arr[:, 0]) / cells
            z = (arr[:, :1] + h[:, None] * (np.arange(cells) + 0.5)).ravel()
            w = np.broadcast_to(h[:, None], (len(arr), cells)).ravel()
            f = _finite(self.pdf(z)) * w
            inside = (np.abs(z) < 1.0)
            ph = np.outer(xi, z)
            val = (1.0 - np.exp(1j * ph) + 1j * ph * inside) @ f
            if out is None:
                out = val
            else:
                est = val
        err = np.abs(out - est) / 3.0
        if np.any(err > 1e-6 * (1.0 + np.abs(out))):
            raise AccuracyError("density symbol quadrature did not converge; increase quad_cells")
        return out

    def push(self, M):
        c = float(np.asarray(M, dtype=float).reshape(-1)[0])
        if np.asarray(M).size != 1 or c == 0.0:
            raise RepresentationError("density image only supported under nonzero scalar maps")
        base, off, w = self.density, self.offset, self.weight
        dens = None if base is None else (lambda z, base=base, off=off, c=c: base(z / c - off))
        return DensityOnIntervals(self.intervals.scale(c), dens, self.quad_cells, w / abs(c), 0.0)

    def compensator_shift(self, M):
        c = float(np.asarray(M, dtype=float).reshape(-1)[0])
        z, w = self._nodes()
        f = _finite(self.pdf(z)) * w
        ind = (np.abs(z) < 1.0).astype(float) - (np.abs(c * z) < 1.0)
        return np.array([float(np.sum(c * z * ind * f))])

    def total_variation(self) -> float:
        """Total variation of the density as a function on the line."""
        if self.constant:
            return 2.0 * self.weight * len(self.intervals)
        tv = 0.0
        for a, b in self.intervals.as_float_array():
            z = np.linspace(a, b, self.quad_cells + 1)
            v = _finite(self.pdf(z))
            tv += float(np.abs(np.diff(v)).sum()) + abs(v[0]) + abs(v[-1])
        return tv


def _finite(v):
    # drop integrable point singularities hit exactly by a node
    return np.where(np.isfinite(v), v, 0.0)


def _split_at(arr, points):
    out = []
    for a, b in arr:
        cuts = [a] + [p for p in points if a < p < b] + [b]
        out.extend(zip(cuts[:-1], cuts[1:]))
    return np.array(out, dtype=float).reshape(-1, 2)


def _const_interval_exponent(arr, xi):
    """∫ over the union of (1 - e^{i xi z} + i xi z 1{|z|<1}) dz, exactly."""
    a, b = arr[:, 0], arr[:, 1]
    xi = np.asarray(xi, dtype=float)
    X = xi[:, None]
    with np.errstate(all="ignore"):
        # ∫_a^b (1 - e^{i xi z}) dz
        body = (b - a) - (np.exp(1j * X * b) - np.exp(1j * X * a)) / (1j * X)
    # power series where the quotient cancels or overflows:
    # -sum_k (i xi)^k (b^{k+1} - a^{k+1}) / (k+1)!
    small = np.abs(X) * np.maximum(np.abs(a), np.abs(b)) < 0.05
    if np.any(small):
        series = np.zeros(np.broadcast(X, a).shape, dtype=complex)
        term = np.ones_like(series)
        for k in range(1, 11):
            term = term * (1j * X) / (k + 1)
            series -= term * (b ** (k + 1) - a ** (k + 1))
        body = np.where(small, series, body)
    ca, cb = np.clip(a, -1.0, 1.0), np.clip(b, -1.0, 1.0)
    comp = 0.5 * (cb ** 2 - ca ** 2)
    return (body + 1j * X * comp).sum(axis=1)


def _sphere_area(d):
    return 2.0 * math.pi ** (d / 2) / math.gamma(d / 2)


def stable_density_constant(alpha, scale, dim):
    """``c`` with ``∫ (1 - cos<xi,z>) c |z|^{-d-alpha} dz = scale |xi|^alpha``."""
    return scale * alpha * 2 ** (alpha - 1) * math.gamma((dim + alpha) / 2) / (
        math.pi ** (dim / 2) * math.gamma(1 - alpha / 2))


def _spherical_mean_cos(u, d):
    """Average of cos(u * theta_1) over the unit sphere in R^d."""
    u = np.asarray(u, dtype=float)
    if d == 1:
        return np.cos(u)
    if d == 3:
        return np.sinc(u / math.pi)
    nu = d / 2 - 1
    with np.errstate(invalid="ignore", divide="ignore"):
        val = math.gamma(d / 2) * (2.0 / u) ** nu * special.jv(nu, u)
    return np.where(u == 0, 1.0, val)


class SymmetricStable(LevyMeasure):
    symmetric = True
    radially_monotone = True

    def __init__(self, alpha: float, scale: float = 1.0, dim: int = 1):
        if not 0 < alpha < 2:
            raise ValueError("alpha must lie in (0, 2)")
        if scale <= 0:
            raise ValueError("scale must be positive")
        self.alpha, self.scale, self.dim = float(alpha), float(scale), int(dim)

    def __repr__(self):
        return f"SymmetricStable(alpha={self.alpha}, scale={self.scale}, dim={self.dim})"

    @classmethod
    def from_density_constant(cls, alpha, c, dim=1):
        return cls(alpha, c / stable_density_constant(alpha, 1.0, dim), dim)

    @property
    def density_constant(self):
        return stable_density_constant(self.alpha, self.scale, self.dim)

    @property
    def total_mass(self):
        return math.inf

    def scaled(self, c):
        return SymmetricStable(self.alpha, self.scale * c, self.dim)

    def _truncate(self, epsilon):
        return TruncatedStable(self, epsilon)

    def small_jump_second_moment(self, epsilon):
        return self.density_constant * _sphere_area(self.dim) * epsilon ** (2 - self.alpha) / (2 - self.alpha)

    def exponent(self, xi):
        xi = _as_xi(xi, self.dim)
        return (self.scale * np.linalg.norm(xi, axis=1) ** self.alpha).astype(complex)

    def push(self, M):
        M = np.atleast_2d(np.asarray(M, dtype=float))
        if M.shape[0] == M.shape[1] == self.dim:
            G = M @ M.T
            c2 = G[0, 0]
            if c2 > 0 and np.allclose(G, c2 * np.eye(self.dim), rtol=1e-12, atol=1e-14 * c2):
                return SymmetricStable(self.alpha, self.scale * c2 ** (self.alpha / 2), self.dim)
        return LinearImage(self, M)


class TruncatedStable(LevyMeasure):
    """Symmetric stable measure restricted to ``|z| >= epsilon``."""

    symmetric = True

    def __init__(self, base: SymmetricStable, epsilon: float, weight: float = 1.0):
        self.base, self.epsilon, self.weight = base, float(epsilon), float(weight)
        self.dim = base.dim
        self._g_inf = base.scale / (base.density_constant * _sphere_area(base.dim))

    def __repr__(self):
        return f"TruncatedStable({self.base!r}, eps={self.epsilon})"

    @property
    def total_mass(self):
        b = self.base
        return self.weight * b.density_constant * _sphere_area(b.dim) * self.epsilon ** (-b.alpha) / b.alpha

    def scaled(self, c):
        return TruncatedStable(self.base, self.epsilon, self.weight * c)

    def sample(self, size, gen):
        a = self.base.alpha
        r = self.epsilon * (1.0 - gen.random(size)) ** (-1.0 / a)
        if self.dim == 1:
            return (r * gen.choice([-1.0, 1.0], size=size)).reshape(-1, 1)
        g = gen.standard_normal((size, self.dim))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        return g * r[:, None]

    def _small(self, X):
        """∫_0^X (1 - M_d(u)) u^{-1-alpha} du."""
        a, d = self.base.alpha, self.dim
        f = lambda u: (1.0 - _spherical_mean_cos(u, d)) * u ** (-1 - a)
        val, err = integrate.quad(f, 0.0, X, limit=400)
        if err > 1e-9 * (1 + abs(val)):
            raise AccuracyError("truncated stable symbol quadrature did not converge")
        return val

    def exponent(self, xi):
        xi = _as_xi(xi, self.dim)
        r = np.linalg.norm(xi, axis=1)
        b = self.base
        out = np.empty(len(r))
        cache = {}
        for i, ri in enumerate(r):
            if ri not in cache:
                X = self.epsilon * ri
                if X == 0:
                    cache[ri] = 0.0
                elif X <= 60.0 or self.dim != 1:
                    cache[ri] = b.scale * ri ** b.alpha * (1.0 - self._small(X) / self._g_inf)
                else:
                    # ∫_X^∞ (1 - cos u) u^{-1-a} du, oscillatory part via QAWF
                    a = b.alpha
                    osc, _ = integrate.quad(lambda u: u ** (-1 - a), X, np.inf, weight="cos", wvar=1.0)
                    tail = X ** (-a) / a - osc
                    cache[ri] = b.scale * ri ** a * tail / self._g_inf
            out[i] = cache[ri]
        return self.weight * out.astype(complex)


class LinearImage(LevyMeasure):
    """Image of a symmetric measure under a linear map ``z -> M z``."""

    symmetric = True

    def __init__(self, base: LevyMeasure, M):
        if not base.symmetric:
            raise RepresentationError("linear images are only materialised for symmetric measures")
        self.base = base
        self.M = np.atleast_2d(np.asarray(M, dtype=float))
        self.dim = self.M.shape[0]
        self.radially_monotone = base.radially_monotone

    @property
    def total_mass(self):
        return self.base.total_mass

    def scaled(self, c):
        return LinearImage(self.base.scaled(c), self.M)

    def exponent(self, xi):
        xi = _as_xi(xi, self.dim)
        return self.base.exponent(xi @ self.M)

    def push(self, M):
        return LinearImage(self.base, np.atleast_2d(M) @ self.M)

    def sample(self, size, gen):
        return self.base.sample(size, gen) @ self.M.T


class Mixture(LevyMeasure):
    """Finite weighted sum of measures of a common dimension."""

    def __init__(self, components):
        self.components = [(float(w), m) for w, m in components]
        self.dim = self.components[0][1].dim
        self.symmetric = all(m.symmetric for _, m in self.components)
        self.radially_monotone = all(m.radially_monotone for _, m in self.components)

    @property
    def total_mass(self):
        return sum(w * m.total_mass for w, m in self.components)

    def scaled(self, c):
        return Mixture([(w * c, m) for w, m in self.components])

    def exponent(self, xi):
        xi = _as_xi(xi, self.dim)
        out = np.zeros(len(xi), dtype=complex)
        for w, m in self.components:
            out += w * m.exponent(xi)
        return out


class _RadialProfile:
    """Kernel ``s^{-1-alpha}`` on (0, r0) and ``s^{-1-beta}`` on [r0, inf)."""

    def __init__(self, alpha, beta, r0):
        self.alpha, self.beta, self.r0 = float(alpha), float(beta), float(r0)

    def kernel(self, s):
        s = np.asarray(s, dtype=float)
        tail = 0.0 if math.isinf(self.beta) else s ** (-1 - self.beta)
        return np.where(s < self.r0, s ** (-1 - self.alpha), tail)

    def mass_above(self, eps):
        a, b, r0 = self.alpha, self.beta, self.r0
        upper = 0.0 if math.isinf(b) else max(eps, r0) ** (-b) / b
        if eps < r0:
            upper += (eps ** (-a) - r0 ** (-a)) / a
        return upper

    def second_moment_below(self, eps):
        a, b, r0 = self.alpha, self.beta, self.r0
        m = min(eps, r0) ** (2 - a) / (2 - a)
        if eps > r0 and not math.isinf(b):
            m += (eps ** (2 - b) - r0 ** (2 - b)) / (2 - b) if b != 2 else math.log(eps / r0)
        return m

    def sample(self, eps, size, gen):
        a, b, r0 = self.alpha, self.beta, self.r0
        total = self.mass_above(eps)
        u = gen.random(size) * total
        out = np.empty(size)
        inner = (eps ** (-a) - r0 ** (-a)) / a if eps < r0 else 0.0
        lo = u < inner
        out[lo] = (eps ** (-a) - a * u[lo]) ** (-1 / a)
        start = max(eps, r0)
        rest = u[~lo] - inner
        # tail: mass above s is s^{-b}/b
        out[~lo] = (start ** (-b) - b * rest) ** (-1 / b)
        return out

    def psi(self, c, lower=0.0):
        """∫_lower^∞ (1 - e^{ics} + i c s 1{s<1}) k(s) ds for scalar c."""
        if c == 0.0:
            return 0j
        a, b, r0 = self.alpha, self.beta, self.r0
        top = r0 if math.isinf(b) else max(1.0, r0)
        pts = sorted({p for p in (r0, 1.0) if lower < p < top})
        k = self.kernel
        re_f = lambda s: (1 - math.cos(c * s)) * float(k(s))
        im_f = lambda s: (math.sin(c * s) - (c * s if s < 1 else 0.0)) * float(k(s))
        kw = dict(limit=400, points=pts or None)
        re, e1 = integrate.quad(re_f, lower, top, **kw)
        im, e2 = integrate.quad(im_f, lower, top, **kw)
        if not math.isinf(b):
            start = max(lower, top)
            mass = start ** (-b) / b
            cpart, e3 = integrate.quad(lambda s: s ** (-1 - b), start, np.inf, weight="cos", wvar=c)
            spart, e4 = integrate.quad(lambda s: s ** (-1 - b), start, np.inf, weight="sin", wvar=c)
            re += mass - cpart
            im += spart
            e1, e2 = e1 + e3, e2 + e4
        if max(e1, e2) > 1e-7 * (1 + abs(re) + abs(im)):
            raise AccuracyError("radial symbol quadrature did not converge")
        return complex(re, -im)


class SphericalStableLike(LevyMeasure):
    """``∫∫ 1_C(s theta) k(s) ds mu(dtheta)`` with ``mu`` a finite atomic measure on the sphere."""

    radially_monotone = False

    def __init__(self, alpha, beta, r0, sphere_atoms, epsilon: float = 0.0, weight: float = 1.0):
        if not 0 < alpha < 2:
            raise ValueError("alpha must lie in (0, 2)")
        if not beta > 0:
            raise ValueError("beta must be positive")
        dirs, ws = [], []
        for theta, w in sphere_atoms:
            theta = np.atleast_1d(np.asarray(theta, dtype=float))
            dirs.append(theta / np.linalg.norm(theta))
            ws.append(float(w))
        self.directions = np.array(dirs)
        self.weights = np.array(ws) * weight
        if np.any(self.weights <= 0):
            raise ValueError("sphere weights must be positive")
        self.dim = self.directions.shape[1]
        self.profile = _RadialProfile(alpha, beta, r0)
        self.alpha, self.beta, self.r0 = float(alpha), float(beta), float(r0)
        self.epsilon = float(epsilon)
        # symmetric iff the direction measure is
        self.symmetric = all(
            np.any(np.all(np.isclose(self.directions, -d), axis=1) & np.isclose(self.weights, w))
            for d, w in zip(self.directions, self.weights)
        )

    def __repr__(self):
        return f"SphericalStableLike(alpha={self.alpha}, beta={self.beta}, r0={self.r0}, eps={self.epsilon})"

    def _rebuild(self, epsilon=None, weight=1.0):
        return SphericalStableLike(self.alpha, self.beta, self.r0,
                                   zip(self.directions, self.weights * weight),
                                   self.epsilon if epsilon is None else epsilon)

    @property
    def total_mass(self):
        if self.epsilon == 0.0:
            return math.inf
        return float(self.weights.sum()) * self.profile.mass_above(self.epsilon)

    def scaled(self, c):
        return self._rebuild(weight=c)

    def _truncate(self, epsilon):
        return self._rebuild(epsilon=epsilon)

    def small_jump_second_moment(self, epsilon):
        if self.epsilon > 0:
            return 0.0
        return float(self.weights.sum()) * self.profile.second_moment_below(epsilon)

    def sample(self, size, gen):
        if self.epsilon == 0.0:
            raise PreconditionError("cannot sample an infinite measure; truncate first")
        p = self.weights / self.weights.sum()
        idx = gen.choice(len(p), size=size, p=p)
        r = self.profile.sample(self.epsilon, size, gen)
        return self.directions[idx] * r[:, None]

    def exponent(self, xi):
        xi = _as_xi(xi, self.dim)
        proj = xi @ self.directions.T
        out = np.zeros(len(xi), dtype=complex)
        cache = {}
        for j, w in enumerate(self.weights):
            for i, c in enumerate(proj[:, j]):
                if c not in cache:
                    cache[c] = self.profile.psi(float(c), lower=self.epsilon)
                out[i] += w * cache[c]
        return out

    def compensator_shift(self, M):
        if self.symmetric:
            return np.zeros(np.atleast_2d(M).shape[0])
        raise RepresentationError("compensator of asymmetric spherical measures is not materialised")


# ---------------------------------------------------------------------------
# overlap algebra


def overlap_mass(mu: LevyMeasure, nu: LevyMeasure) -> float:
    """Total mass of ``mu ^ nu`` for finite measures of the same kind."""
    if mu.dim != nu.dim:
        raise RepresentationError("measures live in different dimensions")
    if isinstance(mu, Atomic) and isinstance(nu, Atomic):
        return _atomic_overlap(mu, nu)
    if isinstance(mu, DensityOnIntervals) and isinstance(nu, DensityOnIntervals):
        if mu.constant and nu.constant:
            inter = mu.intervals.intersection_length(nu.intervals)
            return float(min(mu.weight, nu.weight) * float(inter))
        return _density_integral(mu, nu, np.minimum, union=False)
    raise RepresentationError(
        f"overlap between {type(mu).__name__} and {type(nu).__name__} is not supported")


def _atomic_overlap(mu, nu):
    total = 0.0
    for loc, m in zip(mu.locations, mu.masses):
        match = np.all(np.isclose(nu.locations, loc, rtol=0, atol=1e-12), axis=1)
        if match.any():
            total += min(m, float(nu.masses[match].sum()))
    return total


def _refined_segments(u: IntervalUnion, v: IntervalUnion, union: bool):
    pts = np.unique(np.concatenate([u.as_float_array().ravel(), v.as_float_array().ravel()]))
    a, b = pts[:-1], pts[1:]
    m = 0.5 * (a + b)
    in_u, in_v = u.contains(m), v.contains(m)
    keep = (in_u | in_v) if union else (in_u & in_v)
    return np.stack([a[keep], b[keep]], axis=1).reshape(-1, 2)


def _density_integral(mu, nu, op, union):
    segs = _refined_segments(mu.intervals, nu.intervals, union)
    if len(segs) == 0:
        return 0.0
    if mu.constant and nu.constant:
        # piecewise constant on the common refinement: exact
        m = 0.5 * (segs[:, 0] + segs[:, 1])
        f, g = mu.pdf(m), nu.pdf(m)
        return float(np.sum(op(f, g) * (segs[:, 1] - segs[:, 0])))
    n = max(mu.quad_cells, nu.quad_cells)
    h = (segs[:, 1] - segs[:, 0]) / n
    z = (segs[:, :1] + h[:, None] * (np.arange(n) + 0.5)).ravel()
    w = np.broadcast_to(h[:, None], (len(segs), n)).ravel()
    f, g = _finite(mu.pdf(z)), _finite(nu.pdf(z))
    return float(np.sum(op(f, g) * w))


def variation_distance(mu: LevyMeasure, nu: LevyMeasure) -> float:
    """``||mu - nu||_var``, computed without going through the overlap."""
    if isinstance(mu, Atomic) and isinstance(nu, Atomic):
        locs = np.vstack([mu.locations, nu.locations])
        uniq = []
        for loc in locs:
            if not any(np.allclose(loc, q, rtol=0, atol=1e-12) for q in uniq):
                uniq.append(loc)
        uniq = np.array(uniq)
        return float(np.abs(mu.mass_at(uniq) - nu.mass_at(uniq)).sum())
    if isinstance(mu, DensityOnIntervals) and isinstance(nu, DensityOnIntervals):
        return _density_integral(mu, nu, lambda f, g: np.abs(f - g), union=True)
    raise RepresentationError("variation distance needs comparable representations")


def shift_measure(nu: LevyMeasure, a) -> LevyMeasure:
    """``delta_a * nu``."""
    if not hasattr(nu, "shift"):
        raise RepresentationError(f"{type(nu).__name__} cannot be shifted")
    return nu.shift(a)


def _shift_grid(delta, shift_grid, dim):
    g = int(shift_grid)
    if g % 2 == 0:
        g += 1  # keep 0 on the grid
    if isinstance(delta, Fraction):
        axis = [-delta + 2 * delta * Fraction(i, g - 1) for i in range(g)] if g > 1 else [Fraction(0)]
    else:
        axis = list(np.linspace(-delta, delta, g)) if g > 1 else [0.0]
    if dim == 1:
        return [np.array([z]) if not isinstance(z, Fraction) else z for z in axis]
    mesh = np.stack(np.meshgrid(*([np.array(axis, dtype=float)] * dim), indexing="ij"), -1).reshape(-1, dim)
    return [z for z in mesh if np.linalg.norm(z) <= float(delta) * (1 + 1e-12)]


@dataclass(frozen=True)
class OverlapCertificate:
    grid_min: float
    argmin: float
    spacing: float
    slack: float
    certified_lower: float
    verdict: str = "grid-certified"

    def to_dict(self):
        return dict(self.__dict__)


def _overlap_at(nu, z):
    if isinstance(nu, DensityOnIntervals) and nu.constant and isinstance(z, Fraction):
        # exact path: weight * Leb(U ∩ (U + z))
        return nu.weight * _intersection_length(nu.intervals.intervals, nu.intervals.shift(z).intervals)
    zz = np.asarray(z, dtype=float).reshape(-1)
    return overlap_mass(nu, shift_measure(nu, zz if nu.dim > 1 else zz[0]))


def shifted_overlap_infimum(nu_eps: LevyMeasure, delta, shift_grid: int = 201) -> float:
    """Minimum of ``(nu_eps ^ delta_z * nu_eps)(R^d)`` over a grid of ``|z| <= delta``.

    A strictly positive value certifies the shifted-overlap condition on the
    grid (see :func:`overlap_certificate` for the Lipschitz slack).
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    return min(_grid_values(nu_eps, _shift_grid(delta, shift_grid, nu_eps.dim)))


def _grid_values(nu, zs):
    if isinstance(nu, DensityOnIntervals) and nu.constant and not isinstance(zs[0], Fraction):
        prof = IntervalAutocorrelation(nu.intervals)
        return [float(v) for v in nu.weight * prof(np.abs(np.concatenate(zs)))]
    return [float(_overlap_at(nu, z)) for z in zs]


def overlap_certificate(nu_eps: LevyMeasure, delta, shift_grid: int = 201) -> OverlapCertificate:
    """Grid minimum plus a Lipschitz slack for 1-d densities.

    ``|overlap(z) - overlap(z')| <= TV(density) |z - z'|``, so the true
    infimum is at least ``grid_min - TV * spacing / 2``.
    """
    zs = _shift_grid(delta, shift_grid, nu_eps.dim)
    vals = _grid_values(nu_eps, zs)
    i = int(np.argmin(vals))
    g = len(zs) if nu_eps.dim == 1 else int(shift_grid) | 1
    spacing = 2 * float(delta) / (g - 1) if g > 1 else 0.0
    if isinstance(nu_eps, DensityOnIntervals):
        slack = nu_eps.total_variation() * spacing / 2
    else:
        slack = 0.0  # atomic overlaps are piecewise constant; reported as-is
    z_star = zs[i]
    z_star = float(np.asarray(z_star, dtype=float).reshape(-1)[0]) if nu_eps.dim == 1 else float(np.linalg.norm(z_star))
    if isinstance(nu_eps, DensityOnIntervals) and nu_eps.constant:
        exact = nu_eps.weight * IntervalAutocorrelation(nu_eps.intervals).minimum(float(delta))
        return OverlapCertificate(vals[i], z_star, spacing, 0.0, min(exact, vals[i]), "exact-piecewise-linear")
    return OverlapCertificate(vals[i], z_star, spacing, slack, max(0.0, vals[i] - slack))


# ---------------------------------------------------------------------------
# density-overlap construction for a density lower bound rho0


@dataclass(frozen=True)
class DensityOverlapRegion:
    F: IntervalUnion
    delta: float
    lower_bound: float
    K: float
    sup_shift_l1: float
    inf_overlap: float
    probe_spacing: float

    def to_dict(self):
        d = dict(self.__dict__)
        d["F"] = [[float(a), float(b)] for a, b in self.F.intervals]
        return d


def _midpoint(arr, cells):
    h = (arr[:, 1] - arr[:, 0]) / cells
    z = (arr[:, :1] + h[:, None] * (np.arange(cells) + 0.5)).ravel()
    w = np.broadcast_to(h[:, None], (len(arr), cells)).ravel()
    return z, w


def _eval(rho0, z):
    with np.errstate(all="ignore"):
        return np.asarray(rho0(z), dtype=float)


def density_overlap_region(rho0: Callable, z0: float, epsilon: float, probe_grid: int = 41,
                           quad_cells: int = 1 << 14, delta_max: Optional[float] = None,
                           hole_fraction: float = 0.1) -> DensityOverlapRegion:
    """Closed ``F`` in the ball ``B(z0, eps)`` and ``delta`` with a uniform overlap bound.

    ``rho0`` must be a vectorised function on the real line.  Returns
    ``lower_bound = (K - sup_{|x|<=delta} ∫_F |rho0 - rho0(.-x)|) / 2 >= K/8``
    where ``K = ∫_F rho0``; the supremum is taken over ``probe_grid`` shifts.
    """
    z0, epsilon = float(z0), float(epsilon)
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    ball = np.array([[z0 - epsilon, z0 + epsilon]])

    # integrability of 1/rho0 on the ball, within the quadrature scheme
    integrals = []
    for cells in (quad_cells // 4, quad_cells):
        z, w = _midpoint(ball, cells)
        r = _eval(rho0, z)
        if np.any(~(r > 0)):
            raise PreconditionError("∫ dz / rho0 diverges on the ball: rho0 vanishes somewhere")
        integrals.append(float(np.sum(w / r)))
    if not all(map(math.isfinite, integrals)) or integrals[1] > 1.1 * integrals[0]:
        raise PreconditionError("∫ dz / rho0 does not converge under refinement")

    lo, hi = z0 - epsilon, z0 + epsilon
    eta = hole_fraction * epsilon
    if lo < eta and hi > -eta:
        pieces = [(lo, -eta)] if lo < -eta else []
        if hi > eta:
            pieces.append((eta, hi))
    else:
        pieces = [(lo, hi)]
    if not pieces:
        raise PreconditionError("ball too small to keep away from the origin")
    F = IntervalUnion(tuple(pieces))
    arrF = F.as_float_array()
    dist0 = float(np.min(np.abs(arrF)))
    if F.contains(0.0):
        dist0 = 0.0

    z, w = _midpoint(arrF, quad_cells)
    rz = _finite(_eval(rho0, z))
    K = float(np.sum(rz * w))
    if not K > 0:
        raise PreconditionError("rho0 has no mass on F")

    delta = min(dist0 / 2, epsilon) if delta_max is None else float(delta_max)
    for _ in range(60):
        xs = np.linspace(-delta, delta, int(probe_grid) | 1)
        l1 = np.empty(len(xs))
        shifted_mass = np.empty(len(xs))
        for i, x in enumerate(xs):
            rs = _finite(_eval(rho0, z - x))
            l1[i] = np.sum(np.abs(rz - rs) * w)
            shifted_mass[i] = np.sum(rs * w)
        sup = float(l1.max())
        if sup <= 0.75 * K:
            inf_overlap = float(np.min(0.5 * (K + shifted_mass - l1)))
            return DensityOverlapRegion(F, float(delta), 0.5 * (K - sup), K, sup, inf_overlap,
                                        float(xs[1] - xs[0]))
        delta /= 2
    raise AccuracyError("could not find delta with sup shift distance <= 3K/4")


class IntervalAutocorrelation:
    """``z -> len(u ∩ (u - z))`` for many shifts at once.

    Each pair of intervals contributes a trapezoid in ``z``, i.e. four ramps
    ``(z - c)_+`` with weights +1, -1, -1, +1.  Sorting the ramp corners once
    turns every evaluation into a binary search.  For dyadic endpoints (the
    SVC family) the cumulative sums are exact in double precision.
    """

    def __init__(self, u: IntervalUnion):
        arr = u.as_float_array()
        a, b = arr[:, 0], arr[:, 1]
        z1 = (a[None, :] - b[:, None]).ravel()
        z4 = (b[None, :] - a[:, None]).ravel()
        d1 = (a[None, :] - a[:, None]).ravel()
        d2 = (b[None, :] - b[:, None]).ravel()
        corners = np.concatenate([z1, np.minimum(d1, d2), np.maximum(d1, d2), z4])
        weights = np.concatenate([np.ones_like(z1), -np.ones_like(z1), -np.ones_like(z1), np.ones_like(z1)])
        order = np.argsort(corners, kind="stable")
        self._c = corners[order]
        self._W = np.concatenate([[0.0], np.cumsum(weights[order])])
        self._V = np.concatenate([[0.0], np.cumsum((weights * corners)[order])])

    def __call__(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        k = np.searchsorted(self._c, z, side="left")
        return np.maximum(z * self._W[k] - self._V[k], 0.0)

    def minimum(self, delta: float) -> float:
        """Exact ``min_{|z| <= delta}``: the profile is linear between corners."""
        c = self._c[(self._c > -delta) & (self._c < delta)]
        return float(self(np.concatenate([c, [-delta, delta]])).min())
