"""Total-variation estimators, decay fits and gradient measurements.

Total variation uses the total-mass convention throughout:
``||mu - nu|| = sum |mu(C_j) - nu(C_j)|`` over a partition, so two laws
with disjoint supports are at distance 2.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .errors import DegenerateError, PreconditionError
from .rng import as_generator
from .spectral import matrix_exponential, operator_norm
from .symbol import Lattice, OUModel, _spread, density_via_fourier, fourier_invert, phi_inverse

MIN_SAMPLES = 1000


@dataclass
class TVEstimate:
    tv_hat: float
    std_err: float
    std_err_bound: float
    cells: int
    method: str

    def __iter__(self):
        return iter((self.tv_hat, self.std_err))


def _edges(pooled, bins, trim):
    edges = []
    for j in range(pooled.shape[1]):
        col = pooled[:, j]
        if trim:
            lo, hi = np.quantile(col, [trim, 1 - trim])
        else:
            lo, hi = col.min(), col.max()
        if hi <= lo:
            hi = lo + 1.0
        inner = np.linspace(lo, hi, bins + 1)
        if trim:
            inner = np.concatenate([[-np.inf], inner, [np.inf]])
        edges.append(inner)
    return edges


def _cell_index(samples, edges):
    idx = np.zeros(len(samples), dtype=np.int64)
    for j, e in enumerate(edges):
        k = np.clip(np.searchsorted(e, samples[:, j], side="right") - 1, 0, len(e) - 2)
        idx = idx * (len(e) - 1) + k
    return idx


def tv_histogram(samples_x, samples_y, bins_per_axis: Optional[int] = None, std_err: str = "binomial",
                 trim: float = 0.0, rng=None, n_boot: int = 200) -> TVEstimate:
    """Histogram estimate of ``||P_x - P_y||`` on a common grid.

    The grid spans the pooled samples (or their ``[trim, 1-trim]`` quantile
    box, with overflow cells on both sides).  ``std_err="binomial"``
    propagates per-cell binomial variances; ``"bootstrap"`` resamples
    pairs ``(x_i, y_i)``, which is the right choice when the two sample sets
    share random numbers.  ``std_err_bound`` is the crude ``sqrt(2 cells/N)``.
    """
    X = np.asarray(samples_x, dtype=float)
    Y = np.asarray(samples_y, dtype=float)
    if len(X) == 0 or len(Y) == 0:
        raise PreconditionError("empty sample set")
    X = X.reshape(len(X), -1)
    Y = Y.reshape(len(Y), -1)
    if X.shape[1] != Y.shape[1]:
        raise PreconditionError("sample sets have different dimensions")
    n = X.shape[1]
    if bins_per_axis is None:
        bins_per_axis = 64 if n == 1 else 32
    edges = _edges(np.vstack([X, Y]), int(bins_per_axis), trim)
    cells = int(np.prod([len(e) - 1 for e in edges]))
    ix, iy = _cell_index(X, edges), _cell_index(Y, edges)
    Nx, Ny = len(X), len(Y)
    px = np.bincount(ix, minlength=cells) / Nx
    py = np.bincount(iy, minlength=cells) / Ny
    tv = float(np.abs(px - py).sum())
    bound = math.sqrt(2.0 / min(Nx, Ny)) * math.sqrt(cells)
    if std_err == "binomial":
        se = math.sqrt(float(np.sum(px * (1 - px) / Nx + py * (1 - py) / Ny)))
    elif std_err == "bootstrap":
        if Nx != Ny:
            raise PreconditionError("the paired bootstrap needs equal sample counts")
        gen = as_generator(0 if rng is None else rng)
        reps = np.empty(n_boot)
        for b in range(n_boot):
            sel = gen.integers(0, Nx, Nx)
            reps[b] = np.abs(np.bincount(ix[sel], minlength=cells) - np.bincount(iy[sel], minlength=cells)).sum() / Nx
        se = float(reps.std(ddof=1))
    else:
        raise ValueError(f"unknown std_err method {std_err!r}")
    return TVEstimate(min(tv, 2.0), se, bound, cells, std_err)


def _abs_integral(v, h):
    """``∫ |f|`` for the piecewise-linear interpolant of samples ``v``.

    ``h`` is the spacing, or an array of cell widths.
    """
    a, b = v[:-1], v[1:]
    same = a * b >= 0
    with np.errstate(invalid="ignore", divide="ignore"):
        cross = (a * a + b * b) / (2 * (np.abs(a) + np.abs(b)))
    cell = np.where(same, 0.5 * (np.abs(a) + np.abs(b)), np.nan_to_num(cross))
    return float(np.sum(cell * h))


def tv_exact_1d(model: OUModel, t: float, x: float, y: float, core_points: int = (1 << 15) + 1,
                core_width: float = 20.0, tail_width: float = 4000.0) -> float:
    """``∫ |p_t(z - e^{tA}x) - p_t(z - e^{tA}y)| dz`` by Fourier inversion.

    A fine lattice covers ``core_width`` spreads around the two means; a
    coarse lattice out to ``tail_width`` spreads picks up heavy tails.
    """
    if model.n != 1:
        raise PreconditionError("tv_exact_1d needs a one-dimensional model")
    E = float(matrix_exponential(model.A, t)[0, 0])
    mx, my = E * float(x), E * float(y)
    if mx == my:
        return 0.0
    s = _spread(model, t)
    c = 0.5 * (mx + my)
    half = core_width * s + abs(mx - my)
    shifts = ((1.0, np.array([mx - c])), (-1.0, np.array([my - c])))
    core = Lattice.symmetric(half, core_points)
    v = fourier_invert(model, t, core, shifts)
    total = _abs_integral(v, core.step[0])
    wide = tail_width * s + abs(mx - my)
    m = (1 << 16) + 1
    outer = Lattice.symmetric(wide, m)
    w = fourier_invert(model, t, outer, shifts)
    z = outer.axes()[0]
    # stitch each tail to the matching end of the core lattice
    for zs, ws, edge, val in ((z[z > half], w[z > half], half, v[-1]),
                              (-z[z < -half][::-1], w[z < -half][::-1], half, v[0])):
        pts = np.concatenate([[edge], zs])
        total += _abs_integral(np.concatenate([[val], ws]), np.diff(pts))
    return float(min(total, 2.0))


# ---------------------------------------------------------------------------
# decay curves


@dataclass
class TVRow:
    t: float
    tv_hat: float
    std_err: float
    bound_thm11: float
    bound_thm17: Optional[float] = None


class TVCurve:
    COLUMNS = ("t", "tv_hat", "std_err", "bound_thm11", "bound_thm17")

    def __init__(self, rows: Sequence[TVRow] = ()):
        self.rows = list(rows)

    def append(self, row: TVRow):
        if not 0 <= row.tv_hat <= 2:
            raise ValueError("tv_hat must lie in [0, 2]")
        self.rows.append(row)

    def column(self, name) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows], dtype=float)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.COLUMNS)
            for r in self.rows:
                w.writerow([repr(float(r.t)), repr(float(r.tv_hat)), repr(float(r.std_err)),
                            repr(float(r.bound_thm11)), "" if r.bound_thm17 is None else repr(float(r.bound_thm17))])


def bound_thm11(t, dist, C: float = 1.0) -> float:
    """``C (1 + |x - y|) / sqrt(t)`` capped at 2."""
    return min(C * (1.0 + dist) / math.sqrt(t), 2.0)


def bound_thm17(model: OUModel, t, x, y, C: float = 1.0) -> float:
    """``C |e^{tA}(x - y)| phi_t^{-1}(1)`` capped at 2."""
    d = matrix_exponential(model.A, t) @ (np.atleast_1d(x) - np.atleast_1d(y))
    return min(C * float(np.linalg.norm(d)) * phi_inverse(model, t), 2.0)


@dataclass
class FitResult:
    slope: float
    intercept: float
    r_squared: float
    rows_used: int

    def to_dict(self):
        return asdict(self)


def fit_decay(curve, saturation: float = 1.9, noise_factor: float = 3.0) -> FitResult:
    """Least squares of ``log tv_hat`` on ``log t``.

    Rows above ``saturation`` or at most ``noise_factor`` standard errors
    are dropped; at least four rows must remain.
    """
    if isinstance(curve, TVCurve):
        t, tv, se = curve.column("t"), curve.column("tv_hat"), curve.column("std_err")
    else:
        t, tv, se = (np.asarray(c, dtype=float) for c in curve)
    ok = (tv <= saturation) & (tv > noise_factor * se) & (tv > 0) & (t > 0)
    if ok.sum() < 4:
        raise DegenerateError(f"only {int(ok.sum())} usable rows (need 4): all others saturated or in the noise")
    lt, lv = np.log(t[ok]), np.log(tv[ok])
    slope, intercept = np.polyfit(lt, lv, 1)
    resid = lv - (slope * lt + intercept)
    ss_tot = float(np.sum((lv - lv.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return FitResult(float(slope), float(intercept), max(0.0, min(1.0, r2)), int(ok.sum()))


# ---------------------------------------------------------------------------
# gradients


@dataclass
class GradientResult:
    sup_norm: float
    step: float
    argmax: tuple


def _probe_axes(probe_grid, n):
    lat = Lattice.from_spec(probe_grid)
    if lat.dim != n:
        raise PreconditionError("probe grid dimension must match the model")
    return lat


def gradient_sup_norm(model: OUModel, t: float, f: Callable, probe_grid, cell: Optional[float] = None,
                      width: float = 40.0) -> GradientResult:
    """``max |grad P_t f|`` over the probe grid by central differences.

    ``P_t f(x) = ∫ f(w) p_t(w - e^{tA}x) dw`` is evaluated with the midpoint
    rule on cells aligned to the origin (so indicators of half-spaces
    through 0 are integrated exactly) and ``p_t`` interpolated from a
    Fourier-inverted lattice.  The difference step is the probe spacing.
    """
    if t <= 0:
        raise PreconditionError("t must be positive")
    n = model.n
    if n > 2:
        raise PreconditionError("gradient scans support n <= 2")
    lat = _probe_axes(probe_grid, n)
    E = matrix_exponential(model.A, t)
    s = _spread(model, t)
    h = cell if cell is not None else s / 200.0
    count = int(2 * width * s / h) | 1
    dens_lat = Lattice.symmetric(width * s, min(count, (1 << 17) + 1) if n == 1 else min(count, 513), n)
    p = density_via_fourier(model, t, dens_lat).values
    axes = dens_lat.axes()
    interp = RegularGridInterpolator(axes, p, bounds_error=False, fill_value=0.0)

    probes = np.stack(np.meshgrid(*lat.axes(), indexing="ij"), -1).reshape(-1, n)
    means = probes @ E.T
    lo = means.min(axis=0) - width * s
    hi = means.max(axis=0) + width * s
    hw = dens_lat.step[0] if n == 1 else (hi - lo).max() / 256
    w_axes = [(np.arange(math.floor(l / hw), math.ceil(u / hw)) + 0.5) * hw for l, u in zip(lo, hi)]
    W = np.stack(np.meshgrid(*w_axes, indexing="ij"), -1).reshape(-1, n)
    fw = np.asarray(f(W if n > 1 else W[:, 0]), dtype=float).reshape(-1)
    vol = hw ** n
    Pf = np.empty(len(probes))
    for i, m in enumerate(means):
        Pf[i] = float(fw @ interp(W - m)) * vol
    Pf = Pf.reshape(lat.count)
    grads = []
    for j in range(n):
        d = (np.roll(Pf, -1, axis=j) - np.roll(Pf, 1, axis=j)) / (2 * lat.step[j])
        sl = [slice(None)] * n
        sl[j] = slice(1, -1)
        mask = np.zeros(lat.count, dtype=bool)
        mask[tuple(sl)] = True
        grads.append(np.where(mask, d, 0.0))
    norm = np.sqrt(sum(g ** 2 for g in grads))
    k = np.unravel_index(int(np.argmax(norm)), norm.shape)
    arg = tuple(float(ax[i]) for ax, i in zip(lat.axes(), k))
    return GradientResult(float(norm[k]), float(min(lat.step)), arg)


def indicator_halfline(z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if z.ndim == 2:
        z = z[:, 0]
    return (z >= 0).astype(float)
