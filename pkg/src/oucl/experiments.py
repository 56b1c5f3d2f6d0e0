"""Experiment runner: gates, chunked sampling and artifact writing.

Every Monte Carlo stage is split into fixed-size chunks; chunk ``j`` of
stage ``i`` always draws from the same counter-based stream, so outputs do
not depend on how many worker threads process the chunks.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from fractions import Fraction
from pathlib import Path

import numpy as np

from .config import build_model, embedded_config, parse_rational
from .coupling import (_gate, coupling_tail_bound, fit_c_clt, fit_tail_slope, gamma_delta, reflection_table,
                       run_coupling_batch)
from .errors import AccuracyError, DegenerateError, GateError, PreconditionError, SpectralGateError
from .estimate import (bound_thm11, bound_thm17, fit_decay, gradient_sup_norm, indicator_halfline, tv_histogram,
                       TVCurve, TVRow)
from .measures import IntervalAutocorrelation, interval_overlap, overlap_certificate, svc_set
from .rng import RngStream
from .sampler import sample_ou_endpoint
from .spectral import matrix_exponential, operator_norm, spectral_report
from .symbol import _spread, bound_report, check_conditions, phi_inverse

# stream namespaces
_SAMPLES, _SAMPLES_Y, _BOOT, _COUPLING = 1, 2, 3, 4


def stream(seed: int, purpose: int, stage: int, chunk: int = 0) -> RngStream:
    """Collision-free stream id from (purpose, stage, chunk)."""
    if not (0 <= stage < 1 << 24 and 0 <= chunk < 1 << 24):
        raise ValueError("stage and chunk indices must be below 2^24")
    return RngStream(int(seed), (purpose << 48) | (stage << 24) | chunk)


def _chunks(total, size):
    return [min(size, total - s) for s in range(0, total, size)]


def _parallel(fn, jobs, workers):
    if workers <= 1:
        return [fn(*j) for j in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda j: fn(*j), jobs))


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    if v is None:
        return ""
    return str(v)


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (np.bool_,)):
        return bool(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else str(v)
    if isinstance(v, Fraction):
        return str(v)
    return v


def _dumps(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


class ArtifactWriter:
    """Writes CSVs with config sidecars, JSON summaries and the hash manifest."""

    def __init__(self, out_dir, cfg):
        self.out = Path(out_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.cfg = embedded_config(cfg)
        self.files = []

    def _write(self, name, text):
        (self.out / name).write_text(text)
        self.files.append(name)

    def csv(self, name, header, rows):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])
        self._write(name, buf.getvalue())
        self._write(name + ".json", _dumps({"file": name, "columns": list(header), "config": self.cfg}))

    def json(self, name, obj):
        self._write(name, _dumps(obj))

    def manifest(self) -> dict:
        files = {f: hashlib.sha256((self.out / f).read_bytes()).hexdigest() for f in sorted(self.files)}
        man = {"experiment": self.cfg["experiment"], "seed": self.cfg["seed"], "files": files}
        (self.out / "manifest.json").write_text(_dumps(man))
        return man


# ---------------------------------------------------------------------------
# gates


def _coupling_gates(model, epsilon, delta):
    """Spectral class, full rank of B and a positive shifted-overlap certificate."""
    try:
        rep = _gate(model)
    except SpectralGateError:
        raise
    except PreconditionError as exc:
        raise GateError(str(exc), hypothesis="rank") from exc
    if model.nu is None:
        raise GateError("the coupling needs a jump part", hypothesis="shifted-overlap")
    nu_eps = model.nu.truncate(epsilon) if epsilon else model.nu
    if not nu_eps.finite:
        raise GateError("truncated Levy measure is not finite; choose epsilon > 0", hypothesis="shifted-overlap")
    cert = overlap_certificate(nu_eps, delta)
    if not cert.certified_lower > 0:
        raise GateError(f"no certified shifted overlap at delta = {delta} (lower bound {cert.certified_lower})",
                        hypothesis="shifted-overlap")
    return rep, cert


def gate_report(cfg) -> dict:
    """Every gate the configured experiment needs, without raising."""
    exp = cfg["experiment"]
    out = {"experiment": exp, "gates": []}
    if "model" not in cfg:
        out["passed"] = True
        return out
    model = build_model(cfg["model"])
    rep = spectral_report(model.A)
    out["spectral"] = rep.to_dict()
    out["rank_B"] = int(model.rank_B)
    p = cfg.get("params", {})

    def add(name, ok, detail):
        out["gates"].append({"hypothesis": name, "passed": bool(ok), "detail": detail})

    if exp in ("tv_decay", "coupling_tail"):
        add("spectral", rep.couplable, rep.stability)
        add("rank", model.B_bar is not None, f"rank(B) = {model.rank_B}, n = {model.n}")
        try:
            _, cert = _coupling_gates(model, p.get("epsilon"), p.get("delta", 0.1))
            add("shifted-overlap", True, cert.to_dict())
        except GateError as exc:
            if exc.hypothesis == "shifted-overlap":
                add("shifted-overlap", False, str(exc))
    if exp == "coupling_tail" and rep.couplable and model.B_bar is not None:
        r = _coupling_radius(model, rep, p)
        add("coupling-radius", r[0], r[1])
    if exp == "negative_control":
        add("expanding-drift", rep.stability == "has_positive", rep.stability)
    out["passed"] = all(g["passed"] for g in out["gates"])
    return out


def _coupling_radius(model, rep, p):
    dist = float(np.linalg.norm(np.atleast_1d(p.get("x", 0.1)) - np.atleast_1d(p.get("y", 0.0))))
    cap = p.get("delta", 0.1) / (rep.c_a * operator_norm(model.B_bar))
    return dist <= cap * (1 + 1e-12), f"|x - y| = {dist}, limit = {cap}"


# ---------------------------------------------------------------------------
# experiments


def _tv_decay(cfg, w, workers):
    p = cfg.get("params", {})
    model = build_model(cfg["model"])
    eps, delta = p.get("epsilon"), p.get("delta", 0.1)
    _, cert = _coupling_gates(model, eps, delta)
    x = np.atleast_1d(np.asarray(p.get("x", 1.0), dtype=float))
    y = np.atleast_1d(np.asarray(p.get("y", 0.0), dtype=float))
    dist = float(np.linalg.norm(x - y))
    mode = p.get("mode", "cp_truncated")
    paired = p.get("paired", True)
    N, chunk = cfg.get("sample_count", 100000), p.get("chunk", 25000)
    sizes = _chunks(N, chunk)
    seed = cfg["seed"]

    def draw(t, point, purpose, ti, ci, size):
        return sample_ou_endpoint(model, t, point, mode, stream(seed, purpose, ti, ci), size, epsilon=eps).values

    rows = []
    for ti, t in enumerate(cfg["t_grid"]):
        X = np.concatenate(_parallel(draw, [(t, x, _SAMPLES, ti, ci, s) for ci, s in enumerate(sizes)], workers))
        if paired:
            # same driving noise: the two endpoints differ by e^{tA}(x - y)
            Y = X - matrix_exponential(model.A, t) @ (x - y)
            est = tv_histogram(X, Y, p.get("bins"), "bootstrap", p.get("trim", 0.0), stream(seed, _BOOT, ti))
        else:
            Y = np.concatenate(_parallel(draw, [(t, y, _SAMPLES_Y, ti, ci, s) for ci, s in enumerate(sizes)], workers))
            est = tv_histogram(X, Y, p.get("bins"), "binomial", p.get("trim", 0.0))
        rows.append((float(t), est))

    t0, tv0 = rows[0][0], rows[0][1].tv_hat
    C = p.get("C", tv0 * math.sqrt(t0) / (1 + dist))
    curve = TVCurve()
    for t, est in rows:
        b17 = None
        # a finite Levy measure has a bounded symbol, so the symbol bound does not apply
        if model.nu is None or not model.nu.finite:
            try:
                b17 = bound_thm17(model, t, x, y, C)
            except (AccuracyError, PreconditionError):
                pass
        curve.append(TVRow(t, est.tv_hat, est.std_err, bound_thm11(t, dist, C), b17))
    w.csv("tv_curve.csv", TVCurve.COLUMNS,
          [(r.t, r.tv_hat, r.std_err, r.bound_thm11, r.bound_thm17) for r in curve.rows])
    try:
        fit = fit_decay(curve).to_dict()
    except DegenerateError as exc:
        fit = {"error": str(exc)}
    C_hat = tv0 * math.sqrt(t0)
    envelope = [r.tv_hat <= C_hat / math.sqrt(r.t) for r in curve.rows]
    summary = {
        "fit": fit, "C_hat": C_hat, "C": C, "envelope_ok": all(envelope), "certificate": cert.to_dict(),
        "paired": paired, "mode": mode, "sample_count": N,
        "passed": bool(all(envelope) and "slope" in fit and fit["slope"] <= -0.4 and fit["r_squared"] >= 0.9),
    }
    w.json("summary.json", summary)
    return summary


def _coupling_tail(cfg, w, workers):
    p = cfg.get("params", {})
    model = build_model(cfg["model"])
    eps, delta = p.get("epsilon"), p.get("delta", 0.1)
    rep, _ = _coupling_gates(model, eps, delta)
    ok, detail = _coupling_radius(model, rep, p)
    if not ok:
        raise GateError(f"starting points too far apart for the coupling: {detail}", hypothesis="coupling-radius")
    x, y = p.get("x", 0.1), p.get("y", 0.0)
    horizon = p.get("horizon", 50.0)
    runs, chunk = cfg.get("sample_count", 10000), p.get("chunk", 2500)
    seed = cfg["seed"]

    def batch(ci, size):
        return run_coupling_batch(model, eps, horizon, x, y, size, stream(seed, _COUPLING, 0, ci))

    batches = _parallel(batch, list(enumerate(_chunks(runs, chunk))), workers)
    T = np.concatenate([b.coupling_steps for b in batches])
    N = np.concatenate([b.jump_counts for b in batches])
    gap = batches[0].gap
    w.csv("runs.csv", ("run_id", "jump_count", "coupling_step", "gap"),
          [(i, int(n), int(s), gap) for i, (n, s) in enumerate(zip(N, T))])

    merged = type(batches[0])(T, N, gap, batches[0].meta)
    ks = p.get("ks", [4, 8, 16, 32, 64, 128])
    k0 = p.get("k0", 4)
    all_ks = sorted(set(ks) | {k0})
    probs, known = merged.tail(all_ks)
    tail = dict(zip(all_ks, probs))
    nu_bar = (model.nu.truncate(eps) if eps else model.nu).normalized()
    gamma = gamma_delta(nu_bar, delta)
    c_clt = fit_c_clt(tail[k0], k0)
    env = {k: coupling_tail_bound(gamma, k, c_clt) for k in all_ks}
    w.csv("tail.csv", ("k", "tail_prob", "envelope", "known_runs"),
          [(k, tail[k], env[k], int(n)) for k, n in zip(all_ks, known)])
    checked = [k for k in ks if k != k0]
    envelope_ok = all(tail[k] <= env[k] for k in checked)
    slope = fit_tail_slope(checked, [tail[k] for k in checked])
    summary = {
        "gamma": gamma, "c_clt": c_clt, "k0": k0, "slope": slope, "envelope_ok": envelope_ok,
        "slope_ok": -0.65 <= slope <= -0.40, "coupled_fraction": float((T >= 0).mean()),
        "intensity": float(batches[0].meta["C"]), "gap": gap,
    }
    summary["passed"] = bool(envelope_ok and summary["slope_ok"])
    w.json("summary.json", summary)
    return summary


def _lemma23_sweep(cfg, w, workers):
    p = cfg.get("params", {})
    rs = [parse_rational(r) for r in p.get("r", ["0", "3/10", "3/5"])]
    rows = reflection_table(p.get("kmax", 12), rs)
    w.csv("lemma23.csv", ("k", "a", "r", "inequality", "lhs", "rhs", "holds"), rows)
    violations = sum(1 for r in rows if not r[-1])
    summary = {"checked": len(rows), "violations": violations, "passed": violations == 0}
    w.json("summary.json", summary)
    return summary


def _symbol_bounds(cfg, w, workers):
    p = cfg.get("params", {})
    model = build_model(cfg["model"])
    cond = check_conditions(model, t0=p.get("t0", 1.0), xi_range=p.get("xi_range", 1e6))
    rows = []
    for t in cfg["t_grid"]:
        r = bound_report(model, t, p.get("x", 1.0), p.get("y", 0.0), p.get("C", 1.0), p.get("c", 1.0), cond)
        rows.append((r.t, r.phi_t_inverse, r.tv_bound, r.gradient_bound_small_t, r.gradient_bound_large_t))
    w.csv("bounds.csv", ("t", "phi_t_inverse", "tv_bound", "gradient_bound_small_t", "gradient_bound_large_t"),
          rows)
    summary = {"conditions": cond.to_dict(), "passed": True}
    w.json("summary.json", summary)
    return summary


def _cos(z):
    z = np.asarray(z, dtype=float)
    return np.cos(z if z.ndim == 1 else z.sum(axis=1))


_TEST_FUNCTIONS = {"indicator_halfline": indicator_halfline, "cos": _cos}


def _gradient_scan(cfg, w, workers):
    p = cfg.get("params", {})
    model = build_model(cfg["model"])
    f = _TEST_FUNCTIONS[p.get("f", "indicator_halfline")]
    probe = p.get("probe", {"lo": -0.5, "hi": 0.5, "count": 21})
    relative = p.get("relative_probe", True)
    rows, sups = [], {}
    for t in cfg["t_grid"]:
        s = _spread(model, t) if relative else 1.0
        spec = [{"lo": probe["lo"] * s, "hi": probe["hi"] * s, "count": probe["count"]}] * model.n
        g = gradient_sup_norm(model, t, f, spec)
        try:
            inv = phi_inverse(model, None, 1.0 / min(t, 1.0))
        except AccuracyError:
            inv = None
        sups[float(t)] = g.sup_norm
        rows.append((float(t), g.sup_norm, g.step, g.argmax[0], inv))
    w.csv("gradient.csv", ("t", "sup_norm", "step", "argmax", "phi_inverse_small_t"), rows)
    ratios = {str(t): sups[t / 2] / sups[t] for t in sups if t / 2 in sups and sups[t] > 0}
    summary = {"ratios_half_to_full": ratios, "passed": True}
    w.json("summary.json", summary)
    return summary


def _cantor_demo(cfg, w, workers):
    p = cfg.get("params", {})
    level = p.get("level", 10)
    removed = parse_rational(p.get("removed", "1/4"))
    delta = parse_rational(p.get("delta", "1/10"))
    grid = p.get("grid", 201)
    u = svc_set(level, removed)
    zs = [-delta + 2 * delta * Fraction(k, grid - 1) for k in range(grid)] if grid > 1 else [Fraction(0)]
    vals = [interval_overlap(u, z) for z in zs]
    quarter = Fraction(1, 4)
    w.csv("overlap.csv", ("z", "overlap", "overlap_float", "ge_quarter"),
          [(z, v, float(v), v >= quarter) for z, v in zip(zs, vals)])
    vmin = min(vals)
    exact_min = IntervalAutocorrelation(u).minimum(float(delta))
    summary = {"level": level, "removed": removed, "delta": delta, "length": u.length,
               "grid_min": vmin, "grid_min_float": float(vmin), "continuous_min_float": exact_min,
               "passed": bool(vmin >= quarter)}
    w.json("summary.json", summary)
    return summary


def _overlap_check(cfg, w, workers):
    p = cfg.get("params", {})
    model = build_model(cfg["model"])
    if model.nu is None:
        raise GateError("model has no Levy measure", hypothesis="shifted-overlap")
    eps, delta = p.get("epsilon"), p.get("delta", 0.1)
    nu_eps = model.nu.truncate(eps) if eps else model.nu
    if not nu_eps.finite:
        raise GateError("truncated Levy measure is not finite; choose epsilon > 0", hypothesis="shifted-overlap")
    cert = overlap_certificate(nu_eps, delta, p.get("grid", 201))
    summary = {"certificate": cert.to_dict(), "total_mass": float(nu_eps.total_mass),
               "passed": bool(cert.certified_lower > 0)}
    w.json("certificate.json", summary)
    w.csv("certificate.csv", tuple(cert.to_dict()), [tuple(cert.to_dict().values())])
    return summary


def _negative_control(cfg, w, workers):
    p = cfg.get("params", {})
    model = build_model(cfg["model"])
    rep = spectral_report(model.A)
    if rep.stability != "has_positive":
        raise GateError(f"negative control needs an eigenvalue with positive real part, drift is {rep.stability}",
                        hypothesis="expanding-drift")
    x, y = p.get("x", 1.0), p.get("y", 0.0)
    mode, eps = p.get("mode", "stable_exact"), p.get("epsilon")
    N, chunk = cfg.get("sample_count", 100000), p.get("chunk", 25000)
    sizes = _chunks(N, chunk)
    seed = cfg["seed"]
    rows = []
    for ti, t in enumerate(cfg["t_grid"]):
        def draw(point, purpose, ci, size):
            return sample_ou_endpoint(model, t, point, mode, stream(seed, purpose, ti, ci), size, epsilon=eps).values

        X = np.concatenate(_parallel(draw, [(x, _SAMPLES, ci, s) for ci, s in enumerate(sizes)], workers))
        Y = np.concatenate(_parallel(draw, [(y, _SAMPLES_Y, ci, s) for ci, s in enumerate(sizes)], workers))
        est = tv_histogram(X, Y, p.get("bins"), "binomial", p.get("trim", 0.01))
        rows.append((float(t), est.tv_hat, est.std_err))
    w.csv("tv_curve.csv", ("t", "tv_hat", "std_err"), rows)
    threshold = p.get("threshold", 0.5)
    tv_min = min(r[1] for r in rows)
    summary = {"tv_min": tv_min, "threshold": threshold, "stability": rep.stability,
               "passed": bool(tv_min >= threshold)}
    w.json("summary.json", summary)
    return summary


RUNNERS = {
    "tv_decay": _tv_decay,
    "coupling_tail": _coupling_tail,
    "lemma23_sweep": _lemma23_sweep,
    "symbol_bounds": _symbol_bounds,
    "gradient_scan": _gradient_scan,
    "cantor_demo": _cantor_demo,
    "overlap_check": _overlap_check,
    "negative_control": _negative_control,
}


def run_experiment(cfg: dict, out_dir=None, workers: int = None) -> dict:
    """Run a validated config; returns the manifest (file name -> sha256)."""
    out_dir = out_dir or cfg.get("output_dir", "oucl_out")
    workers = int(workers or cfg.get("workers", 1))
    w = ArtifactWriter(out_dir, cfg)
    summary = RUNNERS[cfg["experiment"]](cfg, w, workers)
    man = w.manifest()
    man["summary"] = summary
    return man
