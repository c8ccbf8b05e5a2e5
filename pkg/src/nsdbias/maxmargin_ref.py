"""Reference max-margin solutions ``argmax_{|W| <= 1} m(W)`` per norm.

The margin is concave and piecewise linear in ``W``, so the problem is a
concave maximization over a convex ball. Two phases, both projected:

1. subgradient ascent with step ``eta0 / sqrt(j + 1)`` from a small random
   start, stopped after ``patience`` iterations without improvement;
2. accelerated (FISTA, backtracking) ascent on the softmin smoothing
   ``-tau log sum_j exp(-g_j / tau)`` of the margin, ``tau`` decreasing
   geometrically from ``tau_start`` to ``tau_end`` times the phase-1 margin.

The best iterate by true margin over both phases is returned.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy.special import logsumexp, softmax

from .densela import ALL_NORMS, NormKind, matrix_norm, project_norm_ball
from .errors import NotImprovedError
from .linmodel import margin, margin_pairs
from .synthdata import read_manifest, write_manifest


LIP_FLOOR = 1e-8  # keeps the FISTA step finite on locally linear pieces


@dataclass(frozen=True)
class SolveConfig:
    max_iters: int = 20_000
    eta0: float = 1.0
    patience: int = 2_000
    tol: float = 1e-9
    smooth_stages: int = 11
    smooth_iters: int = 500
    tau_start: float = 1e-1
    tau_end: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        for name in ("max_iters", "eta0", "patience", "tol", "tau_start", "tau_end"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.smooth_stages < 0 or self.smooth_iters < 0:
            raise ValueError("smoothing budget must be >= 0")


@dataclass(frozen=True, eq=False)
class ReferenceSolution:
    w_star: np.ndarray
    kind: NormKind
    margin_value: float
    solve_trace: tuple = ()  # (iteration, best margin) at each improvement
    iterations: int = 0
    seed: int = 0


def margin_subgradient(w, ds) -> np.ndarray:
    """Supergradient of the margin: ``+x_i`` in row ``y_i``, ``-x_i`` in row ``y``
    for the lexicographically first active pair ``(i, y)``."""
    return _pair_matrix(margin(w, ds), ds)


def _pair_matrix(res, ds):
    g = np.zeros((ds.k, ds.d))
    x = ds.features[res.index]
    g[ds.label_index[res.index]] += x
    g[res.label - 1] -= x
    return g


class _Incumbent:
    def __init__(self):
        self.value = -np.inf
        self.w = None
        self.trace = []

    def offer(self, j, w, value):
        if value > self.value:
            self.value = value
            self.w = w
            self.trace.append((j, value))
            return True
        return False


def _smoothed(w, ds, tau):
    """Softmin-smoothed margin and its gradient w.r.t. ``W``."""
    g = margin_pairs(w, ds)
    z = -g / tau
    f = -tau * logsumexp(z)
    wt = softmax(z.ravel()).reshape(g.shape)
    coef = -wt
    coef[np.arange(ds.n), ds.label_index] = wt.sum(axis=1)
    return f, coef.T @ ds.features


def _fista_stage(w, ds, kind, tau, iters, inc, j0):
    y = w
    t_k = 1.0
    lip = 1.0
    j = j0
    for _ in range(iters):
        f, grad = _smoothed(y, ds, tau)
        while True:
            w_new = project_norm_ball(y + grad / lip, kind)
            step = w_new - y
            f_new, _ = _smoothed(w_new, ds, tau)
            if f_new >= f + np.sum(grad * step) - 0.5 * lip * np.sum(step * step) - 1e-15:
                break
            lip *= 2.0
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_k * t_k))
        y = w_new + ((t_k - 1.0) / t_next) * (w_new - w)
        w = w_new
        t_k = t_next
        lip = max(0.9 * lip, LIP_FLOOR)
        j += 1
        inc.offer(j, w, margin(w, ds).value)
    return w, j


def solve_max_margin(ds, kind, cfg: SolveConfig | None = None, *,
                     require_positive: bool = False, seed: int | None = None) -> ReferenceSolution:
    """Maximize the margin over the unit ``kind``-ball.

    With ``require_positive`` (data known to be separable) a non-positive final
    margin raises ``NotImprovedError`` carrying the solve trace.
    """
    cfg = cfg or SolveConfig()
    kind = NormKind.parse(kind)
    seed = cfg.seed if seed is None else seed
    rng = np.random.default_rng(seed)
    w = project_norm_ball(rng.normal(0.0, 0.1, (ds.k, ds.d)), kind)

    inc = _Incumbent()
    last_gain = 0
    j = 0
    for j in range(cfg.max_iters):
        m = margin(w, ds)
        if m.value > inc.value + cfg.tol:
            last_gain = j
        inc.offer(j, w, m.value)
        if j - last_gain >= cfg.patience:
            break
        step = cfg.eta0 / np.sqrt(j + 1.0)
        w = project_norm_ball(w + step * _pair_matrix(m, ds), kind)
    j += 1

    if cfg.smooth_stages > 0 and cfg.smooth_iters > 0:
        if inc.value > 0:
            scale = inc.value
        else:
            scale = 1e-3 * float(np.linalg.norm(ds.features, axis=1).max())
        taus = np.geomspace(cfg.tau_start, cfg.tau_end, cfg.smooth_stages) * scale
        w = inc.w
        for tau in taus:
            w, j = _fista_stage(w, ds, kind, tau, cfg.smooth_iters, inc, j)

    w_best = inc.w
    if inc.value > 0:
        w_best = w_best / matrix_norm(w_best, kind)
    value = margin(w_best, ds).value
    if require_positive and not value > 0:
        raise NotImprovedError(
            f"{kind.value}: margin {value:.3e} not positive after {j} iterations", inc.trace)
    return ReferenceSolution(w_best, kind, value, tuple(inc.trace), j, seed)


def solve_all_references(ds, cfg: SolveConfig | None = None) -> dict:
    """One independently seeded solve per norm; failures are collected and
    raised together."""
    cfg = cfg or SolveConfig()
    out, failures = {}, []
    for i, kind in enumerate(ALL_NORMS):
        seed = int(np.random.SeedSequence([cfg.seed, i]).generate_state(1)[0])
        try:
            out[kind] = solve_max_margin(ds, kind, cfg, require_positive=True, seed=seed)
        except NotImprovedError as exc:
            failures.append(exc)
    if failures:
        raise NotImprovedError("; ".join(str(f) for f in failures),
                               [t for f in failures for t in f.trace])
    return out


# -- persistence ---------------------------------------------------------------

def save_reference(ref: ReferenceSolution, directory, extra: dict | None = None) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    stem = ref.kind.value
    lines = [",".join(repr(float(v)) for v in row) for row in ref.w_star]
    (directory / f"{stem}.csv").write_text("\n".join(lines) + "\n")
    trace = ["iteration,best_margin"] + [f"{j},{v!r}" for j, v in ref.solve_trace]
    (directory / f"{stem}.trace.csv").write_text("\n".join(trace) + "\n")
    meta = {"kind": stem, "margin_value": repr(float(ref.margin_value)),
            "iterations": ref.iterations, "seed": ref.seed,
            "rows": ref.w_star.shape[0], "cols": ref.w_star.shape[1]}
    meta.update(extra or {})
    write_manifest(directory / f"{stem}.manifest", meta)
    return directory / f"{stem}.csv"


def load_reference(directory, kind) -> ReferenceSolution:
    directory = Path(directory)
    kind = NormKind.parse(kind)
    meta = read_manifest(directory / f"{kind.value}.manifest")
    w = np.loadtxt(directory / f"{kind.value}.csv", delimiter=",", ndmin=2)
    trace_path = directory / f"{kind.value}.trace.csv"
    trace = ()
    if trace_path.exists():
        rows = np.loadtxt(trace_path, delimiter=",", skiprows=1, ndmin=2)
        trace = tuple((int(a), float(b)) for a, b in rows)
    return ReferenceSolution(w, kind, float(meta["margin_value"]), trace,
                             int(meta["iterations"]), int(meta["seed"]))


def solve_config_items(cfg: SolveConfig) -> dict:
    return {f"solve.{k}": v for k, v in asdict(cfg).items()}
