"""Normalized steepest descent with momentum under four matrix norms.

One iteration::

    G_t = grad L(W_t)                          (mini-batch)
    M_t = mu M_{t-1} + (1 - mu) G_t
    W_{t+1} = W_t - gamma_t * lmo(M_t)         gamma_t = gamma0 / sqrt(t + 1)

``lmo`` maximizes <M, D> over the unit ball of the chosen norm. Under the
nuclear norm the maximizer is the rank-one ``u1 v1^T`` (NucGD); the ``power``
mode replaces the SVD by one warm-started power-iteration step per iteration.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, NamedTuple

import numpy as np

from .densela import NormKind, frobenius_norm, power_step, svd
from .errors import (DegenerateDirectionError, DoubleDegeneracyError, StepError,
                     ZeroMatrixError)
from .linmodel import ce_gradient

# Per-geometry base step sizes; the unit balls differ a lot in Frobenius size.
DEFAULT_GAMMA0 = {
    NormKind.FROBENIUS: 1.0,
    NormKind.ENTRYWISE_MAX: 0.1,
    NormKind.SPECTRAL: 0.3,
    NormKind.NUCLEAR: 1.0,
}
OPTIMIZER_NAMES = {
    NormKind.FROBENIUS: "NGD",
    NormKind.ENTRYWISE_MAX: "SignGD",
    NormKind.SPECTRAL: "Muon",
    NormKind.NUCLEAR: "NucGD",
}
RANK_EPS = 1e-10
NUCGD_MODES = ("analytic", "power")


@dataclass(frozen=True)
class NsdConfig:
    norm: NormKind = NormKind.NUCLEAR
    gamma0: float | None = None  # None -> DEFAULT_GAMMA0[norm]
    mu: float = 0.0
    batch_size: int | None = None  # None -> full batch
    max_steps: int = 20_000
    nucgd_mode: str = "analytic"
    restart_tau: float = 1e-10
    seed: int = 0

    def __post_init__(self):
        norm = NormKind.parse(self.norm)
        object.__setattr__(self, "norm", norm)
        if self.gamma0 is None:
            object.__setattr__(self, "gamma0", DEFAULT_GAMMA0[norm])
        if not self.gamma0 > 0:
            raise ValueError("gamma0 must be positive")
        if not 0 <= self.mu < 1:
            raise ValueError("mu must lie in [0, 1)")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.max_steps < 0:
            raise ValueError("max_steps must be >= 0")
        if self.nucgd_mode not in NUCGD_MODES:
            raise ValueError(f"nucgd_mode must be one of {NUCGD_MODES}")
        if not self.restart_tau > 0:
            raise ValueError("restart_tau must be positive")

    @property
    def uses_power(self) -> bool:
        return self.norm is NormKind.NUCLEAR and self.nucgd_mode == "power"

    @property
    def label(self) -> str:
        name = OPTIMIZER_NAMES[self.norm]
        return name + "-power" if self.uses_power else name


@dataclass(frozen=True, eq=False)
class OptState:
    w: np.ndarray
    momentum: np.ndarray
    t: int = 0
    p: np.ndarray | None = None
    restarts: int = 0
    # previous-step quantities, kept for diagnostics
    prev_momentum: np.ndarray | None = None
    p_prev: np.ndarray | None = None
    skipped: bool = False
    restarted: bool = False


class LmoResult(NamedTuple):
    direction: np.ndarray
    pairing: float


@dataclass
class RngStreams:
    """Independent generators for batch sampling and power-vector draws."""

    batch: np.random.Generator
    restart: np.random.Generator

    @classmethod
    def from_seed(cls, seed: int) -> "RngStreams":
        b, r = np.random.SeedSequence(seed).spawn(2)
        return cls(np.random.default_rng(b), np.random.default_rng(r))


def lmo(m, kind, rank_eps: float = RANK_EPS) -> LmoResult:
    """Unit-norm maximizer of ``<m, D>`` and the attained value (the dual norm).

    ``entrywise_max`` uses sign(0) = 0; ``spectral`` drops singular directions
    with sigma_i <= rank_eps * sigma_1.
    """
    m = np.asarray(m, dtype=np.float64)
    if not np.any(m):
        raise ZeroMatrixError("lmo of the zero matrix")
    kind = NormKind.parse(kind)
    if kind is NormKind.FROBENIUS:
        nrm = frobenius_norm(m)
        return LmoResult(m / nrm, nrm)
    if kind is NormKind.ENTRYWISE_MAX:
        d = np.sign(m)
        return LmoResult(d, float(np.abs(m).sum()))
    res = svd(m)
    if kind is NormKind.NUCLEAR:
        return LmoResult(np.outer(res.u[:, 0], res.v[:, 0]), float(res.s[0]))
    keep = res.s > rank_eps * res.s[0]
    d = res.u[:, keep] @ res.v[:, keep].T
    return LmoResult(d, float(res.s[keep].sum()))


def step_size(t: int, gamma0: float) -> float:
    if t < 0:
        raise ValueError("t must be >= 0")
    return gamma0 / np.sqrt(t + 1.0)


def sample_batch(rng: np.random.Generator, n: int, b: int) -> np.ndarray:
    """``b`` distinct 0-based indices, uniform; ``b == n`` gives ``arange(n)``
    without touching the generator."""
    if not 1 <= b <= n:
        raise ValueError(f"batch size {b} outside [1, {n}]")
    if b == n:
        return np.arange(n)
    return np.sort(rng.choice(n, size=b, replace=False))


def initial_state(ds, cfg: NsdConfig, streams: RngStreams | None = None) -> OptState:
    """W_0 = 0, M_{-1} = 0 and, for power mode, p_{-1} ~ N(0, I_k) normalized."""
    w = np.zeros((ds.k, ds.d))
    p = None
    if cfg.uses_power:
        streams = streams or RngStreams.from_seed(cfg.seed)
        p = _random_unit(streams.restart, ds.k)
    return OptState(w, np.zeros_like(w), 0, p)


def _random_unit(rng, k):
    while True:
        p = rng.standard_normal(k)
        nrm = np.linalg.norm(p)
        if nrm > 0:
            return p / nrm


def _momentum(st: OptState, ds, cfg: NsdConfig, streams: RngStreams):
    b = cfg.batch_size or ds.n
    batch = None if b == ds.n else sample_batch(streams.batch, ds.n, b)
    g = ce_gradient(st.w, ds, batch)
    if cfg.mu == 0.0:
        return g
    return cfg.mu * st.momentum + (1.0 - cfg.mu) * g


def nsd_step(st: OptState, ds, cfg: NsdConfig, streams: RngStreams | None = None) -> OptState:
    """One NSD iteration with an exact LMO (Algorithm-1 style for nuclear).

    A zero momentum leaves the weights unchanged and sets ``skipped``.
    """
    streams = streams or RngStreams.from_seed(cfg.seed)
    m = _momentum(st, ds, cfg, streams)
    try:
        d = lmo(m, cfg.norm).direction
    except ZeroMatrixError:
        return OptState(st.w, m, st.t + 1, st.p, st.restarts, st.momentum, st.p, skipped=True)
    w = st.w - step_size(st.t, cfg.gamma0) * d
    return OptState(w, m, st.t + 1, st.p, st.restarts, st.momentum, st.p)


def _power_direction(m, p_prev, tau):
    p = power_step(m, p_prev)
    r = p @ m
    rn = np.linalg.norm(r)
    if rn < tau * np.sqrt(np.sum(m * m)):
        raise DegenerateDirectionError(f"|p^T M| = {rn:.3e} collapsed")
    return p, r / rn


def nucgd_power_step(st: OptState, ds, cfg: NsdConfig,
                     streams: RngStreams | None = None) -> OptState:
    """NucGD with one warm-started power step: ``p_t = M M^T p_{t-1}`` normalized,
    update ``gamma_t p_t (p_t^T M) / |p_t^T M|``.

    On collapse the power vector is redrawn from N(0, I_k) once; a second
    collapse raises ``DoubleDegeneracyError``.
    """
    if st.p is None:
        raise ValueError("power-mode state needs a power vector")
    streams = streams or RngStreams.from_seed(cfg.seed)
    m = _momentum(st, ds, cfg, streams)
    restarts = st.restarts
    restarted = False
    try:
        p, r_unit = _power_direction(m, st.p, cfg.restart_tau)
    except DegenerateDirectionError:
        restarts += 1
        restarted = True
        try:
            p, r_unit = _power_direction(m, _random_unit(streams.restart, ds.k), cfg.restart_tau)
        except DegenerateDirectionError as exc:
            raise DoubleDegeneracyError(f"power step degenerate after restart: {exc}") from exc
    w = st.w - step_size(st.t, cfg.gamma0) * np.outer(p, r_unit)
    return OptState(w, m, st.t + 1, p, restarts, st.momentum, st.p, restarted=restarted)


def step(st: OptState, ds, cfg: NsdConfig, streams: RngStreams | None = None) -> OptState:
    if cfg.uses_power:
        return nucgd_power_step(st, ds, cfg, streams)
    return nsd_step(st, ds, cfg, streams)


def run(ds, cfg: NsdConfig, probes: Iterable[int] | None = None) -> list[OptState]:
    """Iterate ``cfg.max_steps`` steps from zero weights and return snapshots
    at the probe steps (every step when ``probes`` is None).

    Failures are re-raised as ``StepError`` carrying the failing step index.
    """
    b = cfg.batch_size or ds.n
    if b > ds.n:
        raise ValueError(f"batch_size {b} exceeds dataset size {ds.n}")
    streams = RngStreams.from_seed(cfg.seed)
    st = initial_state(ds, cfg, streams)
    wanted = None if probes is None else set(int(p) for p in probes)
    out = [st] if wanted is None or 0 in wanted else []
    for t in range(cfg.max_steps):
        try:
            st = step(st, ds, cfg, streams)
        except Exception as exc:  # noqa: BLE001 - re-raised with context
            raise StepError(t, exc) from exc
        if wanted is None or st.t in wanted:
            out.append(st)
    return out
