"""Implicit-bias metrics and power-iteration diagnostics."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .densela import NormKind, frobenius_norm, singular_values, svd
from .errors import DegenerateTraceError, ZeroMatrixError
from .linmodel import relative_margin

TAN_CAP = 1e15
EFFECTIVE_RANK_FRACTION = 0.05


@dataclass
class MetricsReport:
    step: int
    loss: float
    accuracy: float
    correlations: dict = field(default_factory=dict)
    margin_errors: dict = field(default_factory=dict)
    spectrum: np.ndarray | None = None
    power_alignment: float = float("nan")
    gap_ratio: float = float("nan")
    e_t: float = float("nan")
    delta_t: float = float("nan")
    restarts: int = 0


class PowerDiag(NamedTuple):
    e_t: float
    delta_t: float
    gap_ratio: float
    restart_flag: bool = False


class Spectrum(NamedTuple):
    values: np.ndarray
    effective_rank: int


class ContractionResult(NamedTuple):
    holds: bool
    slack: float  # rhs - lhs; negative means violated


def _matrix(ref):
    return ref.w_star if hasattr(ref, "w_star") else np.asarray(ref, dtype=np.float64)


def correlation(w, ref) -> float:
    """Frobenius cosine similarity between ``w`` and a reference (or matrix)."""
    w = np.asarray(w, dtype=np.float64)
    r = _matrix(ref)
    nw, nr = frobenius_norm(w), frobenius_norm(r)
    if nw == 0 or nr == 0:
        raise ZeroMatrixError("correlation with a zero matrix")
    return float(np.clip(np.sum((w / nw) * (r / nr)), -1.0, 1.0))


def margin_error(w, ref, ds) -> float:
    """``|m(W) - m(W*)| / m(W*)`` with relative margins taken in ``ref.kind``."""
    target = relative_margin(ref.w_star, ds, ref.kind)
    if not target > 0:
        raise ValueError("reference margin must be positive")
    return abs(relative_margin(w, ds, ref.kind) - target) / target


def spectrum(w, fraction: float = EFFECTIVE_RANK_FRACTION) -> Spectrum:
    s = singular_values(w)
    if s[0] == 0:
        raise ZeroMatrixError("spectrum of the zero matrix")
    return Spectrum(s, int(np.sum(s > fraction * s[0])))


def tan_angle(a, b) -> float:
    """tan of the angle between two unit vectors, folded into [0, pi/2]."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    c = float(a @ b)
    if c < 0:
        b = -b
        c = -c
    sin = float(np.linalg.norm(a - c * b))
    if c == 0.0 or sin >= TAN_CAP * c:
        return TAN_CAP
    return sin / c


def power_diagnostics(p, m_now, m_prev=None, restart_flag: bool = False) -> PowerDiag:
    """Tracking error of ``p`` against ``u1(m_now)``, drift of ``u1`` since
    ``m_prev`` and the gap ratio ``sigma_2 / sigma_1`` of ``m_now``."""
    now = svd(m_now)
    if now.s[0] == 0:
        raise ZeroMatrixError("power diagnostics need a nonzero momentum")
    e_t = tan_angle(p, now.u[:, 0])
    delta_t = 0.0
    if m_prev is not None and np.any(m_prev):
        delta_t = tan_angle(now.u[:, 0], svd(m_prev).u[:, 0])
    gap = float(now.s[1] / now.s[0]) if now.s.size > 1 else 0.0
    return PowerDiag(e_t, delta_t, gap, restart_flag)


def alignment(p, m) -> float:
    """``|<p, u1(m)>|``."""
    return float(abs(np.asarray(p) @ svd(m).u[:, 0]))


def contraction_check(m_now, p_prev, p_now, tol: float = 1e-9) -> ContractionResult:
    """Check ``tan(p_now, u1) <= (sigma_2/sigma_1)^2 tan(p_prev, u1) + tol``
    where ``u1`` is the top left singular vector of ``m_now``."""
    now = svd(m_now)
    u1 = now.u[:, 0]
    rho = now.s[1] / now.s[0] if now.s.size > 1 else 0.0
    lhs = tan_angle(p_now, u1)
    rhs = rho * rho * tan_angle(p_prev, u1) + tol
    return ContractionResult(lhs <= rhs, float(rhs - lhs))


def decay_slope(trace: Sequence[tuple]) -> float:
    """Least-squares slope of ``log(error)`` vs ``log(t)`` over the last decade.

    ``trace`` holds ``(t, error)`` pairs with ``t > 0``; errors are clamped at
    1e-15 before the log.
    """
    arr = np.asarray(trace, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 10:
        raise ValueError("need at least 10 (t, error) points")
    t, err = arr[:, 0], arr[:, 1]
    if np.any(t <= 0):
        raise ValueError("steps must be positive")
    if t.max() < 10 * t.min():
        raise ValueError("trace must span at least one decade of steps")
    sel = t >= t.max() / 10.0
    if np.all(err[sel] <= 1e-15):
        raise DegenerateTraceError("errors vanish over the fitted window")
    x = np.log(t[sel])
    y = np.log(np.maximum(err[sel], 1e-15))
    slope, _ = np.polyfit(x, y, 1)
    return float(slope)
