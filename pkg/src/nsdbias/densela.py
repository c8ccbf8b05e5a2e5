"""Dense linear algebra for small matrices (tens of rows/columns).

Everything here works on plain ``numpy`` float64 arrays. Weights are ``k x d``
with one row per class.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DegenerateDirectionError, SvdConvergenceError

# Below this magnitude a singular-vector entry is treated as zero when choosing signs.
SIGN_EPS = 1e-12
DEGENERATE_REL_TOL = 1e-12


class NormKind(str, enum.Enum):
    FROBENIUS = "frobenius"
    ENTRYWISE_MAX = "entrywise_max"
    SPECTRAL = "spectral"
    NUCLEAR = "nuclear"

    @property
    def dual(self) -> str:
        """Name of the dual norm (``entrywise_l1`` is not a NormKind)."""
        return _DUALS[self]

    @property
    def short(self) -> str:
        return _SHORT[self]

    @classmethod
    def parse(cls, value) -> "NormKind":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower()
        key = _ALIASES.get(key, key)
        return cls(key)

    def __str__(self) -> str:
        return self.value


_DUALS = {
    NormKind.FROBENIUS: "frobenius",
    NormKind.ENTRYWISE_MAX: "entrywise_l1",
    NormKind.SPECTRAL: "nuclear",
    NormKind.NUCLEAR: "spectral",
}
_SHORT = {
    NormKind.FROBENIUS: "frobenius",
    NormKind.ENTRYWISE_MAX: "linf",
    NormKind.SPECTRAL: "spectral",
    NormKind.NUCLEAR: "nuclear",
}
_ALIASES = {
    "fro": "frobenius",
    "l2": "frobenius",
    "max": "entrywise_max",
    "linf": "entrywise_max",
    "spec": "spectral",
    "nuc": "nuclear",
}

ALL_NORMS = tuple(NormKind)


def as_matrix(m) -> np.ndarray:
    """Validate ``m`` as a nonempty, finite, 2-d float64 array."""
    a = np.asarray(m, dtype=np.float64)
    if a.ndim != 2 or a.size == 0:
        raise ValueError(f"expected a nonempty 2-d matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    return a


@dataclass(frozen=True)
class SvdResult:
    """Thin SVD ``m = u @ diag(s) @ v.T``; ``u`` is k x r, ``v`` is d x r."""

    u: np.ndarray
    s: np.ndarray
    v: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.u * self.s) @ self.v.T

    @property
    def u1(self) -> np.ndarray:
        return self.u[:, 0]

    @property
    def v1(self) -> np.ndarray:
        return self.v[:, 0]


def _fix_signs(u, v):
    # first (numerically) nonzero entry of each left vector is made nonnegative
    big = np.abs(u) > SIGN_EPS
    first = np.where(big.any(axis=0), big.argmax(axis=0), 0)
    flip = u[first, np.arange(u.shape[1])] < 0
    if flip.any():
        u = u.copy()
        v = v.copy()
        u[:, flip] *= -1.0
        v[:, flip] *= -1.0
    return u, v


def svd(m, method: str = "lapack") -> SvdResult:
    """Thin SVD with a deterministic sign convention.

    ``method="lapack"`` delegates to ``numpy.linalg.svd``; ``method="jacobi"``
    uses the one-sided Jacobi routine in this module. Both return singular
    values in nonincreasing order and flip each pair ``(u_i, v_i)`` so the
    first nonzero entry of ``u_i`` is nonnegative.
    """
    a = as_matrix(m)
    if method == "lapack":
        try:
            u, s, vt = np.linalg.svd(a, full_matrices=False)
        except np.linalg.LinAlgError as exc:
            raise SvdConvergenceError(str(exc)) from exc
        v = vt.T
    elif method == "jacobi":
        u, s, v = jacobi_svd(a)
    else:
        raise ValueError(f"unknown svd method {method!r}")
    u, v = _fix_signs(u, v)
    return SvdResult(u, s, v)


def singular_values(m) -> np.ndarray:
    return np.linalg.svd(as_matrix(m), compute_uv=False)


def _complete_basis(q: np.ndarray, filled: np.ndarray) -> np.ndarray:
    """Fill the columns of ``q`` not marked in ``filled`` with an orthonormal complement."""
    rows = q.shape[0]
    q = q.copy()
    basis = [q[:, j] for j in range(q.shape[1]) if filled[j]]
    missing = [j for j in range(q.shape[1]) if not filled[j]]
    e = 0
    for j in missing:
        while True:
            cand = np.zeros(rows)
            cand[e] = 1.0
            e += 1
            for b in basis:
                cand -= (b @ cand) * b
            for b in basis:  # second Gram-Schmidt pass for stability
                cand -= (b @ cand) * b
            nrm = np.linalg.norm(cand)
            if nrm > 1e-8:
                cand /= nrm
                break
        q[:, j] = cand
        basis.append(cand)
    return q


def jacobi_svd(m, max_sweeps: int = 60, tol: float = 1e-15):
    """One-sided (Hestenes) Jacobi SVD. Returns ``(u, s, v)`` with ``m = u diag(s) v^T``.

    Column pairs of the tall orientation of ``m`` are rotated until they are
    mutually orthogonal to relative precision ``tol``.
    """
    a0 = as_matrix(m)
    transposed = a0.shape[0] < a0.shape[1]
    a = (a0.T if transposed else a0).copy()
    ncol = a.shape[1]
    vmat = np.eye(ncol)
    # columns this small are rounding noise; rotating them never converges
    floor = (np.finfo(np.float64).eps * np.sqrt(np.sum(a * a))) ** 2

    for _ in range(max_sweeps):
        rotated = False
        for p in range(ncol - 1):
            for q in range(p + 1, ncol):
                ap = a[:, p]
                aq = a[:, q]
                alpha = ap @ ap
                beta = aq @ aq
                gamma = ap @ aq
                if alpha <= floor or beta <= floor:
                    continue
                if gamma == 0.0 or abs(gamma) <= tol * np.sqrt(alpha * beta):
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                if abs(zeta) > 1e150:
                    t = 0.5 / zeta
                else:
                    t = np.copysign(1.0, zeta) / (abs(zeta) + np.sqrt(1.0 + zeta * zeta))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t
                new_p = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                a[:, p] = new_p
                vp = vmat[:, p].copy()
                vmat[:, p] = c * vp - s * vmat[:, q]
                vmat[:, q] = s * vp + c * vmat[:, q]
        if not rotated:
            break
    else:
        raise SvdConvergenceError(f"Jacobi SVD did not converge in {max_sweeps} sweeps")

    sig = np.linalg.norm(a, axis=0)
    order = np.argsort(-sig, kind="stable")
    sig = sig[order]
    a = a[:, order]
    vmat = vmat[:, order]
    scale = sig[0] if sig.size else 0.0
    filled = sig > scale * 1e-13 if scale > 0 else np.zeros(sig.shape, dtype=bool)
    left = np.zeros_like(a)
    left[:, filled] = a[:, filled] / sig[filled]
    if not filled.all():
        left = _complete_basis(left, filled)
        sig = np.where(filled, sig, 0.0)
    if transposed:
        return vmat, sig, left
    return left, sig, vmat


def power_step(m, p, tau_deg: float | None = None) -> np.ndarray:
    """One step of power iteration on ``m m^T``: ``m (m^T p)`` normalized.

    Uses two matrix-vector products; ``m m^T`` is never formed. Raises
    ``DegenerateDirectionError`` when ``|m m^T p| <= tau_deg`` (default
    ``1e-12 * |m|_F^2``).
    """
    m = np.asarray(m, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    q = m @ (m.T @ p)
    nrm = np.linalg.norm(q)
    if tau_deg is None:
        tau_deg = DEGENERATE_REL_TOL * float(np.sum(m * m))
    if not nrm > tau_deg:
        raise DegenerateDirectionError(f"|m m^T p| = {nrm:.3e} <= {tau_deg:.3e}")
    return q / nrm


def entrywise_l1(m) -> float:
    return float(np.abs(m).sum())


def frobenius_norm(m) -> float:
    """Frobenius norm via BLAS nrm2, which rescales and so survives entries
    whose squares under- or overflow."""
    return float(scipy.linalg.norm(np.asarray(m, dtype=np.float64).ravel()))


def matrix_norm(m, kind) -> float:
    """Frobenius, entrywise max, spectral or nuclear norm (or ``"entrywise_l1"``)."""
    m = np.asarray(m, dtype=np.float64)
    if kind == "entrywise_l1":
        return entrywise_l1(m)
    kind = NormKind.parse(kind)
    if kind is NormKind.FROBENIUS:
        return frobenius_norm(m)
    if kind is NormKind.ENTRYWISE_MAX:
        return float(np.abs(m).max())
    s = np.linalg.svd(m, compute_uv=False)
    if kind is NormKind.SPECTRAL:
        return float(s[0])
    return float(s.sum())


def dual_norm(m, kind) -> float:
    return matrix_norm(m, NormKind.parse(kind).dual)


def project_l1_ball(v, radius: float) -> np.ndarray:
    """Euclidean projection of a vector onto the l1 ball (sort-and-threshold)."""
    v = np.asarray(v, dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise ValueError("cannot project a non-finite vector")
    a = np.abs(v)
    if a.sum() <= radius:
        return v.copy()
    u = np.sort(a)[::-1]
    css = np.cumsum(u)
    idx = np.arange(1, u.size + 1)
    rho = np.nonzero(u * idx > css - radius)[0][-1]
    theta = (css[rho] - radius) / (rho + 1.0)
    return np.sign(v) * np.maximum(a - theta, 0.0)


def project_norm_ball(m, kind, radius: float = 1.0) -> np.ndarray:
    """Frobenius-metric projection of ``m`` onto ``{A : |A|_kind <= radius}``."""
    if not radius > 0:
        raise ValueError("radius must be positive")
    m = np.asarray(m, dtype=np.float64)
    kind = NormKind.parse(kind)
    if kind is NormKind.FROBENIUS:
        nrm = frobenius_norm(m)
        return m.copy() if nrm <= radius else m * (radius / nrm)
    if kind is NormKind.ENTRYWISE_MAX:
        return np.clip(m, -radius, radius)
    u, s, vt = np.linalg.svd(m, full_matrices=False)
    if kind is NormKind.SPECTRAL:
        if s[0] <= radius:
            return m.copy()
        s_new = np.minimum(s, radius)
    else:
        if s.sum() <= radius:
            return m.copy()
        s_new = project_l1_ball(s, radius)
    return (u * s_new) @ vt
