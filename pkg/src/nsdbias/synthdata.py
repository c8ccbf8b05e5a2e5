"""Synthetic Gaussian-mixture classification data and a separability check.

Labels are 1-based (``1..k``) in memory and on disk; ``Dataset.label_index``
gives the 0-based version used for array indexing.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .densela import NormKind

GENERATOR_NAME = "numpy.random.PCG64+standard_normal(ziggurat);centers-then-points-by-class"


@dataclass(frozen=True)
class GenConfig:
    k: int = 15
    d: int = 25
    n_per_class: int = 50
    sigma: float = 0.1
    seed: int = 12344

    def __post_init__(self):
        if self.k < 2:
            raise ValueError("k must be >= 2")
        if self.d < 1:
            raise ValueError("d must be >= 1")
        if self.n_per_class < 1:
            raise ValueError("n_per_class must be >= 1")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")


@dataclass(frozen=True, eq=False)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    k: int
    centers: np.ndarray | None = None
    config: GenConfig | None = None
    label_index: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        x = np.array(self.features, dtype=np.float64)
        y = np.array(self.labels, dtype=np.int64)
        if x.ndim != 2 or y.shape != (x.shape[0],):
            raise ValueError("features must be n x d and labels length n")
        if y.min() < 1 or y.max() > self.k:
            raise ValueError(f"labels must lie in [1, {self.k}]")
        if np.unique(y).size != self.k:
            raise ValueError("every class must appear at least once")
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)
        idx = y - 1
        idx.setflags(write=False)
        object.__setattr__(self, "label_index", idx)
        if self.centers is not None:
            c = np.array(self.centers, dtype=np.float64)
            c.setflags(write=False)
            object.__setattr__(self, "centers", c)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class SeparabilityReport:
    separable: bool
    witness: np.ndarray | None
    witness_margin: float


def generate(cfg: GenConfig) -> Dataset:
    """Draw class centers from N(0, I_d), then ``n_per_class`` points per class.

    Draw order is fixed (all centers, then class 1's points, class 2's, ...),
    so a seed pins the dataset bit-for-bit for a given numpy version.
    """
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    centers = rng.standard_normal((cfg.k, cfg.d))
    blocks = [centers[y] + cfg.sigma * rng.standard_normal((cfg.n_per_class, cfg.d))
              for y in range(cfg.k)]
    labels = np.repeat(np.arange(1, cfg.k + 1), cfg.n_per_class)
    return Dataset(np.concatenate(blocks), labels, cfg.k, centers, cfg)


def check_separability(ds: Dataset, tol: float = 1e-6, solve_cfg=None) -> SeparabilityReport:
    """Decide linear separability via the entrywise-max max-margin problem.

    Raises ``SolverBudgetError`` when the solver cannot even reach margin
    ``-tol`` (the origin gives margin 0, so this means the solve failed).
    """
    from .errors import SolverBudgetError
    from .maxmargin_ref import SolveConfig, solve_max_margin

    sol = solve_max_margin(ds, NormKind.ENTRYWISE_MAX, solve_cfg or SolveConfig())
    if sol.margin_value <= -tol:
        raise SolverBudgetError(
            f"inconclusive: best margin {sol.margin_value:.3e} below -tol", sol.solve_trace)
    if sol.margin_value > tol:
        return SeparabilityReport(True, sol.w_star, sol.margin_value)
    return SeparabilityReport(False, None, sol.margin_value)


# -- persistence ---------------------------------------------------------------

def write_manifest(path: Path, items: dict) -> None:
    lines = [f"{k}={v}" for k, v in items.items()]
    Path(path).write_text("\n".join(lines) + "\n")


def read_manifest(path: Path) -> dict:
    out = {}
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        out[key.strip()] = value.strip()
    return out


def _fmt(x: float) -> str:
    return repr(float(x))


def save_dataset(ds: Dataset, path) -> Path:
    """Write ``<path>`` (CSV: ``y,x_1..x_d``), ``<path>.manifest`` and centers CSV."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = "y," + ",".join(f"x_{j + 1}" for j in range(ds.d))
    rows = [header]
    for y, x in zip(ds.labels, ds.features):
        rows.append(str(int(y)) + "," + ",".join(_fmt(v) for v in x))
    path.write_text("\n".join(rows) + "\n")
    meta = {"k": ds.k, "n": ds.n, "d": ds.d, "label_base": 1, "generator": GENERATOR_NAME}
    if ds.config is not None:
        meta.update({f"gen.{k}": v for k, v in asdict(ds.config).items()})
    write_manifest(path.with_name(path.name + ".manifest"), meta)
    if ds.centers is not None:
        lines = [",".join(_fmt(v) for v in row) for row in ds.centers]
        path.with_name(path.stem + ".centers.csv").write_text("\n".join(lines) + "\n")
    return path


def load_dataset(path) -> Dataset:
    path = Path(path)
    raw = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    labels = raw[:, 0].astype(np.int64)
    meta_path = path.with_name(path.name + ".manifest")
    meta = read_manifest(meta_path) if meta_path.exists() else {}
    k = int(meta.get("k", labels.max()))
    cfg = None
    if "gen.k" in meta:
        cfg = GenConfig(k=int(meta["gen.k"]), d=int(meta["gen.d"]),
                        n_per_class=int(meta["gen.n_per_class"]),
                        sigma=float(meta["gen.sigma"]), seed=int(meta["gen.seed"]))
    centers_path = path.with_name(path.stem + ".centers.csv")
    centers = np.loadtxt(centers_path, delimiter=",", ndmin=2) if centers_path.exists() else None
    return Dataset(raw[:, 1:], labels, k, centers, cfg)
