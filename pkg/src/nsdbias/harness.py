"""Experiment orchestration: data, references, optimizer runs, sweeps.

Output layout under ``ExperimentConfig.output_dir``::

    dataset.csv (+ .manifest, .centers.csv)
    references/<norm>.csv|.manifest|.trace.csv, references/index.manifest
    runs/<run_id>/metrics.csv|final_spectrum.csv|power_trace.csv|manifest.txt
    timings.csv                       wall times (the only nondeterministic file)
    report/...                        see report.emit_report
"""
from __future__ import annotations

import hashlib
import logging
import math
import os
import shutil
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .bias_metrics import (MetricsReport, PowerDiag, correlation, margin_error,
                           power_diagnostics, spectrum)
from .densela import ALL_NORMS, NormKind, svd
from .errors import SeparabilityError
from .linmodel import accuracy, ce_loss
from .maxmargin_ref import (SolveConfig, load_reference, save_reference,
                            solve_all_references)
from .nsd_optim import NsdConfig, run
from .synthdata import (GenConfig, check_separability, generate, load_dataset,
                        read_manifest, save_dataset, write_manifest)

log = logging.getLogger(__name__)

OUTPUT_ROOT_ENV = "NSDBIAS_OUTPUT_ROOT"
FULL_BATCH_STEPS = 20_000
MINI_BATCH_STEPS = 50_000
SWEEP_AXES = ("batch_size", "mu")

METRIC_COLUMNS = (
    ["step", "loss", "accuracy"]
    + [f"corr_{k.short}" for k in ALL_NORMS]
    + [f"err_{k.short}" for k in ALL_NORMS]
    + ["power_alignment", "gap_ratio", "e_t", "delta_t", "restarts"]
)


@dataclass(frozen=True)
class ProbeSchedule:
    """Every step up to ``dense_until``, then geometric growth by ``growth``;
    step 0 and the final step are always included."""

    dense_until: int = 100
    growth: float = 1.3

    def __post_init__(self):
        if self.dense_until < 1 or not self.growth > 1:
            raise ValueError("need dense_until >= 1 and growth > 1")

    def steps(self, max_steps: int) -> list[int]:
        out = set(range(min(self.dense_until, max_steps) + 1))
        s = float(self.dense_until)
        while s < max_steps:
            s *= self.growth
            out.add(min(int(round(s)), max_steps))
        out.add(max_steps)
        return sorted(out)


@dataclass(frozen=True)
class Sweep:
    axis: str
    values: tuple

    def __post_init__(self):
        if self.axis not in SWEEP_AXES:
            raise ValueError(f"sweep axis must be one of {SWEEP_AXES}")
        if not self.values:
            raise ValueError("sweep values must be nonempty")
        cast = int if self.axis == "batch_size" else float
        object.__setattr__(self, "values", tuple(cast(v) for v in self.values))


def standard_optimizers(max_steps: int | None = None, mu: float = 0.0,
                     batch_size: int | None = None, nucgd_mode: str = "analytic",
                     seed: int = 0, norms=ALL_NORMS) -> tuple:
    """SignGD, NGD, Muon, NucGD with per-norm default step sizes."""
    if max_steps is None:
        max_steps = FULL_BATCH_STEPS if batch_size is None else MINI_BATCH_STEPS
    return tuple(NsdConfig(norm=k, mu=mu, batch_size=batch_size, max_steps=max_steps,
                           nucgd_mode=nucgd_mode, seed=seed) for k in norms)


@dataclass(frozen=True)
class ExperimentConfig:
    gen: GenConfig = GenConfig()
    solve: SolveConfig = SolveConfig()
    optimizers: tuple = field(default_factory=standard_optimizers)
    probes: ProbeSchedule = ProbeSchedule()
    output_dir: Path = Path("nsdbias-out")
    sweep: Sweep | None = None
    separability_tol: float = 1e-6

    def resolved_output(self) -> Path:
        out = Path(self.output_dir)
        root = os.environ.get(OUTPUT_ROOT_ENV)
        if root and not out.is_absolute():
            out = Path(root) / out
        return out


@dataclass
class RunRecord:
    run_id: str
    label: str
    config: NsdConfig
    rows: list
    final_spectrum: np.ndarray | None = None
    final_w: np.ndarray | None = None
    power_trace: list = field(default_factory=list)  # (step, PowerDiag)
    wall_time: float = 0.0
    status: str = "ok"

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    @property
    def final(self) -> MetricsReport:
        return self.rows[-1]


# -- identities ------------------------------------------------------------------

def config_items(cfg: NsdConfig, gen: GenConfig | None = None) -> dict:
    items = {f"opt.{f.name}": _fmt_value(getattr(cfg, f.name)) for f in fields(cfg)}
    if gen is not None:
        items.update({f"gen.{k}": _fmt_value(v) for k, v in asdict(gen).items()})
    return items


def run_id(cfg: NsdConfig, gen: GenConfig | None = None) -> str:
    text = "\n".join(f"{k}={v}" for k, v in sorted(config_items(cfg, gen).items()))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def _fmt_value(v) -> str:
    if isinstance(v, NormKind):
        return v.value
    if isinstance(v, float):
        return repr(v)
    return "" if v is None else str(v)


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    return "nan" if math.isnan(x) else repr(x)


# -- metrics -----------------------------------------------------------------------

def evaluate(st, ds, refs: dict, cfg: NsdConfig) -> MetricsReport:
    """Metrics for one snapshot. Reference-based entries are NaN at W = 0."""
    rep = MetricsReport(step=st.t, loss=ce_loss(st.w, ds), accuracy=accuracy(st.w, ds),
                        restarts=st.restarts)
    nonzero = bool(np.any(st.w))
    for kind in ALL_NORMS:
        ref = refs.get(kind)
        if ref is None or not nonzero:
            rep.correlations[kind] = float("nan")
            rep.margin_errors[kind] = float("nan")
            continue
        rep.correlations[kind] = correlation(st.w, ref)
        rep.margin_errors[kind] = margin_error(st.w, ref, ds)
    if nonzero:
        rep.spectrum = spectrum(st.w).values
    if np.any(st.momentum):
        if cfg.uses_power and st.p is not None:
            diag = power_diagnostics(st.p, st.momentum, st.prev_momentum, st.restarted)
            rep.e_t, rep.delta_t, rep.gap_ratio = diag.e_t, diag.delta_t, diag.gap_ratio
            rep.power_alignment = float(abs(st.p @ svd(st.momentum).u[:, 0]))
        else:
            s = svd(st.momentum).s
            rep.gap_ratio = float(s[1] / s[0]) if s.size > 1 else 0.0
    return rep


def report_row(rep: MetricsReport) -> list:
    row = [rep.step, rep.loss, rep.accuracy]
    row += [rep.correlations.get(k, float("nan")) for k in ALL_NORMS]
    row += [rep.margin_errors.get(k, float("nan")) for k in ALL_NORMS]
    row += [rep.power_alignment, rep.gap_ratio, rep.e_t, rep.delta_t, rep.restarts]
    return row


def execute_run(ds, refs: dict, cfg: NsdConfig, probes: ProbeSchedule,
                gen: GenConfig | None = None) -> RunRecord:
    """Run one optimizer and evaluate its probes; failures land in ``status``."""
    rid = run_id(cfg, gen if gen is not None else ds.config)
    t0 = time.perf_counter()
    record = RunRecord(rid, cfg.label, cfg, [])
    try:
        snaps = run(ds, cfg, probes.steps(cfg.max_steps))
        record.rows = [evaluate(st, ds, refs, cfg) for st in snaps]
        last = snaps[-1]
        record.final_w = last.w
        if np.any(last.w):
            record.final_spectrum = spectrum(last.w).values
        if cfg.uses_power:
            record.power_trace = [
                (r.step, PowerDiag(r.e_t, r.delta_t, r.gap_ratio, bool(st.restarted)))
                for r, st in zip(record.rows, snaps) if not math.isnan(r.e_t)]
    except Exception as exc:  # noqa: BLE001 - isolate sibling runs
        log.exception("run %s (%s) failed", rid, cfg.label)
        record.status = f"failed: {type(exc).__name__}: {exc}"
    record.wall_time = time.perf_counter() - t0
    return record


# -- persistence -------------------------------------------------------------------

def write_csv(path: Path, header, rows) -> None:
    lines = [",".join(header)] + [",".join(_fmt(v) for v in row) for row in rows]
    Path(path).write_text("\n".join(lines) + "\n")


def read_csv(path: Path) -> tuple[list, list]:
    lines = Path(path).read_text().splitlines()
    header = lines[0].split(",")
    return header, [line.split(",") for line in lines[1:] if line]


def _atomic_dir(final: Path):
    tmp = final.with_name("." + final.name + ".tmp")
    if tmp.exists():
        shutil.rmtree(tmp)
    tmp.mkdir(parents=True)
    return tmp


def _commit_dir(tmp: Path, final: Path) -> None:
    if final.exists():
        shutil.rmtree(final)
    os.replace(tmp, final)


def save_run(record: RunRecord, runs_dir: Path, gen: GenConfig | None = None) -> Path:
    """Persist a run (write to a temp dir, rename when complete)."""
    final = Path(runs_dir) / record.run_id
    tmp = _atomic_dir(final)
    write_csv(tmp / "metrics.csv", METRIC_COLUMNS, [report_row(r) for r in record.rows])
    if record.final_spectrum is not None:
        write_csv(tmp / "final_spectrum.csv", ["index", "sigma"],
                  [(i + 1, s) for i, s in enumerate(record.final_spectrum)])
    if record.final_w is not None:
        write_csv(tmp / "final_w.csv", [f"c{j + 1}" for j in range(record.final_w.shape[1])],
                  record.final_w)
    if record.power_trace:
        write_csv(tmp / "power_trace.csv", ["step", "e_t", "delta_t", "gap_ratio", "restart"],
                  [(step, d.e_t, d.delta_t, d.gap_ratio, d.restart_flag)
                   for step, d in record.power_trace])
    meta = {"run_id": record.run_id, "label": record.label, "status": record.status}
    meta.update(config_items(record.config, gen))
    write_manifest(tmp / "manifest.txt", meta)
    _commit_dir(tmp, final)
    return final


def _float(s: str) -> float:
    return float(s)


def load_run(path: Path) -> RunRecord:
    path = Path(path)
    meta = read_manifest(path / "manifest.txt")
    opt = {k[4:]: v for k, v in meta.items() if k.startswith("opt.")}
    cfg = NsdConfig(norm=opt["norm"], gamma0=float(opt["gamma0"]), mu=float(opt["mu"]),
                    batch_size=int(opt["batch_size"]) if opt["batch_size"] else None,
                    max_steps=int(opt["max_steps"]), nucgd_mode=opt["nucgd_mode"],
                    restart_tau=float(opt["restart_tau"]), seed=int(opt["seed"]))
    rows = []
    if (path / "metrics.csv").exists():
        header, data = read_csv(path / "metrics.csv")
        col = {name: i for i, name in enumerate(header)}
        for r in data:
            rep = MetricsReport(step=int(r[col["step"]]), loss=_float(r[col["loss"]]),
                                accuracy=_float(r[col["accuracy"]]),
                                restarts=int(r[col["restarts"]]))
            for k in ALL_NORMS:
                rep.correlations[k] = _float(r[col[f"corr_{k.short}"]])
                rep.margin_errors[k] = _float(r[col[f"err_{k.short}"]])
            for name in ("power_alignment", "gap_ratio", "e_t", "delta_t"):
                setattr(rep, name, _float(r[col[name]]))
            rows.append(rep)
    spec = None
    if (path / "final_spectrum.csv").exists():
        _, data = read_csv(path / "final_spectrum.csv")
        spec = np.array([float(r[1]) for r in data])
    final_w = None
    if (path / "final_w.csv").exists():
        _, data = read_csv(path / "final_w.csv")
        final_w = np.array([[float(v) for v in r] for r in data])
    trace = []
    if (path / "power_trace.csv").exists():
        _, data = read_csv(path / "power_trace.csv")
        trace = [(int(r[0]), PowerDiag(float(r[1]), float(r[2]), float(r[3]), r[4] == "1"))
                 for r in data]
    return RunRecord(meta["run_id"], meta["label"], cfg, rows, spec, final_w, trace, 0.0,
                     meta["status"])


def load_runs(output_dir: Path) -> list[RunRecord]:
    runs_dir = Path(output_dir) / "runs"
    if not runs_dir.is_dir():
        return []
    return [load_run(p) for p in sorted(runs_dir.iterdir())
            if p.is_dir() and not p.name.startswith(".")]


def _append_timings(out: Path, records) -> None:
    path = out / "timings.csv"
    new = not path.exists()
    with path.open("a") as fh:
        if new:
            fh.write("run_id,label,wall_time_s,status\n")
        for r in records:
            fh.write(f"{r.run_id},{r.label},{r.wall_time:.3f},{r.status.split(':')[0]}\n")


# -- pipeline stages ---------------------------------------------------------------

def prepare_dataset(cfg: ExperimentConfig):
    """Load ``dataset.csv`` when it matches ``cfg.gen``, else generate and save."""
    out = cfg.resolved_output()
    path = out / "dataset.csv"
    manifest = path.with_name(path.name + ".manifest")
    if path.exists() and manifest.exists():
        meta = read_manifest(manifest)
        want = {f"gen.{k}": str(v) for k, v in asdict(cfg.gen).items()}
        if all(meta.get(k) == v for k, v in want.items()):
            return load_dataset(path)
    ds = generate(cfg.gen)
    save_dataset(ds, path)
    return ds


def _refs_key(cfg: ExperimentConfig) -> dict:
    items = {f"gen.{k}": str(v) for k, v in asdict(cfg.gen).items()}
    items.update({f"solve.{k}": str(v) for k, v in asdict(cfg.solve).items()})
    return items


def prepare_references(cfg: ExperimentConfig, ds) -> dict:
    """Reuse persisted references solved under the same data and solver
    settings; otherwise certify separability, solve all four and persist."""
    ref_dir = cfg.resolved_output() / "references"
    index = ref_dir / "index.manifest"
    key = _refs_key(cfg)
    if index.exists():
        meta = read_manifest(index)
        if all(meta.get(k) == v for k, v in key.items()):
            return {k: load_reference(ref_dir, k) for k in ALL_NORMS}
    report = check_separability(ds, cfg.separability_tol, cfg.solve)
    if not report.separable:
        raise SeparabilityError(
            f"dataset not separable (best entrywise-max margin {report.witness_margin:.3e})",
            report)
    refs = solve_all_references(ds, cfg.solve)
    tmp = _atomic_dir(ref_dir)
    for ref in refs.values():
        save_reference(ref, tmp)
    key["separability_margin"] = repr(float(report.witness_margin))
    write_manifest(tmp / "index.manifest", key)
    _commit_dir(tmp, ref_dir)
    return refs


def run_configs(cfg: ExperimentConfig, ds, refs, optimizers) -> list[RunRecord]:
    out = cfg.resolved_output()
    records = []
    for ocfg in optimizers:
        record = execute_run(ds, refs, ocfg, cfg.probes, cfg.gen)
        save_run(record, out / "runs", cfg.gen)
        log.info("%s %s: %s in %.1fs", record.run_id, record.label, record.status,
                 record.wall_time)
        records.append(record)
    _append_timings(out, records)
    return records


def run_experiment(cfg: ExperimentConfig, emit: bool = True) -> list[RunRecord]:
    """Dataset -> separability -> references -> every optimizer -> report."""
    from .report import emit_report

    out = cfg.resolved_output()
    out.mkdir(parents=True, exist_ok=True)
    ds = prepare_dataset(cfg)
    refs = prepare_references(cfg, ds)
    records = run_configs(cfg, ds, refs, cfg.optimizers)
    if emit and records:
        emit_report(records, out / "report", refs=refs)
    return records


def sweep_configs(cfg: ExperimentConfig) -> list[tuple]:
    """``(value, NsdConfig)`` for every optimizer x sweep value."""
    if cfg.sweep is None:
        raise ValueError("config has no sweep")
    return [(v, replace(o, **{cfg.sweep.axis: v}))
            for o in cfg.optimizers for v in cfg.sweep.values]


def run_sweep(cfg: ExperimentConfig) -> list[RunRecord]:
    """Clone each optimizer across the sweep values, run all cells and write
    ``report/sweep_summary.csv`` and ``report/sweep_trends.csv``."""
    from .report import emit_report, write_sweep_summary

    out = cfg.resolved_output()
    out.mkdir(parents=True, exist_ok=True)
    ds = prepare_dataset(cfg)
    refs = prepare_references(cfg, ds)
    cells = sweep_configs(cfg)
    records = run_configs(cfg, ds, refs, [c for _, c in cells])
    emit_report(records, out / "report", refs=refs)
    write_sweep_summary(records, cfg.sweep.axis, out / "report", ds=ds, refs=refs)
    return records


# -- key=value configuration -------------------------------------------------------

def parse_config_text(text: str) -> dict:
    items = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"bad config line (expected key=value): {raw!r}")
        k, v = line.split("=", 1)
        items[k.strip()] = v.strip()
    return items


def _coerce(cls, name, value):
    ftype = {f.name: f.type for f in fields(cls)}[name]
    if value in ("", "none", "None") and "None" in str(ftype):
        return None
    if "int" in str(ftype) and "float" not in str(ftype):
        return int(value)
    if "float" in str(ftype):
        return float(value)
    return value


def build_config(items: dict) -> ExperimentConfig:
    """Build an ``ExperimentConfig`` from dotted ``key=value`` pairs.

    Keys: ``gen.*``, ``solve.*``, ``probe.dense_until|growth``, ``opt.norms``
    (comma list), ``opt.<field>`` (all optimizers), ``opt.<norm>.<field>``
    (one optimizer), ``sweep.axis``, ``sweep.values``, ``output_dir``,
    ``separability_tol``.
    """
    items = dict(items)
    gen_kw, solve_kw, probe_kw, opt_kw, per_norm = {}, {}, {}, {}, {}
    top = {}
    norms = ALL_NORMS
    for key, value in items.items():
        head, _, rest = key.partition(".")
        if head == "gen":
            gen_kw[rest] = _coerce(GenConfig, rest, value)
        elif head == "solve":
            solve_kw[rest] = _coerce(SolveConfig, rest, value)
        elif head == "probe":
            probe_kw[rest] = _coerce(ProbeSchedule, rest, value)
        elif head == "opt":
            if rest == "norms":
                norms = tuple(NormKind.parse(v) for v in value.split(",") if v.strip())
            elif "." in rest:
                norm, _, fname = rest.partition(".")
                per_norm.setdefault(NormKind.parse(norm), {})[fname] = \
                    _coerce(NsdConfig, fname, value)
            else:
                opt_kw[rest] = _coerce(NsdConfig, rest, value)
        elif head == "sweep":
            top[f"sweep.{rest}"] = value
        elif key in ("output_dir", "separability_tol"):
            top[key] = value
        else:
            raise KeyError(f"unknown config key {key!r}")

    if "max_steps" not in opt_kw:
        opt_kw["max_steps"] = (FULL_BATCH_STEPS if opt_kw.get("batch_size") is None
                               and top.get("sweep.axis") != "batch_size"
                               else MINI_BATCH_STEPS)
    optimizers = []
    for norm in norms:
        kw = dict(opt_kw)
        kw.update(per_norm.get(norm, {}))
        optimizers.append(NsdConfig(norm=norm, **kw))

    sweep = None
    if "sweep.axis" in top:
        values = [v for v in top.get("sweep.values", "").split(",") if v.strip()]
        sweep = Sweep(top["sweep.axis"], tuple(values))
    return ExperimentConfig(
        gen=GenConfig(**gen_kw), solve=SolveConfig(**solve_kw),
        optimizers=tuple(optimizers), probes=ProbeSchedule(**probe_kw),
        output_dir=Path(top.get("output_dir", "nsdbias-out")), sweep=sweep,
        separability_tol=float(top.get("separability_tol", 1e-6)))


def load_config_file(path) -> dict:
    return parse_config_text(Path(path).read_text())
