"""Report bundle: combined metrics, reference data, spectra, sweep summaries
and SVG charts. Every file is a pure function of its inputs."""
from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .bias_metrics import correlation, spectrum
from .densela import ALL_NORMS
from .harness import METRIC_COLUMNS, RunRecord, _fmt, report_row
from .linmodel import relative_margin
from .svg import line_chart


def _write(path: Path, text: str) -> Path:
    try:
        path.write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path


def _csv(path: Path, header, rows) -> Path:
    lines = [",".join(header)] + [",".join(_fmt(v) if not isinstance(v, str) else v
                                           for v in row) for row in rows]
    return _write(path, "\n".join(lines) + "\n")


def record_names(records) -> list[str]:
    """Display names: optimizer label plus any non-default batch size or
    momentum; the run id is appended if names still collide."""
    names = []
    for r in records:
        parts = [r.label]
        if r.config.batch_size is not None:
            parts.append(f"B={r.config.batch_size}")
        if r.config.mu != 0.0:
            parts.append(f"mu={r.config.mu:g}")
        names.append(" ".join(parts))
    if len(set(names)) < len(names):
        names = [f"{n} [{r.run_id[:8]}]" for n, r in zip(names, records)]
    return names


def emit_report(records: list, out, refs: dict | None = None) -> dict:
    """Write the report bundle into ``out`` and return ``{name: path}``.

    Failed runs appear only in ``runs.csv``. A successful run without probe
    rows is an error.
    """
    if not records:
        raise ValueError("emit_report needs at least one run record")
    for r in records:
        if r.ok and not r.rows:
            raise ValueError(f"run {r.run_id} ({r.label}) has no probe rows")
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    names = record_names(records)
    paths = {}

    paths["runs"] = _csv(out / "runs.csv", ["run_id", "name", "status"],
                         [(r.run_id, n, r.status.replace(",", ";"))
                          for r, n in zip(records, names)])
    good = [(r, n) for r, n in zip(records, names) if r.ok]
    rows = [[r.run_id, n] + report_row(rep) for r, n in good for rep in r.rows]
    paths["metrics"] = _csv(out / "metrics.csv", ["run_id", "optimizer"] + METRIC_COLUMNS, rows)

    if refs:
        paths.update(_reference_files(refs, out))

    spectra = [(n, r.final_spectrum) for r, n in good if r.final_spectrum is not None]
    if spectra:
        length = max(len(s) for _, s in spectra)
        table = []
        for i in range(length):
            table.append([i + 1] + [s[i] if i < len(s) else float("nan") for _, s in spectra])
        paths["final_spectra"] = _csv(out / "final_spectra.csv",
                                      ["index"] + [n for n, _ in spectra], table)

    if good:
        paths.update(_charts(good, out))
    return paths


def _reference_files(refs: dict, out: Path) -> dict:
    kinds = [k for k in ALL_NORMS if k in refs]
    paths = {}
    for k in kinds:
        w = refs[k].w_star
        paths[f"reference_{k.value}"] = _csv(
            out / f"reference_{k.value}.csv", [f"c{j + 1}" for j in range(w.shape[1])], w)
    specs = {k: spectrum(refs[k].w_star) for k in kinds}
    length = max(len(s.values) for s in specs.values())
    paths["reference_spectra"] = _csv(
        out / "reference_spectra.csv", ["index"] + [k.value for k in kinds],
        [[i + 1] + [specs[k].values[i] for k in kinds] for i in range(length)])
    paths["reference_summary"] = _csv(
        out / "reference_summary.csv", ["norm", "margin", "effective_rank"],
        [(k.value, refs[k].margin_value, specs[k].effective_rank) for k in kinds])
    paths["reference_correlation"] = _csv(
        out / "reference_correlation.csv", ["norm"] + [k.value for k in kinds],
        [[a.value] + [correlation(refs[a].w_star, refs[b]) for b in kinds] for a in kinds])
    return paths


def _charts(good, out: Path) -> dict:
    paths = {}
    err = {n: ([rep.step for rep in r.rows],
               [rep.margin_errors.get(r.config.norm, float("nan")) for rep in r.rows])
           for r, n in good}
    corr = {n: ([rep.step for rep in r.rows],
                [rep.correlations.get(r.config.norm, float("nan")) for rep in r.rows])
            for r, n in good}
    for key, series, title, ylabel, logy in (
            ("chart_margin_error", err, "Margin error vs own-norm reference", "margin error",
             True),
            ("chart_correlation", corr, "Correlation with own-norm reference", "correlation",
             False)):
        try:
            svg = line_chart(series, title, "step", ylabel, logx=True, logy=logy)
        except ValueError:
            continue  # nothing plottable, e.g. max_steps = 0
        paths[key] = _write(out / f"{key[6:]}.svg", svg)
    return paths


def _trend(values) -> str:
    v = [x for x in values if not math.isnan(x)]
    if len(v) < 2:
        return "n/a"
    d = np.diff(v)
    if np.all(d > 0):
        return "increasing"
    if np.all(d < 0):
        return "decreasing"
    return "mixed"


def write_sweep_summary(records: list, axis: str, out, ds=None, refs=None) -> dict:
    """One row per (optimizer, sweep value) plus per-optimizer trends.

    ``sweep_summary.csv``: final loss, accuracy, own-norm correlation and
    margin error, correlations with all references and the own-norm
    normalized margin (needs ``ds``). ``sweep_trends.csv``: spread of the
    own-norm correlation across values and whether correlation and normalized
    margin move monotonically along the sweep axis.
    """
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    header = (["optimizer", "axis", "value", "run_id", "status", "final_step", "final_loss",
               "final_accuracy", "corr_own", "err_own", "normalized_margin_own"]
              + [f"corr_{k.short}" for k in ALL_NORMS])
    rows = []
    by_opt: dict = {}
    for r in records:
        value = getattr(r.config, axis)
        if r.ok and r.rows:
            f = r.final
            own = r.config.norm
            nm = float("nan")
            if ds is not None and r.final_w is not None and np.any(r.final_w):
                nm = relative_margin(r.final_w, ds, own)
            vals = [f.step, f.loss, f.accuracy, f.correlations.get(own, float("nan")),
                    f.margin_errors.get(own, float("nan")), nm]
            vals += [f.correlations.get(k, float("nan")) for k in ALL_NORMS]
            by_opt.setdefault(r.label, []).append((value, vals[3], nm))
        else:
            vals = [float("nan")] * (len(header) - 5)
        rows.append([r.label, axis, _fmt(value) if value is not None else "full",
                     r.run_id, r.status.split(":")[0]] + vals)
    paths = {"sweep_summary": _csv(out / "sweep_summary.csv", header, rows)}
    trend_rows = []
    for label, cells in by_opt.items():
        cells.sort(key=lambda c: (c[0] is not None, c[0] if c[0] is not None else 0))
        corr = [c[1] for c in cells]
        finite = [c for c in corr if not math.isnan(c)]
        spread = max(finite) - min(finite) if finite else float("nan")
        trend_rows.append([label, axis, len(cells), spread, _trend(corr),
                           _trend([c[2] for c in cells])])
    paths["sweep_trends"] = _csv(
        out / "sweep_trends.csv",
        ["optimizer", "axis", "cells", "corr_spread", "corr_trend", "margin_trend"],
        trend_rows)
    return paths


def summarize(records) -> str:
    """One line per run for console output."""
    lines = []
    for r, n in zip(records, record_names(records)):
        if r.ok and r.rows:
            f = r.final
            own = r.config.norm
            lines.append(f"{r.run_id} {n}: step={f.step} loss={f.loss:.3e} "
                         f"acc={f.accuracy:.3f} corr_own={f.correlations.get(own, math.nan):.4f} "
                         f"err_own={f.margin_errors.get(own, math.nan):.3e}")
        else:
            lines.append(f"{r.run_id} {n}: {r.status}")
    return "\n".join(lines)


__all__ = ["emit_report", "write_sweep_summary", "record_names", "summarize", "RunRecord"]
