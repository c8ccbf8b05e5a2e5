"""Command line interface.

    nsdbias generate    write dataset.csv (+ manifest, centers) to the output dir
    nsdbias solve-refs  certify separability and solve the four references
    nsdbias train       run the configured optimizers (``--norms`` picks one)
    nsdbias sweep       batch-size or momentum sweep
    nsdbias report      rebuild the report bundle from persisted runs

Settings come from ``--config FILE`` (dotted ``key=value`` lines), then
``--set key=value`` and the named flags, later sources winning. On failure a
single line ``nsdbias-error: <Type>: <message>`` goes to stderr and the exit
code is nonzero.
"""
from __future__ import annotations

import argparse
import logging
import sys

from . import harness
from .errors import NsdError, SeparabilityError
from .report import emit_report, summarize

EXIT_USAGE = 2
EXIT_NOT_SEPARABLE = 3
EXIT_FAILED_RUN = 4
EXIT_ERROR = 1

# flag -> dotted config key
FLAG_KEYS = {
    "output_dir": "output_dir",
    "k": "gen.k", "d": "gen.d", "n_per_class": "gen.n_per_class", "sigma": "gen.sigma",
    "seed": "gen.seed",
    "norms": "opt.norms", "gamma0": "opt.gamma0", "mu": "opt.mu",
    "batch_size": "opt.batch_size", "max_steps": "opt.max_steps",
    "nucgd_mode": "opt.nucgd_mode", "opt_seed": "opt.seed",
    "solve_iters": "solve.max_iters", "solve_seed": "solve.seed",
    "dense_until": "probe.dense_until", "growth": "probe.growth",
    "sweep_axis": "sweep.axis", "sweep_values": "sweep.values",
}


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value configuration file")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one dotted config key (repeatable)")
    common.add_argument("--output-dir")
    common.add_argument("-v", "--verbose", action="store_true")
    g = common.add_argument_group("dataset")
    g.add_argument("--k", type=int)
    g.add_argument("--d", type=int)
    g.add_argument("--n-per-class", type=int)
    g.add_argument("--sigma", type=float)
    g.add_argument("--seed", type=int, help="dataset seed")
    g = common.add_argument_group("optimizers")
    g.add_argument("--norms", help="comma list of frobenius,entrywise_max,spectral,nuclear")
    g.add_argument("--gamma0", type=float)
    g.add_argument("--mu", type=float)
    g.add_argument("--batch-size", type=int)
    g.add_argument("--max-steps", type=int)
    g.add_argument("--nucgd-mode", choices=["analytic", "power"])
    g.add_argument("--opt-seed", type=int)
    g = common.add_argument_group("references and probes")
    g.add_argument("--solve-iters", type=int)
    g.add_argument("--solve-seed", type=int)
    g.add_argument("--dense-until", type=int)
    g.add_argument("--growth", type=float)
    g = common.add_argument_group("sweep")
    g.add_argument("--sweep-axis", choices=list(harness.SWEEP_AXES))
    g.add_argument("--sweep-values", help="comma list")

    p = argparse.ArgumentParser(prog="nsdbias", description=__doc__.split("\n\n")[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("generate", "solve-refs", "train", "sweep", "report"):
        sub.add_parser(name, parents=[common])
    return p


def config_from_args(args) -> harness.ExperimentConfig:
    items = {}
    if args.config:
        items.update(harness.load_config_file(args.config))
    for kv in args.set:
        if "=" not in kv:
            raise ValueError(f"--set expects KEY=VALUE, got {kv!r}")
        k, v = kv.split("=", 1)
        items[k.strip()] = v.strip()
    for attr, key in FLAG_KEYS.items():
        value = getattr(args, attr, None)
        if value is not None:
            items[key] = str(value)
    return harness.build_config(items)


def _dispatch(args) -> int:
    cfg = config_from_args(args)
    out = cfg.resolved_output()
    out.mkdir(parents=True, exist_ok=True)
    if args.command == "generate":
        ds = harness.prepare_dataset(cfg)
        print(f"dataset n={ds.n} k={ds.k} d={ds.d} -> {out / 'dataset.csv'}")
        return 0
    if args.command == "solve-refs":
        ds = harness.prepare_dataset(cfg)
        refs = harness.prepare_references(cfg, ds)
        for kind, ref in refs.items():
            print(f"{kind.value}: margin={ref.margin_value!r} iterations={ref.iterations}")
        return 0
    if args.command == "report":
        records = harness.load_runs(out)
        if not records:
            raise FileNotFoundError(f"no runs under {out / 'runs'}")
        refs = None
        if (out / "references" / "index.manifest").exists():
            from .maxmargin_ref import load_reference
            from .densela import ALL_NORMS
            refs = {k: load_reference(out / "references", k) for k in ALL_NORMS}
        for name, path in sorted(emit_report(records, out / "report", refs=refs).items()):
            print(f"{name}: {path}")
        return 0
    if args.command == "sweep":
        if cfg.sweep is None:
            raise ValueError("sweep needs --sweep-axis/--sweep-values or sweep.* keys")
        records = harness.run_sweep(cfg)
    else:
        records = harness.run_experiment(cfg)
    print(summarize(records))
    return 0 if all(r.ok for r in records) else EXIT_FAILED_RUN


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _dispatch(args)
    except SeparabilityError as exc:
        code = EXIT_NOT_SEPARABLE
        err = exc
    except (ValueError, KeyError) as exc:
        code = EXIT_USAGE
        err = exc
    except (NsdError, OSError) as exc:
        code = EXIT_ERROR
        err = exc
    msg = str(err).replace("\n", " ")
    print(f"nsdbias-error: {type(err).__name__}: {msg}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
