"""Command line entry point: ``incomepool {simulate,estimate,montecarlo,unrestricted}``.

Outputs go to files only; diagnostics go to stderr. Exit codes: 0 success,
2 input or configuration error, 3 estimation finished with some categories
failing (partial results are still written).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .core import SpecMode
from .ingest import config_to_dict, load_config, load_panel, write_raw_panel
from .montecarlo import run_montecarlo
from .overid import SUBSAMPLES, IdentificationError, prepare_rows, run_pooling_test, run_unrestricted_test
from .regress import BootstrapFailure, DEFAULT_BOOTSTRAP_REPS
from .report import (
    dumps,
    pooling_markdown,
    pooling_report_dict,
    unrestricted_markdown,
    unrestricted_report_dict,
    write_json,
    write_pooling_tables,
    write_split_table,
    write_text,
    write_unrestricted_table,
)
from .simulate import PoolingRegime, SimConfig, simulate_panel

log = logging.getLogger("incomepool")

EXIT_OK, EXIT_INPUT, EXIT_PARTIAL = 0, 2, 3

SPLITS = {
    "table5.csv": (("A: non-matrilineal", "non-matrilineal"), ("B: matrilineal", "matrilineal")),
    "table6.csv": (("A: non-female-headed", "non-female-headed"), ("B: female-headed", "female-headed")),
}


class InputError(Exception):
    pass


def _sha256(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def manifest(argv: list[str], seed: int, config: SimConfig | None = None, inputs=()) -> dict:
    digest = None
    if config is not None:
        canon = json.dumps(config_to_dict(config), sort_keys=True).encode()
        digest = hashlib.sha256(canon).hexdigest()
    return {
        "command": ["incomepool", *argv],
        "config_digest": digest,
        "seed": seed,
        "version": __version__,
        "inputs": {str(p): _sha256(p) for p in inputs},
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }


def _config(path: str | None, seed: int, n_households: int | None = None) -> SimConfig:
    try:
        cfg = load_config(path) if path else SimConfig()
        changes = {"seed": seed}
        if n_households is not None:
            changes["n_households"] = n_households
        return cfg.replace(**changes)
    except (OSError, ValueError, TypeError, KeyError, AttributeError) as exc:
        raise InputError(f"config error: {exc}") from exc


def _regime(text: str) -> PoolingRegime:
    try:
        return PoolingRegime.parse(text)
    except ValueError as exc:
        raise InputError(str(exc)) from exc


def _load(path: str):
    obs, report = load_panel(path)
    for w in report.warnings:
        log.warning("%s", w)
    if not report.ok:
        for e in report.errors:
            log.error("%s", e)
        raise InputError(f"{path}: {len(report.errors)} validation error(s)")
    if not obs:
        raise InputError(f"{path}: no usable households")
    return obs


def cmd_simulate(args, argv) -> int:
    cfg = _config(args.config, args.seed, args.n_households)
    panel = simulate_panel(cfg, _regime(args.regime))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_raw_panel(panel, out)
    inputs = [args.config] if args.config else []
    write_json(manifest(argv, args.seed, cfg, inputs), out.with_name(out.name + ".manifest.json"))
    log.info("wrote %d observations to %s", len(panel), out)
    if args.print_summary:
        print(f"{len(panel)} observations, {cfg.n_households} households -> {out}")
    return EXIT_OK


def cmd_estimate(args, argv) -> int:
    mode = SpecMode(args.mode)
    obs = _load(args.panel)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        report = run_pooling_test(obs, mode, args.subsample, B=args.bootstrap, seed=args.seed)
    except (IdentificationError, ValueError) as exc:
        raise InputError(str(exc)) from exc
    write_json(pooling_report_dict(report), out / "report.json")
    write_text(pooling_markdown(report), out / "report.md")
    write_pooling_tables(report, out / "table3.csv", out / "table4.csv")
    partial = report.has_errors
    if args.splits:
        for fname, sections in SPLITS.items():
            reps = []
            for label, name in sections:
                try:
                    reps.append((label, run_pooling_test(obs, mode, name, B=args.bootstrap, seed=args.seed)))
                except (IdentificationError, ValueError, BootstrapFailure) as exc:
                    log.error("subsample %s: %s", name, exc)
                    partial = True
            if reps:
                write_split_table(out / fname, reps)
                partial = partial or any(r.has_errors for _, r in reps)
    write_json(manifest(argv, args.seed, inputs=[args.panel]), out / "manifest.json")
    for c, t in report.categories.items():
        if t.error:
            log.error("category %s: %s", c.value, t.error)
    if args.print_summary:
        for c, p in report.p_values().items():
            print(f"{c.value}\t{p:.4f}")
    return EXIT_PARTIAL if partial else EXIT_OK


def cmd_unrestricted(args, argv) -> int:
    obs = _load(args.panel)
    out = Path(args.out_dir)
    try:
        rows = prepare_rows(obs, SpecMode.EXTENDED)
        report = run_unrestricted_test(rows, B=args.bootstrap, seed=args.seed)
    except (IdentificationError, ValueError) as exc:
        raise InputError(str(exc)) from exc
    out.mkdir(parents=True, exist_ok=True)
    write_json(unrestricted_report_dict(report), out / "report.json")
    write_text(unrestricted_markdown(report), out / "report.md")
    write_unrestricted_table(report, out / "tableA1.csv")
    write_json(manifest(argv, args.seed, inputs=[args.panel]), out / "manifest.json")
    if args.print_summary:
        for c, p in report.p_values().items():
            print(f"{c.value}\t{p:.4f}")
    return EXIT_PARTIAL if report.has_errors else EXIT_OK


def cmd_montecarlo(args, argv) -> int:
    if args.reps < 1:
        raise InputError("--reps must be at least 1")
    cfg = _config(args.config, args.seed, args.n_households)
    result = run_montecarlo(
        cfg, _regime(args.regime), args.reps, args.bootstrap, args.seed,
        mode=SpecMode(args.mode), subsample=args.subsample, jobs=args.jobs,
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    summary = result.summary()
    write_text(dumps({"summary": summary, "per_rep": result.per_rep}), out)
    inputs = [args.config] if args.config else []
    write_json(manifest(argv, args.seed, cfg, inputs), out.with_name(out.name + ".manifest.json"))
    if args.print_summary:
        print(dumps(summary), end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="incomepool", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, bootstrap=True):
        sp.add_argument("--seed", type=int, required=True, help="random seed (mandatory)")
        if bootstrap:
            sp.add_argument("--bootstrap", "-B", type=int, default=DEFAULT_BOOTSTRAP_REPS, help="bootstrap replications")
        sp.add_argument("--jobs", type=int, default=1, help="worker processes where work is parallel")
        sp.add_argument("--print-summary", action="store_true", help="print a short summary to stdout")
        sp.add_argument("-v", "--verbose", action="store_true")

    s = sub.add_parser("simulate", help="write a simulated raw panel CSV")
    s.add_argument("--config", help="JSON simulation config (defaults if omitted)")
    s.add_argument("--regime", default="full", help="full | none | partial:food[,clothing...]")
    s.add_argument("--n-households", type=int)
    s.add_argument("--out", required=True)
    common(s, bootstrap=False)
    s.set_defaults(func=cmd_simulate)

    e = sub.add_parser("estimate", help="two-stage pooling tests on a raw panel")
    e.add_argument("--panel", required=True)
    e.add_argument("--mode", choices=[m.value for m in SpecMode], default="extended")
    e.add_argument("--subsample", choices=SUBSAMPLES, default="all")
    e.add_argument("--splits", action="store_true", help="also write the matrilineal and female-headed split tables")
    e.add_argument("--out-dir", required=True)
    common(e)
    e.set_defaults(func=cmd_estimate)

    m = sub.add_parser("montecarlo", help="size/power study over simulated panels")
    m.add_argument("--config")
    m.add_argument("--regime", default="full")
    m.add_argument("--reps", type=int, required=True)
    m.add_argument("--mode", choices=[x.value for x in SpecMode], default="extended")
    m.add_argument("--subsample", choices=SUBSAMPLES, default="all")
    m.add_argument("--n-households", type=int)
    m.add_argument("--out", required=True)
    common(m)
    m.set_defaults(func=cmd_montecarlo)

    u = sub.add_parser("unrestricted", help="rainfall-only proportionality tests")
    u.add_argument("--panel", required=True)
    u.add_argument("--out-dir", required=True)
    common(u)
    u.set_defaults(func=cmd_unrestricted)
    return p


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s: %(message)s",
        stream=sys.stderr,
        force=True,
    )
    try:
        return args.func(args, argv)
    except InputError as exc:
        log.error("%s", exc)
        return EXIT_INPUT
    except BootstrapFailure as exc:
        log.error("%s", exc)
        return EXIT_PARTIAL


if __name__ == "__main__":
    sys.exit(main())
