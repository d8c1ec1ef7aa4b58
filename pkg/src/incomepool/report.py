"""Serialise test reports as JSON, CSV tables and markdown."""

from __future__ import annotations

import csv
import json
import os
from typing import Sequence

from .core import CATEGORIES, EarnerType
from .overid import PoolingTestReport, UnrestrictedReport

SCHEMA_VERSION = 1

# column order of the first-stage table and row order of the pooling table
FIRST_STAGE_ORDER = (EarnerType.JOINT, EarnerType.FEMALE, EarnerType.MALE)
SECOND_STAGE_ORDER = (EarnerType.MALE, EarnerType.FEMALE, EarnerType.JOINT)


def _num(v: float) -> str:
    return repr(float(v))


def _category_dict(test) -> dict:
    return {
        "regression": test.regression.to_dict(),
        "wald": test.wald.to_dict() if test.wald is not None else None,
        "error": test.error,
    }


def pooling_report_dict(report: PoolingTestReport) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "pooling_test",
        "mode": report.mode.value,
        "subsample": report.subsample,
        "n": report.n,
        "earner_types": [t.value for t in report.earner_types],
        "bootstrap_reps": report.bootstrap_reps,
        "bootstrap_failed": report.n_failed,
        "seed": report.seed,
        "warnings": list(report.warnings),
        "first_stage": {t.value: r.to_dict() for t, r in report.first_stage.per_type.items()},
        "categories": {c.value: _category_dict(t) for c, t in report.categories.items()},
    }


def unrestricted_report_dict(report: UnrestrictedReport) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "unrestricted_test",
        "n": report.n,
        "rainfall_dim": report.rainfall_dim,
        "bootstrap_reps": report.bootstrap_reps,
        "bootstrap_failed": report.n_failed,
        "seed": report.seed,
        "categories": {c.value: _category_dict(t) for c, t in report.categories.items()},
    }


def dumps(data: dict) -> str:
    return json.dumps(data, indent=2, allow_nan=False) + "\n"


def write_json(data: dict, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps(data))


# ----------------------------------------------------------------------
# tables as lists of rows
# ----------------------------------------------------------------------


def first_stage_rows(report: PoolingTestReport, section: str | None = None) -> list[list[str]]:
    types = [t for t in FIRST_STAGE_ORDER if t in report.first_stage.per_type]
    regs = [report.first_stage.per_type[t] for t in types]
    rain = [n for n in regs[0].names if n.startswith("rain_")]
    lead = [report.mode.value] + ([section] if section is not None else [])
    rows = []
    for name in rain:
        rows.append(lead + [name, "coef", *(_num(r.coef(name)) for r in regs)])
        rows.append(lead + [name, "se", *(_num(r.stderr(name)) for r in regs)])
    rows.append(lead + ["r_squared", "value", *(_num(r.r_squared) for r in regs)])
    rows.append(lead + ["observations", "value", *(str(r.n_obs) for r in regs)])
    return rows


def first_stage_header(report: PoolingTestReport, section: bool = False) -> list[str]:
    types = [t for t in FIRST_STAGE_ORDER if t in report.first_stage.per_type]
    return ["mode", *(["section"] if section else []), "term", "statistic", *(f"income_{t.value}" for t in types)]


def pooling_rows(report: PoolingTestReport, section: str | None = None) -> list[list[str]]:
    lead = [report.mode.value] + ([section] if section is not None else [])
    tests = [report.categories[c] for c in CATEGORIES]
    rows = []
    for t in SECOND_STAGE_ORDER:
        if t not in report.earner_types:
            continue
        name = f"pred_{t.value}"
        rows.append(lead + [name, "coef", *(_num(x.regression.coef(name)) for x in tests)])
        rows.append(lead + [name, "se", *(_num(x.regression.stderr(name)) for x in tests)])
    rows.append(lead + ["wald", "statistic", *(_num(x.wald.statistic) if x.wald else "" for x in tests)])
    rows.append(lead + ["wald", "p_value", *(_num(x.wald.p_value) if x.wald else "" for x in tests)])
    rows.append(lead + ["wald", "df", *(str(x.wald.df) if x.wald else "" for x in tests)])
    rows.append(lead + ["r_squared", "value", *(_num(x.regression.r_squared) for x in tests)])
    rows.append(lead + ["observations", "value", *(str(x.regression.n_obs) for x in tests)])
    return rows


def category_header(section: bool = False) -> list[str]:
    return ["mode", *(["section"] if section else []), "term", "statistic", *(c.value for c in CATEGORIES)]


def unrestricted_rows(report: UnrestrictedReport) -> list[list[str]]:
    tests = [report.categories[c] for c in CATEGORIES]
    rows = []
    for j in range(report.rainfall_dim):
        name = f"rain_{j}"
        rows.append([name, "coef", *(_num(x.regression.coef(name)) for x in tests)])
        rows.append([name, "se", *(_num(x.regression.stderr(name)) for x in tests)])
    rows.append(["wald", "statistic", *(_num(x.wald.statistic) if x.wald else "" for x in tests)])
    rows.append(["wald", "p_value", *(_num(x.wald.p_value) if x.wald else "" for x in tests)])
    rows.append(["wald", "df", *(str(x.wald.df) if x.wald else "" for x in tests)])
    rows.append(["r_squared", "value", *(_num(x.regression.r_squared) for x in tests)])
    rows.append(["observations", "value", *(str(x.regression.n_obs) for x in tests)])
    return rows


def write_table(path: str | os.PathLike, header: Sequence[str], rows: Sequence[Sequence[str]]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def write_pooling_tables(report: PoolingTestReport, table3: str | os.PathLike, table4: str | os.PathLike) -> None:
    write_table(table3, first_stage_header(report), first_stage_rows(report))
    write_table(table4, category_header(), pooling_rows(report))


def write_split_table(
    path: str | os.PathLike, sections: Sequence[tuple[str, PoolingTestReport]]
) -> None:
    """Heterogeneity table: one labelled section per subsample."""
    rows = []
    for label, rep in sections:
        rows += pooling_rows(rep, section=label)
    write_table(path, category_header(section=True), rows)


def write_unrestricted_table(report: UnrestrictedReport, path: str | os.PathLike) -> None:
    write_table(path, ["term", "statistic", *(c.value for c in CATEGORIES)], unrestricted_rows(report))


# ----------------------------------------------------------------------
# markdown
# ----------------------------------------------------------------------


def _stars(coef: float, se: float) -> str:
    if se <= 0:
        return ""
    z = abs(coef / se)
    return "**" if z > 2.576 else "*" if z > 1.960 else ""


def pooling_markdown(report: PoolingTestReport) -> str:
    lines = [
        f"# Income pooling test: {report.mode.value} specification, subsample `{report.subsample}`",
        "",
        f"N = {report.n}; household-clustered bootstrap with B = {report.bootstrap_reps} "
        f"(seed {report.seed}, {report.n_failed} failed replications).",
        "",
        "## First stage: differenced log income on rainfall",
        "",
    ]
    types = [t for t in FIRST_STAGE_ORDER if t in report.first_stage.per_type]
    regs = [report.first_stage.per_type[t] for t in types]
    lines.append("| | " + " | ".join(f"{t.value.capitalize()} income" for t in types) + " |")
    lines.append("|---" * (len(types) + 1) + "|")
    for name in (n for n in regs[0].names if n.startswith("rain_")):
        lines.append(
            f"| {name} | "
            + " | ".join(f"{r.coef(name):.5f}{_stars(r.coef(name), r.stderr(name))} ({r.stderr(name):.5f})" for r in regs)
            + " |"
        )
    lines.append("| R² | " + " | ".join(f"{r.r_squared:.3f}" for r in regs) + " |")
    lines += ["", "## Second stage and proportionality tests", ""]
    lines.append("| | " + " | ".join(c.label for c in CATEGORIES) + " |")
    lines.append("|---" * (len(CATEGORIES) + 1) + "|")
    tests = [report.categories[c] for c in CATEGORIES]
    for t in SECOND_STAGE_ORDER:
        if t not in report.earner_types:
            continue
        name = f"pred_{t.value}"
        cells = []
        for x in tests:
            b, s = x.regression.coef(name), x.regression.stderr(name)
            cells.append(f"{b:.3f}{_stars(b, s)} ({s:.3f})")
        lines.append(f"| Predicted change in {t.value} income | " + " | ".join(cells) + " |")
    lines.append(
        "| Wald test (p) | "
        + " | ".join(
            f"{x.wald.statistic:.2f} ({x.wald.p_value:.3f})" if x.wald else ("error" if x.error else "")
            for x in tests
        )
        + " |"
    )
    lines.append("| R² | " + " | ".join(f"{x.regression.r_squared:.3f}" for x in tests) + " |")
    if report.warnings:
        lines += ["", "Warnings:", ""] + [f"- {w}" for w in report.warnings]
    errors = [(c, t.error) for c, t in report.categories.items() if t.error]
    if errors:
        lines += ["", "Errors:", ""] + [f"- {c.value}: {e}" for c, e in errors]
    return "\n".join(lines) + "\n"


def unrestricted_markdown(report: UnrestrictedReport) -> str:
    tests = [report.categories[c] for c in CATEGORIES]
    lines = [
        "# Unrestricted proportionality tests: expenditure on rainfall",
        "",
        f"N = {report.n}; K = {report.rainfall_dim}; bootstrap B = {report.bootstrap_reps} (seed {report.seed}).",
        "",
        "| | " + " | ".join(c.label for c in CATEGORIES) + " |",
        "|---" * (len(CATEGORIES) + 1) + "|",
    ]
    for j in range(report.rainfall_dim):
        name = f"rain_{j}"
        lines.append(
            f"| {name} | "
            + " | ".join(
                f"{x.regression.coef(name):.5f}{_stars(x.regression.coef(name), x.regression.stderr(name))} "
                f"({x.regression.stderr(name):.5f})"
                for x in tests
            )
            + " |"
        )
    lines.append(
        "| Wald test (p) | "
        + " | ".join(f"{x.wald.statistic:.2f} ({x.wald.p_value:.3f})" if x.wald else "" for x in tests)
        + " |"
    )
    lines.append("| R² | " + " | ".join(f"{x.regression.r_squared:.3f}" for x in tests) + " |")
    return "\n".join(lines) + "\n"


def write_text(text: str, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


__all__ = [
    "SCHEMA_VERSION",
    "pooling_markdown",
    "pooling_report_dict",
    "unrestricted_markdown",
    "unrestricted_report_dict",
    "write_json",
    "write_pooling_tables",
    "write_split_table",
    "write_text",
    "write_unrestricted_table",
]
