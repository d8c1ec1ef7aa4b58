"""Flat-file panel I/O.

Two CSV schemas are used. The *raw* schema has one row per income record,
with the observation-level columns repeated on every record of a
household-wave; a household-wave with no crop sales is one row whose four
income columns are empty. The *classified* schema has one row per
household-wave with income already summed by earner type.

Currency columns hold integer tambala (1/100 MK) so files never carry
locale-dependent decimals. Files are UTF-8, comma separated, LF line endings.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Iterable, Sequence

from .core import (
    CATEGORIES,
    COMPONENTS,
    ClassifiedPanel,
    ClassifiedRow,
    EarnerType,
    ExpenditureCategory,
    Gender,
    IncomeRecord,
    PanelObservation,
    SpecMode,
)
from .simulate import SimConfig

AGGREGATE_TOLERANCE = 0.01

OBS_COLUMNS = ["household_id", "wave", "zone_id", "matrilineal", "female_headed"]
EXP_COLUMNS = [f"exp_{c.value}" for c in COMPONENTS] + ["exp_aggregate"]
RECORD_COLUMNS = ["crop_label", "revenue", "primary_gender", "secondary_gender"]


def rain_columns(k: int) -> list[str]:
    return [f"rain_{j}" for j in range(k)]


def raw_header(k: int) -> list[str]:
    return OBS_COLUMNS + rain_columns(k) + EXP_COLUMNS + RECORD_COLUMNS


def classified_header(k: int, mode: SpecMode) -> list[str]:
    incomes = [f"income_{t.value}" for t in mode.earner_types]
    return OBS_COLUMNS + rain_columns(k) + incomes + EXP_COLUMNS


@dataclass(frozen=True)
class Issue:
    row: int
    field: str
    message: str

    def __str__(self) -> str:
        where = f"line {self.row}" if self.row else "file"
        return f"{where}: {self.field}: {self.message}" if self.field else f"{where}: {self.message}"


@dataclass
class ValidationReport:
    errors: list[Issue] = field(default_factory=list)
    warnings: list[Issue] = field(default_factory=list)
    n_input_households: int = 0
    dropped_households: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors

    def error(self, row: int, name: str, message: str) -> None:
        self.errors.append(Issue(row, name, message))

    def warn(self, row: int, name: str, message: str) -> None:
        self.warnings.append(Issue(row, name, message))


class PanelFormatError(ValueError):
    def __init__(self, report: ValidationReport):
        self.report = report
        lines = [str(e) for e in report.errors[:10]]
        more = len(report.errors) - len(lines)
        if more > 0:
            lines.append(f"... and {more} more")
        super().__init__("invalid panel file:\n  " + "\n  ".join(lines))


# ----------------------------------------------------------------------
# number formatting
# ----------------------------------------------------------------------


def to_minor(amount: float) -> int:
    return int(round(amount * 100))


def from_minor(units: int) -> float:
    return units / 100


def _fmt_real(v: float) -> str:
    return repr(float(v))


def _parse_int(text: str) -> int:
    text = text.strip()
    if not text or not text.lstrip("-").isdigit():
        raise ValueError(f"not an integer: {text!r}")
    return int(text)


def _parse_real(text: str) -> float:
    v = float(text.strip())
    if not math.isfinite(v):
        raise ValueError(f"not a finite number: {text!r}")
    return v


def _parse_flag(text: str) -> bool:
    text = text.strip()
    if text not in ("0", "1"):
        raise ValueError(f"expected 0 or 1, got {text!r}")
    return text == "1"


# ----------------------------------------------------------------------
# raw panel
# ----------------------------------------------------------------------


def _read_rows(data: bytes, report: ValidationReport) -> tuple[list[str], list[list[str]]] | None:
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        report.error(0, "", f"file is not valid UTF-8 ({exc.reason} at byte {exc.start})")
        return None
    if text.startswith("﻿"):
        text = text[1:]
    try:
        rows = list(csv.reader(io.StringIO(text, newline="")))
    except csv.Error as exc:
        report.error(0, "", f"malformed CSV: {exc}")
        return None
    if not rows:
        report.error(0, "", "file is empty")
        return None
    return rows[0], rows[1:]


def _rain_dim(header: list[str]) -> int:
    k = 0
    while f"rain_{k}" in header:
        k += 1
    return k


def load_panel(path: str | os.PathLike) -> tuple[list[PanelObservation], ValidationReport]:
    """Read and validate a raw panel file.

    Returns the observations sorted by (household_id, wave) together with a
    report. Any error leaves the observation list empty. Households missing
    a wave, and households with no crop income in either wave, are dropped
    with a warning.
    """
    report = ValidationReport()
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        report.error(0, "", f"cannot read {path}: {exc}")
        return [], report
    try:
        return _load_panel_bytes(data, report)
    except Exception as exc:  # keep load total: report anything unforeseen
        report.error(0, "", f"unexpected failure while parsing: {type(exc).__name__}: {exc}")
        return [], report


def load_panel_bytes(data: bytes) -> tuple[list[PanelObservation], ValidationReport]:
    report = ValidationReport()
    try:
        return _load_panel_bytes(data, report)
    except Exception as exc:
        report.error(0, "", f"unexpected failure while parsing: {type(exc).__name__}: {exc}")
        return [], report


def _load_panel_bytes(data: bytes, report: ValidationReport) -> tuple[list[PanelObservation], ValidationReport]:
    parsed = _read_rows(data, report)
    if parsed is None:
        return [], report
    header, rows = parsed
    k = _rain_dim(header)
    expected = raw_header(k)
    if k == 0:
        report.error(1, "header", "no rain_0 column")
        return [], report
    if header != expected:
        unknown = [h for h in header if h not in expected]
        missing = [h for h in expected if h not in header]
        detail = []
        if unknown:
            detail.append(f"unknown columns {unknown}")
        if missing:
            detail.append(f"missing columns {missing}")
        if not detail:
            detail.append("columns out of order")
        report.error(1, "header", "; ".join(detail))
        return [], report

    col = {name: i for i, name in enumerate(header)}
    obs_fields: dict[tuple[str, int], tuple] = {}
    obs_line: dict[tuple[str, int], int] = {}
    records: dict[tuple[str, int], list[IncomeRecord]] = {}

    for line_no, row in enumerate(rows, start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != len(header):
            report.error(line_no, "", f"expected {len(header)} fields, found {len(row)}")
            continue
        n_err = len(report.errors)

        def get(name: str, parse, *, row=row, line_no=line_no):
            try:
                return parse(row[col[name]])
            except ValueError as exc:
                report.error(line_no, name, str(exc))
                return None

        hid = row[col["household_id"]].strip()
        if not hid:
            report.error(line_no, "household_id", "empty household id")
        wave = get("wave", _parse_int)
        if wave is not None and wave not in (1, 2):
            report.error(line_no, "wave", f"wave must be 1 or 2, got {wave}")
        zone = row[col["zone_id"]].strip()
        if not zone:
            report.error(line_no, "zone_id", "empty zone id")
        matri = get("matrilineal", _parse_flag)
        fem = get("female_headed", _parse_flag)
        rain = []
        for name in rain_columns(k):
            v = get(name, _parse_real)
            if v is not None and v < 0:
                report.error(line_no, name, f"rainfall must be nonnegative, got {v}")
            rain.append(v)
        spend = {}
        for cat, name in zip([*COMPONENTS, ExpenditureCategory.AGGREGATE], EXP_COLUMNS):
            cell = row[col[name]].strip()
            if not cell:
                spend[cat] = None
                continue
            v = get(name, _parse_int)
            if v is not None and v < 0:
                report.error(line_no, name, f"expenditure must be nonnegative, got {v}")
            spend[cat] = v

        record = _parse_record(row, col, line_no, report)
        if len(report.errors) > n_err:
            continue

        key = (hid, wave)
        values = (zone, matri, fem, tuple(rain), tuple(sorted(spend.items(), key=lambda kv: kv[0].value)))
        if key in obs_fields:
            if obs_fields[key] != values:
                report.error(
                    line_no,
                    "",
                    f"observation columns for household {hid} wave {wave} differ from line {obs_line[key]}",
                )
                continue
        else:
            obs_fields[key] = values
            obs_line[key] = line_no
            records[key] = []
        if record is not None:
            records[key].append(record)

    if report.errors:
        return [], report

    households: dict[str, dict[int, PanelObservation]] = {}
    for key, (zone, matri, fem, rain, spend_items) in obs_fields.items():
        hid, wave = key
        spend = {}
        for cat, minor in spend_items:
            if minor is None:
                report.warn(obs_line[key], f"exp_{cat.value}", f"missing for household {hid} wave {wave}; set to 0")
                minor = 0
            spend[cat] = from_minor(minor)
        households.setdefault(hid, {})[wave] = PanelObservation(
            household_id=hid,
            wave=wave,
            zone_id=zone,
            matrilineal=matri,
            female_headed=fem,
            rainfall=rain,
            incomes=tuple(records[key]),
            expenditures=spend,
        )

    report.n_input_households = len(households)
    out: list[PanelObservation] = []
    for hid in sorted(households):
        waves = households[hid]
        if set(waves) != {1, 2}:
            report.warn(0, "wave", f"household {hid} lacks wave {3 - next(iter(waves))}; dropped (balanced panel)")
            report.dropped_households.append(hid)
            continue
        w1, w2 = waves[1], waves[2]
        if (w1.matrilineal, w1.female_headed) != (w2.matrilineal, w2.female_headed):
            report.error(obs_line[(hid, 2)], "", f"household {hid} attribute flags change between waves")
            continue
        if not any(rec.revenue > 0 for w in (w1, w2) for rec in w.incomes):
            report.warn(0, "revenue", f"household {hid} reports no crop income in either wave; dropped")
            report.dropped_households.append(hid)
            continue
        for obs in (w1, w2):
            _check_aggregate(obs, obs_line[obs.key], report)
        out.extend([w1, w2])
    if not out and not report.errors:
        report.error(0, "", "no usable households (file has no data rows or every household was dropped)")
    if report.errors:
        return [], report
    return out, report


def _parse_record(row, col, line_no: int, report: ValidationReport) -> IncomeRecord | None:
    crop = row[col["crop_label"]].strip()
    revenue = row[col["revenue"]].strip()
    primary = row[col["primary_gender"]].strip()
    secondary = row[col["secondary_gender"]].strip()
    if not (crop or revenue or primary or secondary):
        return None
    ok = True
    try:
        minor = _parse_int(revenue)
        if minor < 0:
            raise ValueError(f"revenue must be nonnegative, got {revenue}")
    except ValueError as exc:
        report.error(line_no, "revenue", str(exc))
        ok = False
    if not primary:
        report.error(line_no, "primary_gender", "income record has no primary manager")
        ok = False
    else:
        try:
            pg = Gender.parse(primary)
        except ValueError as exc:
            report.error(line_no, "primary_gender", str(exc))
            ok = False
    sg = None
    if secondary:
        try:
            sg = Gender.parse(secondary)
        except ValueError as exc:
            report.error(line_no, "secondary_gender", str(exc))
            ok = False
    if not ok:
        return None
    return IncomeRecord(crop, from_minor(minor), pg, sg)


def _check_aggregate(obs: PanelObservation, line_no: int, report: ValidationReport) -> None:
    agg = obs.expenditures.get(ExpenditureCategory.AGGREGATE, 0.0)
    for cat in COMPONENTS:
        v = obs.expenditures.get(cat, 0.0)
        if v > agg * (1 + AGGREGATE_TOLERANCE):
            report.warn(
                line_no,
                f"exp_{cat.value}",
                f"household {obs.household_id} wave {obs.wave}: component exceeds aggregate by more than "
                f"{AGGREGATE_TOLERANCE:.0%}",
            )


def _write_csv(path: str | os.PathLike, header: Sequence[str], rows: Iterable[Sequence[str]]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _obs_cells(hid, wave, zone, matri, fem, rain) -> list[str]:
    return [hid, str(wave), zone, "1" if matri else "0", "1" if fem else "0", *(_fmt_real(v) for v in rain)]


def _exp_cells(spend) -> list[str]:
    return [str(to_minor(spend.get(c, 0.0))) for c in [*COMPONENTS, ExpenditureCategory.AGGREGATE]]


def write_raw_panel(observations: Sequence[PanelObservation], path: str | os.PathLike) -> None:
    """Write observations in the raw schema, sorted by (household_id, wave)."""
    if not observations:
        raise ValueError("nothing to write")
    k = len(observations[0].rainfall)
    rows = []
    for obs in sorted(observations, key=lambda o: o.key):
        if len(obs.rainfall) != k:
            raise ValueError("rainfall dimension differs across observations")
        base = _obs_cells(obs.household_id, obs.wave, obs.zone_id, obs.matrilineal, obs.female_headed, obs.rainfall)
        base += _exp_cells(obs.expenditures)
        if not obs.incomes:
            rows.append(base + ["", "", "", ""])
        for rec in obs.incomes:
            rows.append(
                base
                + [
                    rec.crop_label,
                    str(to_minor(rec.revenue)),
                    rec.primary_manager.value,
                    rec.secondary_manager.value if rec.secondary_manager else "",
                ]
            )
    _write_csv(path, raw_header(k), rows)


# ----------------------------------------------------------------------
# classified panel
# ----------------------------------------------------------------------


def write_classified(panel: ClassifiedPanel, path: str | os.PathLike) -> None:
    if not panel.rows:
        raise ValueError("nothing to write")
    k = panel.rainfall_dim
    rows = []
    for r in sorted(panel.rows, key=lambda r: (r.household_id, r.wave)):
        cells = _obs_cells(r.household_id, r.wave, r.zone_id, r.matrilineal, r.female_headed, r.rainfall)
        cells += [str(to_minor(r.income_by_type[t])) for t in panel.mode.earner_types]
        cells += _exp_cells(r.expenditures)
        rows.append(cells)
    _write_csv(path, classified_header(k, panel.mode), rows)


def read_classified(path: str | os.PathLike) -> ClassifiedPanel:
    """Read a classified file; the mode follows from whether ``income_joint`` is present."""
    report = ValidationReport()
    parsed = _read_rows(Path(path).read_bytes(), report)
    if parsed is None:
        raise PanelFormatError(report)
    header, body = parsed
    k = _rain_dim(header)
    mode = SpecMode.EXTENDED if "income_joint" in header else SpecMode.TRADITIONAL
    if header != classified_header(k, mode):
        report.error(1, "header", "header does not match the classified schema")
        raise PanelFormatError(report)
    col = {n: i for i, n in enumerate(header)}
    rows = []
    for line_no, cells in enumerate(body, start=2):
        if len(cells) != len(header):
            report.error(line_no, "", f"expected {len(header)} fields, found {len(cells)}")
            continue
        try:
            rows.append(
                ClassifiedRow(
                    household_id=cells[col["household_id"]],
                    wave=_parse_int(cells[col["wave"]]),
                    zone_id=cells[col["zone_id"]],
                    matrilineal=_parse_flag(cells[col["matrilineal"]]),
                    female_headed=_parse_flag(cells[col["female_headed"]]),
                    rainfall=tuple(_parse_real(cells[col[c]]) for c in rain_columns(k)),
                    income_by_type={
                        t: from_minor(_parse_int(cells[col[f"income_{t.value}"]])) for t in mode.earner_types
                    },
                    expenditures={
                        c: from_minor(_parse_int(cells[col[f"exp_{c.value}"]])) for c in CATEGORIES
                    },
                )
            )
        except ValueError as exc:
            report.error(line_no, "", str(exc))
    if report.errors:
        raise PanelFormatError(report)
    rows.sort(key=lambda r: (r.household_id, r.wave))
    return ClassifiedPanel(mode, tuple(rows))


# ----------------------------------------------------------------------
# simulation config files (JSON)
# ----------------------------------------------------------------------

_ENUM_MAPS = {
    "income_loadings": (EarnerType, None),
    "income_intercepts": (EarnerType, None),
    "pooled_shares": (ExpenditureCategory, None),
    "earner_shares": (EarnerType, ExpenditureCategory),
}


def config_to_dict(config: SimConfig) -> dict:
    """JSON-ready dict; loadings and earner shares are omitted when they are the
    defaults derived from ``rainfall_dim`` and ``share_separation``."""
    derived = SimConfig(
        rainfall_dim=config.rainfall_dim,
        pooled_shares=config.pooled_shares,
        share_separation=config.share_separation,
    )
    out = {}
    for f in fields(config):
        v = getattr(config, f.name)
        if f.name in ("income_loadings", "earner_shares") and v == getattr(derived, f.name):
            continue
        if f.name in _ENUM_MAPS:
            outer, inner = _ENUM_MAPS[f.name]
            if inner is None:
                v = {k.value: (list(x) if isinstance(x, tuple) else x) for k, x in v.items()}
            else:
                v = {k.value: {c.value: s for c, s in x.items()} for k, x in v.items()}
        out[f.name] = v
    return out


def config_from_dict(data: dict) -> SimConfig:
    """Build a :class:`SimConfig`; keys not given keep their defaults."""
    known = {f.name for f in fields(SimConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ValueError(f"unknown config keys: {', '.join(unknown)}")
    kwargs = {}
    for name, v in data.items():
        if name in _ENUM_MAPS and v is not None:
            outer, inner = _ENUM_MAPS[name]
            if inner is None:
                v = {outer(k): (tuple(x) if isinstance(x, list) else x) for k, x in v.items()}
            else:
                v = {outer(k): {inner(c): s for c, s in x.items()} for k, x in v.items()}
        kwargs[name] = v
    return SimConfig(**kwargs)


def save_config(config: SimConfig, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(config_to_dict(config), fh, indent=2)
        fh.write("\n")


def load_config(path: str | os.PathLike) -> SimConfig:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ValueError("config file must hold a JSON object")
    return config_from_dict(data)
