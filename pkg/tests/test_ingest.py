import json
import random

import pytest
from hypothesis import given, settings, strategies as st

from incomepool.core import CATEGORIES, ExpenditureCategory as C, SpecMode, classify_panel
from incomepool.ingest import (
    PanelFormatError,
    classified_header,
    config_from_dict,
    config_to_dict,
    load_config,
    load_panel,
    load_panel_bytes,
    raw_header,
    read_classified,
    save_config,
    write_classified,
    write_raw_panel,
)
from incomepool.simulate import PoolingRegime, SimConfig, simulate_panel

from fuzz import corpus, valid_panel_bytes

HEADER = ",".join(raw_header(3))


def row(hid="H1", wave=1, rev="500000", pg="M", sg="", food="1000", agg="1500", matri="0", zone="Z1"):
    exps = [food, "100", "100", "100", "0", "0", "100", "0", "0", "0", agg]
    return ",".join([hid, str(wave), zone, matri, "0", "1000.0", "200.0", "0.5", *exps, "maize", rev, pg, sg])


def csv_text(*rows):
    return "\n".join([HEADER, *rows]) + "\n"


def load_text(text):
    return load_panel_bytes(text.encode())


class TestLoad:
    def test_one_household(self):
        obs, rep = load_text(csv_text(row(wave=1), row(wave=2)))
        assert rep.ok and not rep.warnings
        assert len(obs) == 2
        assert obs[0].incomes[0].revenue == 5000.0
        assert obs[0].expenditures[C.FOOD] == 10.0

    def test_missing_wave_dropped(self):
        obs, rep = load_text(csv_text(row(wave=1), row("H2", 1), row("H2", 2)))
        assert rep.ok and len(obs) == 2
        assert len(rep.warnings) == 1 and rep.dropped_households == ["H1"]

    def test_negative_revenue(self):
        obs, rep = load_text(csv_text(row(rev="-5"), row(wave=2)))
        assert not rep.ok and obs == []
        assert rep.errors[0].field == "revenue"

    def test_unknown_gender(self):
        obs, rep = load_text(csv_text(row(pg="X"), row(wave=2)))
        assert not rep.ok and rep.errors[0].field == "primary_gender"

    def test_multiple_records_accumulate(self):
        obs, rep = load_text(csv_text(row(), row(pg="F", rev="100"), row(sg="F", rev="300"), row(wave=2)))
        assert rep.ok
        assert len(obs[0].incomes) == 3
        by = classify_panel(obs, SpecMode.EXTENDED).rows[0].income_by_type
        assert sum(by.values()) == 5004.0

    def test_inconsistent_observation_columns(self):
        obs, rep = load_text(csv_text(row(), row(food="999"), row(wave=2)))
        assert not rep.ok

    def test_zero_income_household_dropped(self):
        obs, rep = load_text(csv_text(row(rev="0"), row(wave=2, rev="0"), row("H2"), row("H2", 2)))
        assert rep.ok and [o.household_id for o in obs] == ["H2", "H2"]
        assert rep.dropped_households == ["H1"]

    def test_household_without_records(self):
        empty = row("H2", 1).rsplit(",", 4)[0] + ",,,,"
        obs, rep = load_text(csv_text(row(), row(wave=2), empty, row("H2", 2)))
        assert rep.ok and len(obs) == 4
        assert obs[2].incomes == ()

    def test_missing_expenditure_cell_warns(self):
        obs, rep = load_text(csv_text(row(food=""), row(wave=2)))
        assert rep.ok and obs[0].expenditures[C.FOOD] == 0.0
        assert any(w.field == "exp_food" for w in rep.warnings)

    def test_component_above_aggregate_warns(self):
        obs, rep = load_text(csv_text(row(food="5000", agg="1500"), row(wave=2)))
        assert rep.ok and any("exceeds aggregate" in w.message for w in rep.warnings)

    def test_flag_change_is_error(self):
        obs, rep = load_text(csv_text(row(), row(wave=2, matri="1")))
        assert not rep.ok

    @pytest.mark.parametrize(
        "header",
        [HEADER.replace("crop_label", "crop"), HEADER + ",extra", HEADER.replace("exp_food,", ""), "a,b,c"],
    )
    def test_header_rejected(self, header):
        obs, rep = load_panel_bytes((header + "\n" + row() + "\n").encode())
        assert not rep.ok and rep.errors[0].field == "header"

    def test_missing_file(self, tmp_path):
        obs, rep = load_panel(tmp_path / "nope.csv")
        assert not rep.ok

    def test_bom_and_blank_lines(self):
        obs, rep = load_panel_bytes(("﻿" + csv_text(row(), "", row(wave=2))).encode())
        assert rep.ok and len(obs) == 2

    def test_dropped_household_accounting(self, tmp_path):
        panel = simulate_panel(SimConfig(n_households=30, seed=8), PoolingRegime.full())
        keep = [o for o in panel if not (o.household_id in ("H00003", "H00017") and o.wave == 2)]
        path = tmp_path / "p.csv"
        write_raw_panel(keep, path)
        obs, rep = load_panel(path)
        n_out = len({o.household_id for o in obs})
        assert rep.n_input_households == 30
        assert rep.n_input_households == n_out + len(rep.dropped_households)
        assert sorted(rep.dropped_households) == ["H00003", "H00017"]


class TestFuzz:
    def test_corpus_never_crashes(self, tmp_path):
        base = valid_panel_bytes(tmp_path)
        files = corpus(base, seed=1)
        assert len(files) > 100
        for name, data in files:
            obs, rep = load_panel_bytes(data)
            assert (obs and rep.ok) or (not obs and rep.errors), name

    @settings(max_examples=200, deadline=None)
    @given(st.binary(max_size=2000))
    def test_arbitrary_bytes(self, data):
        obs, rep = load_panel_bytes(data)
        assert (obs and rep.ok) or (not obs and rep.errors)

    @settings(max_examples=100, deadline=None)
    @given(st.text(alphabet=",\n\"0123456789.-MFZH_abcdefghijklmnopqrstuvwxyz ", max_size=400))
    def test_arbitrary_text_after_header(self, body):
        obs, rep = load_text(HEADER + "\n" + body)
        assert (obs and rep.ok) or (not obs and rep.errors)


class TestClassified:
    @pytest.mark.parametrize("mode", list(SpecMode))
    def test_round_trip(self, tmp_path, mode):
        panel = classify_panel(simulate_panel(SimConfig(n_households=15, seed=2), PoolingRegime.none()), mode)
        path = tmp_path / "c.csv"
        write_classified(panel, path)
        back = read_classified(path)
        assert back.mode is mode and len(back.rows) == len(panel.rows)
        for a, b in zip(back.rows, panel.rows):
            assert (a.household_id, a.wave, a.zone_id, a.rainfall) == (b.household_id, b.wave, b.zone_id, b.rainfall)
            assert a.income_by_type == pytest.approx(b.income_by_type, rel=1e-12, abs=1e-9)
            assert a.expenditures == b.expenditures
        again = tmp_path / "c2.csv"
        write_classified(back, again)
        assert again.read_bytes() == path.read_bytes()

    def test_round_trip_exact_single_records(self, tmp_path):
        panel = classify_panel(simulate_panel(SimConfig(n_households=15, seed=2), PoolingRegime.none()), SpecMode.EXTENDED)
        path = tmp_path / "c.csv"
        write_classified(panel, path)
        assert read_classified(path) == panel

    def test_schema_contract(self, tmp_path):
        obs = simulate_panel(SimConfig(n_households=3), PoolingRegime.full())
        for mode in SpecMode:
            path = tmp_path / f"{mode.value}.csv"
            write_classified(classify_panel(obs, mode), path)
            header = path.read_text().splitlines()[0].split(",")
            assert header == classified_header(4, mode)
            assert ("income_joint" in header) == (mode is SpecMode.EXTENDED)

    def test_shuffled_input_byte_identical(self, tmp_path):
        obs = simulate_panel(SimConfig(n_households=12, seed=6), PoolingRegime.full())
        shuffled = list(obs)
        random.Random(0).shuffle(shuffled)
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        write_classified(classify_panel(obs, SpecMode.EXTENDED), a)
        write_classified(classify_panel(shuffled, SpecMode.EXTENDED), b)
        assert a.read_bytes() == b.read_bytes()
        write_raw_panel(obs, a)
        write_raw_panel(shuffled, b)
        assert a.read_bytes() == b.read_bytes()

    def test_lf_line_endings(self, tmp_path):
        path = tmp_path / "r.csv"
        write_raw_panel(simulate_panel(SimConfig(n_households=2), PoolingRegime.full()), path)
        assert b"\r" not in path.read_bytes()

    def test_bad_classified_file(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("household_id,wave\nH,1\n")
        with pytest.raises(PanelFormatError):
            read_classified(path)


class TestConfig:
    def test_round_trip(self, tmp_path):
        cfg = SimConfig(n_households=40, seed=12, share_separation=0.3, rainfall_dim=5)
        path = tmp_path / "cfg.json"
        save_config(cfg, path)
        assert load_config(path) == cfg
        data = json.loads(path.read_text())
        assert "income_loadings" not in data and data["seed"] == 12

    def test_custom_loadings_kept(self):
        cfg = SimConfig(income_loadings={t: (0.001, 0.0, 0.0, 0.0) for t in SpecMode.EXTENDED.earner_types})
        d = config_to_dict(cfg)
        assert d["income_loadings"]["male"] == [0.001, 0.0, 0.0, 0.0]
        assert config_from_dict(d) == cfg

    def test_unknown_key(self):
        with pytest.raises(ValueError, match="unknown"):
            config_from_dict({"n_households": 5, "bogus": 1})

    def test_partial_keys_keep_defaults(self):
        cfg = config_from_dict({"n_households": 7})
        assert cfg == SimConfig(n_households=7)
