import csv
import io
import json
from fractions import Fraction

import pytest

from combcache.cli import ConfigError, ExperimentConfig, fmt, main, parse_sweep, results_csv, sweep

from conftest import LOPSIDED_RELAYS

H4R2_CONFIG = """\
# H=4, r=2 worked example
topology = combination H=4 r=2
mode = centralized
N = 6
M = 2
scenario = h4r2
"""


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_parse_sweep():
    assert parse_sweep("1, 2, 5/2") == [1, 2, Fraction(5, 2)]
    assert parse_sweep("0..3") == [0, 1, 2, 3]
    assert parse_sweep("  ") == []


def test_fmt():
    assert fmt(Fraction(7, 15)) == "7/15" and fmt(Fraction(3)) == "3" and fmt(None) == ""


def test_config_errors():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_text("mode = centralized\nM = 1")
    with pytest.raises(ConfigError):
        ExperimentConfig.from_text("topology = combination H=4 r=2\nM = 1\ncolour = red")
    with pytest.raises(ConfigError):
        ExperimentConfig.from_text("topology = combination H=4 r=2\nM 1")
    with pytest.raises(ConfigError):
        ExperimentConfig.from_text("topology = combination H=4 r=2\nM = 1\nmode = decentralized")
    with pytest.raises(ConfigError):
        ExperimentConfig.from_text("topology = combination H=4 r=2\nM = 1\nverify = maybe")


def test_empty_sweep_exits_1(tmp_path, capsys):
    path = write(tmp_path, "empty.cfg", "topology = combination H=4 r=2\nM =\n")
    assert main(["run", "--config", path]) == 1


def test_out_of_range_M_exits_1(tmp_path):
    path = write(tmp_path, "big.cfg", "topology = combination H=4 r=2\nM = 7\n")
    assert main(["run", "--config", path, "--out", str(tmp_path / "x.csv")]) == 1


def test_h4r2_row(tmp_path):
    out = tmp_path / "h4r2.csv"
    assert main(["run", "--config", write(tmp_path, "a.cfg", H4R2_CONFIG), "--out", str(out)]) == 0
    text = out.read_text()
    header = text.splitlines()[0].split(",")
    assert header[:6] == ["M", "t_or_tprime", "R_max", "R_h_max", "R_hk_max", "closed_form_if_r2"]
    assert len([h for h in header if h.startswith("ref:")]) == 4
    (row,) = rows(text)
    assert row["R_max"] == row["closed_form_if_r2"] == "7/15"
    assert row["t_or_tprime"] == "2" and row["verified"] == "pass"
    refs = sorted(v for k, v in row.items() if k.startswith("ref:"))
    assert refs == ["1/2", "17/30", "2/3", "2/3"]


def test_byte_stable(tmp_path):
    cfg = write(tmp_path, "s.cfg", H4R2_CONFIG.replace("M = 2", "M = 0..6") + "workers = 2\n")
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["run", "--config", cfg, "--out", str(a), "--seed", "5"]) == 0
    assert main(["run", "--config", cfg, "--out", str(b), "--seed", "5"]) == 0
    assert a.read_bytes() == b.read_bytes()
    ms = [r["M"] for r in rows(a.read_text())]
    assert ms == [str(m) for m in range(7)]


def test_r2_rows_match_closed_form():
    cfg = ExperimentConfig.from_text("topology = combination H=5 r=2\nM = 0..10\n")
    for r in rows(results_csv(cfg, sweep(cfg))):
        assert r["R_max"] == r["closed_form_if_r2"]


def test_lengths_engine_row_matches_full():
    base = "topology = combination H=5 r=3\nM = 3\nverify = false\n"
    full = sweep(ExperimentConfig.from_text(base + "engine = full\n"))
    fast = sweep(ExperimentConfig.from_text(base + "engine = lengths\n"))
    assert (full[0].R_h_max, full[0].R_hk_max) == (fast[0].R_h_max, fast[0].R_hk_max)


def test_general_rebalance(tmp_path, capsys):
    topo = "general\n" + "".join(f"relay {h}: {' '.join(map(str, us))}\n" for h, us in LOPSIDED_RELAYS.items())
    path = write(tmp_path, "ex2.topo", topo)
    assert main(["general", "--topology", path, "--M", "2", "--rebalance", "--concrete-B", "60"]) == 0
    out = capsys.readouterr().out
    assert "relay loads before rebalance: 1/3 7/30 17/60 7/30 1/3" in out
    assert "max link-load: 3/10" in out and "verified: pass" in out


def test_hybrid_subcommand(capsys):
    assert main(["hybrid", "--H", "4", "--r", "2", "--M1", "1", "--t3", "1", "--t4", "2"]) == 0
    out = capsys.readouterr().out
    assert "load pair: (14/45, 13/36)" in out


def test_decentralized_subcommand(capsys):
    assert main(["decentralized", "--H", "4", "--r", "2", "--M", "2", "--B", "60", "--seed", "3"]) == 0
    assert "verified: pass" in capsys.readouterr().out


def test_verify_plan_round_trip(tmp_path, capsys):
    plan, placement = tmp_path / "plan.json", tmp_path / "placement.json"
    assert main(["combination", "--H", "4", "--r", "2", "--M", "2",
                 "--dump-plan", str(plan), "--dump-placement", str(placement)]) == 0
    capsys.readouterr()
    assert main(["verify-plan", "--plan", str(plan), "--placement", str(placement)]) == 0
    data = json.loads(plan.read_text())
    data["messages"].pop(0)
    tampered = write(tmp_path, "tampered.json", json.dumps(data))
    assert main(["verify-plan", "--plan", tampered, "--placement", str(placement)]) == 2
    assert '"pass": false' in capsys.readouterr().out


def test_missing_config_file(tmp_path):
    assert main(["run", "--config", str(tmp_path / "nope.cfg")]) == 1
