import json
from pathlib import Path

import pytest

from rwpre.cli import ConfigError, parse_beta_grid, run

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def cfg(name):
    return str(CONFIGS / name)


def test_beta_grid_parsing():
    assert parse_beta_grid("0:1:0.1") == pytest.approx([i / 10 for i in range(11)])
    assert len(parse_beta_grid("0:1:0.1")) == 11
    assert parse_beta_grid("0.2,0.5,0.9") == [0.2, 0.5, 0.9]
    assert parse_beta_grid("0:1:0.3") == pytest.approx([0, 0.3, 0.6, 0.9, 1.0])
    for bad in ("0:1", "0:1:-0.1", "0.5,0.2", "0,1.5"):
        with pytest.raises(ConfigError):
            parse_beta_grid(bad)


def test_validate_exit_codes(tmp_path):
    assert run(["validate", "--config", cfg("two_valued.json"), "--out", str(tmp_path / "v.csv")]) == 0
    # symmetric q in d1=2 has too few cut times to satisfy the validator
    assert run(["validate", "--config", cfg("two_valued_d2.json"), "--out", str(tmp_path / "v2.csv")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run(["validate", "--config", str(bad)]) == 1
    obj = json.loads((CONFIGS / "two_valued.json").read_text())
    obj["gamma"] = 0.5
    broken = tmp_path / "broken.json"
    broken.write_text(json.dumps(obj))
    assert run(["validate", "--config", str(broken), "--out", str(tmp_path / "b.csv")]) in (1, 2)


def test_green_exit_codes(tmp_path):
    out = tmp_path / "g.csv"
    assert run(["green", "--config", cfg("q5.json"), "--K", "300", "--out", str(out)]) == 0
    text = out.read_text()
    assert text.startswith("# rwpre ")
    assert "G_at_origin" in text.splitlines()[1]
    assert run(["green", "--config", cfg("q_deterministic.json"), "--K", "100",
                "--out", str(tmp_path / "d.csv")]) == 3


def test_lace_cap_and_output(tmp_path):
    assert run(["lace", "--config", cfg("two_valued_d2.json"), "--m-max", "9"]) == 4
    out = tmp_path / "l.json"
    assert run(["lace", "--config", cfg("two_valued_d2.json"), "--m-max", "4", "--format", "json",
                "--out", str(out)]) == 0
    body = json.loads(out.read_text())
    assert body["meta"]["command"] == "lace"
    assert len(body["meta"]["config_sha256"]) == 64
    # the walk cannot return to a departed site after one step, so m=2 is empty
    assert {r["m"] for r in body["rows"]} == {3, 4}


def test_lace_rational(tmp_path):
    out = tmp_path / "r.json"
    assert run(["lace", "--config", cfg("two_valued_d2.json"), "--m-max", "4", "--rational",
                "--format", "json", "--out", str(out)]) == 0
    body = json.loads(out.read_text())
    assert body["speed_partial_sums"]


@pytest.mark.parametrize("command,extra", [
    ("lace", ["--m-max", "5"]),
    ("simulate", ["--steps", "2e4", "--reps", "6"]),
    ("sweep", ["--steps", "1e4", "--reps", "4", "--beta-grid", "0:1:0.5"]),
])
def test_output_independent_of_threads(tmp_path, command, extra):
    config = cfg("two_valued_d2.json") if command != "simulate" else cfg("d2_renewal.json")
    outs = []
    for threads in (1, 3):
        p = tmp_path / f"{threads}.csv"
        assert run([command, "--config", config, "--seed", "5", "--threads", str(threads), "--out", str(p)] + extra) == 0
        outs.append(p.read_bytes())
    assert outs[0] == outs[1]


def test_simulate_example_law(tmp_path):
    out = tmp_path / "s.json"
    assert run(["simulate", "--config", cfg("ex1.json"), "--steps", "1e4", "--reps", "4",
                "--format", "json", "--out", str(out)]) == 0
    rows = json.loads(out.read_text())["rows"]
    assert [r["method"] for r in rows] == ["naive"]


def test_verify_bounds(tmp_path):
    out = tmp_path / "b.csv"
    assert run(["verify-bounds", "--config", cfg("two_valued.json"), "--m-max", "6",
                "--out", str(out)]) == 0
    assert ",false" not in out.read_text()
