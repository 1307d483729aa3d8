import csv
import hashlib
import json
import subprocess
import sys
from fractions import Fraction

import pytest

from cantor_ergodic.cli import ConfigError, main, run, validate_config
from cantor_ergodic.core import parse_rational

from oracles import averages, upcrossings

Q = Fraction


def _config(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def _rationals(obj):
    """Every string in ``obj`` that looks like ``p/q``."""
    if isinstance(obj, dict):
        for v in obj.values():
            yield from _rationals(v)
    elif isinstance(obj, list):
        for v in obj:
            yield from _rationals(v)
    elif isinstance(obj, str) and "/" in obj and obj.replace("/", "").lstrip("-").isdigit():
        yield obj


def test_averages_csv(tmp_path):
    code = main(["averages", "--periodic", "01", "--horizon", "100", "--out", str(tmp_path)])
    assert code == 0
    rows = list(csv.DictReader((tmp_path / "averages.csv").open()))
    assert [int(r["n"]) for r in rows] == list(range(1, 101))
    s = [parse_rational(r["s_n"]) for r in rows]
    # on periodic 01 the averages are 0, 1/2, 1/3, 1/2, 2/5, ...
    assert s[1::2] == [Q(1, 2)] * 50
    assert all(s[n - 1] == Q((n - 1) // 2, n) for n in range(1, 101, 2))
    assert abs(float(rows[-1]["s_n_float"]) - 0.5) < 1e-12


def test_kucera_json(tmp_path):
    code = main(["kucera", "--words", "0,10", "--r", "4/5", "--m-max", "4", "--out", str(tmp_path)])
    assert code == 0
    out = json.loads((tmp_path / "kucera.json").read_text())
    assert out["ok"] and out["L_U"] == "3/4"
    for row in out["rows"]:
        m = row["m"]
        assert parse_rational(row["measure"]) == Q(3, 4) ** m
        assert parse_rational(row["bound"]) == Q(4, 5) ** m
        assert row["ok"]


def test_empty_and_invalid_configs(tmp_path, capsys):
    assert main([]) != 0
    assert main(["run", "--config", _config(tmp_path, {})]) == 1
    assert main(["run", "--config", _config(tmp_path, {"kind": "nope"})]) == 1
    assert main(["run", "--config", _config(tmp_path, {"kind": "kucera", "words": ["0"], "r": "1/2",
                                                       "m_max": 2, "bogus": 1})]) == 1
    assert main(["run", "--config", _config(tmp_path, {"kind": "regulator-hoeffding", "delta": "0.5",
                                                       "eps": "1/2"})]) == 1
    assert main(["run", "--config", str(tmp_path / "missing.json")]) == 1
    assert main(["regulator"]) == 1
    assert main(["kucera", "--config", _config(tmp_path, {"kind": "averages"})]) == 1
    assert "error" in capsys.readouterr().err
    with pytest.raises(ConfigError):
        validate_config({})


def test_determinism(tmp_path):
    cfg = {"kind": "averages", "source": {"kind": "sampled", "measure": {"kind": "markov", "flip": "1/3"}},
           "horizon": 200, "seed": 9}
    digests = []
    for d in ("a", "b"):
        code, manifest = run(cfg, tmp_path / d)
        assert code == 0
        data = (tmp_path / d / "averages.csv").read_bytes()
        assert manifest["outputs"]["averages.csv"] == hashlib.sha256(data).hexdigest()
        digests.append(manifest["outputs"])
    assert digests[0] == digests[1]
    _, other = run({**cfg, "seed": 10}, tmp_path / "c")
    assert other["outputs"] != digests[0]


def test_mc_determinism(tmp_path):
    cfg = {"kind": "regulator-verify", "delta": "1/2", "eps": "1/2", "center": "1/2", "horizon": 8,
           "mode": "mc", "trials": 3000, "seed": 4}
    a, b = run(cfg, tmp_path / "a")[1], run(cfg, tmp_path / "b")[1]
    assert a["outputs"] == b["outputs"]


def test_manifest_fields(tmp_path):
    code, manifest = run({"kind": "regulator-hoeffding", "delta": "1/4", "eps": "1/4"}, tmp_path)
    on_disk = json.loads((tmp_path / "manifest.json").read_text())
    assert on_disk == manifest
    assert set(manifest) == {"config", "version", "seed", "wall_time_s", "outputs", "exit_code", "summary"}
    assert manifest["summary"]["m"] == 27 and code == 0


def test_rationals_round_trip(tmp_path):
    run({"kind": "regulator-verify", "delta": "1/2", "eps": "1/2", "regulator": {"kind": "ergodic"},
         "horizon": 64}, tmp_path / "v")
    run({"kind": "ineq-check", "dyadic": {"M": 1, "count": 6}, "horizon": 4}, tmp_path / "i")
    run({"kind": "counterexample", "oracle": ["1 3"], "i": 1, "n": 20, "mode": "exact"}, tmp_path / "c")
    seen = 0
    for path in tmp_path.rglob("*.json"):
        for r in _rationals(json.loads(path.read_text())):
            q = parse_rational(r)
            assert f"{q.numerator}/{q.denominator}" == r
            seen += 1
    assert seen > 20


def test_exit_codes(tmp_path):
    base = {"kind": "regulator-verify", "delta": "1/2", "center": "1/2", "horizon": 4, "strict": False,
            "regulator": {"kind": "value", "m": 4}}
    assert run({**base, "eps": "1/2"}, tmp_path)[0] == 0
    assert run({**base, "eps": "1/8"}, tmp_path)[0] == 2
    assert run({**base, "eps": "1/8", "mode": "mc", "trials": 500}, tmp_path)[0] == 3
    (tmp_path / "o.txt").write_text("2 3\n")
    assert main(["counterexample", "--oracle", str(tmp_path / "o.txt"), "--i", "2", "--n", "40",
                 "--mode", "exact", "--out", str(tmp_path)]) == 2
    assert main(["counterexample", "--oracle", str(tmp_path / "o.txt"), "--i", "2", "--n", "4",
                 "--mode", "exact", "--out", str(tmp_path)]) == 0


def test_flag_overrides_config(tmp_path):
    cfg = _config(tmp_path, {"kind": "regulator-hoeffding", "delta": "1/4", "eps": "1/4"})
    assert main(["regulator", "hoeffding", "--config", cfg, "--delta", "1/2", "--eps", "1/2",
                 "--out", str(tmp_path)]) == 0
    assert json.loads((tmp_path / "regulator.json").read_text())["m"] == 4


def test_output_dir_env(tmp_path, monkeypatch):
    monkeypatch.setenv("CANTOR_ERGODIC_OUTDIR", str(tmp_path / "env"))
    monkeypatch.chdir(tmp_path)
    assert main(["regulator", "hoeffding", "--delta", "1/2", "--eps", "1/2"]) == 0
    assert (tmp_path / "env" / "regulator.json").exists()
    assert main(["regulator", "hoeffding", "--delta", "1/2", "--eps", "1/2", "--out", "flag"]) == 0
    assert (tmp_path / "flag" / "regulator.json").exists()


def test_other_experiments(tmp_path):
    word = "0111" + "0" * 12 + "1" * 30
    code, m = run({"kind": "upcrossings", "source": {"kind": "prefix", "word": word},
                   "pairs": [["1/4", "1/2"]], "horizon": 45}, tmp_path / "u")
    expected = upcrossings(averages(word), Q(1, 4), Q(1, 2))
    assert expected == 2
    assert code == 0 and m["summary"]["sigma"]["1/4,1/2"] == expected
    code, m = run({"kind": "ineq-check", "pairs": [["1/4", "1/2"], ["1/8", "7/8"]], "horizon": 6},
                  tmp_path / "i")
    assert code == 0 and m["summary"]["ok"]
    code, m = run({"kind": "test-deficiency", "source": {"kind": "periodic", "word": "01"}, "cutoff": 6,
                   "stages": 10, "observable": [["0", "-1"], ["1", "1"]]}, tmp_path / "d")
    rows = list(csv.DictReader((tmp_path / "d" / "deficiency.csv").open()))
    vals = [parse_rational(r["value"]) for r in rows]
    assert code == 0 and vals == sorted(vals) and len(vals) == 10
    code, m = run({"kind": "test-convert", "words": ["0", "10"], "r": "4/5", "cutoff": 3}, tmp_path / "t")
    assert code == 0 and parse_rational(m["summary"]["expectation"]) <= 1
    assert main(["test", "convert", "ml-to-integral", "--words", "0,10", "--r", "4/5", "--cutoff", "2",
                 "--out", str(tmp_path / "t2")]) == 0


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "cantor_ergodic", "regulator", "hoeffding",
                           "--delta", "1/4", "--eps", "1/4", "--out", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["summary"]["m"] == 27
