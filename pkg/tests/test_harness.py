import csv
import json

import pytest

from mixlab import harness as hs
from mixlab.errors import ConfigInvalid

EXPERIMENTS = {"lsv-decay", "mt-asymptotics", "spectrum", "eigen-derivative", "resolvent-sweep", "truncation",
               "pollicott-recon", "periods-diophantine", "good-asymptotics", "temporal-distance",
               "approx-eig-scan", "clt"}


def test_catalogue_complete():
    cat = hs.catalogue()
    assert {e["name"] for e in cat} == EXPERIMENTS and len(cat) == 12
    assert all(e["anchor"] and e["description"] for e in cat)


def test_list_json_round_trip(capsys):
    assert hs.main(["list", "--json"]) == 0
    cat = json.loads(capsys.readouterr().out)
    for e in cat:
        hs.validate_config(e["config"])
        assert hs.resolve_config(e["config"]) == e["config"]


def test_list_text(capsys):
    assert hs.main(["list"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 12 and all("[" in ln for ln in lines)


@pytest.mark.parametrize("cfg,key", [
    ({"experiment": "clt", "params": {"n_time": -3}}, "params.n_time"),
    ({"experiment": "clt", "params": {"bogus": 1}}, "params.bogus"),
    ({"experiment": "lsv-decay", "map": {"kind": "lsv", "gamma": 1.5}}, "map.gamma"),
    ({"experiment": "spectrum", "roof": {"h": 1.0}}, "roof.kind"),
    ({"experiment": "nope"}, "experiment"),
    ({"experiment": "clt", "extra": 1}, "extra"),
    ({"params": {}}, "experiment"),
    ({"experiment": "lsv-decay", "params": {"t_min": 50.0, "t_max": 10.0}}, "params.t_min"),
])
def test_config_invalid_names_key(cfg, key):
    with pytest.raises(ConfigInvalid) as ei:
        hs.resolve_config(cfg)
    assert str(ei.value).startswith(key + ":")


def test_hash_stable_under_reordering():
    a = {"experiment": "clt", "seed": 3, "params": {"n_time": 8, "n_samples": 4096, "n_sigma": 4.0}}
    b = {"params": {"n_sigma": 4.0, "n_samples": 4096, "n_time": 8}, "seed": 3, "experiment": "clt"}
    assert hs.config_hash(hs.resolve_config(a)) == hs.config_hash(hs.resolve_config(b))
    c = dict(a, seed=4)
    assert hs.config_hash(hs.resolve_config(c)) != hs.config_hash(hs.resolve_config(a))


def _csvs(d):
    return {p.name: p.read_bytes() for p in sorted(d.glob("*.csv"))}


def test_rerun_byte_identical(tmp_path):
    cfg = {"experiment": "clt", "seed": 5, "params": {"n_time": 8, "n_samples": 8192}}
    r1 = hs.run(cfg, tmp_path / "a")
    r2 = hs.run(cfg, tmp_path / "b")
    assert r1.config_hash == r2.config_hash
    c1, c2 = _csvs(r1.directory), _csvs(r2.directory)
    assert c1 and c1 == c2


def test_run_layout_and_manifest(tmp_path):
    res = hs.run({"experiment": "temporal-distance"}, tmp_path)
    assert res.directory == tmp_path / "temporal-distance" / res.config_hash
    man = json.loads((res.directory / "manifest.json").read_text())
    assert man["config_hash"] == res.config_hash and man["anchor"]
    assert set(man["files"]) == set(res.files) - {"manifest.json"}
    # every check carries one verdict and its measured value
    assert all(c["verdict"] in ("PASS", "FAIL", "UNKNOWN") and "measured" in c for c in man["checks"])
    with open(res.directory / "D_by_m.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["m", "D"]
    assert (res.directory / "D_by_m.dat").read_text().startswith("# m D")


def test_lsv_decay_end_to_end(tmp_path):
    cfg = {"experiment": "lsv-decay", "params": {"n_samples": 65536, "t_min": 1.0, "t_max": 20.0, "n_t": 6}}
    res = hs.run(cfg, tmp_path)
    assert (res.directory / "correlation.csv").exists()
    assert [c["name"] for c in res.checks] == ["decay_exponent"]


def test_cli_run_and_exit_codes(tmp_path, capsys):
    good = tmp_path / "good.json"
    good.write_text(json.dumps({"experiment": "good-asymptotics"}))
    assert hs.main(["run", str(good), "--out", str(tmp_path / "o"), "--seed", "7", "--threads", "1"]) == 0
    out = capsys.readouterr().out
    assert "PASS" in out and "results:" in out
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"experiment": "clt", "params": {"n_time": 0}}))
    assert hs.main(["run", str(bad)]) == 2
    assert "params.n_time" in capsys.readouterr().err
    broken = tmp_path / "broken.json"
    broken.write_text("{not json")
    assert hs.main(["run", str(broken)]) == 2


def test_seed_override():
    cfg = hs.resolve_config({"experiment": "clt", "seed": 1}, seed=99)
    assert cfg["seed"] == 99
