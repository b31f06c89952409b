import json

import numpy as np
import pytest

from nlsquasi import cli
from nlsquasi.lattice import CONVENTION


def body(path):
    return [line for line in path.read_text().splitlines() if not line.startswith("#")]


def test_nf_check(tmp_path):
    assert cli.main(["nf-check", "--nsym", "4", "--outdir", str(tmp_path)]) == 0
    text = (tmp_path / "nf_check_nsym4.txt").read_text()
    assert f"# convention_tag = {CONVENTION}" in text
    assert text.count(": PASS") == 7 and "FAIL" not in text


def test_simulate_zero_amplitude(tmp_path):
    rc = cli.main(["simulate", "--amplitude", "0", "--N", "32", "--T", "0.05", "--outdir", str(tmp_path)])
    assert rc == 0
    lines = body(tmp_path / "deviation.csv")
    assert lines[0] == "t,dev_l2,dev_linf,dev_l1,l2_power,energy"
    for row in lines[1:]:
        assert all(float(x) == 0 for x in row.split(",")[1:])


def test_simulate_deterministic(tmp_path):
    args = ["simulate", "--eps", "0.3", "--N", "48", "--T", "0.05", "--set", "snapshot_every=5"]
    cli.main(args + ["--outdir", str(tmp_path / "a")])
    cli.main(args + ["--outdir", str(tmp_path / "b")])
    a, b = (tmp_path / "a" / "deviation.csv"), (tmp_path / "b" / "deviation.csv")
    assert body(a) == body(b) and len(body(a)) == 12
    assert not [p for p in (tmp_path / "a").iterdir() if p.name.startswith(".")]


def test_weighted_norm_output(tmp_path):
    rc = cli.main(["simulate", "--eps", "0.3", "--N", "48", "--T", "0.01", "--outdir", str(tmp_path),
                   "--set", "norms=2:0,inf:0.1"])
    assert rc == 0
    assert body(tmp_path / "deviation_weighted.csv")[0] == "t,dev_linf_d0.1"


def test_scaling_needs_three_eps(tmp_path, capsys):
    assert cli.main(["scaling", "--eps", "0.1", "--outdir", str(tmp_path)]) == 2
    assert "at least 3" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [
    ["bogus"],
    ["simulate", "--set", "novalue"],
    ["simulate", "--config", "/nonexistent.ini"],
    ["simulate", "--dt", "-1"],
    ["simulate", "--set", "scheme=euler"],
    ["scaling", "--eps", "0.1,0.1,0.2"],
    ["nf-check", "--nsym", "40"],
])
def test_usage_errors(argv, tmp_path):
    assert cli.main(argv + ["--outdir", str(tmp_path)]) == 2


def test_config_precedence(tmp_path):
    ini = tmp_path / "run.ini"
    ini.write_text("[general]\noutdir = %s\n\n[simulate]\nN = 40\nT = 0.02\neps = 0.3\n" % (tmp_path / "o"))
    cfg = cli.load_config("simulate", str(ini), {"T": "0.01"})
    assert cfg.values["N"] == "40" and cfg.values["T"] == "0.01" and cfg.values["eps"] == "0.3"
    assert cli.main(["simulate", "--config", str(ini)]) == 0
    assert "# N = 40" in (tmp_path / "o" / "deviation.csv").read_text()


def test_oracle_command(tmp_path):
    assert cli.main(["oracle", "--outdir", str(tmp_path)]) == 0
    rows = body(tmp_path / "oracle.csv")
    assert rows[0] == "check,l2_error,tolerance" and len(rows) == 3


def test_scaling_outputs(tmp_path):
    rc = cli.main(["scaling", "--eps", "0.4,0.3,0.2", "--N", "64", "--T", "0.1", "--outdir", str(tmp_path),
                   "--set", "envelope_eps=0.3", "--set", "envelope_T=0.025,0.05,0.1"])
    assert rc in (0, 1)
    rows = body(tmp_path / "scaling.csv")
    assert rows[0] == "eps,N,T,dt,dev_value,norm_p,norm_delta" and len(rows) == 4
    doc = json.loads((tmp_path / "scaling.json").read_text())
    assert doc["convention_tag"] == CONVENTION
    for crit in doc["criteria"]:
        assert {"name", "window", "pass"} <= set(crit) and ("slope" in crit or "residual" in crit)


def test_float_format():
    assert cli.fmt(0.1) == "0.10000000000000001"
    assert cli.fmt(np.int64(3)) == "3"
