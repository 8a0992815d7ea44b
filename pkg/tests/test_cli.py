import json
import subprocess
import sys
from pathlib import Path

import pytest

from kscert.cli import EXIT_CONFIG, EXIT_FAIL, EXIT_FLAGGED, EXIT_OK, main
from kscert.config import ConfigError, parse_config

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def run(tmp_path, name, text, cmd, *extra):
    cfg = tmp_path / f"{name}.toml"
    cfg.write_text(text)
    out = tmp_path / f"{name}.out"
    code = main([cmd, str(cfg), "--out", str(out), *extra])
    return code, (out.read_text() if out.exists() else "")


def data_rows(text):
    lines = [l for l in text.splitlines() if not l.startswith("#")]
    return lines[0].split(","), lines[1:]


TONKS = """
seed = 0
[potential]
kind = "hard_rod"
d = 1.0
[thermo]
z = 0.1
[mayer]
n = 2
x_min = 1.2
x_max = 3.0
points = 5
"""


def test_tabulate_tonks_preset(tmp_path):
    code, text = run(tmp_path, "t", TONKS, "tabulate")
    assert code == EXIT_OK
    header, rows = data_rows(text)
    assert header == ["x", "rho_n", "rho_exact", "tail", "quad", "budget", "flagged"]
    assert len(rows) == 5
    assert any(l.startswith("# units:") for l in text.splitlines())
    for r in rows:
        x, val, exact, tail, quad, budget, flagged = r.split(",")
        assert abs(float(val) - float(exact)) <= float(budget)
        assert flagged == "0"


def test_tabulate_shipped_config_matches():
    code = main(["tabulate", str(CONFIGS / "tonks.toml"), "--out", "/dev/null"])
    assert code == EXIT_OK


def test_tabulate_flagged_exit(tmp_path):
    code, text = run(tmp_path, "f", TONKS.replace("z = 0.1", "z = 0.3"), "tabulate")
    assert code == EXIT_FLAGGED
    _, rows = data_rows(text)
    assert all(r.endswith(",1") and ",inf," in r for r in rows)


def test_tabulate_deterministic(tmp_path):
    _, a = run(tmp_path, "a", TONKS, "tabulate")
    _, b = run(tmp_path, "b", TONKS, "tabulate")
    assert a == b


def test_seventeen_digits(tmp_path):
    _, text = run(tmp_path, "h", "[hardrod]\nrho = 0.2\npoints = 3\n", "hardrod")
    _, rows = data_rows(text)
    assert rows[0] == "1,0.050000000000000003,-0.012500000000000001"


CERT = """
seed = 0
[hardrod]
rho = 0.2
[residuals]
suite = ["tonks"]
"""


def test_certify_tonks_passes(tmp_path):
    code, text = run(tmp_path, "c", CERT, "certify")
    doc = json.loads(text)
    assert code == EXIT_OK and doc["all_pass"] and doc["failed"] == 0
    assert {r["equation"] for r in doc["reports"]} == {"hardrod_hierarchy", "extracted_constant", "hc_KS"}
    for r in doc["reports"]:
        assert set(r) == {"equation", "n", "location", "residual", "budget", "pass", "components"}


def test_certify_corrupted_activity_fails(tmp_path):
    code, text = run(tmp_path, "c", CERT + "z_scale = 1.5\n", "certify")
    doc = json.loads(text)
    assert code == EXIT_FAIL
    failing = [r for r in doc["reports"] if not r["pass"]]
    assert failing and all(r["equation"] == "hc_KS" for r in failing)


def test_certify_empty_suite(tmp_path):
    code, _ = run(tmp_path, "c", "[residuals]\nsuite = []\n", "certify")
    assert code == EXIT_CONFIG


def test_certify_unknown_suite(tmp_path):
    code, _ = run(tmp_path, "c", "[residuals]\nsuite = [\"magic\"]\n", "certify")
    assert code == EXIT_CONFIG


def test_config_errors(tmp_path):
    assert run(tmp_path, "u", "[thermo]\nbeta = 1.0\ncolour = 3\n", "bounds")[0] == EXIT_CONFIG
    assert run(tmp_path, "u", "[potential]\nkind = \"soft_core\"\neps = -1.0\n", "bounds")[0] == EXIT_CONFIG
    assert run(tmp_path, "u", "[thermo]\nbeta = -1.0\n", "bounds")[0] == EXIT_CONFIG
    assert run(tmp_path, "u", "this is not toml", "bounds")[0] == EXIT_CONFIG
    assert main(["bounds", str(tmp_path / "missing.toml")]) == EXIT_CONFIG
    assert main(["frobnicate", "x.toml"]) == EXIT_CONFIG
    with pytest.raises(ConfigError):
        parse_config({"thermo": {"z": 0.1, "rho": 0.1}})


def test_thread_env(tmp_path, monkeypatch):
    monkeypatch.setenv("KSCERT_THREADS", "zero")
    assert run(tmp_path, "c", CERT, "certify")[0] == EXIT_CONFIG


HCL = """
seed = 0
[hclimit]
epsilons = [0.2]
points = 4
"""


def test_hclimit_single_eps(tmp_path):
    summ = tmp_path / "s.json"
    code, text = run(tmp_path, "h", HCL, "hclimit", "--summary", str(summ))
    assert code == EXIT_OK
    header, rows = data_rows(text)
    assert header == ["epsilon", "x", "rho2_eps", "rho2_hard", "abs_error", "budget", "flagged"]
    assert len(rows) == 4
    doc = json.loads(summ.read_text())
    assert len(doc["per_epsilon"]) == 1 and doc["empirical_rate"] is None


def test_hclimit_fixed_rho_has_z(tmp_path):
    code, text = run(tmp_path, "h", HCL + "drive = \"rho\"\nrho = 0.045\n", "hclimit")
    header, rows = data_rows(text)
    assert code == EXIT_OK and "z" in header and len(rows) == 4


def test_hclimit_threads_identical(tmp_path, monkeypatch):
    text = HCL.replace("[0.2]", "[0.2, 0.1]")
    _, a = run(tmp_path, "a", text, "hclimit")
    monkeypatch.setenv("KSCERT_THREADS", "2")
    _, b = run(tmp_path, "b", text, "hclimit")
    assert a == b


def test_invert_and_bounds(tmp_path):
    code, text = run(tmp_path, "i", "[potential]\nkind = \"hard_rod\"\n[invert]\nrho = [0.045]\nP = 1\n", "invert")
    _, rows = data_rows(text)
    rho, z, unc, flagged = rows[0].split(",")
    assert code == EXIT_OK and abs(float(z) - 0.05) < 1e-15 and flagged == "0"
    code, text = run(tmp_path, "b", "[potential]\nkind = \"hard_rod\"\n[bounds]\nn_max = 1\np_max = 2\n", "bounds")
    _, rows = data_rows(text)
    assert code == EXIT_OK and rows[-1] == "1,2,29.556224395722598"
    assert "I_beta=2 " in text


def test_module_entry_point(tmp_path):
    cfg = tmp_path / "h.toml"
    cfg.write_text("[hardrod]\nrho = 0.2\npoints = 2\n")
    res = subprocess.run([sys.executable, "-m", "kscert", "hardrod", str(cfg)], capture_output=True, text=True)
    assert res.returncode == 0 and "x,rho2,rho2_prime" in res.stdout
