import json
import math
import subprocess
import sys
from importlib import resources

import numpy as np
import pytest
from scipy.stats import norm

from roughhedge.cli import OUT_ENV, main


@pytest.fixture(scope="module")
def synthetic(tmp_path_factory):
    out = tmp_path_factory.mktemp("syn")
    assert main(["synthesize", "--days", "400", "--seed", "2", "--out", str(out)]) == 0
    return out


def data_args(syn):
    return ["--vix", str(syn / "vix.csv"), "--fvs", str(syn / "fvs.csv")]


def test_no_arguments_is_usage(capsys):
    assert main([]) == 2
    assert "usage" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [["frobnicate"], ["backtest", "--bogus"], ["backtest", "--model", "heston"],
                                  ["simulate", "--experiment", "ueq", "--seed", "-1"]])
def test_usage_errors(argv, capsys):
    assert main(argv) == 2
    assert "usage" in capsys.readouterr().err


def test_computation_failure_is_structured(tmp_path, capsys):
    code = main(["estimate-hurst", "--vix", str(tmp_path / "none.csv"), "--out", str(tmp_path)])
    assert code == 1
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["error"] == "IngestError" and err["command"] == "estimate-hurst"


def test_synthesize_outputs(synthetic):
    assert (synthetic / "vix.csv").read_text().startswith("date,close\n")
    assert (synthetic / "fvs.csv").read_text().startswith("date,maturity_date,forward_variance\n")
    man = json.loads((synthetic / "manifest.json").read_text())
    assert man["seed"] == 2 and man["command"] == "synthesize"


def test_compare_writes_three_blocks(synthetic, tmp_path):
    out = tmp_path / "cmp"
    assert main(["compare", *data_args(synthetic), "--stride", "50", "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    for tag in ("bs", "cir", "rfsv"):
        block = summary[tag]
        for side in ("hedge", "no_hedge"):
            assert set(block[side]) >= {"mean", "std", "rmse"}
        assert block["red_factor"] > 0
    header = (out / "episodes.csv").read_text().splitlines()[0]
    assert header == "start_date,model,pnl_hedged,pnl_unhedged"


def test_rerun_is_byte_identical(synthetic, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["backtest", *data_args(synthetic), "--model", "bs", "--stride", "30",
                 "--starts-from", "2001-07-01", "--out", str(a)]) == 0
    assert main(["rerun", str(a / "manifest.json"), "--out", str(b)]) == 0
    for name in ("episodes.csv", "summary.json", "failures.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_rerun_detects_changed_input(synthetic, tmp_path, capsys):
    vix = tmp_path / "vix.csv"
    vix.write_text((synthetic / "vix.csv").read_text())
    out = tmp_path / "o"
    assert main(["estimate-hurst", "--vix", str(vix), "--out", str(out)]) == 0
    vix.write_text(vix.read_text().replace("date,close\n", "date,close\n", 1) + "2030-01-02,0.3\n")
    assert main(["rerun", str(out / "manifest.json")]) == 1
    assert "changed since" in capsys.readouterr().err


def test_estimate_hurst_on_bundled_fixture(tmp_path):
    fixture = resources.files("roughhedge") / "data" / "synthetic_vix.csv"
    assert main(["estimate-hurst", "--vix", str(fixture), "--halves", "--out", str(tmp_path)]) == 0
    summary = json.loads((tmp_path / "hurst_summary.json").read_text())
    # fixture: 5000 days of Riemann-Liouville log-VIX with H = 0.377
    assert summary["hurst"] == pytest.approx(0.377, abs=0.04)
    lines = (tmp_path / "hurst_fit.csv").read_text().splitlines()
    assert lines[0] == "lag,m2,log_lag,log_m2,fitted_log_m2" and len(lines) == 31


def test_sweep_h(synthetic, tmp_path):
    assert main(["sweep-h", *data_args(synthetic), "--stride", "60", "--h-from", "0.3", "--h-to", "0.5",
                 "--h-step", "0.1", "--out", str(tmp_path)]) == 0
    rows = (tmp_path / "sweep_h.csv").read_text().splitlines()
    assert rows[0] == "hurst,rmse_hedged" and len(rows) == 4


def test_simulate_uses_env_out_dir(tmp_path, monkeypatch):
    monkeypatch.setenv(OUT_ENV, str(tmp_path / "env"))
    assert main(["simulate", "--experiment", "log-contract", "--steps", "16", "--paths", "50",
                 "--horizon", "0.25"]) == 0
    assert (tmp_path / "env" / "replication_error.csv").exists()
    assert (tmp_path / "env" / "manifest.json").exists()


def test_replicate(tmp_path):
    rows = ["date,maturity_date,strike,call_price,put_price"]
    S, sig = 0.2, 0.8
    for mat, T in (("2020-02-03", 22 / 252), ("2020-03-02", 42 / 252)):
        for K in np.linspace(0.04, 1.0, 600):
            sd = sig * math.sqrt(T)
            d1 = (math.log(S / K) + sd * sd / 2) / sd
            c = S * norm.cdf(d1) - K * norm.cdf(d1 - sd)
            rows.append(f"2020-01-02,{mat},{K:.15g},{c:.15g},{c - S + K:.15g}")
    opt = tmp_path / "options_grid.csv"
    opt.write_text("\n".join(rows) + "\n")
    assert main(["replicate", "--options", str(opt), "--out", str(tmp_path / "r")]) == 0
    swaps = (tmp_path / "r" / "variance_swaps.csv").read_text().splitlines()
    th, u = float(swaps[1].split(",")[2]), float(swaps[1].split(",")[3])
    assert u == pytest.approx(sig * sig * th, rel=2e-3)


def test_console_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "roughhedge.cli"], capture_output=True, text=True)
    assert res.returncode == 2
