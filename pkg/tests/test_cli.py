"""End-to-end command tests: exit codes, artifacts, manifests, rerun
byte-identity and the stderr error contract."""

import csv
import json
import math
import os
import subprocess
import sys

import pytest

from ustvol.bspp_bootstrap import bspp_atm_vol, shift_weighted_variance
from ustvol.cf_edgeworth import Displacement
from ustvol.cli import main
from ustvol.fourier_pricer import bs_price
from ustvol.mc_oracle import read_samples_bin

BS_VEC = "[0.2, 0, 0, 0, 0, 0, 0, 0]"


def _write_quotes(path, sigma0=0.2, shifts=(0.01, -0.005), days=(1, 2, 3),
                  strikes=(98.0, 99.0, 100.0, 101.0, 102.0), spot=100.0,
                  spread=0.004, dead_bid_rows=0):
    t0 = "2024-03-14T10:00:00"
    tenors = tuple(d / 365.0 for d in days)
    disp = Displacement(tenors=tenors, shifts=tuple(shifts)[: len(days) - 1])
    lines = ["timestamp,expiry_datetime,strike,cp_flag,bid,ask,underlying"]
    for d, tau in zip(days, tenors):
        expiry = f"2024-03-{14 + d:02d}T10:00:00"
        vol = sigma0 * math.sqrt(shift_weighted_variance(sigma0, disp, tau) / tau)
        for k in strikes:
            for flag, is_call in (("C", True), ("P", False)):
                p = bs_price(spot, k, tau, 0.0, vol, is_call)
                bid = 0.0 if dead_bid_rows > 0 else max(p - spread / 2, 1e-6)
                dead_bid_rows -= 1
                lines.append(
                    f"{t0},{expiry},{k},{flag},{bid},{p + spread / 2},{spot}"
                )
    path.write_text("\n".join(lines) + "\n")
    return tenors


def _read_csv(path, manifest_name=None):
    lines = path.read_text().splitlines()
    # artifacts reference the manifest of the run that produced them
    assert lines[0] == f"# manifest: {manifest_name or path.name + '.manifest.json'}"
    rows = list(csv.reader(lines[1:]))
    return rows[0], rows[1:]


def _manifest(path):
    return json.loads((path.parent / (path.name + ".manifest.json")).read_text())


def _stderr_error(capsys):
    err = capsys.readouterr().err.strip().splitlines()[-1]
    return json.loads(err)["error"]


def test_price_black_scholes_grid(tmp_path):
    out = tmp_path / "prices.csv"
    code = main([
        "price", "--model", "edgeworth", "--params", BS_VEC,
        "--tenors", f"{2 / 365},{7 / 365}", "--strikes", "97,100,103",
        "--out", str(out),
    ])
    assert code == 0
    header, rows = _read_csv(out)
    assert header == ["tenor", "strike", "price", "iv"]
    assert len(rows) == 6
    for tau_s, k_s, price_s, iv_s in rows:
        ref = bs_price(100.0, float(k_s), float(tau_s), 0.0, 0.2, True)
        assert abs(float(price_s) - ref) < 1e-4
        assert abs(float(iv_s) - 0.2) < 1e-3
    man = _manifest(out)
    assert man["command"] == "price"
    assert len(man["config_hash"]) == 16
    assert man["versions"]["ustvol"]
    assert man["wall_time"] >= 0.0


def test_price_rerun_byte_identical(tmp_path):
    out = tmp_path / "p.csv"
    argv = ["price", "--model", "edgeworth", "--params", BS_VEC,
            "--tenors", f"{1 / 365}", "--strikes", "99,101", "--out", str(out)]
    assert main(argv) == 0
    first = out.read_bytes()
    man_a = _manifest(out)
    assert main(argv) == 0
    assert out.read_bytes() == first
    man_b = _manifest(out)
    man_a.pop("wall_time"), man_b.pop("wall_time")
    assert man_a == man_b


def test_price_malformed_json(tmp_path, capsys):
    code = main(["price", "--model", "edgeworth", "--params", "{not json",
                 "--tenors", "0.01", "--strikes", "100",
                 "--out", str(tmp_path / "x.csv")])
    assert code == 2
    err = _stderr_error(capsys)
    assert err["category"] == "validation"
    assert err["command"] == "price"


def test_price_unknown_model_lists_registry(tmp_path, capsys):
    code = main(["price", "--model", "svi", "--params", BS_VEC,
                 "--tenors", "0.01", "--strikes", "100",
                 "--out", str(tmp_path / "x.csv")])
    assert code == 2
    err = _stderr_error(capsys)
    assert "edgeworth_pp" in err["message"] and "bs_pp" in err["message"]


def test_price_params_from_file(tmp_path):
    pfile = tmp_path / "params.json"
    pfile.write_text(json.dumps({
        "sigma0": 0.2, "beta_tilde0": 0.0, "rho0": 0.0, "eta0": 0.0,
        "alpha_prime0": 0.0, "lambda0": 0.0, "mu_J": 0.0, "sigma_J": 0.0,
    }))
    out = tmp_path / "p.csv"
    code = main(["price", "--model", "edgeworth", "--params", f"@{pfile}",
                 "--tenors", f"{1 / 365}", "--strikes", "100", "--out", str(out)])
    assert code == 0
    assert str(pfile) in _manifest(out)["inputs"]
    _, rows = _read_csv(out)
    assert abs(float(rows[0][3]) - 0.2) < 1e-3


def test_calibrate_json_and_report_grid(tmp_path):
    q = tmp_path / "quotes.csv"
    _write_quotes(q)
    out = tmp_path / "fit.json"
    rep = tmp_path / "report.csv"
    code = main(["calibrate", "--model", "bs_pp", "--surface", str(q),
                 "--out", str(out), "--report", str(rep),
                 "--budget", "800", "--fourier-nodes", "2048"])
    assert code == 0
    res = json.loads(out.read_text())
    assert res["manifest"] == out.name + ".manifest.json"
    assert res["model"] == "bs_pp"
    assert res["rmse_vol_points"] <= 0.05
    assert res["params"]["model"] == "bs_pp"
    assert abs(res["param_vector"][0] - 0.2) < 0.01
    assert len(res["param_vector"]) == 3
    assert res["param_names"] == ["sigma0", "shift_1", "shift_2"]
    trace = res["trace"]
    assert trace and all(a >= b for a, b in zip(trace, trace[1:]))
    assert 0.0 <= res["bid_ask_fraction"] <= 1.0

    header, rows = _read_csv(rep, manifest_name=out.name + ".manifest.json")
    assert header == ["bucket"] + [f"tenor_{j}" for j in range(1, 7)]
    assert [r[0] for r in rows] == ["DOTMP", "OTMP", "ATM", "OTMC", "DOTMC"]
    assert all(len(r) == 7 for r in rows)
    filled = [c for r in rows for c in r[1:] if c != ""]
    assert filled and all(float(c) >= 0.0 for c in filled)


def test_calibrate_missing_quote_file(tmp_path, capsys):
    code = main(["calibrate", "--model", "bs_pp",
                 "--surface", str(tmp_path / "absent.csv"),
                 "--out", str(tmp_path / "fit.json")])
    assert code == 2
    assert _stderr_error(capsys)["category"] == "validation"


def test_bootstrap_round_trip(tmp_path):
    tenors = (1 / 365, 2 / 365, 3 / 365)
    disp = Displacement(tenors=tenors, shifts=(0.03, -0.01))
    atm = tmp_path / "atm.csv"
    atm.write_text("tenor_years,atm_vol\n" + "".join(
        f"{t!r},{bspp_atm_vol(t, 0.2, disp)!r}\n" for t in tenors
    ))
    out = tmp_path / "boot.json"
    assert main(["bootstrap", "--atm", str(atm), "--out", str(out)]) == 0
    res = json.loads(out.read_text())
    assert abs(res["sigma0"] - 0.2) < 1e-10
    assert abs(res["shifts"][0] - 0.03) < 1e-10
    assert abs(res["shifts"][1] + 0.01) < 1e-10
    assert res["max_round_trip_error"] < 1e-10


def test_bootstrap_arbitrage_names_tenors(tmp_path, capsys):
    atm = tmp_path / "atm.csv"
    atm.write_text("tenor_years,atm_vol\n0.004,0.30\n0.008,0.10\n")
    code = main(["bootstrap", "--atm", str(atm), "--out", str(tmp_path / "b.json")])
    assert code == 2
    msg = _stderr_error(capsys)["message"]
    assert "0.004" in msg and "0.008" in msg


def test_ingest_filters_and_reports_drops(tmp_path, capsys):
    q = tmp_path / "raw.csv"
    _write_quotes(q, dead_bid_rows=2)
    out = tmp_path / "surface.csv"
    code = main(["ingest", "--quotes", str(q), "--out", str(out),
                 "--max-tenors", "2"])
    assert code == 0
    summary = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert summary["drop_counts"]["zero bid"] == 2
    assert summary["tenors"] == 2
    header, rows = _read_csv(out)
    assert header[:4] == ["tenor_years", "forward", "atm_vol", "strike"]
    assert rows and all(r[8] in ("DOTMP", "OTMP", "ATM", "OTMC", "DOTMC")
                        for r in rows)
    first = out.read_bytes()
    assert main(["ingest", "--quotes", str(q), "--out", str(out),
                 "--max-tenors", "2"]) == 0
    assert out.read_bytes() == first


def test_bench_csv(tmp_path):
    out = tmp_path / "timing.csv"
    code = main(["bench", "--models", "edgeworth,bs_pp", "--trials", "3",
                 "--fourier-nodes", "256", "--out", str(out)])
    assert code == 0
    header, rows = _read_csv(out)
    assert header[0] == "model_id"
    assert [r[0] for r in rows] == ["edgeworth", "bs_pp"]
    for r in rows:
        assert float(r[1]) > 0.0 and float(r[3]) > 0.0
        assert float(r[3]) > float(r[1])  # full surface costs more than one slice


def test_simulate_binary_and_determinism(tmp_path, capsys):
    out = tmp_path / "samples.bin"
    argv = ["simulate", "--model", "bs_pp", "--params", "[0.2]",
            "--tau", f"{2 / 365}", "--paths", "20000", "--steps", "10",
            "--seed", "3", "--out", str(out)]
    assert main(argv) == 0
    info = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    samples = read_samples_bin(out)
    assert samples.size == 20000 == info["paths"]
    assert abs(info["mean_growth"] - 1.0) < 0.01
    first = out.read_bytes()
    assert main(argv) == 0
    assert out.read_bytes() == first
    assert (tmp_path / "samples.bin.manifest.json").exists()


def test_simulate_numerical_failure_exit_1(tmp_path, capsys):
    code = main(["simulate", "--model", "rough_heston_pp",
                 "--params", "[0.1, 2.0, -0.6, 0.0001]",
                 "--tau", f"{2 / 365}", "--paths", "5000", "--steps", "50",
                 "--out", str(tmp_path / "s.bin")])
    assert code == 1
    err = _stderr_error(capsys)
    assert err["category"] == "numerical"
    assert "steps_per_tenor" in err["message"]


def test_smile_expand(tmp_path):
    out = tmp_path / "exp.json"
    params = json.dumps({
        "sigma0": 0.2, "beta_tilde0": 0.4, "rho0": -0.7, "eta0": 0.1,
        "alpha_prime0": 0.0, "lambda0": 0.0, "mu_J": 0.0, "sigma_J": 0.0,
    })
    assert main(["smile-expand", "--params", params, "--out", str(out)]) == 0
    res = json.loads(out.read_text())
    assert res["theta3"] == pytest.approx(-4.2, abs=1e-12)
    assert res["iv_skew"] == pytest.approx(-0.7, abs=1e-12)
    assert res["iv_level"] == 0.2
    assert res["params"]["model"] == "edgeworth"


def test_termstructure_exact_fit_and_multi_model(tmp_path):
    q = tmp_path / "quotes.csv"
    _write_quotes(q)
    out = tmp_path / "ts.csv"
    assert main(["termstructure", "--surface", str(q), "--out", str(out)]) == 0
    header, rows = _read_csv(out)
    assert header == ["tenor_years", "market_atm_vol", "bs_pp_atm_vol"]
    assert len(rows) == 3
    for r in rows:
        assert abs(float(r[1]) - float(r[2])) <= 1e-10

    out2 = tmp_path / "ts2.csv"
    code = main(["termstructure", "--surface", str(q),
                 "--models", "bs_pp,edgeworth_pp", "--out", str(out2),
                 "--budget", "150", "--fourier-nodes", "512"])
    assert code == 0
    header2, rows2 = _read_csv(out2)
    assert header2 == ["tenor_years", "market_atm_vol", "bs_pp_atm_vol",
                       "edgeworth_pp_atm_vol"]
    for r in rows2:
        assert 0.05 < float(r[3]) < 1.0


def test_termstructure_empty_surface(tmp_path, capsys):
    q = tmp_path / "quotes.csv"
    _write_quotes(q, days=(1,), strikes=(100.0,), dead_bid_rows=2)
    code = main(["termstructure", "--surface", str(q),
                 "--out", str(tmp_path / "ts.csv")])
    assert code == 2
    assert _stderr_error(capsys)["category"] == "validation"


def test_config_file_flag_precedence(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# defaults\nfourier-nodes = 512\nseed = 9\n")
    out = tmp_path / "p.csv"
    base = ["price", "--model", "edgeworth", "--params", BS_VEC,
            "--tenors", f"{1 / 365}", "--strikes", "100",
            "--config", str(cfg), "--out", str(out)]
    assert main(base) == 0
    assert _manifest(out)["rng_seed"] == 9
    assert main(base + ["--seed", "4"]) == 0
    assert _manifest(out)["rng_seed"] == 4


def test_config_file_bad_line(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("fourier-nodes\n")
    code = main(["price", "--model", "edgeworth", "--params", BS_VEC,
                 "--tenors", "0.01", "--strikes", "100",
                 "--config", str(cfg), "--out", str(tmp_path / "p.csv")])
    assert code == 2
    assert "key=value" in _stderr_error(capsys)["message"]


def test_threads_flag_sets_env(tmp_path, monkeypatch):
    monkeypatch.setitem(os.environ, "OMP_NUM_THREADS", "1")
    monkeypatch.setitem(os.environ, "OPENBLAS_NUM_THREADS", "1")
    out = tmp_path / "p.csv"
    assert main(["price", "--model", "edgeworth", "--params", BS_VEC,
                 "--tenors", f"{1 / 365}", "--strikes", "100",
                 "--threads", "2", "--out", str(out)]) == 0
    assert os.environ["OMP_NUM_THREADS"] == "2"
    assert os.environ["OPENBLAS_NUM_THREADS"] == "2"


def test_no_subcommand_and_bad_flag(capsys):
    assert main([]) == 2
    assert main(["price", "--nope"]) == 2
    capsys.readouterr()


def test_module_entry_help_smoke():
    proc = subprocess.run(
        [sys.executable, "-m", "ustvol.cli", "--help"],
        capture_output=True, text=True, timeout=120,
    )
    assert proc.returncode == 0
    for name in ("price", "calibrate", "bootstrap", "ingest", "bench",
                 "simulate", "smile-expand", "termstructure"):
        assert name in proc.stdout
