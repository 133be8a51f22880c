import csv
import io
import json

import pytest

from nsp_free import cli, entropy, solver


def write_cfg(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def call(argv, capsys):
    code = cli.main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def error_of(err):
    lines = [json.loads(x) for x in err.splitlines() if x.startswith("{")]
    errors = [x["error"] for x in lines if "error" in x]
    assert len(errors) == 1
    return errors[0]


def test_init_writes_sidecar(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "initial.preset = uniform_ball\ninitial.M = 1\ninitial.R = 1\n")
    code, out, _ = call(["init", "--config", cfg, "--out", str(tmp_path / "o")], capsys)
    assert code == 0
    side = json.loads((tmp_path / "o" / "initial.json").read_text())
    assert side == json.loads(out)
    assert side["M"] == pytest.approx(1.0, rel=1e-9)
    assert side["residual_u_inner"] == 0.0 and side["residual_stress"] <= 1e-8
    rows = list(csv.DictReader(open(tmp_path / "o" / "initial.csv")))
    assert set(rows[0]) == {"r", "rho", "u"}


def test_init_rejects_small_domain(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "initial.preset = gaussian\ndomain.b = 3\n")
    code, _, err = call(["init", "--config", cfg, "--out", str(tmp_path)], capsys)
    assert code == 2
    assert error_of(err)["code"] == "E_VALIDATION"


def test_supercritical_mass_warns(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "model.gamma = 1.3\ninitial.preset = gaussian\ninitial.M = 50\n")
    code, _, err = call(["init", "--config", cfg, "--out", str(tmp_path)], capsys)
    assert code == 0
    warnings = [json.loads(x)["warning"] for x in err.splitlines()]
    assert [w["code"] for w in warnings] == ["W_SUPERCRITICAL"]
    assert warnings[0]["M"] > warnings[0]["M_c"]


def test_run_is_deterministic(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "domain.N = 32\ntime.T = 0.2\noutput.formats = ndjson, csv, svg\n")
    ledgers = []
    for k in range(2):
        out = tmp_path / f"r{k}"
        code, stdout, _ = call(["run", "--config", cfg, "--out", str(out)], capsys)
        assert code == 0 and json.loads(stdout)["reports"] >= 3
        ledgers.append((out / "ledger.ndjson").read_bytes())
    assert ledgers[0] == ledgers[1]
    recs = [json.loads(x) for x in ledgers[0].decode().splitlines()]
    assert recs[0]["tau"] == 0.0 and recs[-1]["tau"] == pytest.approx(0.2)
    out = tmp_path / "r0"
    assert (out / "snapshots" / "snapshot_0000.csv").is_file()
    assert (out / "snapshots" / "slice_0000.csv").is_file()
    assert (out / "boundary_density.svg").is_file()
    summary = json.loads((out / "summary.json").read_text())
    assert summary["halted"] is False and summary["N"] == 32


def test_blowup_exits_3_with_partial_ledger(tmp_path, capsys, monkeypatch):
    real = solver.step

    def failing(state, dt, *args, **kw):
        if state.tau > 0.15:
            raise solver.StepRejected("injected failure")
        return real(state, dt, *args, **kw)

    monkeypatch.setattr(solver, "step", failing)
    cfg = write_cfg(tmp_path, "domain.N = 32\ntime.T = 1\n")
    code, _, err = call(["run", "--config", cfg, "--out", str(tmp_path)], capsys)
    assert code == 3
    e = error_of(err)
    assert e["code"] == "E_BLOWUP" and 0.15 < e["tau"] < 1.0
    recs = [json.loads(x) for x in (tmp_path / "ledger.ndjson").read_text().splitlines()]
    assert len(recs) >= 2 and recs[-1]["tau"] == pytest.approx(e["tau"])
    assert json.loads((tmp_path / "summary.json").read_text())["halted"] is True


@pytest.mark.parametrize("text, code", [
    ("model.eps = 0\n", "E_VALIDATION"),
    ("model.gamma = 1\n", "E_VALIDATION"),
    ("domain.N = 8\n", "E_VALIDATION"),
    ("model.colour = red\n", "E_CONFIG"),
    ("model.n = three\n", "E_CONFIG"),
    ("output.formats = pdf\n", "E_VALIDATION"),
    ("initial.table = /no/such/file.csv\n", "E_IO"),
])
def test_run_rejects_bad_configuration(tmp_path, capsys, text, code):
    cfg = write_cfg(tmp_path, text)
    status, _, err = call(["run", "--config", cfg, "--out", str(tmp_path)], capsys)
    assert error_of(err)["code"] == code
    assert status == cli.EXIT_CODES[code]


def test_missing_config_file(tmp_path, capsys):
    code, _, err = call(["run", "--config", str(tmp_path / "absent.cfg")], capsys)
    assert code == 2 and error_of(err)["code"] == "E_CONFIG"


def test_unknown_command_is_a_json_error(capsys):
    code, out, err = call(["explode"], capsys)
    assert code == 2 and out == ""
    assert error_of(err)["code"] == "E_CONFIG"


def test_bad_thread_count(capsys):
    code, _, err = call(["sweep", "--threads", "0"], capsys)
    assert code == 2 and error_of(err)["code"] == "E_VALIDATION"


def test_mc_csv(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "mc.n = 3, 4\nmc.gamma = 4/3, 1.5, 2\n")
    code, out, _ = call(["mc", "--config", cfg, "--format", "csv"], capsys)
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert len(rows) == 6
    crit = next(r for r in rows if r["n"] == "3" and float(r["gamma"]) == pytest.approx(4 / 3))
    assert float(crit["M_c"]) == pytest.approx(0.566613158104595, rel=1e-13)
    # n = 3, gamma = 2 lies above the critical exponent: no critical mass
    above = next(r for r in rows if r["n"] == "3" and r["gamma"] == "2.0")
    assert above["M_c"] == ""


def test_entropy_table(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "entropy.gamma = 2\nentropy.rho = 0.5, 1, 2\nentropy.u = -1, 0, 1\n")
    code, out, _ = call(["entropy", "--config", cfg, "--out", str(tmp_path)], capsys)
    assert code == 0 and json.loads(out)["rows"] == 9
    rows = list(csv.DictReader(open(tmp_path / "entropy.csv")))
    assert len(rows) == 9
    kp = entropy.kernel_params(2.0, 64)
    for r in rows:
        ev = entropy.sharp_pair(float(r["rho"]), float(r["u"]), kp)
        assert float(r["eta"]) == float(ev.eta) and float(r["q"]) == float(ev.q)


def test_sweep_command(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "sweep.eps_ladder = 0.2, 0.1\nsweep.N0 = 32\nsweep.T = 0.1\n"
                              "sweep.t_window = 0.02, 0.1\nsweep.nt = 5\nsweep.nr = 21\n")
    code, out, _ = call(["sweep", "--config", cfg, "--out", str(tmp_path)], capsys)
    assert code == 0
    res = json.loads(out)
    assert res["halted"] == [] and len(res["successive_d1_rho"]) == 1
    assert "sweep_summary.json" in res["files"]


def test_sweep_rejects_model_eps(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "model.eps = 0.1\n")
    code, _, err = call(["sweep", "--config", cfg], capsys)
    assert code == 2 and error_of(err)["key"] == "model.eps"


@pytest.fixture(scope="module")
def verify_default(tmp_path_factory):
    out = tmp_path_factory.mktemp("verify")
    return cli.main(["verify", "--out", str(out)]), out


def test_verify_default_passes(verify_default, capsys):
    code, out = verify_default
    assert code == 0
    checks = json.loads((out / "verify.json").read_text())
    assert all(c["passed"] for c in checks)
    assert {"mass-conservation", "boundary-density", "energy-balance", "field-identity"} <= {c["tag"] for c in checks}


def test_verify_detects_injected_mass_error(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "domain.N = 64\ntime.T = 0.1\nverify.inject_mass_error = 1e-6\n")
    code, out, err = call(["verify", "--config", cfg], capsys)
    assert code == 4
    assert "FAIL [mass-conservation]" in out
    assert "mass-conservation" in error_of(err)["failed"]
