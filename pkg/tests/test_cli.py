import io
import json

import pytest

from carnot.cli import dumps, load_manifest_argv, run


def run_json(argv):
    out = io.StringIO()
    code = run(argv, out)
    return code, (json.loads(out.getvalue()) if out.getvalue() else None)


def test_exponents_heisenberg():
    code, doc = run_json(["exponents", "--group", "heisenberg", "--samples", "16"])
    assert code == 0
    assert doc["schema"] == 1
    assert doc["result"]["n_geo"] == 5
    assert doc["result"]["matches_closed_form"] is True
    assert doc["manifest"]["command"] == "exponents"
    assert "--seed" in doc["manifest"]["argv"]


def test_exponents_star():
    code, doc = run_json(["exponents", "--group", "star:2", "--samples", "64"])
    assert code == 0
    assert (doc["result"]["n_geo"], doc["result"]["n_ce_lower"]) == (9, 11)


def test_info_free():
    code, doc = run_json(["info", "--group", "free:3"])
    assert code == 0
    assert (doc["result"]["n"], doc["result"]["Q"]) == (6, 9)
    assert doc["result"]["diagnostics"]["valid"] is True


def test_leading_order_command():
    code, doc = run_json(["leading-order", "--group", "heisenberg", "--xi", "1,0", "--mu", "1"])
    assert code == 0
    assert doc["result"]["leading_order"]["gamma_est"] == 0
    assert doc["result"]["gamma_point"] == 0


def test_bad_group_is_an_input_error():
    code, doc = run_json(["info", "--group", "nope:3"])
    assert code == 2
    assert doc is None


def test_missing_covector_is_an_input_error():
    code, _ = run_json(["sexp", "--group", "heisenberg"])
    assert code == 2


def test_manifest_replay(tmp_path):
    code, first = run_json(["exponents", "--group", "star:2", "--samples", "16", "--seed", "9"])
    assert code == 0
    path = tmp_path / "run.json"
    path.write_text(json.dumps(first))
    code, second = run_json(["--manifest", str(path)])
    assert code == 0
    assert second["result"] == first["result"]
    for key in ("command", "group", "params", "seed", "argv", "config", "version"):
        assert second["manifest"][key] == first["manifest"][key]


def test_csv_output_carries_manifest(tmp_path):
    out = io.StringIO()
    code = run(["flow", "--group", "heisenberg", "--xi", "1,0", "--mu", "1", "--t-end", "0.01", "--out", "csv"], out)
    assert code == 0
    lines = out.getvalue().splitlines()
    assert lines[0].startswith("# ")
    assert lines[1] == "t,x1,x2,u1,xi1,xi2,mu1"
    path = tmp_path / "flow.csv"
    path.write_text(out.getvalue())
    assert load_manifest_argv(path)[0] == "flow"


def test_dumps_non_finite():
    assert json.loads(dumps({"a": float("nan"), "b": [1.5, float("inf")]})) == {"a": None, "b": [1.5, None]}


def test_verify_heisenberg():
    code, doc = run_json(["verify", "--group", "heisenberg", "--samples", "6"])
    assert code == 0
    assert doc["result"]["failed"] == []
    names = {c["name"] for c in doc["result"]["checks"]}
    assert {"homogeneity", "flow_vs_sexp", "rk4_order", "filtration_vs_leading_order"} <= names


def test_verify_ga(tmp_path):
    path = tmp_path / "a.json"
    path.write_text(json.dumps([[1.0, 0.5, 0.0], [0.0, 1.0, -0.7]]))
    code, doc = run_json(["verify", "--group", f"ga:{path}", "--samples", "6"])
    assert code == 0
    names = {c["name"] for c in doc["result"]["checks"]}
    assert {"ga_closed_form_jacobian", "cauchy_binet", "f1_f2_monotone"} <= names


@pytest.mark.slow
@pytest.mark.parametrize("group", ["free:3", "star:3"])
def test_verify_builtins(group):
    code, doc = run_json(["verify", "--group", group])
    assert code == 0, doc["result"]["failed"]


def test_explicit_lambda_grid():
    code, doc = run_json(["ce-check", "--group", "heisenberg", "--xi", "1,0", "--mu", "1", "--N", "4", "--grid", "1,0.5,0.1"])
    assert code == 0
    witness = doc["result"]["criterion"]["witness"]
    assert witness["lambda"] == 0.5


def test_sexp_and_jacobian_fields():
    code, doc = run_json(["sexp", "--group", "heisenberg", "--xi", "1,0", "--mu", "0"])
    assert code == 0
    assert doc["result"]["x"] == pytest.approx([1.0, 0.0], abs=1e-15)
    assert doc["result"]["u"] == pytest.approx([0.0], abs=1e-15)
    assert doc["result"]["jacobian"] == pytest.approx(1.0 / 12.0, rel=1e-12)

    code, doc = run_json(["jacobian", "--group", "heisenberg", "--xi", "1,0", "--mu", "0"])
    assert code == 0
    assert {"x", "u", "jacobian"} <= set(doc["result"])
    assert doc["result"]["x"] == pytest.approx([1.0, 0.0], abs=1e-15)


@pytest.mark.parametrize("strata,gamma_hat,n_strata", [("auto", 2, 3), ("none", 0, 1)])
def test_exponents_strata_modes(strata, gamma_hat, n_strata):
    code, doc = run_json(["exponents", "--group", "star:2", "--samples", "32", "--strata", strata])
    assert code == 0
    assert doc["result"]["gamma_hat_lower"] == gamma_hat
    assert len(doc["result"]["strata"]) == n_strata
    assert doc["result"]["matches_closed_form"] is (gamma_hat == 2)


def test_exponents_strata_file_masks(tmp_path):
    path = tmp_path / "strata.json"
    path.write_text(json.dumps([{"xi_zero": [1]}]))
    code, doc = run_json(["exponents", "--group", "star:2", "--samples", "32", "--strata", str(path)])
    assert code == 0
    assert doc["result"]["strata"] == ["full", "xi0=1"]
    assert doc["result"]["gamma_hat_lower"] == 2


def test_exponents_strata_file_covectors(tmp_path):
    path = tmp_path / "strata.json"
    path.write_text(json.dumps([{"xi": [0.0, 1.0, 0.5], "mu": [0.3, 0.3]}]))
    code, doc = run_json(["exponents", "--group", "star:2", "--samples", "32", "--strata", str(path)])
    assert code == 0
    assert doc["result"]["user_covectors"] == 1
    assert doc["result"]["gamma_hat_lower"] == 2
    assert doc["result"]["witnesses"]["gamma_hat_lower"] == {"xi": [0.0, 1.0, 0.5], "mu": [0.3, 0.3]}


@pytest.mark.parametrize("entries", [[{"xi_zero": [7]}], [{"nope": 1}], {"xi_zero": [1]}, [{"xi": [1.0]}]])
def test_exponents_strata_file_rejects(tmp_path, entries):
    path = tmp_path / "strata.json"
    path.write_text(json.dumps(entries))
    code, _ = run_json(["exponents", "--group", "star:2", "--samples", "8", "--strata", str(path)])
    assert code == 2


def test_manifest_replay_ignores_environment(tmp_path, monkeypatch):
    argv = ["volume-scan", "--group", "heisenberg", "--samples", "200", "--seed", "7", "--grid", "0.1,0.05"]
    monkeypatch.setenv("CARNOT_CHUNK_SIZE", "50")
    code, first = run_json(argv)
    assert code == 0
    assert first["manifest"]["config"]["chunk_size"] == 50
    path = tmp_path / "run.json"
    path.write_text(json.dumps(first))

    monkeypatch.setenv("CARNOT_CHUNK_SIZE", "4096")
    code, fresh = run_json(argv)
    assert code == 0
    assert fresh["result"]["volumes"] != first["result"]["volumes"]

    code, replayed = run_json(["--manifest", str(path)])
    assert code == 0
    assert replayed["result"] == first["result"]
    assert replayed["manifest"]["config"] == first["manifest"]["config"]


def test_manifest_with_malformed_config(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"manifest": {"argv": ["info"], "config": {"seed": 1}}}))
    code, _ = run_json(["--manifest", str(path)])
    assert code == 2
