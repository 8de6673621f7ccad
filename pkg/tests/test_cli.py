import json
from importlib import resources

import pytest

from jetbrst.cli import EXIT_INPUT, EXIT_NOT_TERMINATED, EXIT_OK, EXIT_VERIFY, main
from jetbrst.modeldsl import parse_expr

MODELS = resources.files("jetbrst").joinpath("models")


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_check_builtin_ok(capsys):
    code, out, _ = run(capsys, "check", "--builtin", "ym:su2:2:2")
    assert code == EXIT_OK
    assert "[nilpotency] ok" in out


def test_check_corrupted_model(capsys, tmp_path):
    text = MODELS.joinpath("ym_su2.jbm").read_text()
    bad = tmp_path / "bad.jbm"
    bad.write_text(text.replace("rule s C[a] = 1/2*f[b,c,a]", "rule s C[a] = f[b,c,a]"))
    code, out, _ = run(capsys, "check", str(bad))
    assert code == EXIT_VERIFY
    assert "[nilpotency]" in out and "D(D(g))" in out


def test_missing_file(capsys, tmp_path):
    code, _, err = run(capsys, "check", str(tmp_path / "nope.jbm"))
    assert code == EXIT_INPUT
    assert "cannot read" in err


@pytest.mark.parametrize("argv", [
    ["run"],
    ["run", "--builtin", "ym:su2:two:2"],
    ["run", "--builtin", "ym:so3:2:2"],
    ["run", "--builtin", "toy", "--x-as-doublet"],
])
def test_input_errors(capsys, argv):
    code, _, err = run(capsys, *argv)
    assert code == EXIT_INPUT
    assert err.startswith("jetbrst:")


def test_syntax_error_exit(capsys, tmp_path):
    bad = tmp_path / "bad.jbm"
    bad.write_text(MODELS.joinpath("toy.jbm").read_text().replace("v*u", "v*)u"))
    code, _, err = run(capsys, "run", str(bad))
    assert code == EXIT_INPUT
    assert "line" in err


def test_run_json_is_stable(capsys):
    first = run(capsys, "run", "--builtin", "ym:su2:2:2", "--format", "json")
    second = run(capsys, "run", "--builtin", "ym:su2:2:2", "--format", "json")
    assert first[0] == EXIT_OK
    assert first[1] == second[1]
    payload = json.loads(first[1])
    F = {w["symbol"]: w["original"] for w in payload["result"]["w"] if "F" in w["symbol"]}
    expected = [["1", ["A[0,1]", "A[1,2]"]], ["-1", ["A[0,2]", "A[1,1]"]],
                ["-1", ["d[1]A[0,0]"]], ["1", ["d[0]A[1,0]"]]]
    assert sorted(F["w:F[0,1,0]"]) == sorted(expected)
    assert payload["result"]["covariant"]["consistency"]["problems"] == []


def test_text_and_json_agree(capsys):
    from jetbrst.builtins import build_yang_mills
    model = build_yang_mills(2, "su2", 2)
    _, text, _ = run(capsys, "run", "--builtin", "ym:su2:2:2")
    _, js, _ = run(capsys, "run", "--builtin", "ym:su2:2:2", "--format", "json")
    payload = json.loads(js)
    lines = text.splitlines()
    for w in payload["result"]["w"]:
        i = lines.index(f"{w['symbol']}:")
        original = lines[i + 1].split("original:", 1)[1].strip()
        from_json = sum((parse_expr(f"{c}*{'*'.join(syms)}" if syms else c, model)
                         for c, syms in w["original"]), start=parse_expr("0", model))
        assert parse_expr(original, model) == from_json


def test_run_stilde_reports_antifield_terms(capsys):
    code, out, _ = run(capsys, "run", "--builtin", "ym:su2:2:2", "--mode", "stilde")
    assert code == EXIT_OK
    assert "[tilde] w:F[0,1,0] antifield terms:" in out
    assert "Astar" in out and "Cstar" in out


def test_x_doublet_does_not_terminate(capsys):
    code, out, _ = run(capsys, "run", "--builtin", "ym:abelian:3:2", "--x-as-doublet", "--max-iter", "3",
                       "--format", "json")
    assert code == EXIT_NOT_TERMINATED
    payload = json.loads(out)
    assert payload["status"] in ("not-terminated", "order-cap")
    growth = payload["result"]["growth"]
    assert [g["max_u_power"] for g in growth] == list(range(1, len(growth) + 1))


def test_output_dir_from_env(capsys, tmp_path, monkeypatch):
    monkeypatch.setenv("JETBRST_OUTPUT_DIR", str(tmp_path))
    code, out, _ = run(capsys, "run", "--builtin", "toy", "--format", "json")
    assert code == EXIT_OK
    (written,) = tmp_path.iterdir()
    assert written.read_text() == out


def test_props_subcommand(capsys):
    code, out, _ = run(capsys, "props", "--seed", "3", "--count", "120")
    assert code == EXIT_OK
    assert "failed" not in out
