import json

import pytest

from errors import UsageError
from formula_ir import And, CLeaf, QGate, QLeaf, Var, dumps, load_document, parse_cformula
from genrand import add_noise
from qformula import CONFIG, build_parser, main, resolve_thread_setting
from toffoli import toffoli_channel


@pytest.fixture
def xor_file(write_json, xor_formula):
    return write_json("xor.qf.json", dumps(xor_formula))


@pytest.fixture
def obf_file(write_json, obfuscated_xor):
    return write_json("obf.qf.json", dumps(obfuscated_xor))


@pytest.fixture
def and_file(write_json):
    return write_json("and2.circ.json", dumps(And(Var(0), Var(1))))


def test_simulate_single_input(xor_file, capsys):
    assert main(["simulate", xor_file, "--x", "10"]) == 0
    assert "output: |1⟩⟨1| (classical 1)" in capsys.readouterr().out


def test_simulate_all_inputs(xor_file, capsys, tmp_path):
    csv_path = tmp_path / "table.csv"
    assert main(["--json", "simulate", xor_file, "--all", "--csv", str(csv_path)]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["table"] == "0110"
    assert report["classical"] is True
    assert csv_path.read_text().splitlines()[0] == "x0,x1,f,p1"


def test_simulate_reports_separation_for_noisy_formulas(write_json, obfuscated_xor, capsys):
    path = write_json("noisy.qf.json", dumps(add_noise(obfuscated_xor, 0.005)))
    assert main(["--json", "simulate", path, "--all"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["classical"] is False
    assert 1.5 < report["separation"] < 2.0


def test_simulate_parse_error(write_json):
    assert main(["simulate", write_json("bad.json", '{"kind": "unknown"}'), "--all"]) == 2
    assert main(["simulate", write_json("worse.json", "{not json"), "--all"]) == 2


def test_simulate_evaluation_error(xor_file):
    assert main(["simulate", xor_file, "--x", "1"]) == 3


def test_simulate_needs_an_input(xor_file):
    assert main(["simulate", xor_file]) == 5


def test_dequantize_obfuscated_xor(obf_file, tmp_path, capsys):
    out = tmp_path / "xor.cf.json"
    certs = tmp_path / "certs.json"
    code = main(["dequantize", obf_file, "--out", str(out), "--certificates", str(certs)])
    assert code == 0
    assert "size=1 depth=1" in capsys.readouterr().out
    cformula = parse_cformula(out.read_text())
    assert cformula.table.to_string() == "0110"
    assert json.loads(certs.read_text())["certificates"][0]["table"] == "0110"


def test_dequantize_bare_wire(write_json, tmp_path, capsys):
    out = tmp_path / "x0.cf.json"
    assert main(["dequantize", write_json("wire.qf.json", {"leaf": 0}), "--out", str(out)]) == 0
    assert "size=0 depth=0" in capsys.readouterr().out
    assert parse_cformula(out.read_text()) == CLeaf(0)


def test_dequantize_rejects_classical_input(write_json):
    doc = {"gate": {"arity": 2, "bits": "0110"}, "children": [{"leaf": 0}, {"leaf": 1}]}
    assert main(["dequantize", write_json("xor.cf.json", doc)]) == 2


def test_dequantize_bounded(write_json, obfuscated_xor, capsys):
    path = write_json("noisy.qf.json", dumps(add_noise(obfuscated_xor, 0.005)))
    assert main(["--json", "dequantize", path, "--delta", "0.1"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["mode"] == "bounded"
    assert (report["size"], report["depth"]) == (1, 1)


def test_dequantize_read_many_fails(write_json, capsys):
    f = QGate(toffoli_channel(2), (None, None), (QLeaf(0), QLeaf(0)))
    assert main(["dequantize", write_json("rm.qf.json", dumps(f))]) == 4
    assert "NotReadOnce" in capsys.readouterr().err


def test_dequantize_heavy_noise_fails(write_json, obfuscated_xor):
    path = write_json("loud.qf.json", dumps(add_noise(obfuscated_xor, 0.3)))
    assert main(["dequantize", path, "--delta", "0.1"]) == 4


def test_compile_and_verify(and_file, tmp_path, capsys):
    program = tmp_path / "and2.oqp.json"
    assert main(["compile-oqp", and_file, "--out", str(program)]) == 0
    assert "length=4 bound=4 depth=1" in capsys.readouterr().out
    assert main(["verify-equiv", and_file, str(program)]) == 0


def test_verify_equiv_reports_first_difference(and_file, xor_file, capsys):
    assert main(["--json", "verify-equiv", and_file, xor_file]) == 1
    report = json.loads(capsys.readouterr().out)
    assert report["equivalent"] is False
    assert report["assignment"] == "01"


def test_classify_toffoli(capsys):
    assert main(["classify-toffoli", "--m", "3"]) == 0
    assert "table: 01010110" in capsys.readouterr().out
    assert main(["classify-toffoli", "--m", "2", "--pre", "id,not"]) == 0
    assert "table: 1001" in capsys.readouterr().out
    assert main(["classify-toffoli", "--m", "2", "--pre", "plus,id"]) == 4
    assert main(["classify-toffoli", "--m", "2", "--pre", "id"]) == 5


def test_classify_toffoli_from_file(write_json, capsys):
    from toffoli import named_channel
    doc = {"m": 2, "pre": [named_channel("one").to_json(), named_channel("id").to_json()],
           "post": named_channel("not").to_json()}
    assert main(["--json", "classify-toffoli", "--file", write_json("dress.json", doc)]) == 0
    assert json.loads(capsys.readouterr().out)["table"] == "0101"


def test_affine_check(and_file, xor_file, capsys):
    assert main(["affine-check", "--table", "0001"]) == 0
    assert "non-affine" in capsys.readouterr().out
    assert main(["affine-check", xor_file]) == 0
    out = capsys.readouterr().out
    assert "affine" in out and "non-affine" not in out
    assert main(["affine-check", "--table", "011"]) == 5


def test_gen_writes_reproducible_files(tmp_path, capsys):
    first, second = tmp_path / "a", tmp_path / "b"
    for target in (first, second):
        assert main(["gen", "obf", "--seed", "3", "--count", "2", "--out", str(target)]) == 0
    capsys.readouterr()
    names = sorted(p.name for p in first.iterdir())
    assert names == ["obf-0000.json", "obf-0001.json"]
    for name in names:
        assert (first / name).read_text() == (second / name).read_text()
    meta = json.loads((first / names[1]).read_text())["meta"]
    assert meta["index"] == 1 and meta["config"]["seed"] == 3


def test_gen_to_stdout(capsys):
    assert main(["gen", "circuit", "--seed", "1"]) == 0
    doc = capsys.readouterr().out.strip()
    load_document(doc)


def test_gen_rejects_bad_config():
    assert main(["gen", "rof", "--max-arity", "9"]) == 5
    assert main(["gen", "rof", "--count", "0"]) == 5


def test_argparse_errors_exit_with_usage_code():
    with pytest.raises(SystemExit) as info:
        main(["simulate"])
    assert info.value.code == 5
    with pytest.raises(SystemExit) as info:
        main(["gen", "dag"])
    assert info.value.code == 5


def test_bad_tolerances_are_usage_errors(xor_file):
    assert main(["--eps-num", "1e-3", "simulate", xor_file, "--all"]) == 5


@pytest.mark.parametrize("command", [
    ["simulate", "{path}", "--all"],
    ["verify-equiv", "{path}", "{path}"],
    ["affine-check", "{path}"],
])
def test_thread_count_does_not_change_output(write_json, capsys, command):
    f = QGate(toffoli_channel(2), (None, None), (QLeaf(0), QGate(toffoli_channel(2), (None, None),
                                                                (QLeaf(1), QLeaf(0)))))
    path = write_json("rm.qf.json", dumps(f))
    argv = [arg.format(path=path) for arg in command]
    outputs = []
    for threads in ("1", "8"):
        assert main(["--threads", threads, "--json", *argv]) == 0
        outputs.append(capsys.readouterr().out)
    assert outputs[0] == outputs[1]
    report = json.loads(outputs[0])
    if "table" in report:
        assert report["table"] == "0101"


def test_thread_setting_falls_back_to_environment(monkeypatch):
    monkeypatch.setenv("QF_THREADS", "3")
    assert resolve_thread_setting(None) == 3
    assert resolve_thread_setting(2) == 2
    monkeypatch.setenv("QF_THREADS", "many")
    with pytest.raises(UsageError) as info:
        resolve_thread_setting(None)
    assert info.value.exit_code == 5


def test_parser_defaults_follow_config():
    args = build_parser().parse_args(["gen", "rof"])
    assert args.max_vars == CONFIG["max_vars"]
    assert args.seed == CONFIG["seed"]
