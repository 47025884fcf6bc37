import json
from fractions import Fraction

import pytest

from dynhilbert.cli import main
from dynhilbert.groups import cyclic_instance, word_key
from dynhilbert.model import Model, local_gate, save_model
from dynhilbert.numeric import CMatrix


@pytest.fixture
def files(tmp_path):
    save_model(Model(2, {"U1": local_gate("H")}), tmp_path / "h.json")
    (tmp_path / "f.txt").write_text("# displacement\nsup v:B1 . d(U1(v), v)\n")
    (tmp_path / "bad.txt").write_text("sup v:B1 . d(U1(v), v\n")
    inst, gamma = cyclic_instance(8)
    (tmp_path / "inst.json").write_text(json.dumps(inst.to_json()))
    (tmp_path / "gamma.json").write_text(json.dumps({word_key(w): m.encode() for w, m in gamma.items()}))
    (tmp_path / "H.json").write_text(json.dumps(local_gate("H").encode()))
    (tmp_path / "Z.json").write_text(json.dumps(CMatrix.diag([1, -1]).encode()))
    (tmp_path / "I.json").write_text(json.dumps([["1", "0"], ["0", "1"]]))
    (tmp_path / "s.json").write_text(json.dumps({"size": 3, "E1": [[1, 2], [3]], "E2": [[1], [2, 3]]}))
    (tmp_path / "rho.txt").write_text("exists y1 exists y2 : E1(y1,y2) & ~E2(y1,y2)\n")
    return tmp_path


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, (json.loads(out) if out.strip() else None), err


def test_parse_ok_and_error(files, capsys):
    code, out, _ = run(capsys, "parse", "--formula", files / "f.txt")
    assert code == 0 and out["formula"] == "sup v:B1 . d(U1(v), v)"
    code, out, err = run(capsys, "parse", "--formula", files / "bad.txt")
    assert code == 2 and "error" in out


def test_eval_report_is_exact(files, capsys):
    code, out, err = run(capsys, "eval", "--model", files / "h.json", "--formula", files / "f.txt",
                         "--eps", "1/100", "--mode", "certified")
    assert code == 0
    assert Fraction(out["lo"]) <= 2 <= Fraction(out["hi"])
    assert Fraction(out["hi"]) - Fraction(out["lo"]) <= Fraction(1, 100)
    assert "certified" in err


def test_eval_heuristic(files, capsys):
    code, out, _ = run(capsys, "eval", "--model", files / "h.json", "--formula", files / "f.txt",
                       "--mode", "heuristic")
    assert code == 0 and Fraction(out["lo"]) > Fraction(19, 10)


def test_budget_exit_code(files, capsys):
    (files / "g.txt").write_text("sup v:B1 . sup w:B1 . reip(U1(v), w) * reip(v, w)")
    code, out, _ = run(capsys, "eval", "--model", files / "h.json", "--formula", files / "g.txt",
                       "--eps", "1/1000000", "--budget", "20")
    assert code == 1 and out["error"] == "budget"


def test_unknown_flag(capsys):
    code = main(["eval", "--nope"])
    _, err = capsys.readouterr()
    assert code == 2 and "usage" in err


def test_missing_file(files, capsys):
    code, out, _ = run(capsys, "eval", "--model", files / "missing.json", "--formula", files / "f.txt")
    assert code == 2


def test_degree(files, capsys):
    code, out, _ = run(capsys, "degree", "--formula", files / "f.txt", "--dim", 1, "--ops", 1, "--eps", "1/20")
    assert code == 0 and Fraction(out["lo"]) <= 2 <= Fraction(out["hi"])
    code, out, _ = run(capsys, "degree", "--formula", files / "f.txt", "--mode", "lower-profile", "--maxdim", 2)
    assert code == 0 and len(out["profile"]) == 2
    code, out, _ = run(capsys, "degree", "--formula", files / "f.txt", "--dim", 3, "--ops", 2)
    assert code == 2


def test_automaton(files, capsys):
    code, out, _ = run(capsys, "automaton", "--model", files / "h.json", "--proj", "01", "--word", "1")
    assert code == 0 and out["acc"] == "1/2,0,0,0"
    code, out, err = run(capsys, "automaton", "--model", files / "h.json", "--proj", "01", "--lambda", "1/2",
                         "--mode", "margin", "--maxlen", 2)
    assert out["margin_text"] == "0" and out["word"] == [1] and "lengths <= 2" in err
    code, out, _ = run(capsys, "automaton", "--model", files / "h.json", "--proj", "01", "--lambda", "1",
                       "--mode", "search", "--maxlen", 3)
    assert code == 0 and out["word"] is None


def test_mfcheck(files, capsys):
    code, out, _ = run(capsys, "mfcheck", "--instance", files / "inst.json", "--gamma", files / "gamma.json",
                       "--eps", "1/100")
    assert code == 0 and out["verdict"] == "pass"


def test_eqcheck(files, capsys):
    code, out, _ = run(capsys, "eqcheck", "--a", files / "H.json", "--b", files / "Z.json")
    assert code == 0 and out["verdict"] == "equivalent"
    code, out, _ = run(capsys, "eqcheck", "--a", files / "I.json", "--b", files / "Z.json")
    assert out["verdict"] == "distinct"


def test_interpret_single(files, capsys):
    code, out, _ = run(capsys, "interpret", "--structure", files / "s.json", "--sentence", files / "rho.txt",
                       "--scheme", "constants")
    assert code == 0 and out["agree"] and out["fo_truth"]


def test_interpret_battery(capsys):
    code, out, err = run(capsys, "interpret", "--battery", "--scheme", "constants")
    assert code == 0 and out["failures"] == 0 and out["pairs"] == 30 * 132


def test_manifest_replay(files, capsys):
    man = files / "run.json"
    code, first, _ = run(capsys, "--save-manifest", man, "eval", "--model", files / "h.json",
                         "--formula", files / "f.txt", "--eps", "1/50")
    data = json.loads(man.read_text())
    assert data["command"] == "eval" and data["result"] == first
    assert set(data["inputs"]) == {str(files / "h.json"), str(files / "f.txt")}
    code, out, err = run(capsys, "--manifest", man)
    assert code == 0 and out["reproduced"] and out["result"] == first


def test_workers_do_not_change_reports(files, capsys):
    args = ["eval", "--model", files / "h.json", "--formula", files / "f.txt", "--eps", "1/50"]
    _, a, _ = run(capsys, "--workers", 1, *args)
    _, b, _ = run(capsys, "--workers", 8, *args)
    assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)
