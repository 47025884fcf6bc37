"""Command-line entry point.

Reports go to stdout as JSON with exact rationals as strings; a short human
summary goes to stderr.  Exit codes: 0 success, 1 undecided or out of budget,
2 bad input, 3 internal invariant violation.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from fractions import Fraction

from . import __version__
from .automata import AutomatonError, AutomatonSpec, acc, exists_accepted, isolation_margin
from .degree import DegreeCostError, degree_fd_lower, degree_ndim
from .evaluator import BudgetExceeded, EvaluationError, eval_certified, eval_heuristic
from .formula import FormulaTypeError
from .groups import ApproxInstance, GroupError, check_approximation, gamma_from_json, henson_equiv, load_json
from .interp import (
    ReductionError,
    SentenceError,
    TranslationScheme,
    battery,
    parse_sentence,
    verify_reduction,
)
from .model import ModelError, all_structures, load_model, structure_from_json
from .numeric import CMatrix
from .numeric.field import FieldError
from .numeric.linalg import MatrixError, NumericBudgetError
from .parser import FormulaSyntaxError, parse, print_formula

EXIT_OK, EXIT_UNDECIDED, EXIT_INPUT, EXIT_INTERNAL = 0, 1, 2, 3

INPUT_ERRORS = (FormulaSyntaxError, FormulaTypeError, ModelError, AutomatonError, GroupError,
                SentenceError, MatrixError, FieldError, DegreeCostError, OSError, ValueError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _rational(text: str) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a rational: {text!r}") from None


def _read(path: str) -> str:
    with open(path, encoding="utf-8") as fh:
        return fh.read()


def _formula_text(path: str) -> str:
    lines = [ln.split("#", 1)[0] for ln in _read(path).splitlines()]
    return "\n".join(lines)


def _json_file(path: str):
    try:
        return json.loads(_read(path))
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path} is not valid JSON: {exc}") from exc


def _matrix_file(path: str) -> CMatrix:
    data = _json_file(path)
    if isinstance(data, dict):
        data = data.get("matrix", data.get("U1"))
    return CMatrix.parse(data)


# ---------------------------------------------------------------------------
# subcommands; each returns (exit code, payload, summary)


def cmd_parse(a):
    f = parse(_formula_text(a.formula))
    text = print_formula(f)
    rng = f.range
    return EXIT_OK, {"valid": True, "formula": text, "range": [str(rng.lo), str(rng.hi)]}, f"ok: {text}"


def cmd_eval(a):
    model = load_model(a.model)
    f = parse(_formula_text(a.formula))
    if a.mode == "certified":
        res = eval_certified(f, model, a.eps, budget=a.budget, workers=a.workers)
    else:
        res = eval_heuristic(f, model, budget=a.budget)
    out = res.to_json()
    return EXIT_OK, out, f"{a.mode}: [{out['lo_float']:.6g}, {out['hi_float']:.6g}]"


def cmd_degree(a):
    f = parse(_formula_text(a.formula))
    if a.mode == "lower-profile":
        if a.maxdim is None:
            raise ValueError("--maxdim is required for the lower profile")
        prof = degree_fd_lower(f, a.maxdim, a.eps, workers=a.workers)
        out = {"profile": [{"dim": n, "lower": str(v), "lower_float": float(v)} for n, v in prof],
               "kind": "lower bounds only"}
        return EXIT_OK, out, "profile: " + ", ".join(f"N={n}: {float(v):.4g}" for n, v in prof)
    if a.dim is None:
        raise ValueError("--dim is required in certified mode")
    res = degree_ndim(f, a.dim, a.ops, a.eps, workers=a.workers)
    out = res.to_json()
    code = EXIT_OK if res.success else EXIT_UNDECIDED
    return code, out, f"degree in [{out['lo_float']:.6g}, {out['hi_float']:.6g}]" + ("" if res.success else " (not converged)")


def _word(text: str | None):
    if text is None or not text.strip():
        return ()
    return tuple(int(x) for x in text.split(","))


def cmd_automaton(a):
    spec = AutomatonSpec.from_bits(load_model(a.model), a.proj, a.lam)
    if a.mode == "acc":
        v = acc(spec, _word(a.word))
        out = {"word": list(_word(a.word)), "acc": v.encode(), "acc_text": str(v), "acc_decimal": float(v),
               "accepted": (v - spec.threshold).sign() > 0}
        return EXIT_OK, out, f"ACC = {v} ~ {float(v):.6g}"
    if a.maxlen is None:
        raise ValueError("--maxlen is required for search and margin")
    if a.mode == "search":
        r = exists_accepted(spec, a.maxlen)
        msg = "no accepted word" if r.word is None else f"accepted word {list(r.word)}"
        return EXIT_OK, r.to_json(), f"{msg} (lengths <= {a.maxlen})"
    m = isolation_margin(spec, a.maxlen)
    return EXIT_OK, m.to_json(), f"margin {m.margin} ~ {float(m.margin):.6g} at {list(m.word)} (lengths <= {a.maxlen})"


def cmd_mfcheck(a):
    inst = ApproxInstance.from_json(_json_file(a.instance))
    gamma = gamma_from_json(_json_file(a.gamma))
    rep = check_approximation(inst, gamma, a.eps, a.prec)
    counts = {v: sum(c.verdict == v for c in rep.conditions) for v in ("pass", "fail", "undecided")}
    code = EXIT_UNDECIDED if rep.verdict == "undecided" else EXIT_OK
    return code, rep.to_json(), f"{rep.verdict}: " + ", ".join(f"{k} {n}" for k, n in counts.items())


def cmd_eqcheck(a):
    r = henson_equiv(_matrix_file(a.a), _matrix_file(a.b), a.eps)
    code = EXIT_UNDECIDED if r.verdict == "undecided" else EXIT_OK
    return code, r.to_json(), f"{r.verdict} ({r.reason})"


def cmd_interpret(a):
    scheme = TranslationScheme(a.scheme)
    if a.battery:
        from .interp import Interpreter

        sents = battery()
        structures = all_structures(a.max_size)
        rows, failures = [], 0
        for s in structures:
            it = Interpreter(s, scheme)
            for rho in sents:
                chk = it.check(rho, a.tol)
                ok = chk.agree and chk.dichotomy
                failures += not ok
                rows.append({"structure": s.to_json(), "sentence": str(rho), "fo_truth": chk.truth,
                             "lo": str(chk.result.lo), "hi": str(chk.result.hi), "pass": ok})
        out = {"scheme": a.scheme, "pairs": len(rows), "failures": failures, "table": rows}
        return (EXIT_OK if failures == 0 else EXIT_UNDECIDED), out, f"{len(rows)} pairs, {failures} failures"
    if a.structure is None or a.sentence is None:
        raise ValueError("--structure and --sentence are required without --battery")
    s = structure_from_json(_json_file(a.structure))
    rho = parse_sentence(_formula_text(a.sentence))
    chk = verify_reduction(s, rho, scheme, a.tol)
    code = EXIT_OK if chk.agree and chk.dichotomy else EXIT_UNDECIDED
    return code, chk.to_json(), f"fo truth {chk.truth}, agreement {chk.agree}"


COMMANDS = {
    "parse": cmd_parse,
    "eval": cmd_eval,
    "degree": cmd_degree,
    "automaton": cmd_automaton,
    "mfcheck": cmd_mfcheck,
    "eqcheck": cmd_eqcheck,
    "interpret": cmd_interpret,
}
FILE_FLAGS = ("model", "formula", "instance", "gamma", "a", "b", "structure", "sentence")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="dynhilbert", description="Continuous logic of Hilbert spaces with unitaries.")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("--manifest", help="replay the run recorded in this manifest")
    p.add_argument("--save-manifest", help="write a run manifest to this file")
    p.add_argument("--workers", type=int, default=1)
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    s = sub.add_parser("parse", help="check and pretty-print a formula file")
    s.add_argument("--formula", required=True)

    s = sub.add_parser("eval", help="evaluate a sentence in a model")
    s.add_argument("--model", required=True)
    s.add_argument("--formula", required=True)
    s.add_argument("--eps", type=_rational, default=Fraction(1, 100))
    s.add_argument("--mode", choices=("certified", "heuristic"), default="certified")
    s.add_argument("--budget", type=int)

    s = sub.add_parser("degree", help="degree of truth over N-dimensional models")
    s.add_argument("--formula", required=True)
    s.add_argument("--dim", type=int)
    s.add_argument("--ops", type=int, default=1)
    s.add_argument("--eps", type=_rational, default=Fraction(1, 20))
    s.add_argument("--mode", choices=("certified", "lower-profile"), default="certified")
    s.add_argument("--maxdim", type=int)

    s = sub.add_parser("automaton", help="quantum automaton acceptance, search and margins")
    s.add_argument("--model", required=True)
    s.add_argument("--proj", required=True, help="diagonal of the final projection, e.g. 01")
    s.add_argument("--lambda", dest="lam", type=_rational, default=Fraction(0))
    s.add_argument("--mode", choices=("acc", "search", "margin"), default="acc")
    s.add_argument("--word", help="comma-separated letters")
    s.add_argument("--maxlen", type=int)

    s = sub.add_parser("mfcheck", help="check a metric approximation of a finite set of group elements")
    s.add_argument("--instance", required=True)
    s.add_argument("--gamma", required=True)
    s.add_argument("--eps", type=_rational, required=True)
    s.add_argument("--prec", type=_rational, default=Fraction(1, 10**6))

    s = sub.add_parser("eqcheck", help="elementary equivalence of two unitaries")
    s.add_argument("--a", required=True)
    s.add_argument("--b", required=True)
    s.add_argument("--eps", type=_rational, default=Fraction(1, 100))

    s = sub.add_parser("interpret", help="check the translation of first-order sentences")
    s.add_argument("--structure")
    s.add_argument("--sentence")
    s.add_argument("--scheme", choices=("constants", "dynamical"), default="constants")
    s.add_argument("--tol", type=_rational)
    s.add_argument("--battery", action="store_true")
    s.add_argument("--max-size", type=int, default=3)
    return p


def _digest(path: str) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def _run(argv: list[str]) -> tuple[int, dict | None, str, argparse.Namespace | None]:
    p = build_parser()
    try:
        a = p.parse_args(argv)
    except UsageError as exc:
        return EXIT_INPUT, None, f"usage error: {exc}", None
    if a.manifest:
        return _replay(a.manifest)
    if not a.command:
        p.print_usage(sys.stderr)
        return EXIT_INPUT, None, "no command given", a
    try:
        code, payload, summary = COMMANDS[a.command](a)
    except (BudgetExceeded, NumericBudgetError) as exc:
        return EXIT_UNDECIDED, {"error": "budget", "message": str(exc)}, f"budget exhausted: {exc}", a
    except ReductionError as exc:
        return EXIT_UNDECIDED, {"error": "declined", "message": str(exc)}, str(exc), a
    except INPUT_ERRORS as exc:
        return EXIT_INPUT, {"error": "input", "message": str(exc)}, f"input error: {exc}", a
    except (EvaluationError, ArithmeticError, AssertionError) as exc:
        return EXIT_INTERNAL, {"error": "internal", "message": str(exc)}, f"internal error: {exc}", a
    return code, payload, summary, a


def _replay(path: str):
    try:
        man = _json_file(path)
        argv = list(man["argv"])
    except (OSError, ValueError, KeyError, TypeError) as exc:
        return EXIT_INPUT, {"error": "input", "message": f"bad manifest: {exc}"}, f"bad manifest: {exc}", None
    stale = [f for f, d in man.get("inputs", {}).items() if not _exists_with(f, d)]
    code, payload, summary, a = _run(argv)
    same = payload == man.get("result")
    out = {"replayed": argv, "reproduced": same, "stale_inputs": stale, "result": payload}
    if not same and code == EXIT_OK:
        code = EXIT_INTERNAL
    return code, out, f"replay: {'reproduced' if same else 'DIFFERENT'}; {summary}", a


def _exists_with(path: str, digest: str) -> bool:
    try:
        return _digest(path) == digest
    except OSError:
        return False


def _save_manifest(path: str, argv: list[str], a: argparse.Namespace, code: int, payload, elapsed: float):
    clean = []
    skip = False
    for tok in argv:
        if skip:
            skip = False
            continue
        if tok == "--save-manifest":
            skip = True
            continue
        if tok.startswith("--save-manifest="):
            continue
        clean.append(tok)
    flags = {k: (str(v) if isinstance(v, Fraction) else v) for k, v in sorted(vars(a).items())
             if k not in ("manifest", "save_manifest")}
    inputs = {}
    for name in FILE_FLAGS:
        path_in = flags.get(name)
        if isinstance(path_in, str):
            try:
                inputs[path_in] = _digest(path_in)
            except OSError:
                pass
    man = {"command": a.command, "argv": clean, "flags": flags, "inputs": inputs, "version": __version__,
           "elapsed_seconds": round(elapsed, 3), "exit_code": code, "result": payload}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(man, fh, indent=2, sort_keys=True)
        fh.write("\n")


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    t0 = time.perf_counter()
    code, payload, summary, a = _run(argv)
    if payload is not None:
        sys.stdout.write(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    print(summary, file=sys.stderr)
    if a is not None and a.save_manifest and not a.manifest:
        _save_manifest(a.save_manifest, argv, a, code, payload, time.perf_counter() - t0)
    return code


if __name__ == "__main__":
    sys.exit(main())
