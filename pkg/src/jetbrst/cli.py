"""Command line driver: ``jetbrst check`` and ``jetbrst run``.

Exit codes: 0 ok, 1 verification failure, 2 input error, 3 non-termination.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path

from .builtins import build_toy_model, build_yang_mills
from .coordsplit import validate_split
from .covariant import check_consistency, classify_w, decompose_tilde, extract_algebra
from .errors import JetBrstError, ModelError, SplitError, TruncationOverflow, UnsupportedAlgebra
from .homotopy import run_algorithm, verify_result
from .jetspace import JetModel, check_nilpotency
from .modeldsl import check_grading_consistency, load_model
from .superalgebra import Expr, degree_in, format_coeff

OUTPUT_DIR_ENV = "JETBRST_OUTPUT_DIR"
REPORT_FORMAT = "jetbrst-report v1"

EXIT_OK, EXIT_VERIFY, EXIT_INPUT, EXIT_NOT_TERMINATED = 0, 1, 2, 3


class InputError(Exception):
    pass


@dataclass
class RunConfig:
    command: str
    model_path: str | None = None
    builtin: str | None = None
    mode: str | None = None
    max_iter: int = 10
    max_order: int | None = None
    x_as_doublet: bool = False
    fmt: str = "text"
    output_dir: str | None = None
    verbose: bool = False
    seed: int = 0
    count: int = 10000

    @property
    def source(self) -> str:
        return self.model_path if self.model_path is not None else f"builtin:{self.builtin}"


# ----------------------------------------------------------------------
# input
# ----------------------------------------------------------------------

def parse_builtin(spec: str, mode: str | None, x_as_doublet: bool, max_order: int | None) -> JetModel:
    """``ym:<algebra>:<n>:<K>`` or ``toy``."""
    if spec == "toy":
        if x_as_doublet:
            raise InputError("--x-as-doublet only applies to Yang-Mills models")
        return build_toy_model()
    parts = spec.split(":")
    if len(parts) != 4 or parts[0] != "ym":
        raise InputError(f"builtin must look like ym:<algebra>:<n>:<K> or toy, got {spec!r}")
    try:
        n, K = int(parts[2]), int(parts[3])
    except ValueError:
        raise InputError(f"n and K must be integers in {spec!r}") from None
    if mode is None:
        mode = "stilde" if x_as_doublet else "s"
    if x_as_doublet and mode != "stilde":
        raise InputError("--x-as-doublet needs mode stilde, where (x, dx) form a doublet")
    try:
        return build_yang_mills(n, parts[1], K, mode, max_order=max_order, x_as_doublet=x_as_doublet)
    except (ValueError, UnsupportedAlgebra) as exc:
        raise InputError(str(exc)) from None


def load_input(cfg: RunConfig) -> JetModel:
    if (cfg.model_path is None) == (cfg.builtin is None):
        raise InputError("give exactly one of a model file or --builtin")
    if cfg.builtin is not None:
        return parse_builtin(cfg.builtin, cfg.mode, cfg.x_as_doublet, cfg.max_order)
    path = Path(cfg.model_path)
    try:
        model = load_model(path)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror or exc}") from None
    if cfg.x_as_doublet:
        if model.split != "ym":
            raise InputError("--x-as-doublet needs a model with 'split ym'")
        model = model.copy(disregard=tuple(d for d in model.disregard if d != "x"),
                           options={**model.options, "x_as_doublet": True}, mode="stilde")
    if cfg.max_order is not None:
        model = model.copy(max_order=cfg.max_order)
    if cfg.mode is not None and cfg.mode != model.mode:
        model = model.with_mode(cfg.mode)
    return model


# ----------------------------------------------------------------------
# serialization
# ----------------------------------------------------------------------

def expr_terms(e: Expr) -> list:
    """Canonical term list: [[coefficient, [symbol, ...]], ...] in monomial order."""
    return [[format_coeff(c), [str(s) for s in mono]] for mono, c in e.sorted_terms()]


def _sym_map(d: dict) -> dict:
    return {str(k): expr_terms(v) for k, v in sorted(d.items())}


def model_payload(model: JetModel) -> dict:
    return {
        "name": model.name,
        "base_dim": model.base_dim,
        "metric": list(model.metric),
        "algebra": model.lie.name,
        "jet_order": model.jet_order,
        "max_order": model.max_order,
        "mode": model.mode,
        "disregard": list(model.disregard),
        "families": [
            {"name": f.name, "slots": list(f.slots), "parity": f.parity, "ghost": f.ghost,
             "formdeg": f.formdeg, "dimension": format_coeff(f.dimension), "kind": f.kind}
            for f in model.families.values()
        ],
    }


def growth_diagnosis(trace, cs) -> list:
    """Per step: highest (u,v)-degree, u-power and w derivative order seen in Y."""
    rows = []
    for rec in trace:
        u_pow = w_ord = 0
        for Y in rec.Y.values():
            for mono in Y.terms:
                u_pow = max(u_pow, degree_in(mono, lambda s: cs.kind.get(s) == "u"))
                w_ord = max([w_ord] + [len(s.deriv) for s in mono if cs.kind.get(s) == "w"])
        rows.append({"step": rec.m + 1, "nonzero": len(rec.Y), "max_u_power": u_pow,
                     "max_w_derivative_order": w_ord})
    return rows


def result_payload(model, cs, result, verification, covariant, tilde) -> dict:
    b = result.bound
    out = {
        "terminated": result.terminated,
        "iterations_used": result.iterations_used,
        "stop_reason": result.stop_reason,
        "w_truncated_above_degree": result.w_degree,
        "bound": {
            "bounded": b.bounded,
            "violated": b.violated,
            "delta": None if b.delta is None else format_coeff(b.delta),
            "B": format_coeff(b.B),
            "per_w": {str(k): v for k, v in sorted(b.per_w.items())},
        },
        "w": [
            {"symbol": str(I), "new": expr_terms(result.w_new[I]),
             "original": expr_terms(result.w_original[I]), "r": expr_terms(result.r[I]),
             "r_final": expr_terms(result.r_final.get(I, Expr())),
             "last_nonzero_Y": result.last_nonzero.get(I, 0)}
            for I in sorted(result.targets)
        ],
        "auxiliary": [
            {"symbol": str(J), "new": expr_terms(result.auxiliary[J]),
             "original": expr_terms(result.aux_original[J]), "r": expr_terms(result.r_aux[J])}
            for J in sorted(result.auxiliary)
        ],
        "trace": [
            {"step": rec.m + 1, "h": _sym_map(rec.h), "Y": _sym_map(rec.Y)} for rec in result.trace
        ],
        "residual": _sym_map(result.residual),
        "growth": growth_diagnosis(result.trace, cs),
    }
    if verification is not None:
        out["verification"] = verification
    if covariant is not None:
        out["covariant"] = covariant
    if tilde is not None:
        out["tilde"] = tilde
    return out


def covariant_payload(result):
    try:
        cl = classify_w(result)
        alg = extract_algebra(result, cl)
    except JetBrstError as exc:
        return {"error": f"{type(exc).__name__}: {exc}"}, None
    rep = check_consistency(alg)
    payload = {
        "C": [str(s) for s in cl.C],
        "T": [str(s) for s in cl.T],
        "F": [{"L": str(L), "K": str(K), "M": str(M), "value": expr_terms(v)}
              for (L, K, M), v in sorted(alg.F.items())],
        "R": [{"M": str(M), "A": str(A), "value": expr_terms(v)} for (M, A), v in sorted(alg.R.items())],
        "consistency": {"problems": list(rep.problems), "skipped": len(rep.skipped)},
    }
    return payload, rep


def tilde_payload(result, model) -> dict:
    dec = decompose_tilde(result, model)
    return {
        "ghosts": [
            {"symbol": str(g.symbol), "A": {str(mu): expr_terms(a) for mu, a in sorted(g.A.items())},
             "C": expr_terms(g.C),
             "antifield_terms": {str(k): expr_terms(v) for k, v in g.antifield_terms.items()}}
            for g in dec.ghosts
        ],
        "tensors": [
            {"symbol": str(t.symbol), "T": expr_terms(t.T),
             "antifield_terms": {str(k): expr_terms(v) for k, v in t.antifield_terms.items()}}
            for t in dec.tensors
        ],
        "on_shell_relations": [
            {"T": str(A), "mu": mu, "residual": expr_terms(r), "vanishes_identically": not r}
            for A, mu, r in dec.relations
        ],
    }


def dumps(payload: dict) -> str:
    return json.dumps(payload, sort_keys=True, indent=2, ensure_ascii=True) + "\n"


# ----------------------------------------------------------------------
# text rendering
# ----------------------------------------------------------------------

def _join_terms(terms: list) -> str:
    out = ""
    for coeff, syms in terms:
        neg = coeff.startswith("-")
        mag = coeff[1:] if neg else coeff
        body = "*".join(syms)
        if not body:
            piece = mag
        elif mag == "1":
            piece = body
        else:
            piece = f"{mag}*{body}"
        if not out:
            out = ("-" if neg else "") + piece
        else:
            out += (" - " if neg else " + ") + piece
    return out or "0"


def render_text(payload: dict) -> str:
    lines = [f"{payload['command']}: {payload['input']}  status: {payload['status']}"]
    for msg in payload.get("messages", []):
        lines.append(f"  {msg}")
    checks = payload.get("checks")
    if checks:
        for name, probs in checks.items():
            lines.append(f"[{name}] {'ok' if not probs else f'{len(probs)} problem(s)'}")
            lines += [f"  {p}" for p in probs]
    res = payload.get("result")
    if res:
        b = res["bound"]
        lines.append(f"terminated: {res['terminated']} after {res['iterations_used']} iteration(s)"
                     f" ({res['stop_reason']})")
        lines.append("bound: " + (f"delta={b['delta']} B={b['B']}" if b["bounded"]
                                  else f"unbounded, {b['violated']}"))
        for w in res["w"]:
            lines.append(f"{w['symbol']}:")
            lines.append(f"  original: {_join_terms(w['original'])}")
            lines.append(f"  new:      {_join_terms(w['new'])}")
            lines.append(f"  r:        {_join_terms(w['r'])}")
        if res["residual"]:
            lines.append("residual:")
            lines += [f"  {k}: {_join_terms(v)}" for k, v in res["residual"].items()]
        for g in res["growth"]:
            lines.append(f"step {g['step']}: {g['nonzero']} nonzero Y, u-power <= {g['max_u_power']}, "
                         f"w derivative order <= {g['max_w_derivative_order']}")
        if "verification" in res:
            lines.append(f"[verification] {'ok' if not res['verification'] else 'FAILED'}")
            lines += [f"  {p}" for p in res["verification"]]
        cov = res.get("covariant")
        if cov:
            if "error" in cov:
                lines.append(f"[covariant] {cov['error']}")
            else:
                lines.append(f"[covariant] C = {', '.join(cov['C']) or 'none'}")
                for f in cov["F"]:
                    lines.append(f"  F[{f['L']}, {f['K']}; {f['M']}] = {_join_terms(f['value'])}")
                probs = cov["consistency"]["problems"]
                lines.append(f"[consistency] {'ok' if not probs else 'FAILED'}")
                lines += [f"  {p}" for p in probs]
        til = res.get("tilde")
        if til:
            for t in til["tensors"]:
                if t["antifield_terms"]:
                    lines.append(f"[tilde] {t['symbol']} antifield terms:")
                    for k, v in t["antifield_terms"].items():
                        lines.append(f"  antifield number {k}: {_join_terms(v)}")
    return "\n".join(lines) + "\n"


# ----------------------------------------------------------------------
# commands
# ----------------------------------------------------------------------

def cmd_check(cfg: RunConfig):
    model = load_input(cfg)
    mode = model.mode
    checks = {}
    checks["grading"] = check_grading_consistency(model, mode).lines()
    checks["nilpotency"] = check_nilpotency(model.differential(mode), model).lines()
    if model.split is not None:
        try:
            validate_split(model, mode=mode)
            checks["split"] = []
        except (SplitError, TruncationOverflow) as exc:
            checks["split"] = [f"{type(exc).__name__}: {exc}"]
    ok = not any(checks.values())
    payload = {"format": REPORT_FORMAT, "command": "check", "input": cfg.source,
               "config": {"mode": mode}, "model": model_payload(model), "checks": checks,
               "status": "ok" if ok else "failed"}
    return (EXIT_OK if ok else EXIT_VERIFY), payload


def cmd_run(cfg: RunConfig):
    model = load_input(cfg)
    mode = model.mode
    payload = {"format": REPORT_FORMAT, "command": "run", "input": cfg.source,
               "config": {"mode": mode, "max_iter": cfg.max_iter, "x_as_doublet": cfg.x_as_doublet},
               "model": model_payload(model), "messages": []}
    try:
        cs = validate_split(model, mode=mode)
    except (SplitError, TruncationOverflow, ValueError) as exc:
        payload.update(status="invalid-split", messages=[f"{type(exc).__name__}: {exc}"])
        return EXIT_VERIFY, payload
    try:
        result = run_algorithm(model, cs, max_iter=cfg.max_iter, raise_on_failure=False)
    except TruncationOverflow as exc:
        payload.update(status="order-cap", messages=[
            f"TruncationOverflow: {exc}",
            "the iteration needed jet coordinates beyond max_order before termination was decided"])
        return EXIT_NOT_TERMINATED, payload
    code = EXIT_OK
    verification = covariant = tilde = None
    if result.terminated:
        verification = verify_result(model, cs, result).lines()
        covariant, rep = covariant_payload(result)
        if mode == "stilde":
            tilde = tilde_payload(result, model)
        if verification or (rep is not None and not rep.ok):
            code = EXIT_VERIFY
        status = "ok" if code == EXIT_OK else "verification-failed"
    else:
        code = EXIT_NOT_TERMINATED
        status = "order-cap" if result.stop_reason == "order-cap" else "not-terminated"
        payload["messages"].append(f"NotTerminated ({result.stop_reason}): no termination after "
                                   f"{result.iterations_used} iteration(s); termination bound "
                                   f"{result.bound.describe()}")
        if result.message:
            payload["messages"].append(result.message)
        payload["messages"].append(f"w's below are settled up to (u,v)-degree {result.w_degree}; "
                                   f"residuals are the lowest nonvanishing defect components")
    payload["result"] = result_payload(model, cs, result, verification, covariant, tilde)
    payload["status"] = status
    return code, payload


def cmd_props(cfg: RunConfig):
    from .props import run_property_suite

    summary = run_property_suite(cfg.seed, cfg.count)
    failures = {k: v["failures"] for k, v in summary.items() if v["failures"]}
    payload = {"format": REPORT_FORMAT, "command": "props", "input": f"seed:{cfg.seed}",
               "config": {"seed": cfg.seed, "count": cfg.count},
               "checks": {k: [str(x) for x in v["examples"]] for k, v in summary.items()},
               "summary": {k: {"instances": v["instances"], "failures": v["failures"]}
                           for k, v in summary.items()},
               "status": "ok" if not failures else "failed"}
    return (EXIT_OK if not failures else EXIT_VERIFY), payload


COMMANDS = {"check": cmd_check, "run": cmd_run, "props": cmd_props}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="jetbrst", description="Doublet splits and w-construction for "
                                                            "BRST differentials on jet spaces.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("model", nargs="?", help="model file (jetbrst-model v1)")
        sp.add_argument("--builtin", help="ym:<algebra>:<n>:<K> (algebra su2 or abelian<k>) or toy")
        sp.add_argument("--mode", choices=("s", "stilde"))
        sp.add_argument("--max-order", type=int, help="hard cap on jet order")
        sp.add_argument("--x-as-doublet", action="store_true",
                        help="classify x as a u (stilde only) instead of disregarding it")
        sp.add_argument("--format", choices=("text", "json"), default="text")
        sp.add_argument("--output-dir", help=f"also write the report here (default ${OUTPUT_DIR_ENV})")
        sp.add_argument("-v", "--verbose", action="store_true")

    common(sub.add_parser("check", help="grading, nilpotency and split validation"))
    run = sub.add_parser("run", help="construct the w's and the covariant algebra")
    common(run)
    run.add_argument("--max-iter", type=int, default=10)
    props = sub.add_parser("props", help="seeded randomized algebraic property checks")
    props.add_argument("--seed", type=int, default=0)
    props.add_argument("--count", type=int, default=10000)
    props.add_argument("--format", choices=("text", "json"), default="text")
    props.add_argument("--output-dir")
    return p


def config_from_args(ns) -> RunConfig:
    return RunConfig(
        command=ns.command,
        model_path=getattr(ns, "model", None),
        builtin=getattr(ns, "builtin", None),
        mode=getattr(ns, "mode", None),
        max_iter=getattr(ns, "max_iter", 10),
        max_order=getattr(ns, "max_order", None),
        x_as_doublet=getattr(ns, "x_as_doublet", False),
        fmt=ns.format,
        output_dir=ns.output_dir or os.environ.get(OUTPUT_DIR_ENV) or None,
        verbose=getattr(ns, "verbose", False),
        seed=getattr(ns, "seed", 0),
        count=getattr(ns, "count", 10000),
    )


def _write_report(cfg: RunConfig, text: str, payload: dict):
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = payload.get("model", {}).get("name") or cfg.command
    stem = "".join(ch if ch.isalnum() or ch in "-_." else "_" for ch in stem)
    ext = "json" if cfg.fmt == "json" else "txt"
    (out / f"{stem}.{cfg.command}.{ext}").write_text(text, encoding="utf-8")


def main(argv=None) -> int:
    ns = build_parser().parse_args(argv)
    cfg = config_from_args(ns)
    try:
        code, payload = COMMANDS[cfg.command](cfg)
    except InputError as exc:
        print(f"jetbrst: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ModelError as exc:
        print(f"jetbrst: {cfg.source}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    text = dumps(payload) if cfg.fmt == "json" else render_text(payload)
    sys.stdout.write(text)
    if cfg.output_dir:
        _write_report(cfg, text, payload)
    return code


if __name__ == "__main__":
    sys.exit(main())
