"""Command-line front end.

Exit codes: 0 success or ACCEPT, 3 REJECT or INFEASIBLE, 1 input error,
2 oracle cap exceeded.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .model import (
    InstanceError,
    format_rational,
    instance_to_dict,
    load_instance,
    parse_rational,
    anticipation_graph,
)
from .reformulate import (
    build_alt,
    build_gnormp_adversaries,
    build_pessimistic,
    epigraph_form,
    subproblem_to_dict,
)
from .solve import (
    InternalConsistencyError,
    compare,
    delta_sweep,
    solve,
    solve_canonical,
)
from .subsolver import OracleCapExceeded, UnsupportedSubproblem, set_oracle_cap, solve_hierarchical
from .verify import verify

EXIT_OK, EXIT_INPUT, EXIT_CAP, EXIT_REJECT = 0, 1, 2, 3
VERBS = ("solve", "verify", "compare", "reformulate", "graph", "sweep")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="norobi", description="Exact near-optimal robust multilevel optimization.")
    p.add_argument("verb", choices=VERBS)
    p.add_argument("instance", help="instance JSON file")
    p.add_argument("--candidate", help="candidate assignment JSON (verify, reformulate)")
    p.add_argument("--bound", help="objective bound for verify, as a rational")
    p.add_argument("--deltas", help="comma-separated tolerances for sweep")
    p.add_argument("--oracle-cap", type=int, help="maximum points per enumeration")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for leader enumeration")
    p.add_argument("--emit-dir", help="directory receiving reformulated subproblems")
    p.add_argument("-o", "--output", help="write the result here instead of standard output")
    return p


def load_candidate(path, inst) -> dict:
    """Read ``{name: rational}``; integrality and bounds are left to the verifier."""
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise InstanceError(f"{path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise InstanceError(f"{path}: syntax error at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise InstanceError(f"{path}: expected an object mapping variable names to rationals")
    names = inst.names()
    for n in names:
        if n not in doc:
            raise InstanceError(f"{path}: missing variable {n}")
    for n in doc:
        if n not in inst.by_name:
            raise InstanceError(f"{path}: unknown variable {n}")
    return {n: parse_rational(doc[n], f"{path}: {n}") for n in names}


def _dump(obj, args) -> None:
    text = obj if isinstance(obj, str) else json.dumps(obj, indent=2) + "\n"
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _reformulate(inst, args) -> dict:
    out = {"instance": instance_to_dict(inst)}
    if inst.nos is None:
        return out
    out["pessimistic"] = instance_to_dict(build_pessimistic(inst))
    if inst.nos.protected_levels == {0}:
        out["norbip_alt"] = instance_to_dict(build_alt(inst))
    d = inst.nos.deviating_level
    if args.candidate:
        point = load_candidate(args.candidate, inst)
    else:
        res = solve_canonical(inst)
        point = res.witness if res.optimal else None
    if point is None:
        return out
    x = {v.name: point[v.name] for v in inst.variables_above(d)}
    out["epigraph"] = subproblem_to_dict(epigraph_form(inst.levels[d], inst, x))
    lower = solve_hierarchical(inst, x, d)
    if lower.optimal:
        for adv in build_gnormp_adversaries(inst, x, lower.value):
            out[f"adversary_{adv.level}_{adv.constraint}"] = subproblem_to_dict(adv.subproblem)
    return out


def _emit(docs: dict, directory) -> dict:
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    files = []
    for name, doc in docs.items():
        safe = "".join(ch if ch.isalnum() or ch in "-_" else "_" for ch in name)
        path = root / f"{safe}.json"
        path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
        files.append(str(path))
    return {"files": files}


def _execute(args) -> int:
    cap = args.oracle_cap
    if cap is None and os.environ.get("NOROBI_ORACLE_CAP"):
        try:
            cap = int(os.environ["NOROBI_ORACLE_CAP"])
        except ValueError:
            raise UsageError("NOROBI_ORACLE_CAP must be an integer") from None
    if cap is not None:
        if cap < 1:
            raise UsageError("--oracle-cap must be positive")
        set_oracle_cap(cap)
    if args.jobs < 1:
        raise UsageError("--jobs must be positive")
    if args.verb == "verify" and not args.candidate:
        raise UsageError("verify requires --candidate")
    if args.verb == "sweep" and not args.deltas:
        raise UsageError("sweep requires --deltas")

    inst = load_instance(args.instance)

    if args.verb == "solve":
        res = solve(inst, jobs=args.jobs)
        _dump(res.to_json(), args)
        return EXIT_OK if res.optimal else EXIT_REJECT
    if args.verb == "verify":
        cand = load_candidate(args.candidate, inst)
        bound = None if args.bound is None else parse_rational(args.bound, "--bound")
        report = verify(inst, cand, bound)
        _dump(report.to_json(), args)
        return EXIT_OK if report.accepted else EXIT_REJECT
    if args.verb == "compare":
        _dump(compare(inst, jobs=args.jobs).to_json(), args)
        return EXIT_OK
    if args.verb == "graph":
        _dump(anticipation_graph(inst).to_dot(), args)
        return EXIT_OK
    if args.verb == "sweep":
        deltas = [parse_rational(t, "--deltas") for t in args.deltas.split(",") if t.strip()]
        rows = delta_sweep(inst, deltas, jobs=args.jobs)
        _dump([[format_rational(d), r.to_json()] for d, r in rows], args)
        return EXIT_OK
    docs = _reformulate(inst, args)
    _dump(_emit(docs, args.emit_dir) if args.emit_dir else docs, args)
    return EXIT_OK


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return _execute(args)
    except UsageError as exc:
        print(f"norobi: usage error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (InstanceError, UnsupportedSubproblem, InternalConsistencyError) as exc:
        print(f"norobi: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OracleCapExceeded as exc:
        print(f"norobi: {exc}", file=sys.stderr)
        return EXIT_CAP


def main() -> None:
    sys.exit(run())
