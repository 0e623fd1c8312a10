"""Certificate checkers that run the verification procedures step by step.

Each checker always emits its full list of steps, in order, so reports are
comparable across candidates; a step that cannot be carried out because an
earlier one failed is recorded as FAIL with a diagnostic.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping

from .model import (
    InstanceError,
    Mode,
    MultilevelInstance,
    check_assignment,
    evaluate,
    format_rational,
    sensitive,
)
from .reformulate import (
    build_adversarial,
    build_alt,
    freeze_upper,
)
from .subsolver import (
    Hierarchy,
    OptResult,
    OracleCapExceeded,
    UnsupportedSubproblem,
    solve_subproblem,
)


class Verdict(str, enum.Enum):
    PASS = "PASS"
    FAIL = "FAIL"


class VerifyMode(str, enum.Enum):
    NORBIP = "NORBIP"
    NOMIMLP = "NOMIMLP"
    GNORMP = "GNORMP"


NORBIP_STEPS = (
    "1. Compute the upper-level objective value and compare it with the bound",
    "2. Verify that upper-level constraints are satisfied",
    "3. Verify that lower-level constraints are satisfied",
    "4. Compute the lower-level optimum value and check optimality of v",
    "5. Compute the worst case",
    "6. Verify near-optimal robustness",
)

NOMIMLP_STEPS = (
    "1. Compute the objective value and compare it with the bound",
    "2. Verify variable integrality",
    "3. Solve L1 parameterized by x_U and verify optimality of (v_1, ..., v_s)",
    "4. Solve the adversarial problems",
    "5. Verify the upper-level constraints at the adversarial solutions",
)

GNORMP_STEPS = (
    "1. Compute the top-level objective value and compare it with the bound",
    "2. Verify feasibility of (x_U, v) for the constraints at all levels",
    "3. Verify optimality of v for L parameterized by x_U",
    "4. Verify optimality of x_(i) for the near-optimal robust problem of each intermediate level",
    "5. Compute the worst case for each top-level constraint",
    "6. Verify the top-level constraints at the worst cases",
)


@dataclass
class Step:
    label: str
    verdict: Verdict
    evidence: object = None


@dataclass
class VerificationReport:
    mode: VerifyMode
    steps: list[Step] = field(default_factory=list)

    @property
    def overall(self) -> str:
        return "ACCEPT" if all(s.verdict is Verdict.PASS for s in self.steps) else "REJECT"

    @property
    def accepted(self) -> bool:
        return self.overall == "ACCEPT"

    def failed_steps(self) -> list[int]:
        return [i + 1 for i, s in enumerate(self.steps) if s.verdict is Verdict.FAIL]

    def to_json(self) -> dict:
        return {
            "mode": self.mode.value,
            "overall": self.overall,
            "steps": [
                {"label": s.label, "verdict": s.verdict.value, "evidence": to_jsonable(s.evidence)}
                for s in self.steps
            ],
        }


def to_jsonable(obj):
    if obj is None or isinstance(obj, (str, bool, int)):
        return obj
    if isinstance(obj, Fraction):
        return format_rational(obj)
    if isinstance(obj, (OptResult, VerificationReport, WorstCase)):
        return obj.to_json()
    if isinstance(obj, Mapping):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, enum.Enum):
        return obj.value
    raise TypeError(f"cannot serialize {type(obj).__name__}")


@dataclass(frozen=True)
class WorstCase:
    """Outcome of one adversary; ``result`` is None for insensitive constraints."""

    level: int
    constraint: str
    result: OptResult | None
    error: str | None = None

    @property
    def insensitive(self) -> bool:
        return self.result is None and self.error is None

    @property
    def max_value(self) -> Fraction | None:
        """Largest constraint value over the near-optimal set."""
        if self.result is None or not self.result.optimal:
            return None
        return -self.result.value

    def to_json(self) -> dict:
        out = {"level": self.level, "constraint": self.constraint}
        if self.error is not None:
            out["error"] = self.error
        elif self.result is None:
            out["adversary"] = "insensitive"
        else:
            out["adversary"] = self.result.to_json()
            if self.result.optimal:
                out["worst_value"] = format_rational(self.max_value)
        return out


def worst_cases(inst: MultilevelInstance, x: Mapping[str, Fraction], fstar, levels,
                cap: int | None = None) -> list[WorstCase]:
    """Solve every adversary of the given protected levels."""
    d = inst.nos.deviating_level
    out = []
    targets = [(p, con) for p in levels for con in inst.levels[p].constraints]
    for p, con in targets:
        if not sensitive(inst, con, d):
            out.append(WorstCase(p, con.name, None))
            continue
        try:
            res = solve_subproblem(build_adversarial(inst, p, con.name, x, fstar), cap)
        except (OracleCapExceeded, UnsupportedSubproblem) as exc:
            out.append(WorstCase(p, con.name, None, str(exc)))
            continue
        out.append(WorstCase(p, con.name, res))
    return out


# ---------------------------------------------------------------------------
# shared step builders

def _prepare(inst: MultilevelInstance, candidate: Mapping) -> dict:
    check_assignment(inst, candidate)
    return {k: Fraction(v) for k, v in candidate.items()}


def _bound_step(label, value: Fraction, bound) -> Step:
    if bound is None:
        return Step(label, Verdict.PASS, {"objective": value, "bound": "none", "vacuous": True})
    ok = value <= bound
    return Step(label, Verdict.PASS if ok else Verdict.FAIL, {"objective": value, "bound": Fraction(bound)})


def _feasibility_step(label, inst, a, levels, check_domain=True) -> Step:
    values, violations = {}, []
    for lvl in levels:
        for v in inst.variables_at(lvl):
            if check_domain and not v.contains(a[v.name]):
                violations.append(f"domain of {v.name}")
        for con in inst.levels[lvl].constraints:
            val = evaluate(con.expr, a)
            values[con.name] = val
            if val > 0:
                violations.append(con.name)
    ev = {"constraint_values": values, "violations": violations}
    return Step(label, Verdict.FAIL if violations else Verdict.PASS, ev)


def _optimality_step(label, inst, a, level, oracle, cap, membership=False):
    """Returns ``(step, optimum or None)``."""
    fixed = {v.name: a[v.name] for v in inst.variables_above(level)}
    try:
        res = oracle.solve(fixed, level)
    except (OracleCapExceeded, UnsupportedSubproblem) as exc:
        return Step(label, Verdict.FAIL, {"error": str(exc)}), None
    cand = evaluate(inst.levels[level].objective, a)
    ev = {"optimum": res, "candidate_value": cand}
    if not res.optimal:
        return Step(label, Verdict.FAIL, ev), None
    ok = cand == res.value
    if ok and membership:
        ok = oracle.contains(a, level)
        ev["in_reaction_set"] = ok
    return Step(label, Verdict.PASS if ok else Verdict.FAIL, ev), res.value


def _adversary_steps(labels, inst, a, fstar, levels, cap) -> list[Step]:
    """Worst-case computation and the robustness check that follows it."""
    d = inst.nos.deviating_level
    if fstar is None:
        return [Step(labels[0], Verdict.FAIL, {"error": "no optimum for the deviating level"}),
                Step(labels[1], Verdict.FAIL, {"error": "worst cases unavailable"})]
    x = {v.name: a[v.name] for v in inst.variables_above(d)}
    cases = worst_cases(inst, x, fstar, levels, cap)
    solved = all(c.insensitive or (c.result is not None and c.result.optimal) for c in cases)
    step5 = Step(labels[0], Verdict.PASS if solved else Verdict.FAIL, cases)
    checks, ok = [], solved
    for c in cases:
        if c.insensitive:
            g = evaluate(inst.levels[c.level].constraint(c.constraint).expr, a)
            where = "candidate"
        elif c.max_value is not None:
            g = c.max_value
            where = "worst case"
        else:
            ok = False
            checks.append({"level": c.level, "constraint": c.constraint, "satisfied": False})
            continue
        sat = g <= 0
        ok = ok and sat
        checks.append({"level": c.level, "constraint": c.constraint, "at": where,
                       "value": g, "satisfied": sat})
    return [step5, Step(labels[1], Verdict.PASS if ok else Verdict.FAIL, checks)]


# ---------------------------------------------------------------------------
# the three checkers

def _require(inst, cond, what):
    if not cond:
        raise InstanceError(f"instance is not a {what} configuration")


def verify_norbip(inst: MultilevelInstance, candidate: Mapping, bound=None,
                  cap: int | None = None) -> VerificationReport:
    """Six-step check of a near-optimal robust bilevel solution ``(x, v)``."""
    nos = inst.nos
    _require(inst, nos is not None and inst.depth == 2 and nos.deviating_level == 1
             and nos.protected_levels == {0}, "near-optimal robust bilevel")
    a = _prepare(inst, candidate)
    oracle = Hierarchy(inst, cap)
    report = VerificationReport(VerifyMode.NORBIP)
    report.steps.append(_bound_step(NORBIP_STEPS[0], evaluate(inst.levels[0].objective, a), bound))
    report.steps.append(_feasibility_step(NORBIP_STEPS[1], inst, a, [0]))
    report.steps.append(_feasibility_step(NORBIP_STEPS[2], inst, a, [1]))
    step4, fstar = _optimality_step(NORBIP_STEPS[3], inst, a, 1, oracle, cap)
    report.steps.append(step4)
    report.steps.extend(_adversary_steps(NORBIP_STEPS[4:6], inst, a, fstar, [0], cap))
    return report


def verify_nomimlp(inst: MultilevelInstance, candidate: Mapping, bound=None,
                   cap: int | None = None) -> VerificationReport:
    """Five-step check where the first lower level deviates and its tail responds."""
    nos = inst.nos
    _require(inst, nos is not None and inst.depth >= 3 and nos.deviating_level == 1
             and nos.protected_levels == {0}, "NOMIMLP")
    a = _prepare(inst, candidate)
    oracle = Hierarchy(inst, cap)
    report = VerificationReport(VerifyMode.NOMIMLP)
    report.steps.append(_bound_step(NOMIMLP_STEPS[0], evaluate(inst.levels[0].objective, a), bound))
    bad = [v.name for v in inst.variables if not v.contains(a[v.name])]
    report.steps.append(Step(NOMIMLP_STEPS[1], Verdict.FAIL if bad else Verdict.PASS,
                             {"violations": bad}))
    if bad:
        step3 = Step(NOMIMLP_STEPS[2], Verdict.FAIL, {"error": "candidate outside the variable domains"})
        x = {v.name: a[v.name] for v in inst.variables_above(1)}
        try:
            res = oracle.solve(x, 1)
            fstar = res.value if res.optimal else None
        except (OracleCapExceeded, UnsupportedSubproblem):
            fstar = None
    else:
        step3, fstar = _optimality_step(NOMIMLP_STEPS[2], inst, a, 1, oracle, cap, membership=True)
    report.steps.append(step3)
    report.steps.extend(_adversary_steps(NOMIMLP_STEPS[3:5], inst, a, fstar, [0], cap))
    return report


def verify_gnormp(inst: MultilevelInstance, candidate: Mapping, bound=None,
                  cap: int | None = None, _offset: int = 0) -> VerificationReport:
    """Six-step check for every upper level protecting itself against the bottom.

    Step 4 re-solves the near-optimal robust problem of the next level with
    the top decision frozen and verifies the candidate against it
    recursively, so the evidence nests one report per intermediate level.
    """
    nos = inst.nos
    s = inst.depth - 1
    _require(inst, nos is not None and nos.deviating_level == s
             and nos.protected_levels == set(range(s)), "GNORMP")
    a = _prepare(inst, candidate)
    oracle = Hierarchy(inst, cap)
    report = VerificationReport(VerifyMode.GNORMP)
    report.steps.append(_bound_step(GNORMP_STEPS[0], evaluate(inst.levels[0].objective, a), bound))
    report.steps.append(_feasibility_step(GNORMP_STEPS[1], inst, a, range(inst.depth)))
    step3, fstar = _optimality_step(GNORMP_STEPS[2], inst, a, s, oracle, cap)
    report.steps.append(step3)
    report.steps.append(_intermediate_step(inst, a, cap, _offset))
    report.steps.extend(_adversary_steps(GNORMP_STEPS[4:6], inst, a, fstar, [0], cap))
    return report


def _intermediate_step(inst, a, cap, offset) -> Step:
    label = GNORMP_STEPS[3]
    if inst.depth == 2:
        return Step(label, Verdict.PASS, {"intermediate_levels": []})
    from .solve import solve_gnormp

    top = {v.name: a[v.name] for v in inst.variables_at(0)}
    sub = freeze_upper(inst, top, 1)
    ev = {"level": offset + 1, "name": f"U{offset + 2}",
          "candidate_value": evaluate(inst.levels[1].objective, a)}
    try:
        opt = solve_gnormp(sub, cap=cap)
    except (OracleCapExceeded, UnsupportedSubproblem) as exc:
        ev["error"] = str(exc)
        return Step(label, Verdict.FAIL, ev)
    ev["optimum"] = opt
    if not opt.optimal:
        return Step(label, Verdict.FAIL, ev)
    rest = {v.name: a[v.name] for v in sub.variables}
    nested = verify_gnormp(sub, rest, bound=opt.value, cap=cap, _offset=offset + 1)
    ev["report"] = nested
    return Step(label, Verdict.PASS if nested.accepted else Verdict.FAIL, ev)


def verify(inst: MultilevelInstance, candidate: Mapping, bound=None,
           cap: int | None = None) -> VerificationReport:
    """Pick the checker matching the instance's near-optimality configuration."""
    from .solve import configuration

    if inst.nos is not None and inst.nos.mode is Mode.CONSTRAINTS_AND_OBJECTIVE:
        inst = build_alt(inst)
    kind = configuration(inst)
    if kind == "norbip":
        return verify_norbip(inst, candidate, bound, cap)
    if kind == "nomimlp":
        return verify_nomimlp(inst, candidate, bound, cap)
    if kind == "gnormp":
        return verify_gnormp(inst, candidate, bound, cap)
    raise InstanceError("verification requires a near_optimality section")
