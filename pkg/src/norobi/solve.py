"""Exact solvers by leader enumeration, variant comparison and tolerance sweeps."""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from fractions import Fraction

from .model import (
    Constraint,
    InstanceError,
    Kind,
    LinearExpr,
    Mode,
    MultilevelInstance,
    format_rational,
    is_alt_form,
    sensitive,
)
from .reformulate import Subproblem, build_adversarial, build_alt
from .subsolver import (
    INFEASIBLE,
    Hierarchy,
    OptResult,
    Status,
    UnsupportedSubproblem,
    _check_cap,
    _compile,
    _value,
    get_oracle_cap,
    set_oracle_cap,
    solve_lp,
    solve_subproblem,
)


class InternalConsistencyError(AssertionError):
    """A solver broke an ordering that holds by construction."""


def configuration(inst: MultilevelInstance) -> str:
    """One of ``canonical``, ``norbip``, ``nomimlp``, ``gnormp``."""
    nos = inst.nos
    if nos is None:
        return "canonical"
    d, prot = nos.deviating_level, set(nos.protected_levels)
    if inst.depth == 2:
        return "norbip"
    if d == 1 and prot == {0}:
        return "nomimlp"
    if d == inst.depth - 1 and prot == set(range(d)):
        return "gnormp"
    raise InstanceError(
        f"unsupported near-optimality configuration: deviating level {d}, protected {sorted(prot)}")


def _lex_key(inst: MultilevelInstance, witness: dict) -> tuple:
    return tuple(witness[n] for n in inst.names())


def _better(cand, best, inst) -> bool:
    if best is None:
        return True
    if cand[0] != best[0]:
        return cand[0] < best[0]
    return _lex_key(inst, cand[1]) < _lex_key(inst, best[1])


# ---------------------------------------------------------------------------
# top-level enumeration for canonical / NORBiP / NOMIMLP

class _Leader:
    """Evaluates one integer top-level decision.

    Continuous top-level variables never appear below the top (validated
    instances), so for a fixed integer decision they enter only the top
    objective, the top constraints and the robust rows; they are settled by
    an LP. The robust row of a sensitive constraint ``G = a.xc + rest`` is
    ``a.xc + max over the near-optimal set of rest <= 0``.
    """

    def __init__(self, inst: MultilevelInstance, robust: bool, cap):
        self.inst = inst
        self.robust = robust
        self.cap = cap
        self.oracle = Hierarchy(inst, cap)
        self.top_int = [v for v in inst.variables_at(0) if v.kind is Kind.INT]
        self.top_cont = [v for v in inst.variables_at(0) if v.kind is Kind.CONT]
        self.lower_cont = self.oracle.continuous(1)
        if self.lower_cont and inst.depth > 2:
            raise UnsupportedSubproblem("continuous first lower level needs a bilevel instance")
        top = inst.levels[0]
        self.top = top
        self.obj_row = _compile(top.objective, self.oracle.index)
        self.con_rows = [_compile(c.expr, self.oracle.index) for c in top.constraints]

    def robust_rows(self, x: dict, fstar) -> list[LinearExpr] | None:
        """Robust rows over the continuous top variables; None if violated outright."""
        rows = []
        zeros = dict(x, **{v.name: Fraction(0) for v in self.top_cont})
        d = self.inst.nos.deviating_level
        for con in self.top.constraints:
            if not sensitive(self.inst, con, d):
                continue
            res = solve_subproblem(build_adversarial(self.inst, 0, con.name, zeros, fstar), self.cap)
            if not res.optimal:
                continue
            worst = -res.value
            cont = LinearExpr({v.name: con.expr.coefficient(v.name) for v in self.top_cont}, worst)
            if not cont.terms:
                if worst > 0:
                    return None
                continue
            rows.append(cont)
        return rows

    def evaluate(self, point: tuple):
        """Best ``(value, witness)`` with this integer top decision, or None."""
        x = {v.name: Fraction(p) for v, p in zip(self.top_int, point)}
        probe = dict(x, **{v.name: Fraction(0) for v in self.top_cont})
        res = self.oracle.solve(probe, 1)
        if not res.optimal:
            return None
        rows = []
        if self.robust:
            rows = self.robust_rows(x, res.value)
            if rows is None:
                return None
        if self.lower_cont:
            return self._joint_lp(x, res.value, rows)
        vals = self.oracle.vector(probe, 1)
        _, reactions = self.oracle.reaction(1, vals)
        tail = [self.inst.variables[i].name for i in self.oracle.tail[1]]
        best = None
        for r in reactions:
            if self.top_cont:
                full = dict(x, **{n: Fraction(v) for n, v in zip(tail, r)})
                cand = self._cont_lp(full, rows)
            else:
                for i, v in zip(self.oracle.tail[1], r):
                    vals[i] = v
                if any(_value(row, vals) > 0 for row in self.con_rows):
                    continue
                full = dict(x, **{n: Fraction(v) for n, v in zip(tail, r)})
                cand = (Fraction(_value(self.obj_row, vals), self.obj_row[2]), full)
            if cand is not None and _better(cand, best, self.inst):
                best = cand
        return best

    def _cont_lp(self, fixed: dict, rows):
        cons = tuple(Constraint(c.name, c.expr.substitute(fixed)) for c in self.top.constraints)
        cons += tuple(Constraint(f"robust[{i}]", r) for i, r in enumerate(rows))
        sub = Subproblem(tuple(self.top_cont), self.top.objective.substitute(fixed), cons, fixed)
        res = solve_lp(sub)
        if not res.optimal:
            return None
        return res.value, dict(fixed, **res.witness)

    def _joint_lp(self, x: dict, fstar, rows):
        lower = self.inst.levels[1]
        lvars = self.inst.variables_at(1)
        cons = tuple(Constraint(c.name, c.expr.substitute(x)) for c in self.top.constraints)
        cons += tuple(Constraint(f"lower:{c.name}", c.expr.substitute(x)) for c in lower.constraints)
        cons += (Constraint("lower optimality", lower.objective.substitute(x) - fstar),)
        cons += tuple(Constraint(f"robust[{i}]", r) for i, r in enumerate(rows))
        sub = Subproblem(tuple(self.top_cont) + tuple(lvars), self.top.objective.substitute(x), cons, x)
        res = solve_lp(sub)
        if not res.optimal:
            return None
        return res.value, dict(x, **res.witness)


def _leader_chunk(args):
    inst, robust, cap, points = args
    if cap is not None:
        set_oracle_cap(cap)
    leader = _Leader(inst, robust, cap)
    return [leader.evaluate(p) for p in points]


def _enumerate_leader(inst: MultilevelInstance, robust: bool, cap=None, jobs: int = 1) -> OptResult:
    top_int = [v for v in inst.variables_at(0) if v.kind is Kind.INT]
    ranges = [v.int_range() for v in top_int]
    _check_cap(math.prod(len(r) for r in ranges), cap)
    points = list(itertools.product(*ranges))
    if jobs > 1 and len(points) > 1:
        size = math.ceil(len(points) / jobs)
        chunks = [points[i:i + size] for i in range(0, len(points), size)]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            parts = pool.map(_leader_chunk, [(inst, robust, cap or get_oracle_cap(), c) for c in chunks])
            results = [r for part in parts for r in part]
    else:
        leader = _Leader(inst, robust, cap)
        results = [leader.evaluate(p) for p in points]
    best = None
    for cand in results:
        if cand is not None and _better(cand, best, inst):
            best = cand
    if best is None:
        return INFEASIBLE
    witness = {n: best[1][n] for n in inst.names()}
    return OptResult(Status.OPTIMAL, best[0], witness)


def solve_canonical(inst: MultilevelInstance, cap=None, jobs: int = 1) -> OptResult:
    """Optimistic optimum ignoring near-optimality robustness."""
    return _enumerate_leader(inst, robust=False, cap=cap, jobs=jobs)


def solve_norbip(inst: MultilevelInstance, cap=None, jobs: int = 1) -> OptResult:
    """Near-optimal robust optimum when the level right below the top deviates.

    Covers bilevel instances and multilevel ones whose first lower level
    deviates. An instance asking for objective protection is first brought
    to its epigraph form.
    """
    kind = configuration(inst)
    if kind not in ("norbip", "nomimlp"):
        raise InstanceError(f"solve_norbip does not handle a {kind} configuration")
    if inst.nos.mode is Mode.CONSTRAINTS_AND_OBJECTIVE and not is_alt_form(inst):
        inst = build_alt(inst)
    return _enumerate_leader(inst, robust=True, cap=cap, jobs=jobs)


# ---------------------------------------------------------------------------
# generalized variant: every upper level protects itself against the bottom

class _Gnormp:
    def __init__(self, inst: MultilevelInstance, cap):
        self.inst = inst
        self.cap = cap
        self.oracle = Hierarchy(inst, cap)
        self.s = inst.depth - 1
        for lvl in range(self.s):
            if self.oracle.continuous(lvl):
                raise UnsupportedSubproblem("upper levels must be all-integer")
        self.protected = inst.nos.protected_levels
        self._memo = {}
        self._worst = {}

    def worst_ok(self, level: int, con: Constraint, vals: list) -> bool:
        o = self.oracle
        upper = o.above[self.s]
        key = (level, con.name, tuple(vals[i] for i in upper))
        hit = self._worst.get(key)
        if hit is None:
            x = {self.inst.variables[i].name: Fraction(vals[i]) for i in upper}
            fstar = Fraction(_value(o.objective[self.s], vals), o.objective[self.s][2])
            res = solve_subproblem(build_adversarial(self.inst, level, con.name, x, fstar), self.cap)
            hit = not res.optimal or -res.value <= 0
            self._worst[key] = hit
        return hit

    def reaction(self, level: int, vals: list):
        o = self.oracle
        if level == self.s:
            return o.reaction(level, vals)
        key = (level, tuple(vals[i] for i in o.above[level]))
        hit = self._memo.get(key)
        if hit is not None:
            return hit
        own = o.own[level]
        _check_cap(math.prod(len(r) for r in o.ranges[level]), self.cap)
        rows = o.rows[level]
        obj = o.objective[level]
        cons = self.inst.levels[level].constraints
        sens = [c for c in cons if sensitive(self.inst, c, self.s)] if level in self.protected else []
        best, found = None, []
        vals = list(vals)
        for pt in itertools.product(*o.ranges[level]):
            for i, x in zip(own, pt):
                vals[i] = x
            _, subs = self.reaction(level + 1, vals)
            for r in subs:
                for i, x in zip(o.tail[level + 1], r):
                    vals[i] = x
                if any(_value(row, vals) > 0 for row in rows):
                    continue
                if not all(self.worst_ok(level, c, vals) for c in sens):
                    continue
                val = _value(obj, vals)
                t = tuple(vals[i] for i in o.tail[level])
                if best is None or val < best:
                    best, found = val, [t]
                elif val == best:
                    found.append(t)
        found.sort()
        self._memo[key] = (best, found)
        return best, found


def solve_gnormp(inst: MultilevelInstance, cap=None, jobs: int = 1) -> OptResult:
    """Recursive solve where each upper level anticipates the bottom's deviation."""
    kind = configuration(inst)
    if kind == "norbip":
        return solve_norbip(inst, cap=cap, jobs=jobs)
    if kind != "gnormp":
        raise InstanceError(f"solve_gnormp does not handle a {kind} configuration")
    g = _Gnormp(inst, cap)
    best, found = g.reaction(0, [0] * len(inst.variables))
    if not found:
        return INFEASIBLE
    o = g.oracle
    witness = {inst.variables[i].name: Fraction(x) for i, x in zip(o.tail[0], found[0])}
    witness = {n: witness[n] for n in inst.names()}
    return OptResult(Status.OPTIMAL, Fraction(best, o.objective[0][2]), witness)


def solve(inst: MultilevelInstance, cap=None, jobs: int = 1) -> OptResult:
    """Dispatch on the instance's near-optimality configuration."""
    kind = configuration(inst)
    if kind == "canonical":
        return solve_canonical(inst, cap, jobs)
    if kind == "gnormp":
        return solve_gnormp(inst, cap, jobs)
    return solve_norbip(inst, cap, jobs)


# ---------------------------------------------------------------------------
# comparisons

@dataclass(frozen=True)
class CompareResult:
    canonical: OptResult
    norbip: OptResult
    norbip_alt: OptResult

    def values(self) -> tuple:
        return tuple(r.value if r.optimal else None for r in (self.canonical, self.norbip, self.norbip_alt))

    def to_json(self) -> dict:
        return {"canonical": self.canonical.to_json(), "norbip": self.norbip.to_json(),
                "norbip_alt": self.norbip_alt.to_json()}


def compare(inst: MultilevelInstance, cap=None, jobs: int = 1) -> CompareResult:
    """Solve the canonical, robust and objective-robust variants and check their order.

    Accepts bilevel instances and multilevel ones where only the top level is
    protected against the level directly below it.
    """
    if inst.nos is None or configuration(inst) not in ("norbip", "nomimlp"):
        raise InstanceError("compare needs a near_optimality section protecting only the top level "
                            "against the level below it")
    from dataclasses import replace

    plain = inst.with_nos(replace(inst.nos, mode=Mode.CONSTRAINTS)) if not is_alt_form(inst) else inst
    canonical = solve_canonical(plain, cap, jobs)
    norbip = solve_norbip(plain, cap, jobs)
    alt = solve_norbip(build_alt(plain), cap, jobs)
    chain = [r for r in (canonical, norbip, alt)]
    for lo, hi in zip(chain, chain[1:]):
        if lo.optimal and hi.optimal and lo.value > hi.value:
            raise InternalConsistencyError(
                f"ordering violated: {format_rational(lo.value)} > {format_rational(hi.value)}")
    if canonical.status is Status.INFEASIBLE and norbip.optimal:
        raise InternalConsistencyError("robust variant feasible while canonical is infeasible")
    if norbip.status is Status.INFEASIBLE and alt.optimal:
        raise InternalConsistencyError("objective-robust variant feasible while robust is infeasible")
    return CompareResult(canonical, norbip, alt)


def delta_sweep(inst: MultilevelInstance, deltas, cap=None, jobs: int = 1) -> list[tuple[Fraction, OptResult]]:
    """Robust optimum for each tolerance in a strictly increasing list."""
    if inst.nos is None:
        raise InstanceError("delta_sweep needs a near_optimality section")
    deltas = [Fraction(d) for d in deltas]
    if not deltas:
        raise InstanceError("delta list is empty")
    if deltas[0] < 0 or any(a >= b for a, b in zip(deltas, deltas[1:])):
        raise InstanceError("deltas must be nonnegative and strictly increasing")
    return [(d, solve(inst.with_delta(d), cap, jobs)) for d in deltas]
