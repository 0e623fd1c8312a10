"""Exact oracles: rational simplex, integer enumeration, hierarchical tails.

These are the subroutines that verification and solving reduce to. All
arithmetic is exact; enumeration runs on integer-scaled coefficient rows.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Sequence

from .model import Kind, MultilevelInstance, format_rational
from .reformulate import Subproblem

DEFAULT_ORACLE_CAP = 10**7
DEFAULT_TU_CAP = 12 * 12

_settings = {"oracle_cap": DEFAULT_ORACLE_CAP}


def set_oracle_cap(cap: int) -> None:
    if cap < 1:
        raise ValueError("oracle cap must be positive")
    _settings["oracle_cap"] = int(cap)


def get_oracle_cap() -> int:
    return _settings["oracle_cap"]


class Status(str, enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


class OracleCapExceeded(RuntimeError):
    """Enumeration would visit more points than the configured cap."""


class UnsupportedSubproblem(ValueError):
    """Subproblem outside what the exact oracles handle."""


@dataclass(frozen=True)
class OptResult:
    status: Status
    value: Fraction | None = None
    witness: dict | None = None

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL

    def to_json(self) -> dict:
        out = {"status": self.status.value}
        if self.status is Status.OPTIMAL:
            out["value"] = format_rational(self.value)
            out["witness"] = {k: format_rational(v) for k, v in self.witness.items()}
        return out


INFEASIBLE = OptResult(Status.INFEASIBLE)


def _check_cap(size: int, cap: int | None) -> None:
    cap = get_oracle_cap() if cap is None else cap
    if size > cap:
        raise OracleCapExceeded(f"instance too large for oracle: {size} points exceed cap {cap}")


def _no_parameters(p: Subproblem) -> None:
    params = p.parameters()
    if params:
        raise UnsupportedSubproblem(f"unfrozen parameter {sorted(params)[0]!r} in subproblem")


def _compile(expr, index: Mapping[str, int]):
    coefs, const, scale = expr.scaled()
    return tuple((index[v], c) for v, c in coefs.items()), const, scale


def _value(row, vals) -> int:
    terms, const, _ = row
    s = const
    for i, c in terms:
        s += c * vals[i]
    return s


# ---------------------------------------------------------------------------
# Rational simplex

def _pivot(rows, basis, r, s):
    prow = rows[r]
    piv = prow[s]
    if piv != 1:
        rows[r] = prow = [v / piv for v in prow]
    for i, row in enumerate(rows):
        if i != r:
            f = row[s]
            if f:
                rows[i] = [a - f * b for a, b in zip(row, prow)]
    basis[r] = s


def _reduced_costs(rows, basis, cost, ncols):
    red = list(cost[:ncols])
    for i, row in enumerate(rows):
        cb = cost[basis[i]]
        if cb:
            for j in range(ncols):
                if row[j]:
                    red[j] -= cb * row[j]
    return red


def _bland(rows, basis, cost, ncols) -> bool:
    """Minimize over columns ``< ncols``; False when unbounded."""
    while True:
        red = _reduced_costs(rows, basis, cost, ncols)
        enter = next((j for j in range(ncols) if red[j] < 0), None)
        if enter is None:
            return True
        best = None
        for i, row in enumerate(rows):
            a = row[enter]
            if a > 0:
                key = (row[-1] / a, basis[i])
                if best is None or key < best[0]:
                    best = (key, i)
        if best is None:
            return False
        _pivot(rows, basis, best[1], enter)


def simplex(A: Sequence[Sequence[Fraction]], b: Sequence[Fraction], c: Sequence[Fraction]):
    """Two-phase primal simplex with Bland's rule for ``min c.x, A x <= b, x >= 0``.

    Returns ``(status, x)`` with ``x`` an exact basic solution when optimal.
    """
    m, n = len(A), len(c)
    rows, basis, arts = [], [], []
    for i in range(m):
        row = [Fraction(v) for v in A[i]] + [Fraction(int(j == i)) for j in range(m)]
        rhs = Fraction(b[i])
        if rhs < 0:
            row = [-v for v in row]
            rhs = -rhs
            arts.append(i)
        rows.append((row, rhs))
    na = len(arts)
    ncols = n + m + na
    tab, art_col = [], {}
    for k, i in enumerate(arts):
        art_col[i] = n + m + k
    for i, (row, rhs) in enumerate(rows):
        ext = [Fraction(0)] * na
        if i in art_col:
            ext[art_col[i] - n - m] = Fraction(1)
            basis.append(art_col[i])
        else:
            basis.append(n + i)
        tab.append(row + ext + [rhs])

    if na:
        cost1 = [Fraction(0)] * (n + m) + [Fraction(1)] * na
        _bland(tab, basis, cost1, ncols)
        if sum(tab[i][-1] for i in range(len(tab)) if basis[i] >= n + m) > 0:
            return Status.INFEASIBLE, None
        i = 0
        while i < len(tab):
            if basis[i] >= n + m:
                j = next((j for j in range(n + m) if tab[i][j] != 0), None)
                if j is None:
                    del tab[i]
                    del basis[i]
                    continue
                _pivot(tab, basis, i, j)
            i += 1
        tab = [row[:n + m] + [row[-1]] for row in tab]

    cost2 = [Fraction(v) for v in c] + [Fraction(0)] * m
    if not _bland(tab, basis, cost2, n + m):
        return Status.UNBOUNDED, None
    x = [Fraction(0)] * n
    for i, j in enumerate(basis):
        if j < n:
            x[j] = tab[i][-1]
    return Status.OPTIMAL, x


def solve_lp(p: Subproblem) -> OptResult:
    """Exact LP over a subproblem whose free variables are all continuous.

    Variables are shifted to their lower bounds and upper bounds become
    explicit rows.
    """
    _no_parameters(p)
    if p.tail:
        raise UnsupportedSubproblem("LP oracle cannot handle a hierarchical tail")
    names = p.names()
    for v in p.variables:
        if v.kind is not Kind.CONT:
            raise UnsupportedSubproblem(f"LP oracle got integer variable {v.name!r}")
        if not v.bounded:
            raise UnsupportedSubproblem(f"variable {v.name!r} is unbounded")
    lbs = [v.lb for v in p.variables]
    A, b = [], []
    for con in p.constraints:
        row = [con.expr.coefficient(nm) for nm in names]
        shift = sum((a * l for a, l in zip(row, lbs)), Fraction(0))
        A.append(row)
        b.append(-con.expr.constant - shift)
    for j, v in enumerate(p.variables):
        A.append([Fraction(int(k == j)) for k in range(len(names))])
        b.append(v.ub - v.lb)
    c = [p.objective.coefficient(nm) for nm in names]
    status, y = simplex(A, b, c)
    if status is not Status.OPTIMAL:
        return OptResult(status)
    witness = {nm: y[j] + lbs[j] for j, nm in enumerate(names)}
    return OptResult(Status.OPTIMAL, p.objective.evaluate(witness), witness)


def enumerate_integer(p: Subproblem, cap: int | None = None) -> OptResult:
    """Exhaustive scan; ties go to the lexicographically smallest witness."""
    _no_parameters(p)
    if p.tail:
        raise UnsupportedSubproblem("use solve_subproblem for hierarchical tails")
    for v in p.variables:
        if v.kind is not Kind.INT:
            raise UnsupportedSubproblem(f"enumeration got continuous variable {v.name!r}")
        if not v.bounded:
            raise UnsupportedSubproblem(f"variable {v.name!r} is unbounded")
    ranges = [v.int_range() for v in p.variables]
    _check_cap(math.prod(len(r) for r in ranges), cap)
    index = {v.name: i for i, v in enumerate(p.variables)}
    rows = [_compile(c.expr, index) for c in p.constraints]
    obj = _compile(p.objective, index)
    best = best_pt = None
    for pt in itertools.product(*ranges):
        if all(_value(r, pt) <= 0 for r in rows):
            val = _value(obj, pt)
            if best is None or val < best:
                best, best_pt = val, pt
    if best_pt is None:
        return INFEASIBLE
    witness = {nm: Fraction(best_pt[i]) for nm, i in index.items()}
    return OptResult(Status.OPTIMAL, Fraction(best, obj[2]), witness)


def solve_subproblem(p: Subproblem, cap: int | None = None) -> OptResult:
    """Dispatch to the LP, enumeration, or hierarchical oracle."""
    if p.tail:
        _no_parameters(p)
        res = solve_hierarchical(p.as_instance(), {}, 0, cap=cap)
        return res
    kinds = {v.kind for v in p.variables}
    if kinds == {Kind.CONT}:
        return solve_lp(p)
    if kinds <= {Kind.INT}:
        return enumerate_integer(p, cap)
    raise UnsupportedSubproblem("mixed free variables unsupported")


# ---------------------------------------------------------------------------
# Hierarchical (optimistic multilevel) tails

class Hierarchy:
    """Memoized optimistic reaction sets of the levels of one instance.

    The reaction set of level ``l`` under fixed upper decisions is the set
    of joint assignments of levels ``l..`` that minimize level ``l``'s
    objective over its own variables and the reaction set of level
    ``l + 1``, subject to level ``l``'s constraints.
    """

    def __init__(self, inst: MultilevelInstance, cap: int | None = None):
        self.inst = inst
        self.cap = cap
        self.index = {v.name: i for i, v in enumerate(inst.variables)}
        n = inst.depth
        self.own = [[self.index[v.name] for v in inst.variables_at(l)] for l in range(n)]
        self.above = [[self.index[v.name] for v in inst.variables_above(l)] for l in range(n)]
        self.tail = [[self.index[v.name] for v in inst.variables_from(l)] for l in range(n)]
        self.ranges = [[inst.variables[i].int_range() if inst.variables[i].is_integer else None
                        for i in self.own[l]] for l in range(n)]
        self.objective = [_compile(lvl.objective, self.index) for lvl in inst.levels]
        self.rows = [[_compile(c.expr, self.index) for c in lvl.constraints] for lvl in inst.levels]
        self._memo = {}

    def continuous(self, level: int) -> bool:
        kinds = {self.inst.variables[i].kind for i in self.own[level]}
        if kinds == {Kind.CONT}:
            return True
        if Kind.CONT in kinds:
            raise UnsupportedSubproblem(f"level {level} mixes integer and continuous variables")
        return False

    def vector(self, fixed: Mapping[str, Fraction], level: int) -> list:
        vals = [0] * len(self.index)
        for i in self.above[level]:
            name = self.inst.variables[i].name
            try:
                v = Fraction(fixed[name])
            except KeyError:
                raise KeyError(f"decision of {name!r} is required") from None
            vals[i] = v.numerator if v.denominator == 1 else v
        return vals

    def reaction(self, level: int, vals: list) -> tuple:
        """``(scaled optimum or None, sorted list of tail tuples)``."""
        key = (level, tuple(vals[i] for i in self.above[level]))
        hit = self._memo.get(key)
        if hit is not None:
            return hit
        if self.continuous(level):
            raise UnsupportedSubproblem(f"continuous level {level} has no finite reaction set")
        own = self.own[level]
        ranges = self.ranges[level]
        _check_cap(math.prod(len(r) for r in ranges), self.cap)
        rows = self.rows[level]
        obj = self.objective[level]
        last = level == self.inst.depth - 1
        best, found = None, []
        vals = list(vals)
        for pt in itertools.product(*ranges):
            for i, x in zip(own, pt):
                vals[i] = x
            if last:
                subs = [()]
                sub_pos = ()
            else:
                _, subs = self.reaction(level + 1, vals)
                sub_pos = self.tail[level + 1]
            for r in subs:
                for i, x in zip(sub_pos, r):
                    vals[i] = x
                if all(_value(row, vals) <= 0 for row in rows):
                    val = _value(obj, vals)
                    if best is None or val < best:
                        best, found = val, [tuple(vals[i] for i in self.tail[level])]
                    elif val == best:
                        found.append(tuple(vals[i] for i in self.tail[level]))
        found.sort()
        out = (best, found)
        self._memo[key] = out
        return out

    def solve(self, fixed: Mapping[str, Fraction], level: int) -> OptResult:
        if level == self.inst.depth - 1 and self.continuous(level):
            return solve_lp(self._level_subproblem(fixed, level))
        vals = self.vector(fixed, level)
        best, found = self.reaction(level, vals)
        if not found:
            return INFEASIBLE
        scale = self.objective[level][2]
        witness = {self.inst.variables[i].name: Fraction(x) for i, x in zip(self.tail[level], found[0])}
        return OptResult(Status.OPTIMAL, Fraction(best, scale), witness)

    def contains(self, assignment: Mapping[str, Fraction], level: int) -> bool:
        """Whether the tail of ``assignment`` belongs to the reaction set."""
        if level == self.inst.depth - 1 and self.continuous(level):
            sub = self._level_subproblem(assignment, level)
            res = solve_lp(sub)
            point = {v.name: Fraction(assignment[v.name]) for v in sub.variables}
            return (res.optimal and all(c.satisfied(point) for c in sub.constraints)
                    and all(v.contains(point[v.name]) for v in sub.variables)
                    and sub.objective.evaluate(point) == res.value)
        vals = self.vector(assignment, level)
        _, found = self.reaction(level, vals)
        tail = []
        for i in self.tail[level]:
            v = Fraction(assignment[self.inst.variables[i].name])
            if v.denominator != 1:
                return False
            tail.append(v.numerator)
        return tuple(tail) in set(found)

    def _level_subproblem(self, fixed, level) -> Subproblem:
        from .model import Constraint
        above = {self.inst.variables[i].name: Fraction(fixed[self.inst.variables[i].name])
                 for i in self.above[level]}
        lvl = self.inst.levels[level]
        return Subproblem(
            tuple(self.inst.variables_at(level)),
            lvl.objective.substitute(above),
            tuple(Constraint(c.name, c.expr.substitute(above)) for c in lvl.constraints),
            above,
        )


def solve_hierarchical(inst: MultilevelInstance, fixed: Mapping[str, Fraction], from_level: int,
                       cap: int | None = None, oracle: Hierarchy | None = None) -> OptResult:
    """Optimistic optimum of the levels ``from_level..`` with upper decisions fixed.

    The witness covers the tail variables; among optimal joint responses the
    lexicographically smallest (declaration order) is returned. A single
    continuous bottom level is solved as an LP.
    """
    oracle = oracle or Hierarchy(inst, cap)
    return oracle.solve(fixed, from_level)


# ---------------------------------------------------------------------------
# Total unimodularity

Matrix = list  # rows of Fractions


def _det(rows: list[list[int]]) -> int:
    """Bareiss fraction-free determinant of an integer matrix."""
    m = [list(r) for r in rows]
    n = len(m)
    sign, prev = 1, 1
    for k in range(n - 1):
        if m[k][k] == 0:
            swap = next((i for i in range(k + 1, n) if m[i][k] != 0), None)
            if swap is None:
                return 0
            m[k], m[swap] = m[swap], m[k]
            sign = -sign
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                m[i][j] = (m[i][j] * m[k][k] - m[i][k] * m[k][j]) // prev
        prev = m[k][k]
    return sign * m[-1][-1]


def is_totally_unimodular(m: Matrix, cap: int = DEFAULT_TU_CAP) -> bool:
    """Brute force: every square submatrix has determinant in {-1, 0, 1}."""
    if not m or not m[0]:
        raise ValueError("matrix dimensions must be positive")
    nrows, ncols = len(m), len(m[0])
    if any(x not in (-1, 0, 1) for row in m for x in row):
        return False
    if nrows * ncols > cap:
        raise OracleCapExceeded(f"matrix {nrows}x{ncols} exceeds the determinant-check cap {cap}")
    ints = [[int(x) for x in row] for row in m]
    for k in range(2, min(nrows, ncols) + 1):
        for rs in itertools.combinations(range(nrows), k):
            for cs in itertools.combinations(range(ncols), k):
                if abs(_det([[ints[r][c] for c in cs] for r in rs])) > 1:
                    return False
    return True


def constraint_matrix(p: Subproblem, include_bounds: bool = True) -> Matrix:
    """Coefficient rows of the constraints, plus the ``I; -I`` bound blocks."""
    names = p.names()
    rows = [[c.expr.coefficient(nm) for nm in names] for c in p.constraints]
    if include_bounds:
        n = len(names)
        rows += [[Fraction(int(i == j)) for j in range(n)] for i in range(n)]
        rows += [[Fraction(-int(i == j)) for j in range(n)] for i in range(n)]
    return rows
