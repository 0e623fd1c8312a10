"""Independent brute-force oracles used only by the tests.

Everything here works on the raw JSON instance documents with its own
evaluator and its own enumeration, sharing no code with the library, so
agreement between the two is meaningful.
"""

from __future__ import annotations

import itertools
import math
import random
from fractions import Fraction


def rat(s) -> Fraction:
    return Fraction(s) if isinstance(s, int) else Fraction(str(s))


class Plain:
    """Minimal reading of the instance format."""

    def __init__(self, doc: dict):
        self.doc = doc
        self.vars = [(v["name"], v["level"], v["kind"], rat(v["lb"]), rat(v["ub"])) for v in doc["variables"]]
        self.levels = []
        for lvl in doc["levels"]:
            obj = self._expr(lvl["objective"])
            cons = [(c["name"], self._expr(c["expr"])) for c in lvl.get("constraints", [])]
            self.levels.append((obj, cons))
        nos = doc.get("near_optimality")
        self.d = nos["deviating_level"] if nos else None
        self.delta = rat(nos["delta"]) if nos else None
        self.protected = sorted(nos["protected_levels"]) if nos else []
        self.mode = nos.get("mode", "constraints") if nos else None

    @staticmethod
    def _expr(e):
        return ({k: rat(c) for k, c in e.get("terms", {}).items()}, rat(e.get("constant", "0")))

    def names_at(self, level):
        return [v[0] for v in self.vars if v[1] == level]

    def domain(self, name):
        for n, _, kind, lb, ub in self.vars:
            if n == name:
                assert kind == "int", "oracle enumerates integer variables only"
                return range(math.ceil(lb), math.floor(ub) + 1)
        raise KeyError(name)

    def grid(self, names):
        for pt in itertools.product(*(self.domain(n) for n in names)):
            yield dict(zip(names, map(Fraction, pt)))


def ev(expr, a) -> Fraction:
    terms, const = expr
    return sum((c * a[n] for n, c in terms.items()), const)


def feasible(p: Plain, level: int, a) -> bool:
    return all(ev(e, a) <= 0 for _, e in p.levels[level][1])


# -- optimistic reaction sets --------------------------------------------

def reaction(p: Plain, level: int, fixed: dict):
    """All optimal joint responses of levels ``level..`` (optimistic), with value.

    Enumerates the whole joint grid of the tail and keeps the points whose
    sub-tail is itself an optimal response, then takes the argmin of this
    level's objective.
    """
    last = len(p.levels) - 1
    names = [n for lv in range(level, last + 1) for n in p.names_at(lv)]
    best, keep = None, []
    sub_cache = {}
    for pt in p.grid(names):
        a = {**fixed, **pt}
        if not feasible(p, level, a):
            continue
        if level < last:
            key = tuple(a[n] for n in p.names_at(level))
            if key not in sub_cache:
                own = {n: a[n] for n in p.names_at(level)}
                _, resp = reaction(p, level + 1, {**fixed, **own})
                sub_cache[key] = {tuple(sorted(r.items())) for r in resp}
            lower = {n: a[n] for lv in range(level + 1, last + 1) for n in p.names_at(lv)}
            if tuple(sorted(lower.items())) not in sub_cache[key]:
                continue
        val = ev(p.levels[level][0], a)
        if best is None or val < best:
            best, keep = val, [pt]
        elif val == best:
            keep.append(pt)
    return best, keep


def near_optimal_set(p: Plain, fixed: dict, fstar, delta):
    """Z(x; delta): deviating-level points within delta of fstar, tails optimistic."""
    d, last = p.d, len(p.levels) - 1
    out = []
    for y in p.grid(p.names_at(d)):
        a = {**fixed, **y}
        if not feasible(p, d, a):
            continue
        tails = [{}] if d == last else reaction(p, d + 1, a)[1]
        for t in tails:
            b = {**a, **t}
            if ev(p.levels[d][0], b) <= fstar + delta:
                out.append({**y, **t})
    return out


# -- canonical, NORBiP / NOMIMLP, NORBiP-Alt ---------------------------------

def _upper_names(p: Plain, below: int):
    return [n for lv in range(below) for n in p.names_at(lv)]


def solve_direct(p: Plain, robust: bool, alt: bool = False, delta=None):
    """Joint enumeration over (x, v); semi-infinite check by enumerating Z.

    Handles a single top level over one tail; returns ``(value, point)`` or
    ``None`` when infeasible. With ``alt`` the value is the worst-case top
    objective over Z (the epigraph variable settles at that maximum).
    """
    delta = p.delta if delta is None else Fraction(delta)
    best = None
    for x in p.grid(p.names_at(0)):
        fstar, resp = reaction(p, 1, x)
        if fstar is None:
            continue
        Z = near_optimal_set(p, x, fstar, delta) if robust else None
        for v in resp:
            a = {**x, **v}
            if not feasible(p, 0, a):
                continue
            val = ev(p.levels[0][0], a)
            if robust:
                if any(ev(e, {**x, **z}) > 0 for _, e in p.levels[0][1] for z in Z):
                    continue
                if alt:
                    val = max(ev(p.levels[0][0], {**x, **z}) for z in Z)
            if best is None or val < best[0]:
                best = (val, a)
    return best


def robust_ok(p: Plain, a: dict, delta=None) -> bool:
    """Direct semi-infinite check of a candidate: v optimal, all G hold on Z."""
    delta = p.delta if delta is None else Fraction(delta)
    x = {n: a[n] for n in p.names_at(0)}
    fstar, _ = reaction(p, 1, x)
    if fstar is None:
        return False
    return all(ev(e, {**x, **z}) <= 0 for _, e in p.levels[0][1]
               for z in near_optimal_set(p, x, fstar, delta))


def accepts(p: Plain, a: dict, bound=None) -> bool:
    """Full NORBiP acceptance of a candidate by direct enumeration."""
    for n, _, _, lb, ub in p.vars:
        if a[n].denominator != 1 or not lb <= a[n] <= ub:
            return False
    if bound is not None and ev(p.levels[0][0], a) > bound:
        return False
    if not all(feasible(p, lv, a) for lv in range(len(p.levels))):
        return False
    x = {n: a[n] for n in p.names_at(0)}
    fstar, resp = reaction(p, 1, x)
    v = {n: a[n] for lv in range(1, len(p.levels)) for n in p.names_at(lv)}
    if fstar is None or v not in resp:
        return False
    return robust_ok(p, a)


# -- GNORMP -----------------------------------------------------------------

def gnormp(p: Plain, level: int = 0, fixed: dict | None = None):
    """Recursive joint-grid brute force; returns (value, list of optimal tails).

    Every protected level checks its own constraints against the bottom
    level's near-optimal set (computed afresh for each upper decision).
    """
    fixed = dict(fixed or {})
    last = len(p.levels) - 1
    if level == last:
        return reaction(p, level, fixed)
    best, keep = None, []
    for y in p.grid(p.names_at(level)):
        a = {**fixed, **y}
        _, subs = gnormp(p, level + 1, a)
        for t in subs:
            b = {**a, **t}
            if not feasible(p, level, b):
                continue
            if level in p.protected:
                upper = {n: b[n] for n in _upper_names(p, last)}
                fstar = ev(p.levels[last][0], b)
                Z = near_optimal_set(p, upper, fstar, p.delta)
                if any(ev(e, {**upper, **z}) > 0 for _, e in p.levels[level][1] for z in Z):
                    continue
            val = ev(p.levels[level][0], b)
            if best is None or val < best:
                best, keep = val, [{**y, **t}]
            elif val == best:
                keep.append({**y, **t})
    return best, keep


# -- vertex enumeration for small LPs -------------------------------------------

def _solve_square(rows, rhs):
    n = len(rows)
    m = [list(map(Fraction, r)) + [Fraction(b)] for r, b in zip(rows, rhs)]
    for c in range(n):
        piv = next((r for r in range(c, n) if m[r][c] != 0), None)
        if piv is None:
            return None
        m[c], m[piv] = m[piv], m[c]
        for r in range(n):
            if r != c and m[r][c] != 0:
                f = m[r][c] / m[c][c]
                m[r] = [x - f * y for x, y in zip(m[r], m[c])]
    return [m[i][n] / m[i][i] for i in range(n)]


def lp_vertices(A, b):
    """All vertices of {y : A y <= b} by solving every n-subset of tight rows."""
    n = len(A[0])
    out = set()
    for idx in itertools.combinations(range(len(A)), n):
        y = _solve_square([A[i] for i in idx], [b[i] for i in idx])
        if y is None:
            continue
        if all(sum(Fraction(a) * v for a, v in zip(A[i], y)) <= b[i] for i in range(len(A))):
            out.add(tuple(y))
    return sorted(out)


def lp_min(c, A, b):
    verts = lp_vertices(A, b)
    if not verts:
        return None
    val = min(sum(Fraction(ci) * v for ci, v in zip(c, y)) for y in verts)
    return val, [y for y in verts if sum(Fraction(ci) * v for ci, v in zip(c, y)) == val]


# -- seeded random bilevel instances -------------------------------------------

def random_bilevel(seed: int, delta=None) -> dict:
    """All-integer bilevel document: <=3 variables per level, bounds in [-2, 2]."""
    rng = random.Random(seed)

    def bounds():
        lo = rng.randint(-2, 2)
        return lo, rng.randint(lo, 2)

    def coef():
        return str(rng.randint(-2, 2))

    xs = [f"x{i}" for i in range(rng.randint(1, 3))]
    ys = [f"y{i}" for i in range(rng.randint(1, 3))]
    variables = []
    for lvl, names in ((0, xs), (1, ys)):
        for n in names:
            lo, hi = bounds()
            variables.append({"name": n, "level": lvl, "kind": "int", "lb": str(lo), "ub": str(hi)})

    def expr(names):
        terms = {n: coef() for n in names if rng.random() < 0.8}
        return {"terms": terms, "constant": str(rng.randint(-2, 2))}

    upper = [{"name": f"G{k}", "expr": expr(xs + ys)} for k in range(rng.randint(1, 3))]
    lower = [{"name": f"g{k}", "expr": expr(xs + ys)} for k in range(rng.randint(0, 2))]
    if delta is None:
        delta = rng.choice(["0", "1/2", "1", "2"])
    return {
        "variables": variables,
        "levels": [
            {"objective": expr(xs + ys), "constraints": upper},
            {"objective": expr(xs + ys), "constraints": lower},
        ],
        "near_optimality": {"deviating_level": 1, "delta": delta,
                            "protected_levels": [0], "mode": "constraints"},
    }
