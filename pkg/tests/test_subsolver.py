import itertools
import random
from fractions import Fraction

import pytest

from norobi import Kind, LinearExpr, Status, enumerate_integer, solve_hierarchical, solve_lp, solve_subproblem
from norobi.model import Constraint, Variable
from norobi.reformulate import Subproblem
from norobi.subsolver import (
    OracleCapExceeded,
    UnsupportedSubproblem,
    constraint_matrix,
    is_totally_unimodular,
    simplex,
)
from oracles import Plain, lp_min, reaction, rat


def cont(name, lb=0, ub=1):
    return Variable(name, 0, Kind.CONT, Fraction(lb), Fraction(ub))


def integer(name, lb=0, ub=1):
    return Variable(name, 0, Kind.INT, Fraction(lb), Fraction(ub))


def sub(variables, objective, constraints=()):
    return Subproblem(tuple(variables), objective,
                      tuple(Constraint(f"c{i}", e) for i, e in enumerate(constraints)))


class TestLP:
    def test_box(self):
        res = solve_lp(sub([cont("y1"), cont("y2")], LinearExpr({"y1": -2, "y2": -1})))
        assert res.value == -3
        assert res.witness == {"y1": 1, "y2": 1}

    def test_cut_box_fractional(self):
        # 2 y1 + y2 >= 2, written as 2 - 2 y1 - y2 <= 0
        p = sub([cont("y1"), cont("y2")], LinearExpr({"y1": 1}), [LinearExpr({"y1": -2, "y2": -1}, 2)])
        res = solve_lp(p)
        assert res.value == Fraction(1, 2)
        assert res.witness == {"y1": Fraction(1, 2), "y2": 1}
        # vertex enumeration agrees
        val, verts = lp_min([1, 0], [[-2, -1], [1, 0], [0, 1], [-1, 0], [0, -1]], [-2, 1, 1, 0, 0])
        assert val == res.value
        assert (res.witness["y1"], res.witness["y2"]) in verts

    def test_zero_objective(self):
        res = solve_lp(sub([cont("a"), cont("b")], LinearExpr()))
        assert res.status is Status.OPTIMAL and res.value == 0

    def test_infeasible(self):
        p = sub([cont("a")], LinearExpr({"a": 1}), [LinearExpr({"a": -1}, 2)])
        assert solve_lp(p).status is Status.INFEASIBLE

    def test_negative_lower_bounds(self):
        p = sub([cont("a", -2, 1), cont("b", -1, 3)], LinearExpr({"a": 1, "b": 1}),
                [LinearExpr({"a": -1, "b": -1}, Fraction(-1, 3))])
        # a + b >= -1/3 binds before the box corner (-2, -1)
        res = solve_lp(p)
        assert res.value == Fraction(-1, 3)
        assert res.witness["a"] + res.witness["b"] == Fraction(-1, 3)

    def test_simplex_unbounded(self):
        status, _ = simplex([[Fraction(1), Fraction(-1)]], [Fraction(1)], [Fraction(0), Fraction(-1)])
        assert status is Status.UNBOUNDED

    def test_random_against_vertices(self):
        rng = random.Random(7)
        for _ in range(60):
            n = rng.randint(1, 3)
            rows = [[Fraction(rng.randint(-3, 3), rng.randint(1, 2)) for _ in range(n)] for _ in range(rng.randint(0, 3))]
            rhs = [Fraction(rng.randint(-2, 4)) for _ in rows]
            c = [Fraction(rng.randint(-3, 3)) for _ in range(n)]
            names = [f"y{j}" for j in range(n)]
            p = sub([cont(nm, -1, 2) for nm in names], LinearExpr(dict(zip(names, c))),
                    [LinearExpr(dict(zip(names, r)), -b) for r, b in zip(rows, rhs)])
            A = rows + [[Fraction(int(i == j)) for j in range(n)] for i in range(n)] \
                + [[Fraction(-int(i == j)) for j in range(n)] for i in range(n)]
            b = rhs + [Fraction(2)] * n + [Fraction(1)] * n
            ref = lp_min(c, A, b)
            res = solve_lp(p)
            if ref is None:
                assert res.status is Status.INFEASIBLE
            else:
                assert res.value == ref[0]
                assert all(e.evaluate(res.witness) <= 0 for e in (c_.expr for c_ in p.constraints))

    def test_deterministic(self):
        p = sub([cont("a"), cont("b")], LinearExpr({"a": -1, "b": -1}), [LinearExpr({"a": 1, "b": 1}, -1)])
        assert solve_lp(p) == solve_lp(p)


class TestEnumeration:
    def test_e1_lower_at_two(self):
        p = sub([integer("v", 0, 2)], LinearExpr({"v": -1}), [LinearExpr({"v": 1}, -2)])
        res = enumerate_integer(p)
        assert res.value == -2 and res.witness == {"v": 2}

    def test_empty(self):
        p = sub([integer("y")], LinearExpr({"y": 1}), [LinearExpr({"y": 1}, 1)])
        assert enumerate_integer(p).status is Status.INFEASIBLE

    def test_tie_break(self):
        p = sub([integer("a"), integer("b")], LinearExpr())
        assert enumerate_integer(p).witness == {"a": 0, "b": 0}

    def test_cap(self):
        p = sub([integer("a", 0, 9), integer("b", 0, 9)], LinearExpr())
        with pytest.raises(OracleCapExceeded, match="instance too large for oracle"):
            enumerate_integer(p, cap=99)

    def test_lp_agrees_when_integral(self):
        rng = random.Random(11)
        checked = 0
        for _ in range(80):
            n = rng.randint(1, 3)
            names = [f"y{j}" for j in range(n)]
            c = {nm: rng.randint(-3, 3) for nm in names}
            rows = [LinearExpr({nm: rng.randint(-1, 1) for nm in names}, rng.randint(-2, 2))
                    for _ in range(rng.randint(0, 2))]
            ip = sub([integer(nm, -2, 2) for nm in names], LinearExpr(c), rows)
            lp = sub([cont(nm, -2, 2) for nm in names], LinearExpr(c), rows)
            r_lp = solve_lp(lp)
            if not r_lp.optimal or any(v.denominator != 1 for v in r_lp.witness.values()):
                continue
            checked += 1
            assert enumerate_integer(ip).value == r_lp.value
        assert checked > 20


class TestDispatch:
    def test_continuous(self):
        p = sub([cont("y1"), cont("y2")], LinearExpr({"y1": -2, "y2": -1}))
        assert solve_subproblem(p) == solve_lp(p)

    def test_integer(self):
        p = sub([integer("v", 0, 2)], LinearExpr({"v": -1}))
        assert solve_subproblem(p) == enumerate_integer(p)

    def test_mixed(self):
        p = sub([integer("a"), cont("b")], LinearExpr())
        with pytest.raises(UnsupportedSubproblem, match="mixed free variables unsupported"):
            solve_subproblem(p)


class TestHierarchical:
    def test_e3_tail(self, e3):
        res = solve_hierarchical(e3, {"x": Fraction(2)}, 1)
        assert res.value == -2
        assert res.witness == {"y1": 2, "y2": 2}

    def test_single_level_tail(self, e1):
        res = solve_hierarchical(e1, {"x": Fraction(2)}, 1)
        p = sub([integer("v", 0, 2)], LinearExpr({"v": -1}), [LinearExpr({"v": 1}, -2)])
        assert res == enumerate_integer(p)

    def test_contradictory(self, e3):
        doc_inst = e3.with_nos(None)
        res = solve_hierarchical(doc_inst, {"x": Fraction(-1)}, 1)
        assert res.status is Status.INFEASIBLE

    def test_continuous_bottom_lp(self, e_tu):
        res = solve_hierarchical(e_tu, {"x": Fraction(0)}, 1)
        assert res.value == -3

    def test_double_loop_random(self):
        # two-level all-integer tails against an argmin-then-argmin double loop
        from oracles import random_bilevel
        from norobi.model import instance_from_dict
        for seed in range(40):
            doc = random_bilevel(seed)
            inst = instance_from_dict(doc)
            p = Plain(doc)
            ref = reaction(p, 0, {})
            res = solve_hierarchical(inst, {}, 0)
            if ref[0] is None:
                assert res.status is Status.INFEASIBLE
            else:
                assert res.value == ref[0]
                assert {k: res.witness[k] for k in ref[1][0]} in ref[1]


class TestTU:
    def test_identity(self):
        assert is_totally_unimodular([[1, 0], [0, 1]])

    def test_det_two(self):
        assert not is_totally_unimodular([[1, 1], [-1, 1]])

    def test_e_tu_matrix(self):
        box = sub([cont("y1"), cont("y2")], LinearExpr({"y1": -2, "y2": -1}))
        m = constraint_matrix(box)
        assert is_totally_unimodular(m)
        assert not is_totally_unimodular(m + [[Fraction(-2), Fraction(-1)]])

    def test_brute_force_agrees(self):
        rng = random.Random(3)
        for _ in range(50):
            m = [[rng.choice((-1, 0, 1)) for _ in range(3)] for _ in range(3)]
            ok = True
            for k in range(1, 4):
                for rs in itertools.combinations(range(3), k):
                    for cs in itertools.combinations(range(3), k):
                        if abs(_naive_det([[m[r][c] for c in cs] for r in rs])) > 1:
                            ok = False
            assert is_totally_unimodular(m) == ok

    def test_cap(self):
        with pytest.raises(OracleCapExceeded):
            is_totally_unimodular([[1] * 13 for _ in range(12)])


def _naive_det(m):
    if len(m) == 1:
        return m[0][0]
    return sum((-1) ** j * m[0][j] * _naive_det([r[:j] + r[j + 1:] for r in m[1:]]) for j in range(len(m)))


def test_rat_helper_matches_library():
    assert rat("3/6") == Fraction(1, 2)
