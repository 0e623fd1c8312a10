"""Builders for epigraph forms, near-optimality cuts and adversarial problems.

Every builder is a pure function of its inputs. Solving the products is the
job of :mod:`norobi.subsolver`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Mapping

from .model import (
    ALT_CONSTRAINT,
    Constraint,
    InstanceError,
    Kind,
    LevelProblem,
    LinearExpr,
    Mode,
    MultilevelInstance,
    NearOptimalitySpec,
    Variable,
    fresh_name,
    is_alt_form,
    sensitive,
)

CUT_NAME = "near_optimality"


class InsensitiveConstraint(Exception):
    """The protected constraint references no deviating-or-lower variable."""


@dataclass(frozen=True)
class Subproblem:
    """Single-level problem ``min objective s.t. constraints <= 0``.

    ``frozen`` records the parameter values already substituted into the
    expressions. When ``tail`` is non-empty, every point must additionally
    be completed by an optimal optimistic response of the tail levels
    (whose variables are ``tail_variables``).
    """

    variables: tuple[Variable, ...]
    objective: LinearExpr
    constraints: tuple[Constraint, ...]
    frozen: dict = field(default_factory=dict)
    tail: tuple[LevelProblem, ...] = ()
    tail_variables: tuple[Variable, ...] = ()

    def names(self) -> list[str]:
        return [v.name for v in self.variables]

    def parameters(self) -> set[str]:
        """Referenced names that are neither free nor tail variables."""
        own = set(self.names()) | {v.name for v in self.tail_variables}
        refs = set(self.objective.variables())
        for c in self.constraints:
            refs |= c.expr.variables()
        for lvl in self.tail:
            refs |= lvl.referenced()
        return refs - own

    def as_instance(self) -> MultilevelInstance:
        """View as an optimistic multilevel instance without robustness."""
        top = LevelProblem(0, self.objective, self.constraints)
        levels = [top] + [replace(l, index=i + 1) for i, l in enumerate(self.tail)]
        offset = {lvl.index: i + 1 for i, lvl in enumerate(self.tail)}
        variables = [replace(v, level=0) for v in self.variables]
        variables += [replace(v, level=offset[v.level]) for v in self.tail_variables]
        return MultilevelInstance(tuple(levels), tuple(variables))


@dataclass(frozen=True)
class Adversary:
    level: int
    constraint: str
    subproblem: Subproblem


@dataclass(frozen=True)
class AdversarySet:
    adversaries: tuple[Adversary, ...]

    def __len__(self):
        return len(self.adversaries)

    def __iter__(self):
        return iter(self.adversaries)


def _require_nos(inst: MultilevelInstance) -> NearOptimalitySpec:
    if inst.nos is None:
        raise InstanceError("instance has no near_optimality section")
    return inst.nos


def epigraph_form(level: LevelProblem, inst: MultilevelInstance,
                  fixed: Mapping[str, Fraction] | None = None) -> Subproblem:
    """Move the level's objective into a constraint ``f - u <= 0``; minimize ``u``.

    The bound variable is integer when the level is all-integer with an
    integral objective (after substituting ``fixed``), so the epigraph stays
    pure-integer; otherwise it is continuous. Its bounds are the range of the
    objective over the variable box.
    """
    fixed = dict(fixed or {})
    own = [v for v in inst.variables_at(level.index)]
    f = level.objective.substitute(fixed)
    lo, hi = f.bounds_over(inst.by_name)
    integral = (all(v.is_integer for v in own)
                and all(c.denominator == 1 for c in f.terms.values())
                and f.constant.denominator == 1
                and all(inst.variable(v).is_integer for v in f.terms))
    uname = fresh_name("u", inst.by_name)
    if integral:
        u = Variable(uname, level.index, Kind.INT, Fraction(math.floor(lo)), Fraction(math.ceil(hi)))
    else:
        u = Variable(uname, level.index, Kind.CONT, lo, hi)
    cons = [Constraint("epigraph", f - LinearExpr.var(uname))]
    cons += [Constraint(c.name, c.expr.substitute(fixed)) for c in level.constraints]
    return Subproblem(tuple(own) + (u,), LinearExpr.var(uname), tuple(cons), fixed)


def near_optimality_cut(inst: MultilevelInstance, x: Mapping[str, Fraction],
                        fstar, delta) -> LinearExpr:
    """``f(x, .) - fstar - delta`` for the deviating level's objective ``f``."""
    nos = _require_nos(inst)
    f = inst.levels[nos.deviating_level].objective
    return f.substitute(x) - Fraction(fstar) - Fraction(delta)


def _check_prefix(inst: MultilevelInstance, x: Mapping[str, Fraction], level: int) -> dict:
    above = inst.variables_above(level)
    missing = [v.name for v in above if v.name not in x]
    if missing:
        raise InstanceError(f"decision of {missing[0]!r} is required to build the adversary")
    return {v.name: Fraction(x[v.name]) for v in above}


def build_adversarial(inst: MultilevelInstance, protected_level: int, k: int | str,
                      x: Mapping[str, Fraction], fstar) -> Subproblem:
    """Adversary maximizing constraint ``k`` of ``protected_level`` over the near-optimal set.

    The subproblem minimizes ``-G_k(x, .)`` over the deviating level's
    variables subject to that level's constraints and the near-optimality
    cut. Levels below the deviating one form the tail and respond
    optimistically to the adversary's choice.
    """
    nos = _require_nos(inst)
    d = nos.deviating_level
    con = inst.levels[protected_level].constraint(k)
    if not sensitive(inst, con, d):
        raise InsensitiveConstraint(f"constraint {con.name!r} is insensitive to level {d}")
    fixed = _check_prefix(inst, x, d)
    cut = near_optimality_cut(inst, fixed, fstar, nos.delta)
    lower = inst.levels[d]
    cons = tuple(Constraint(c.name, c.expr.substitute(fixed)) for c in lower.constraints)
    cons += (Constraint(fresh_name(CUT_NAME, [c.name for c in cons]), cut),)
    tail = tuple(
        LevelProblem(lvl.index, lvl.objective.substitute(fixed),
                     tuple(Constraint(c.name, c.expr.substitute(fixed)) for c in lvl.constraints))
        for lvl in inst.levels[d + 1:]
    )
    return Subproblem(
        variables=tuple(inst.variables_at(d)),
        objective=-con.expr.substitute(fixed),
        constraints=cons,
        frozen=fixed,
        tail=tail,
        tail_variables=tuple(inst.variables_from(d + 1)),
    )


def build_objective_adversary(inst: MultilevelInstance, x: Mapping[str, Fraction], fstar) -> Subproblem:
    """Adversary maximizing the top objective over the near-optimal set."""
    probe = replace(inst, levels=(replace(inst.levels[0], constraints=(
        Constraint("objective", inst.levels[0].objective),)),) + inst.levels[1:])
    return build_adversarial(probe, 0, 0, x, fstar)


def build_alt(inst: MultilevelInstance) -> MultilevelInstance:
    """Protect the top objective through an epigraph variable and constraint.

    Adds a continuous top-level variable ``tau`` bounded by the range of the
    top objective over the variable box, makes ``tau`` the top objective and
    adds the protected constraint ``F - tau <= 0``.
    """
    nos = _require_nos(inst)
    if is_alt_form(inst):
        return inst
    top = inst.levels[0]
    lo, hi = top.objective.bounds_over(inst.by_name)
    tname = fresh_name("tau", inst.by_name)
    tau = Variable(tname, 0, Kind.CONT, lo, hi)
    epi = Constraint(ALT_CONSTRAINT, top.objective - LinearExpr.var(tname))
    new_top = LevelProblem(0, LinearExpr.var(tname), top.constraints + (epi,))
    return MultilevelInstance(
        (new_top,) + inst.levels[1:],
        inst.variables + (tau,),
        replace(nos, mode=Mode.CONSTRAINTS_AND_OBJECTIVE, protected_levels=frozenset({0})),
    )


def build_pessimistic(inst: MultilevelInstance) -> MultilevelInstance:
    """Same instance with zero tolerance."""
    _require_nos(inst)
    return inst.with_delta(0)


def freeze_upper(inst: MultilevelInstance, fixed: Mapping[str, Fraction], from_level: int) -> MultilevelInstance:
    """Sub-instance made of levels ``from_level..`` with upper decisions substituted.

    Level indices are shifted so the first kept level becomes the top; the
    near-optimality section is shifted alike and loses protected levels that
    were cut away.
    """
    fixed = _check_prefix(inst, fixed, from_level)
    levels = tuple(
        LevelProblem(lvl.index - from_level, lvl.objective.substitute(fixed),
                     tuple(Constraint(c.name, c.expr.substitute(fixed)) for c in lvl.constraints))
        for lvl in inst.levels[from_level:]
    )
    variables = tuple(replace(v, level=v.level - from_level) for v in inst.variables_from(from_level))
    nos = None
    if inst.nos is not None and inst.nos.deviating_level > from_level:
        prot = frozenset(p - from_level for p in inst.nos.protected_levels if p >= from_level)
        if prot:
            nos = replace(inst.nos, deviating_level=inst.nos.deviating_level - from_level,
                          protected_levels=prot)
    return MultilevelInstance(levels, variables, nos)


def build_gnormp_adversaries(inst: MultilevelInstance, x_prefix: Mapping[str, Fraction],
                             fstar=None) -> AdversarySet:
    """One adversary per sensitive constraint of every protected level.

    ``x_prefix`` fixes every decision above the deviating level. When
    ``fstar`` is omitted, the deviating level's optimum is computed with the
    exact oracle.
    """
    nos = _require_nos(inst)
    fixed = _check_prefix(inst, x_prefix, nos.deviating_level)
    if fstar is None:
        from .subsolver import solve_hierarchical, Status
        res = solve_hierarchical(inst, fixed, nos.deviating_level)
        if res.status is not Status.OPTIMAL:
            raise InstanceError("deviating level has no optimum under the given decisions")
        fstar = res.value
    advs = []
    for p in sorted(nos.protected_levels):
        for con in inst.levels[p].constraints:
            if sensitive(inst, con, nos.deviating_level):
                advs.append(Adversary(p, con.name, build_adversarial(inst, p, con.name, fixed, fstar)))
    if nos.mode is Mode.CONSTRAINTS_AND_OBJECTIVE and not is_alt_form(inst):
        advs.append(Adversary(0, "objective", build_objective_adversary(inst, fixed, fstar)))
    return AdversarySet(tuple(advs))


def subproblem_to_dict(sub: Subproblem) -> dict:
    """Serialize into the instance JSON format (no near-optimality section)."""
    from .model import instance_to_dict
    return instance_to_dict(sub.as_instance())
