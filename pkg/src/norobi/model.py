"""Exact data model for multilevel problems with near-optimality robustness.

Every number in the core is a :class:`fractions.Fraction`. Constraints are
stored normalized as ``expr <= 0`` and every objective is minimized.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Iterable, Mapping

Rational = Fraction
Assignment = dict  # variable name -> Fraction


class InstanceError(ValueError):
    """Malformed or semantically invalid instance input."""


class Kind(str, enum.Enum):
    INT = "int"
    CONT = "cont"


class Mode(str, enum.Enum):
    CONSTRAINTS = "constraints"
    CONSTRAINTS_AND_OBJECTIVE = "constraints_and_objective"


def parse_rational(text, where: str = "value") -> Fraction:
    """Parse ``"p/q"`` or a decimal-integer string exactly.

    Plain JSON integers are accepted too; floats are refused since they
    cannot be read back exactly.
    """
    if isinstance(text, bool):
        raise InstanceError(f"{where}: expected a rational, got {text!r}")
    if isinstance(text, int):
        return Fraction(text)
    if isinstance(text, Fraction):
        return text
    if not isinstance(text, str):
        raise InstanceError(f"{where}: expected a rational string, got {text!r}")
    s = text.strip()
    num, sep, den = s.partition("/")
    try:
        p = int(num)
        q = int(den) if sep else 1
    except ValueError:
        raise InstanceError(f"{where}: malformed rational {text!r}") from None
    if q == 0:
        raise InstanceError(f"{where}: denominator zero in {text!r}")
    return Fraction(p, q)


def format_rational(q: Fraction) -> str:
    q = Fraction(q)
    if q.denominator == 1:
        return str(q.numerator)
    return f"{q.numerator}/{q.denominator}"


@dataclass(frozen=True)
class Variable:
    name: str
    level: int
    kind: Kind
    lb: Fraction | None
    ub: Fraction | None

    @property
    def is_integer(self) -> bool:
        return self.kind is Kind.INT

    @property
    def bounded(self) -> bool:
        return self.lb is not None and self.ub is not None

    def int_range(self) -> range:
        return range(math.ceil(self.lb), math.floor(self.ub) + 1)

    def contains(self, value: Fraction) -> bool:
        if self.lb is not None and value < self.lb:
            return False
        if self.ub is not None and value > self.ub:
            return False
        return not self.is_integer or Fraction(value).denominator == 1


class LinearExpr:
    """Affine form ``sum(coef * var) + constant`` with exact coefficients."""

    __slots__ = ("terms", "constant", "_scaled")

    def __init__(self, terms: Mapping[str, Fraction] | None = None, constant=0):
        self.terms = {v: Fraction(c) for v, c in (terms or {}).items() if c != 0}
        self.constant = Fraction(constant)
        self._scaled = None

    @classmethod
    def var(cls, name: str, coef=1) -> LinearExpr:
        return cls({name: coef})

    def variables(self) -> set[str]:
        return set(self.terms)

    def coefficient(self, name: str) -> Fraction:
        return self.terms.get(name, Fraction(0))

    def __add__(self, other) -> LinearExpr:
        if not isinstance(other, LinearExpr):
            return LinearExpr(self.terms, self.constant + Fraction(other))
        terms = dict(self.terms)
        for v, c in other.terms.items():
            terms[v] = terms.get(v, 0) + c
        return LinearExpr(terms, self.constant + other.constant)

    __radd__ = __add__

    def __neg__(self) -> LinearExpr:
        return LinearExpr({v: -c for v, c in self.terms.items()}, -self.constant)

    def __sub__(self, other) -> LinearExpr:
        return self + (-other if isinstance(other, LinearExpr) else -Fraction(other))

    def __rsub__(self, other) -> LinearExpr:
        return (-self) + other

    def __mul__(self, alpha) -> LinearExpr:
        alpha = Fraction(alpha)
        return LinearExpr({v: alpha * c for v, c in self.terms.items()},
                          alpha * self.constant)

    __rmul__ = __mul__

    def __eq__(self, other) -> bool:
        if not isinstance(other, LinearExpr):
            return NotImplemented
        return self.terms == other.terms and self.constant == other.constant

    def __hash__(self):
        return hash((frozenset(self.terms.items()), self.constant))

    def __repr__(self) -> str:
        return f"LinearExpr({self})"

    def __str__(self) -> str:
        parts = []
        for v in sorted(self.terms):
            c = self.terms[v]
            if c == 1:
                parts.append(f"+ {v}")
            elif c == -1:
                parts.append(f"- {v}")
            elif c < 0:
                parts.append(f"- {format_rational(-c)}*{v}")
            else:
                parts.append(f"+ {format_rational(c)}*{v}")
        if self.constant or not parts:
            c = self.constant
            parts.append(f"- {format_rational(-c)}" if c < 0 else f"+ {format_rational(c)}")
        s = " ".join(parts)
        return s[2:] if s.startswith("+ ") else "-" + s[2:]

    def substitute(self, fixed: Mapping[str, Fraction]) -> LinearExpr:
        """Replace every variable present in ``fixed`` by its value."""
        terms = {}
        const = self.constant
        for v, c in self.terms.items():
            if v in fixed:
                const += c * fixed[v]
            else:
                terms[v] = c
        return LinearExpr(terms, const)

    def evaluate(self, a: Mapping[str, Fraction]) -> Fraction:
        return evaluate(self, a)

    def scaled(self) -> tuple[dict[str, int], int, int]:
        """Integer form ``(coefs, constant, scale)`` with ``scale * self`` integral."""
        if self._scaled is None:
            den = self.constant.denominator
            for c in self.terms.values():
                den = den * c.denominator // math.gcd(den, c.denominator)
            coefs = {v: int(c * den) for v, c in self.terms.items()}
            self._scaled = (coefs, int(self.constant * den), den)
        return self._scaled

    def bounds_over(self, variables: Mapping[str, Variable]) -> tuple[Fraction, Fraction]:
        """Interval of the expression over the variables' bounding box."""
        lo = hi = self.constant
        for v, c in self.terms.items():
            var = variables[v]
            if c > 0:
                lo += c * var.lb
                hi += c * var.ub
            else:
                lo += c * var.ub
                hi += c * var.lb
        return lo, hi

    def to_json(self) -> dict:
        return {
            "terms": {v: format_rational(self.terms[v]) for v in sorted(self.terms)},
            "constant": format_rational(self.constant),
        }


def evaluate(expr: LinearExpr, a: Mapping[str, Fraction]) -> Fraction:
    total = expr.constant
    for v, c in expr.terms.items():
        try:
            total += c * a[v]
        except KeyError:
            raise KeyError(f"variable {v!r} missing from assignment") from None
    return total


@dataclass(frozen=True)
class Constraint:
    name: str
    expr: LinearExpr  # read as expr <= 0

    def satisfied(self, a: Mapping[str, Fraction]) -> bool:
        return evaluate(self.expr, a) <= 0


@dataclass(frozen=True)
class LevelProblem:
    index: int
    objective: LinearExpr
    constraints: tuple[Constraint, ...] = ()

    def constraint(self, key: int | str) -> Constraint:
        if isinstance(key, int):
            return self.constraints[key]
        for con in self.constraints:
            if con.name == key:
                return con
        raise KeyError(f"level {self.index} has no constraint {key!r}")

    def referenced(self) -> set[str]:
        names = self.objective.variables()
        for con in self.constraints:
            names |= con.expr.variables()
        return names


@dataclass(frozen=True)
class NearOptimalitySpec:
    deviating_level: int
    delta: Fraction
    protected_levels: frozenset[int]
    mode: Mode = Mode.CONSTRAINTS


@dataclass(frozen=True)
class MultilevelInstance:
    levels: tuple[LevelProblem, ...]
    variables: tuple[Variable, ...]
    nos: NearOptimalitySpec | None = None
    _index: dict = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "_index", {v.name: v for v in self.variables})

    @property
    def depth(self) -> int:
        return len(self.levels)

    @property
    def by_name(self) -> dict[str, Variable]:
        return self._index

    def variable(self, name: str) -> Variable:
        return self._index[name]

    def names(self) -> list[str]:
        return [v.name for v in self.variables]

    def variables_at(self, level: int) -> list[Variable]:
        return [v for v in self.variables if v.level == level]

    def variables_from(self, level: int) -> list[Variable]:
        return [v for v in self.variables if v.level >= level]

    def variables_above(self, level: int) -> list[Variable]:
        return [v for v in self.variables if v.level < level]

    def with_nos(self, nos: NearOptimalitySpec | None) -> MultilevelInstance:
        return replace(self, nos=nos)

    def with_delta(self, delta) -> MultilevelInstance:
        if self.nos is None:
            raise InstanceError("instance has no near_optimality section")
        return replace(self, nos=replace(self.nos, delta=Fraction(delta)))


# ---------------------------------------------------------------------------
# JSON format

def _expr_from_json(obj, where: str, known: Mapping[str, Variable]) -> LinearExpr:
    if not isinstance(obj, dict):
        raise InstanceError(f"{where}: expected an object with 'terms' and 'constant'")
    terms_obj = obj.get("terms", {})
    if not isinstance(terms_obj, dict):
        raise InstanceError(f"{where}.terms: expected an object")
    terms = {}
    for name, coef in terms_obj.items():
        if name not in known:
            raise InstanceError(f"{where}: unknown variable {name!r}")
        terms[name] = parse_rational(coef, f"{where}.terms.{name}")
    const = parse_rational(obj.get("constant", "0"), f"{where}.constant")
    return LinearExpr(terms, const)


def _constraint_from_json(obj, where: str, known) -> list[Constraint]:
    if not isinstance(obj, dict) or "name" not in obj or "expr" not in obj:
        raise InstanceError(f"{where}: constraint needs 'name' and 'expr'")
    name = obj["name"]
    if not isinstance(name, str) or not name:
        raise InstanceError(f"{where}.name: expected a non-empty string")
    expr = _expr_from_json(obj["expr"], f"{where} ({name}).expr", known)
    sense = obj.get("sense", "<=")
    if sense == "<=":
        return [Constraint(name, expr)]
    if sense == ">=":
        return [Constraint(name, -expr)]
    if sense == "==":
        return [Constraint(f"{name}[le]", expr), Constraint(f"{name}[ge]", -expr)]
    raise InstanceError(f"{where} ({name}).sense: unknown sense {sense!r}")


def instance_from_dict(doc) -> MultilevelInstance:
    if not isinstance(doc, dict):
        raise InstanceError("document: expected a JSON object")
    for key in ("variables", "levels"):
        if key not in doc:
            raise InstanceError(f"document: missing '{key}'")
    raw_levels = doc["levels"]
    if not isinstance(raw_levels, list) or not raw_levels:
        raise InstanceError("levels: expected a non-empty array")
    nlev = len(raw_levels)

    variables = []
    seen = {}
    for i, rv in enumerate(doc["variables"]):
        where = f"variables[{i}]"
        if not isinstance(rv, dict):
            raise InstanceError(f"{where}: expected an object")
        name = rv.get("name")
        if not isinstance(name, str) or not name:
            raise InstanceError(f"{where}.name: expected a non-empty string")
        where = f"variable {name!r}"
        if name in seen:
            raise InstanceError(f"{where}: duplicate name")
        level = rv.get("level")
        if not isinstance(level, int) or isinstance(level, bool) or not 0 <= level < nlev:
            raise InstanceError(f"{where}: level {level!r} out of range 0..{nlev - 1}")
        try:
            kind = Kind(rv.get("kind"))
        except ValueError:
            raise InstanceError(f"{where}: kind must be 'int' or 'cont'") from None
        lb = None if rv.get("lb") is None else parse_rational(rv["lb"], f"{where}.lb")
        ub = None if rv.get("ub") is None else parse_rational(rv["ub"], f"{where}.ub")
        if lb is not None and ub is not None and lb > ub:
            raise InstanceError(f"{where}: bad bounds, lb {format_rational(lb)} > ub {format_rational(ub)}")
        var = Variable(name, level, kind, lb, ub)
        seen[name] = var
        variables.append(var)

    levels = []
    for idx, rl in enumerate(raw_levels):
        where = f"levels[{idx}]"
        if not isinstance(rl, dict):
            raise InstanceError(f"{where}: expected an object")
        objective = _expr_from_json(rl.get("objective", {}), f"{where}.objective", seen)
        sense = rl.get("sense", "minimize")
        if sense in ("maximize", "max"):
            objective = -objective
        elif sense not in ("minimize", "min"):
            raise InstanceError(f"{where}.sense: unknown sense {sense!r}")
        cons = []
        for j, rc in enumerate(rl.get("constraints", [])):
            cons.extend(_constraint_from_json(rc, f"{where}.constraints[{j}]", seen))
        names = [c.name for c in cons]
        dup = {n for n in names if names.count(n) > 1}
        if dup:
            raise InstanceError(f"{where}: duplicate constraint name {sorted(dup)[0]!r}")
        levels.append(LevelProblem(idx, objective, tuple(cons)))

    nos = None
    if doc.get("near_optimality") is not None:
        nos = _nos_from_json(doc["near_optimality"], nlev)
    return MultilevelInstance(tuple(levels), tuple(variables), nos)


def _nos_from_json(obj, nlev: int) -> NearOptimalitySpec:
    where = "near_optimality"
    if not isinstance(obj, dict):
        raise InstanceError(f"{where}: expected an object")
    d = obj.get("deviating_level")
    if not isinstance(d, int) or isinstance(d, bool):
        raise InstanceError(f"{where}.deviating_level: expected an integer")
    if d == 0:
        raise InstanceError(f"{where}.deviating_level: top level cannot deviate")
    if not 0 < d < nlev:
        raise InstanceError(f"{where}.deviating_level: {d} out of range 1..{nlev - 1}")
    delta = parse_rational(obj.get("delta"), f"{where}.delta")
    if delta < 0:
        raise InstanceError(f"{where}.delta: must be nonnegative")
    prot = obj.get("protected_levels", [0])
    if not isinstance(prot, list) or not prot:
        raise InstanceError(f"{where}.protected_levels: expected a non-empty array")
    for p in prot:
        if not isinstance(p, int) or isinstance(p, bool) or not 0 <= p < d:
            raise InstanceError(f"{where}.protected_levels: level {p!r} is not above the deviating level {d}")
    try:
        mode = Mode(obj.get("mode", "constraints"))
    except ValueError:
        raise InstanceError(f"{where}.mode: unknown mode {obj.get('mode')!r}") from None
    if mode is Mode.CONSTRAINTS_AND_OBJECTIVE and set(prot) != {0}:
        raise InstanceError(f"{where}.mode: constraints_and_objective requires protected_levels [0]")
    return NearOptimalitySpec(d, delta, frozenset(prot), mode)


def parse_instance(text: str, strict: bool = True) -> MultilevelInstance:
    """Parse a JSON instance document.

    With ``strict`` the instance must also pass :func:`validate`; the error
    message then lists every violation.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceError(f"syntax error at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    inst = instance_from_dict(doc)
    if strict:
        report = validate(inst)
        if not report.clean:
            raise InstanceError("; ".join(str(e) for e in report.entries))
    return inst


def load_instance(path, strict: bool = True) -> MultilevelInstance:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise InstanceError(f"{path}: {exc.strerror}") from None
    try:
        return parse_instance(text, strict=strict)
    except InstanceError as exc:
        raise InstanceError(f"{path}: {exc}") from None


def instance_to_dict(inst: MultilevelInstance) -> dict:
    doc = {
        "variables": [
            {
                "name": v.name,
                "level": v.level,
                "kind": v.kind.value,
                "lb": None if v.lb is None else format_rational(v.lb),
                "ub": None if v.ub is None else format_rational(v.ub),
            }
            for v in inst.variables
        ],
        "levels": [
            {
                "objective": lvl.objective.to_json(),
                "constraints": [{"name": c.name, "expr": c.expr.to_json()} for c in lvl.constraints],
            }
            for lvl in inst.levels
        ],
    }
    if inst.nos is not None:
        doc["near_optimality"] = {
            "deviating_level": inst.nos.deviating_level,
            "delta": format_rational(inst.nos.delta),
            "protected_levels": sorted(inst.nos.protected_levels),
            "mode": inst.nos.mode.value,
        }
    return doc


def serialize_instance(inst: MultilevelInstance) -> str:
    return json.dumps(instance_to_dict(inst), indent=2) + "\n"


# ---------------------------------------------------------------------------
# Validation

@dataclass(frozen=True)
class Violation:
    kind: str
    subject: str
    message: str

    def __str__(self):
        return f"{self.kind}: {self.message}"


@dataclass
class ValidationReport:
    entries: list[Violation] = field(default_factory=list)

    @property
    def clean(self) -> bool:
        return not self.entries

    def kinds(self) -> set[str]:
        return {e.kind for e in self.entries}


def validate(inst: MultilevelInstance) -> ValidationReport:
    """Check solver admissibility.

    Reports bad or missing bounds, empty levels, variables owned by no level,
    and continuous variables referenced by a level that decides after the
    variable's owner.
    """
    report = ValidationReport()
    nlev = inst.depth
    for v in inst.variables:
        if not 0 <= v.level < nlev:
            report.entries.append(Violation("bad level", v.name, f"variable {v.name!r} owned by missing level {v.level}"))
        if not v.bounded:
            report.entries.append(Violation("unbounded domain", v.name, f"variable {v.name!r} needs finite lb and ub"))
        elif v.lb > v.ub:
            report.entries.append(Violation("bad bounds", v.name, f"variable {v.name!r} has lb > ub"))
        elif v.is_integer and not v.int_range():
            report.entries.append(Violation("bad bounds", v.name, f"integer variable {v.name!r} has no integer in its bounds"))
    for idx, lvl in enumerate(inst.levels):
        if lvl.index != idx:
            report.entries.append(Violation("bad level", f"level {idx}", f"level at position {idx} carries index {lvl.index}"))
        if not inst.variables_at(idx):
            report.entries.append(Violation("empty level", f"level {idx}", f"level {idx} owns no variable"))
        for name in sorted(lvl.referenced()):
            var = inst.by_name.get(name)
            if var is None:
                report.entries.append(Violation("unknown variable", name, f"level {idx} references unknown variable {name!r}"))
            elif var.kind is Kind.CONT and var.level < idx:
                report.entries.append(Violation(
                    "property 1", name,
                    f"continuous variable {name!r} of level {var.level} appears in level {idx}"))
    return report


# ---------------------------------------------------------------------------
# Anticipation graph

@dataclass(frozen=True)
class Node:
    id: str
    label: str
    kind: str  # "level" | "adversary"


@dataclass(frozen=True)
class Arc:
    source: str
    target: str
    kind: str  # "param" | "anticipate"


@dataclass
class Graph:
    nodes: list[Node]
    arcs: list[Arc]

    def arc_set(self) -> set[tuple[str, str, str]]:
        return {(a.source, a.target, a.kind) for a in self.arcs}

    def to_dot(self) -> str:
        lines = ["digraph anticipation {"]
        for n in self.nodes:
            shape = "box" if n.kind == "adversary" else "ellipse"
            lines.append(f'  "{n.id}" [label="{n.label}", shape={shape}];')
        for a in self.arcs:
            if a.kind == "param":
                lines.append(f'  "{a.source}" -> "{a.target}" [style=dashed, label="param"];')
            else:
                lines.append(f'  "{a.source}" -> "{a.target}" [style=solid, label="anticipate"];')
        lines.append("}")
        return "\n".join(lines) + "\n"


def _level_labels(inst: MultilevelInstance) -> list[str]:
    n = inst.depth
    nos = inst.nos
    if n == 2:
        return ["U", "L"]
    if nos is not None and nos.deviating_level == n - 1 and len(nos.protected_levels) > 1:
        return [f"U{i + 1}" for i in range(n - 1)] + ["L"]
    return ["U"] + [f"L{i}" for i in range(1, n)]


def sensitive(inst: MultilevelInstance, con: Constraint, deviating_level: int) -> bool:
    """True when ``con`` references a variable at or below the deviating level."""
    return any(inst.variable(v).level >= deviating_level for v in con.expr.variables())


def anticipation_graph(inst: MultilevelInstance) -> Graph:
    """Levels and adversaries with their parameterization/anticipation arcs.

    Arcs point from the deciding level to the level or adversary it is
    linked with. Every level anticipates and is linked by parameterization
    to every later level, except that a level not directly above the
    deviating level reaches it through its adversaries only. Each adversary
    is parameterized from its protected level and anticipated by every
    level down to the deviating one.
    """
    labels = _level_labels(inst)
    nodes = [Node(f"level{i}", labels[i], "level") for i in range(inst.depth)]
    arcs = []
    d = inst.nos.deviating_level if inst.nos is not None else None
    for i in range(inst.depth):
        for j in range(i + 1, inst.depth):
            if d is None or j != d or i == d - 1:
                arcs.append(Arc(f"level{i}", f"level{j}", "anticipate"))
            arcs.append(Arc(f"level{i}", f"level{j}", "param"))
    if inst.nos is not None:
        advs = []
        for p in sorted(inst.nos.protected_levels):
            for con in inst.levels[p].constraints:
                if sensitive(inst, con, d):
                    advs.append((p, con.name))
        if inst.nos.mode is Mode.CONSTRAINTS_AND_OBJECTIVE and not is_alt_form(inst):
            advs.append((0, "objective"))
        for p, cname in advs:
            aid = f"adv{p}:{cname}"
            label = "A" if len(advs) == 1 else f"A{p + 1}" if len(inst.nos.protected_levels) > 1 else f"A[{cname}]"
            nodes.append(Node(aid, label, "adversary"))
            arcs.append(Arc(f"level{p}", aid, "param"))
            for i in range(d + 1):
                arcs.append(Arc(f"level{i}", aid, "anticipate"))
    return Graph(nodes, arcs)


ALT_CONSTRAINT = "objective_epigraph"


def is_alt_form(inst: MultilevelInstance) -> bool:
    """Whether the objective-protecting epigraph has already been added."""
    return any(c.name == ALT_CONSTRAINT for c in inst.levels[0].constraints)


def fresh_name(base: str, taken: Iterable[str]) -> str:
    taken = set(taken)
    if base not in taken:
        return base
    i = 1
    while f"{base}_{i}" in taken:
        i += 1
    return f"{base}_{i}"


def check_assignment(inst: MultilevelInstance, a: Mapping[str, Fraction]) -> None:
    """Raise InstanceError when ``a`` misses or adds variables."""
    names = set(inst.by_name)
    missing = [n for n in inst.names() if n not in a]
    if missing:
        raise InstanceError(f"missing variable {missing[0]}")
    extra = sorted(set(a) - names)
    if extra:
        raise InstanceError(f"unknown variable {extra[0]}")
