"""Predicates over replicated variables.

A predicate file describes the *violation* condition in disjunctive normal
form: a list of conjunctive clauses over ``var == value`` literals.  The
``connective`` decides how clauses combine across replicas:

* ``or``  - the condition holds when some clause holds on some server's copy.
* ``and`` - every clause must hold, each on some server's copy (the servers
  may differ per clause).  The edge-lock predicate is of this form.

Per-replica evaluation can optionally take the version vector of every copy.
Then a copy only counts while no other witness server in the same cut holds a
strictly newer version of that variable.
"""

from __future__ import annotations

import enum
import itertools
import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from functools import cached_property
from typing import Mapping

from .versions import VersionOrder, VersionVector


class PredicateError(ValueError):
    pass


class Kind(str, enum.Enum):
    LINEAR = "linear"
    SEMILINEAR = "semilinear"


class Connective(str, enum.Enum):
    OR = "or"
    AND = "and"


@dataclass(frozen=True)
class Literal:
    var: str
    expected: str

    def __post_init__(self):
        if not self.var:
            raise PredicateError("literal with empty variable name")


@dataclass(frozen=True)
class Clause:
    id: int
    literals: tuple[Literal, ...]

    def __post_init__(self):
        if not self.literals:
            raise PredicateError(f"clause {self.id} has no literals")
        names = [lit.var for lit in self.literals]
        if len(set(names)) != len(names):
            raise PredicateError(f"clause {self.id} repeats a variable")

    def holds(self, copy: Mapping[str, str]) -> bool:
        return all(copy.get(lit.var) == lit.expected for lit in self.literals)


@dataclass(frozen=True)
class PredicateSpec:
    name: str
    kind: Kind
    connective: Connective
    clauses: tuple[Clause, ...]

    def __post_init__(self):
        if not self.clauses:
            raise PredicateError("predicate without clauses")
        ids = [c.id for c in self.clauses]
        if len(set(ids)) != len(ids):
            raise PredicateError("duplicate clause ids")

    @cached_property
    def vars(self) -> frozenset[str]:
        return frozenset(lit.var for c in self.clauses for lit in c.literals)

    @cached_property
    def full_mask(self) -> int:
        return (1 << len(self.clauses)) - 1

    def local_mask(self, copy: Mapping[str, str]) -> int:
        """Bitmask of clauses satisfied by one server's copies."""
        m = 0
        for i, c in enumerate(self.clauses):
            if c.holds(copy):
                m |= 1 << i
        return m


def relevant_vars(spec: PredicateSpec) -> frozenset[str]:
    return spec.vars


# --------------------------------------------------------------------------
# XML
# --------------------------------------------------------------------------


def parse_xml(text: str, name: str | None = None) -> PredicateSpec:
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        raise PredicateError(f"malformed XML: {exc}") from exc
    if root.tag != "predicate":
        raise PredicateError(f"root element must be <predicate>, got <{root.tag}>")
    type_el = root.find("type")
    if type_el is None or not (type_el.text or "").strip():
        raise PredicateError("missing <type>")
    try:
        kind = Kind(type_el.text.strip())
    except ValueError:
        raise PredicateError(f"unknown predicate type {type_el.text.strip()!r}") from None
    conn_attr = root.get("connective", "or").strip().lower()
    try:
        connective = Connective(conn_attr)
    except ValueError:
        raise PredicateError(f"unknown connective {conn_attr!r}") from None
    clauses = []
    for cel in root.findall("conjClause"):
        id_el = cel.find("id")
        if id_el is None:
            raise PredicateError("clause without <id>")
        try:
            cid = int(id_el.text.strip())
        except (TypeError, ValueError):
            raise PredicateError(f"bad clause id {id_el.text!r}") from None
        lits = []
        for vel in cel.findall("var"):
            n_el, v_el = vel.find("name"), vel.find("value")
            if n_el is None or v_el is None:
                raise PredicateError("<var> needs <name> and <value>")
            lits.append(Literal((n_el.text or "").strip(), (v_el.text or "").strip()))
        clauses.append(Clause(cid, tuple(lits)))
    if not clauses:
        raise PredicateError("predicate has no <conjClause>")
    return PredicateSpec(name or root.get("name") or "predicate", kind, connective, tuple(clauses))


def serialize_xml(spec: PredicateSpec) -> str:
    attrs = f' name="{spec.name}"'
    if spec.connective is Connective.AND:
        attrs += ' connective="and"'
    lines = [f"<predicate{attrs}>", f"  <type>{spec.kind.value}</type>"]
    for c in spec.clauses:
        lines.append("  <conjClause>")
        lines.append(f"    <id>{c.id}</id>")
        for lit in c.literals:
            lines.append("    <var>")
            lines.append(f"      <name>{lit.var}</name> <value>{lit.expected}</value>")
            lines.append("    </var>")
        lines.append("  </conjClause>")
    lines.append("</predicate>")
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# evaluation over a cut
# --------------------------------------------------------------------------


def _current_mask(
    spec: PredicateSpec,
    server,
    witnesses,
    cut: Mapping,
    versions: Mapping,
) -> int:
    copy = cut[server]
    mine = versions.get(server, {})
    stale = set()
    for var in spec.vars:
        v = mine.get(var)
        if v is None:
            continue
        for other in witnesses:
            if other == server:
                continue
            ov = versions.get(other, {}).get(var)
            if ov is not None and ov.compare(v) is VersionOrder.DOMINATES:
                stale.add(var)
                break
    m = 0
    for i, c in enumerate(spec.clauses):
        if all(lit.var not in stale and copy.get(lit.var) == lit.expected for lit in c.literals):
            m |= 1 << i
    return m


def witness_sets(spec: PredicateSpec, cut: Mapping, versions: Mapping | None = None):
    """Yield every server subset that witnesses the violation condition."""
    servers = sorted(cut)
    masks = {s: spec.local_mask(cut[s]) for s in servers}
    if spec.connective is Connective.OR:
        for s in servers:
            if masks[s]:
                yield (s,)
        return
    useful = [s for s in servers if masks[s]]
    for size in range(1, len(useful) + 1):
        for group in itertools.combinations(useful, size):
            union = 0
            for s in group:
                union |= masks[s]
            if union != spec.full_mask:
                continue
            if versions is not None:
                union = 0
                for s in group:
                    union |= _current_mask(spec, s, group, cut, versions)
                if union != spec.full_mask:
                    continue
            yield group


def evaluate_cut(spec: PredicateSpec, cut: Mapping, versions: Mapping | None = None) -> bool:
    """True when the violation condition holds on ``cut``.

    ``cut`` maps server -> {var: value}.  ``versions`` optionally maps
    server -> {var: VersionVector} for the same copies.
    """
    return next(witness_sets(spec, cut, versions), None) is not None


# --------------------------------------------------------------------------
# edge-lock inference and monitor assignment
# --------------------------------------------------------------------------

_FLAG = re.compile(r"^flag(\d+)_(\d+)_(\d+)$")
_TURN = re.compile(r"^turn(\d+)_(\d+)$")


def mutex_spec(a: int, b: int) -> PredicateSpec:
    if not a < b:
        raise PredicateError(f"edge endpoints must satisfy A < B, got {a}_{b}")
    turn = f"turn{a}_{b}"
    return PredicateSpec(
        f"mutex_{a}_{b}",
        Kind.SEMILINEAR,
        Connective.AND,
        (
            Clause(0, (Literal(f"flag{a}_{b}_{a}", "true"), Literal(turn, str(a)))),
            Clause(1, (Literal(f"flag{a}_{b}_{b}", "true"), Literal(turn, str(b)))),
        ),
    )


def infer_from_varname(var: str) -> PredicateSpec | None:
    m = _FLAG.match(var)
    if m:
        a, b, x = (int(g) for g in m.groups())
        if x not in (a, b):
            raise PredicateError(f"{var}: owner {x} is not an endpoint of edge {a}_{b}")
        return mutex_spec(a, b)
    m = _TURN.match(var)
    if m:
        a, b = (int(g) for g in m.groups())
        return mutex_spec(a, b)
    return None


_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_M64 = (1 << 64) - 1


def fnv1a_64(data: bytes) -> int:
    h = _FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * _FNV_PRIME) & _M64
    return h


def assign_monitor(predicate_name: str, monitor_count: int) -> int:
    if monitor_count < 1:
        raise ValueError("monitor_count must be >= 1")
    return fnv1a_64(predicate_name.encode("utf-8")) % monitor_count


def versions_of(state: Mapping[str, tuple[str, VersionVector | None]]):
    """Split a ``{var: (value, version)}`` snapshot into two maps."""
    values = {k: v[0] for k, v in state.items()}
    vers = {k: v[1] for k, v in state.items() if v[1] is not None}
    return values, vers
