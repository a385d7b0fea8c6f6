import itertools
from collections import Counter

import pytest
from hypothesis import given, strategies as st

from optikv.predicate import (
    Clause,
    Connective,
    Kind,
    Literal,
    PredicateError,
    PredicateSpec,
    assign_monitor,
    evaluate_cut,
    fnv1a_64,
    infer_from_varname,
    mutex_spec,
    parse_xml,
    relevant_vars,
    serialize_xml,
)
from optikv.versions import VersionOrder, VersionVector

SAMPLE = """
<predicate>
  <type>semilinear</type>
  <conjClause>
    <id>0</id>
    <var>
      <name>x2</name> <value>1</value>
    </var>
    <var>
      <name>y2</name> <value>1</value>
    </var>
  </conjClause>
  <conjClause>
    <id>1</id>
    <var>
      <name>z2</name> <value>1</value>
    </var>
  </conjClause>
</predicate>
"""


# ---- XML ------------------------------------------------------------------


def test_parse_sample_document():
    spec = parse_xml(SAMPLE)
    assert spec.kind is Kind.SEMILINEAR
    assert spec.connective is Connective.OR
    assert [[(lit.var, lit.expected) for lit in c.literals] for c in spec.clauses] == [
        [("x2", "1"), ("y2", "1")], [("z2", "1")]]
    assert relevant_vars(spec) == {"x2", "y2", "z2"}


def test_connective_attribute():
    spec = parse_xml(SAMPLE.replace("<predicate>", '<predicate connective="and">'))
    assert spec.connective is Connective.AND


def test_serialize_roundtrip():
    spec = parse_xml(SAMPLE, name="sample")
    again = parse_xml(serialize_xml(spec))
    assert again == spec
    assert serialize_xml(again) == serialize_xml(spec)


@pytest.mark.parametrize("doc", [
    SAMPLE.replace("semilinear", "bogus"),
    "<predicate><type>linear</type></predicate>",
    SAMPLE.replace("<id>1</id>", "<id>0</id>"),
    "<predicate><type>linear</type>",
    "<pred><type>linear</type></pred>",
    SAMPLE.replace("<predicate>", '<predicate connective="xor">'),
])
def test_bad_documents_rejected(doc):
    with pytest.raises(PredicateError):
        parse_xml(doc)


# ---- evaluation -----------------------------------------------------------


def test_peterson_cut_violates():
    spec = mutex_spec(3, 7)
    cut = {1: {"flag3_7_3": "true", "turn3_7": "3"}, 2: {"flag3_7_7": "true", "turn3_7": "7"}}
    assert evaluate_cut(spec, cut)


def test_single_copy_cannot_hold_both_turns():
    spec = mutex_spec(3, 7)
    cut = {1: {"flag3_7_3": "true", "flag3_7_7": "true", "turn3_7": "3"}}
    assert not evaluate_cut(spec, cut)


def test_or_spec_any_server_with_z():
    spec = parse_xml(SAMPLE)
    assert evaluate_cut(spec, {0: {"x2": "1"}, 1: {"z2": "1"}})
    assert not evaluate_cut(spec, {0: {"x2": "1"}, 1: {"y2": "1"}})


def test_missing_variable_is_false():
    spec = parse_xml(SAMPLE)
    assert not evaluate_cut(spec, {0: {}, 1: {"x2": "1"}})


def test_stale_copy_does_not_count():
    spec = mutex_spec(0, 1)
    old, new = VersionVector({"c0": 1}), VersionVector({"c0": 1, "c1": 1})
    cut = {0: {"flag0_1_0": "true", "turn0_1": "0"}, 1: {"flag0_1_1": "true", "turn0_1": "1"}}
    flags = VersionVector({"c9": 1})
    concurrent = {0: {"flag0_1_0": flags, "turn0_1": VersionVector({"c1": 1})},
                  1: {"flag0_1_1": flags, "turn0_1": old}}
    stale = {0: {"flag0_1_0": flags, "turn0_1": new}, 1: {"flag0_1_1": flags, "turn0_1": old}}
    assert evaluate_cut(spec, cut, concurrent)
    assert not evaluate_cut(spec, cut, stale)


VARS = ["a", "b"]
copies = st.dictionaries(st.sampled_from(VARS), st.sampled_from(["0", "1"]))
vers = st.dictionaries(st.sampled_from(VARS), st.dictionaries(st.sampled_from(["c0", "c1"]), st.integers(0, 2))
                       .map(VersionVector))
clause_lits = st.lists(st.tuples(st.sampled_from(VARS), st.sampled_from(["0", "1"])),
                       min_size=1, max_size=2, unique_by=lambda t: t[0])
specs = st.builds(
    lambda conn, cls: PredicateSpec("p", Kind.LINEAR, conn,
                                    tuple(Clause(i, tuple(Literal(v, x) for v, x in c)) for i, c in enumerate(cls))),
    st.sampled_from(list(Connective)), st.lists(clause_lits, min_size=1, max_size=3))


def reference(spec, cut, versions=None):
    """Brute force over every server subset."""
    servers = sorted(cut)

    def holds(clause, s, group):
        for lit in clause.literals:
            if cut[s].get(lit.var) != lit.expected:
                return False
            if versions is None:
                continue
            mine = versions.get(s, {}).get(lit.var)
            if mine is None:
                continue
            for o in group:
                theirs = versions.get(o, {}).get(lit.var)
                if o != s and theirs is not None and theirs.compare(mine) is VersionOrder.DOMINATES:
                    return False
        return True

    if spec.connective is Connective.OR:
        return any(c.holds(cut[s]) for c in spec.clauses for s in servers)
    for size in range(1, len(servers) + 1):
        for group in itertools.combinations(servers, size):
            if all(any(holds(c, s, group) for s in group) for c in spec.clauses):
                return True
    return False


@given(specs, st.lists(copies, min_size=1, max_size=4))
def test_evaluate_matches_brute_force(spec, cs):
    cut = dict(enumerate(cs))
    assert evaluate_cut(spec, cut) == reference(spec, cut)


@given(specs, st.lists(st.tuples(copies, vers), min_size=1, max_size=4))
def test_evaluate_with_versions_matches_brute_force(spec, pairs):
    cut = {i: c for i, (c, _) in enumerate(pairs)}
    vv = {i: v for i, (_, v) in enumerate(pairs)}
    assert evaluate_cut(spec, cut, vv) == reference(spec, cut, vv)


# ---- inference and assignment ---------------------------------------------


def test_infer_from_turn():
    spec = infer_from_varname("turn12_57")
    assert spec.name == "mutex_12_57"
    assert spec.kind is Kind.SEMILINEAR and spec.connective is Connective.AND
    assert [[(lit.var, lit.expected) for lit in c.literals] for c in spec.clauses] == [
        [("flag12_57_12", "true"), ("turn12_57", "12")],
        [("flag12_57_57", "true"), ("turn12_57", "57")],
    ]
    assert len(relevant_vars(spec)) == 3


def test_all_lock_names_give_one_predicate():
    specs = {infer_from_varname(v) for v in ("turn12_57", "flag12_57_12", "flag12_57_57")}
    assert len(specs) == 1


def test_irrelevant_name():
    assert infer_from_varname("color99") is None


@pytest.mark.parametrize("bad", ["turn57_12", "flag12_57_13", "turn3_3"])
def test_malformed_lock_names(bad):
    with pytest.raises(PredicateError):
        infer_from_varname(bad)


def test_fnv1a_reference_vectors():
    assert fnv1a_64(b"") == 0xCBF29CE484222325
    assert fnv1a_64(b"a") == 0xAF63DC4C8601EC8C
    assert fnv1a_64(b"foobar") == 0x85944171F73967E8


def test_assign_monitor_stable_and_single():
    assert assign_monitor("mutex_1_2", 3) == assign_monitor("mutex_1_2", 3)
    assert all(assign_monitor(f"mutex_{i}_{i + 1}", 1) == 0 for i in range(50))
    with pytest.raises(ValueError):
        assign_monitor("x", 0)


def test_assign_monitor_balance():
    names = [f"mutex_{i}_{i + 1 + (i * 7) % 13}" for i in range(10_000)]
    buckets = Counter(assign_monitor(n, 3) for n in names)
    assert all(abs(buckets[k] - 3333) <= 333 for k in range(3))
