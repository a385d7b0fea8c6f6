import logging

import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from optikv.detector import Candidate, LocalDetector
from optikv.hvc import HvcInterval, HybridVectorClock
from optikv.monitor import IntegrityError, MonitorEngine, spec_from_name
from optikv.oracle import oracle_detect
from optikv.predicate import Kind, evaluate_cut, mutex_spec, parse_xml
from optikv.scenarios import random_scenario
from optikv.versions import VersionVector

SPEC = mutex_spec(0, 1)
FLAGS = VersionVector({"c0": 1, "c1": 1})


def clock(owner, times):
    return HybridVectorClock.from_times(owner, times)


def cand(server, seq, start, end, turn, turn_version, flags=("true", "true"), pred=SPEC):
    state = {
        "flag0_1_0": (flags[0], FLAGS),
        "flag0_1_1": (flags[1], FLAGS),
        "turn0_1": (turn, turn_version),
    }
    return Candidate(pred.name, server, seq, HvcInterval(server, clock(server, start), clock(server, end)), state)


A = VersionVector({"c0": 1})
B = VersionVector({"c1": 1})
AB = VersionVector({"c0": 1, "c1": 1})


# ---- detector -------------------------------------------------------------


def store_lookup(data):
    return lambda key: data.get(key)


def test_detector_semilinear_ships_every_interval():
    d = LocalDetector(0, store_lookup({}), infer=False)
    assert d.activate_predicate(SPEC, clock(0, [0, 0]))
    assert not d.activate_predicate(SPEC, clock(0, [0, 0]))
    out = d.on_put_applied("flag0_1_0", ("true", A), clock(0, [5, 0]))
    out += d.on_put_applied("turn0_1", ("1", A), clock(0, [9, 0]))
    assert [c.seq for c in out] == [0, 1]
    assert out[0].interval.end == out[1].interval.start == clock(0, [5, 0])
    assert out[0].values == {}
    assert out[1].values == {"flag0_1_0": "true"}
    tail = d.flush(clock(0, [12, 0]))
    assert [c.seq for c in tail] == [2]
    assert tail[0].values == {"flag0_1_0": "true", "turn0_1": "1"}


def test_detector_linear_ships_only_when_a_clause_holds():
    spec = parse_xml("<predicate><type>linear</type><conjClause><id>0</id>"
                     "<var><name>x</name><value>1</value></var></conjClause></predicate>", name="lin")
    assert spec.kind is Kind.LINEAR
    d = LocalDetector(0, store_lookup({}), infer=False)
    d.activate_predicate(spec, clock(0, [0]))
    assert d.on_put_applied("x", ("0", A), clock(0, [1])) == []
    assert d.on_put_applied("x", ("1", AB), clock(0, [2])) == []
    closed = d.on_put_applied("x", ("0", VersionVector({"c0": 3})), clock(0, [3]))
    assert [(c.seq, c.values) for c in closed] == [(0, {"x": "1"})]
    assert d.flush(clock(0, [4])) == []


def test_detector_seeds_cache_from_store():
    d = LocalDetector(0, store_lookup({"turn0_1": ("0", A)}), infer=False)
    d.activate_predicate(SPEC, clock(0, [0, 0]))
    assert d.cache == {"turn0_1": ("0", A)}
    d.deactivate(SPEC.name)
    assert d.cache == {} and d.watch == {}


def test_detector_infers_from_lock_names():
    d = LocalDetector(1, store_lookup({}))
    d.on_get_observed("color5", clock(1, [0, 1]))
    assert d.predicates == {}
    d.on_get_observed("flag0_1_1", clock(1, [0, 1]))
    assert set(d.predicates) == {"mutex_0_1"}
    # the activating PUT starts the first interval instead of closing one
    d2 = LocalDetector(1, store_lookup({}))
    assert d2.on_put_applied("turn0_1", ("1", B), clock(1, [0, 2])) == []
    assert d2.cache["turn0_1"] == ("1", B)


def test_candidate_wire_roundtrip():
    c = cand(1, 4, [0, 3], [2, 8], "1", B)
    assert Candidate.from_wire(c.to_wire()) == c
    with pytest.raises(ValueError):
        Candidate.from_wire({"type": "PUT"})


# ---- monitor engine -------------------------------------------------------


def test_concurrent_divergent_copies_are_reported():
    eng = MonitorEngine([SPEC])
    assert eng.ingest_and_detect(cand(0, 0, [10, 0], [20, 0], "0", A), now=30) == []
    (v,) = eng.ingest_and_detect(cand(1, 0, [0, 12], [0, 25], "1", B), now=40)
    assert [c.server for c in v.cut] == [0, 1]
    assert v.t_violate_ms == 10 and v.latency_ms == 30
    assert v.to_json()["cut"][1]["state"]["turn0_1"] == "1"


def test_stale_copy_is_not_a_violation():
    eng = MonitorEngine([SPEC])
    eng.ingest_and_detect(cand(0, 0, [10, 0], [20, 0], "0", AB))
    assert eng.ingest_and_detect(cand(1, 0, [0, 12], [0, 25], "1", B)) == []


def test_ordered_intervals_are_not_a_cut():
    eng = MonitorEngine([SPEC])
    eng.ingest_and_detect(cand(0, 0, [10, 0], [20, 0], "0", A))
    assert eng.ingest_and_detect(cand(1, 0, [25, 30], [25, 40], "1", B)) == []


def test_one_lowered_flag_prevents_violation():
    eng = MonitorEngine([SPEC])
    eng.ingest_and_detect(cand(0, 0, [10, 0], [20, 0], "0", A, flags=("false", "true")))
    assert eng.ingest_and_detect(cand(1, 0, [0, 12], [0, 25], "1", B, flags=("false", "true"))) == []


def test_sequence_gap_and_duplicates():
    eng = MonitorEngine([SPEC])
    eng.ingest(cand(0, 0, [1, 0], [2, 0], "0", A))
    eng.ingest(cand(0, 0, [1, 0], [2, 0], "0", A))
    assert eng.ingested == 1
    with pytest.raises(IntegrityError):
        eng.ingest(cand(0, 2, [3, 0], [4, 0], "0", A))


def test_sequence_gap_lenient(caplog):
    eng = MonitorEngine([SPEC], strict=False)
    eng.ingest(cand(0, 0, [1, 0], [2, 0], "0", A))
    with caplog.at_level(logging.WARNING):
        eng.ingest(cand(0, 5, [3, 0], [4, 0], "0", A))
    assert "expected seq 1" in caplog.text and eng.ingested == 2


def test_unknown_predicate_dropped():
    eng = MonitorEngine()
    c = cand(0, 0, [1, 0], [2, 0], "0", A)
    eng.ingest(Candidate("weird", 0, 0, c.interval, c.state))
    assert eng.ingested == 0
    assert spec_from_name("mutex_0_1") == SPEC


def test_pruning_drops_unreachable_candidates():
    kept = MonitorEngine([SPEC])
    pruned = MonitorEngine([SPEC], participants=[0, 1])
    stream = [cand(0, 0, [1, 0], [2, 0], "0", A), cand(1, 0, [5, 3], [5, 6], "0", A),
              cand(0, 1, [8, 6], [9, 6], "0", A)]
    for eng in (kept, pruned):
        for c in stream:
            eng.ingest_and_detect(c)
    assert kept.retained_count() == 3
    # both early intervals end before the other server's latest one starts
    assert pruned.retained_count() == 1


def test_gc_inactive():
    eng = MonitorEngine([SPEC])
    eng.ingest_and_detect(cand(0, 0, [1, 0], [2, 0], "0", A), now=0)
    assert eng.gc_inactive(now=1000, ttl=5000) == 0
    assert eng.gc_inactive(now=10_000, ttl=5000) == 1
    assert eng.collected == 1 and eng.preds == {}
    with pytest.raises(ValueError):
        eng.gc_inactive(now=0, ttl=0)


def test_kind_specific_entry_points():
    eng = MonitorEngine([SPEC])
    eng.ingest(cand(0, 0, [1, 0], [2, 0], "0", A))
    with pytest.raises(ValueError):
        eng.run_linear(SPEC.name)
    assert eng.run_semilinear(SPEC.name) is None


# ---- agreement with the oracle on simulated runs --------------------------


@settings(max_examples=25, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(st.integers(0, 10**6), st.sampled_from([Kind.LINEAR, Kind.SEMILINEAR]))
def test_monitor_reports_iff_oracle_finds_a_cut(seed, kind):
    sc = random_scenario(seed, kind)
    found = oracle_detect(sc.trace, sc.spec)
    assert (found is not None) == bool(sc.violations)
    for v in sc.violations:
        view = {c.server: c.values for c in v.cut}
        vers = {c.server: c.split()[1] for c in v.cut}
        assert evaluate_cut(sc.spec, view, vers)
