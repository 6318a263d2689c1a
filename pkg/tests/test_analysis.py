import dataclasses
import random

import pytest

from silosim.analysis import (
    COMPUTATION,
    CONSENSUS,
    PREMATURE,
    FailureReport,
    behavioral_stats,
    classify,
    comm_matrix,
    coverage,
    coverage_sufficient,
    detect_leaders,
    match_holders,
    matrix_csv,
)
from silosim.core import ActionRecord, Answer, Protocol, RunConfig, RunLog
from silosim.metrics import outward_messages
from silosim.taskgen import GenSpec, generate


def test_premature_fixture(run):
    log, inst = run("I-01", 5, policy="premature", seed=3)
    rep = classify(log, inst)
    assert rep.has(PREMATURE) and rep.premature_agents == (0, 1, 2, 3, 4)
    assert rep.messages_per_agent == 0


def test_premature_even_when_locally_right(run):
    for seed in range(50):
        inst = generate(GenSpec("I-01", 5, seed=seed))
        holder = [i for i, sh in enumerate(inst.shards) if max(sh) == inst.ground_truth]
        if len(holder) == 1:
            break
    log, _ = run("I-01", 5, policy="premature", instance=inst)
    rep = classify(log, inst)
    assert log.submissions[holder[0]].value == inst.ground_truth
    assert holder[0] in rep.premature_agents


def test_split_fixture(run):
    log, inst = run("I-05", 5, policy="split", options={"wrong_value": -7})
    rep = classify(log, inst)
    assert rep.has(CONSENSUS) and not rep.has(PREMATURE) and rep.distinct_answers == 2
    assert rep.wrong_with_full_coverage == (0,)  # the deviant hub saw everything


def test_computation_error_fixture(run):
    log, inst = run("I-01", 5, policy="miscompute", options={"delta": 1})
    rep = classify(log, inst)
    assert rep.labels == (COMPUTATION,)
    assert rep.wrong_with_full_coverage == (0, 1, 2, 3, 4)


def test_labels_co_occur(run):
    log, inst = run("I-01", 4, policy="premature", seed=1)
    rep = classify(log, inst)
    assert rep.has(PREMATURE) and rep.has(CONSENSUS)


def test_success_has_no_labels(run):
    log, inst = run("III-21", 4)
    rep = classify(log, inst)
    assert rep.labels == () and rep.success and rep.coverage_mode == "provenance"


def _manual_log(n, protocol, actions, submissions, rounds):
    cfg = RunConfig(n_agents=n, protocol=protocol)
    inst = generate(GenSpec("I-05", n, seed=0))
    return RunLog(cfg, inst.task_id, 0, tuple(actions), tuple(submissions), rounds, "all_submitted"), inst


def test_partial_coverage_is_premature():
    n = 100
    actions = [ActionRecord(1, i, 0, "send", {"to": 0, "content": "x"}, 1) for i in range(1, 28)]
    msgs = [{"from": i, "sent": [1, i, 0]} for i in range(1, 28)]
    actions.append(ActionRecord(2, 0, 0, "receive", {"messages": msgs}, 0))
    actions.append(ActionRecord(2, 0, 1, "submit", {"raw": 1, "value": 1, "parse_error": False}, 1))
    subs = [Answer(1, 2)] + [Answer(None, None)] * (n - 1)
    log, inst = _manual_log(n, Protocol.P2P, sorted(actions, key=lambda a: a.key), subs, 2)
    cov = coverage(log)
    assert cov.mode == "sender-closure" and cov.size(0) == 28
    assert 0 in classify(log, inst).premature_agents


def test_divergent_answers_are_consensus_failure():
    subs = [Answer(619, 3)] * 49 + [Answer(631, 3)]
    log, inst = _manual_log(50, Protocol.P2P, [], subs, 3)
    assert classify(log, inst).has(CONSENSUS)


def test_closure_respects_time_order():
    # 2 -> 1 happens after 1 -> 0, so 0 never learns about 2
    actions = [
        ActionRecord(1, 1, 0, "send", {"to": 0, "content": "a"}, 1),
        ActionRecord(2, 0, 0, "receive", {"messages": [{"from": 1, "sent": [1, 1, 0]}]}, 0),
        ActionRecord(2, 2, 0, "send", {"to": 1, "content": "b"}, 1),
        ActionRecord(3, 1, 0, "receive", {"messages": [{"from": 2, "sent": [2, 2, 0]}]}, 0),
    ]
    log, _ = _manual_log(3, Protocol.P2P, actions, [Answer(None, None)] * 3, 3)
    assert coverage(log).sets == (frozenset({0, 1}), frozenset({1, 2}), frozenset({2}))


def test_coverage_after_key_sort_is_stable(run):
    log, _ = run("II-16", 5, protocol="BP")
    shuffled = list(log.actions)
    random.Random(0).shuffle(shuffled)
    again = dataclasses.replace(log, actions=tuple(sorted(shuffled, key=lambda a: a.key)))
    assert coverage(again) == coverage(log)


def test_any_match_holder_alone_suffices():
    for seed in range(40):
        inst = generate(GenSpec("I-04", 4, seed=seed))
        if inst.ground_truth:
            break
    (holder,) = match_holders(inst)
    assert coverage_sufficient(inst, frozenset({holder}))
    assert not coverage_sufficient(inst, frozenset({(holder + 1) % 4}))


def test_leaders():
    from conftest import scripted_run

    star, _ = scripted_run("I-01", 20, policy="star")
    assert detect_leaders(star) == {0}
    gather, _ = scripted_run("III-21", 5, policy="allgather")
    assert detect_leaders(gather) == set()
    pair, _ = scripted_run("III-21", 2, policy="allgather")
    assert detect_leaders(pair) == set()


def test_star_matrix(run):
    log, _ = run("I-01", 5, policy="star")
    mat = comm_matrix(log)
    assert [row[0] for row in mat] == [0, 1, 1, 1, 1]
    assert mat[0] == [0, 1, 1, 1, 1]
    assert sum(map(sum, mat)) == 8


def test_matrix_rows_equal_p2p_sends(run):
    log, _ = run("III-25", 4)
    assert [sum(r) for r in comm_matrix(log)] == outward_messages(log)


def test_empty_run_matrix():
    log, _ = _manual_log(3, Protocol.BP, [], [Answer(None, None)] * 3, 1)
    assert comm_matrix(log) == [[0] * 3] * 3
    assert matrix_csv(comm_matrix(log)) == "0,0,0\n0,0,0\n0,0,0\n"


def test_broadcast_and_file_matrices(run):
    log, _ = run("III-21", 3, protocol="BP")
    assert all(comm_matrix(log)[i][j] > 0 for i in range(3) for j in range(3) if i != j)
    log, _ = run("I-01", 3, protocol="SFS", policy="star")
    mat = comm_matrix(log)
    assert mat[1][0] > 0 and mat[2][0] > 0 and mat[1][2] == 0


def _report(success, rounds, messages=0.0, leaders=()):
    return FailureReport((), (), (), 1, (), "provenance", leaders, messages, rounds, success)


def test_behavioral_stats():
    assert behavioral_stats([_report(True, 1)])["success"]["rounds_to_completion"] == 1
    stats = behavioral_stats([_report(False, 4, 2.0, (0,)), _report(False, 6, 4.0)])
    assert stats["failed"]["rounds_to_completion"] == 5
    assert stats["failed"]["messages_per_agent"] == 3
    assert stats["failed"]["leader_emergence_rate"] == 0.5
    with pytest.raises(ValueError):
        behavioral_stats([])


def test_report_round_trip(run):
    log, inst = run("I-01", 4, policy="premature", seed=1)
    rep = classify(log, inst)
    assert FailureReport.from_dict(rep.to_dict()) == rep
