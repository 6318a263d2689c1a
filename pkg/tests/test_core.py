import dataclasses
import json

import pytest
from hypothesis import given, strategies as st

from silosim.core import (
    ActionRecord,
    Answer,
    AnswerParseError,
    Level,
    Protocol,
    RunConfig,
    RunLog,
    TaskId,
    TaskInstance,
    answers_equal,
    parse_answer,
    validate_instance,
    within_tolerance,
)
from silosim.taskgen import GenSpec, generate


def test_task_id_bands():
    assert TaskId.parse("I-01") == TaskId(Level.I, 1)
    assert str(TaskId.from_index(21)) == "III-21"
    assert TaskId.from_index(15).level is Level.II
    with pytest.raises(ValueError):
        TaskId(Level.I, 11)
    with pytest.raises(ValueError):
        TaskId.parse("IV-31")


def test_run_config_rejects_bad_limits():
    with pytest.raises(ValueError):
        RunConfig(n_agents=2, protocol=Protocol.P2P, r_max=0)
    with pytest.raises(ValueError):
        RunConfig(n_agents=2, protocol=Protocol.P2P, action_budget=0)
    with pytest.raises(ValueError):
        RunConfig(n_agents=2, protocol=Protocol.P2P, scaffold=frozenset({"nope"}))


def test_valid_instance_has_no_violations():
    assert validate_instance(generate(GenSpec("I-01", 4, seed=3))) == []


def test_permuted_shards_violate_composition():
    inst = generate(GenSpec("I-01", 2, seed=1))
    bad = dataclasses.replace(inst, shards=(inst.shards[1], inst.shards[0]))
    assert any("composition rule" in v for v in validate_instance(bad))


def test_wrong_truth_is_reported():
    inst = generate(GenSpec("I-01", 2, seed=1))
    bad = dataclasses.replace(inst, ground_truth=inst.ground_truth + 1)
    assert "ground truth mismatch" in validate_instance(bad)


def test_unequal_shards_violate_equipartition():
    inst = generate(GenSpec("I-01", 2, seed=1))
    x = list(inst.global_input)
    bad = dataclasses.replace(inst, shards=(tuple(x[:1]), tuple(x[1:])))
    assert any("equipartition" in v for v in validate_instance(bad))


@pytest.mark.parametrize(
    "raw,shape,expected",
    [("42", "int", 42), ("[1, 2, 3]", "seq[int]", [1, 2, 3]), ("true", "bool", True), ("2.5", "real", 2.5)],
)
def test_parse_answer(raw, shape, expected):
    assert parse_answer(raw, shape) == expected


def test_parse_answer_rejects_prose():
    with pytest.raises(AnswerParseError):
        parse_answer("banana", "int")


def test_equality_rules():
    assert answers_equal(1.0, 1.0 + 1e-12)
    assert not answers_equal(1.0, 1.001)
    assert not answers_equal(3, 4)
    assert within_tolerance(100.5, 100.0, 0.01)
    assert not within_tolerance(102, 100, 0.01)
    assert not answers_equal(True, 1)


def _sample_log():
    cfg = RunConfig(n_agents=2, protocol=Protocol.BP, scaffold=frozenset({"planning_round"}))
    actions = (
        ActionRecord(1, 0, 0, "broadcast", {"content": "x"}, 1),
        ActionRecord(1, 1, 0, "wait", {}, 0),
        ActionRecord(2, 0, 0, "submit", {"raw": 3, "value": 3, "parse_error": False}, 1),
    )
    return RunLog(cfg, TaskId.parse("I-01"), 7, actions, (Answer(3, 2), Answer(None, None)), 2, "round_limit")


def test_runlog_round_trip():
    log = _sample_log()
    text = log.to_jsonl()
    lines = text.splitlines()
    assert [json.loads(line)["type"] for line in lines] == ["header", "action", "action", "action", "footer"]
    again = RunLog.from_jsonl(text)
    assert again == log
    assert again.to_jsonl() == text


def test_runlog_keys_must_increase():
    log = _sample_log()
    with pytest.raises(ValueError):
        dataclasses.replace(log, actions=log.actions[::-1])


def test_runlog_per_round_tokens():
    assert _sample_log().per_round_out_tokens == [[1, 1], [0, 0]]


def test_instance_round_trip_without_truth():
    inst = generate(GenSpec("III-30", 3, seed=2))
    assert TaskInstance.from_dict(inst.to_dict()) == inst
    assert "ground_truth" not in inst.to_dict(include_truth=False)


json_values = st.recursive(
    st.none() | st.booleans() | st.integers(-10**6, 10**6) | st.text(max_size=5),
    lambda inner: st.lists(inner, max_size=4) | st.dictionaries(st.text(max_size=3), inner, max_size=3),
    max_leaves=10,
)


@given(json_values)
def test_answer_round_trip(value):
    a = Answer(value, 4)
    assert Answer.from_dict(json.loads(json.dumps(a.to_dict()))) == a
