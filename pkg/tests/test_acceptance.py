"""Acceptance criteria, one test each; a pass/fail line per criterion is printed at the end of the run.

Run alone with ``pytest tests/test_acceptance.py`` or ``python3 tests/test_acceptance.py``.
"""

import functools
import time

import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from bruteforce import brute
from mock_chat import MockChatServer, Reply, max_gatherer
from silosim.analysis import COMPUTATION, CONSENSUS, PREMATURE, classify, comm_matrix, detect_leaders
from silosim.core import Protocol, RunConfig, answers_equal
from silosim.experiments import ExperimentMatrix, run_matrix
from silosim.llm import ChatClient, ChatEndpointConfig, chat_factory, parse_actions
from silosim.metrics import compute_metrics, pcs, rcc
from silosim.runtime import run_episode
from silosim.taskgen import GenSpec, adapter_for, all_task_ids, generate

from conftest import scripted_run
from test_protocols import RandomActor

TASKS = [str(t) for t in all_task_ids()]
RESULTS: dict[int, tuple[str, bool]] = {}


def criterion(number, title):
    def wrap(fn):
        @functools.wraps(fn)
        def run(*args, **kwargs):
            RESULTS[number] = (title, False)
            fn(*args, **kwargs)
            RESULTS[number] = (title, True)

        return run

    return wrap


def summary_lines() -> list[str]:
    return [f"AC-{n:02d} {'PASS' if ok else 'FAIL'}  {title}" for n, (title, ok) in sorted(RESULTS.items())]


@criterion(1, "oracle soundness: 30 tasks x 100 seeds x N in {2,5} match brute force, < 60 s")
def test_oracle_soundness():
    start = time.perf_counter()
    mismatches = []
    for task in TASKS:
        for n in (2, 5):
            for seed in range(100):
                inst = generate(GenSpec(task, n, seed=seed))
                if not answers_equal(inst.ground_truth, brute(task, inst.global_input, inst.params)):
                    mismatches.append((task, n, seed))
    elapsed = time.perf_counter() - start
    assert mismatches == []
    assert elapsed < 60, elapsed


@criterion(2, "scripted optimal: S = P = 1 on 30 tasks x N in {2,5,10} x 3 protocols (270 episodes), < 5 min")
def test_scripted_optimal_completeness():
    start = time.perf_counter()
    failures, episodes = [], 0
    for task in TASKS:
        for n in (2, 5, 10):
            for protocol in ("P2P", "BP", "SFS"):
                log, inst = scripted_run(task, n, protocol=protocol, seed=n)
                m = compute_metrics(log, inst)
                episodes += 1
                if not (m.S == 1 and m.P == 1):
                    failures.append((task, n, protocol))
    assert episodes >= 270 and failures == []
    assert time.perf_counter() - start < 300


@criterion(3, "metric identities: star N=10 P2P sends 18 with D = 0.200; allgather N=5 P2P has D = 1.000")
def test_metric_identities():
    log, inst = scripted_run("I-01", 10, policy="star")
    m = compute_metrics(log, inst)
    assert sum(a.kind == "send" for a in log.actions) == 18 == sum(m.m)
    assert m.D == 18 / 90 == 0.2
    log, inst = scripted_run("III-21", 5, policy="allgather")
    assert compute_metrics(log, inst).D == 1.0


TABLE2 = [  # (SR(N=1), SR(N=k), expected RCC %) per scale k = 2..100, levels I, II, III
    (96.7, 82.0, 15.2), (90.0, 62.0, 31.1), (80.0, 41.0, 48.8),
    (93.3, 65.0, 30.3), (70.0, 47.0, 32.9), (73.3, 22.0, 70.0),
    (76.7, 51.3, 33.1), (73.3, 22.0, 70.0), (60.0, 9.0, 85.0),
    (63.3, 48.0, 24.2), (36.7, 14.0, 61.8), (43.3, 7.0, 83.8),
    (33.3, 18.0, 45.9), (30.0, 6.0, 80.0), (26.7, 0.0, 100.0),
    (20.0, 10.0, 50.0), (13.3, 5.0, 62.4), (10.0, 0.0, 100.0),
]


@criterion(4, "RCC arithmetic matches all 18 reference rows within 0.1 pp")
def test_rcc_table_rows():
    assert len(TABLE2) == 18
    for single, multi, published in TABLE2:
        assert abs(100 * rcc(multi, single) - published) <= 0.1, (single, multi)


@criterion(5, "P >= S on every run; LCS q([1,3,2,4] vs [1,2,3,4]) = 0.75")
def test_pcs_dominates_sr():
    for policy in ("optimal", "premature", "null"):
        for task in TASKS:
            log, inst = scripted_run(task, 3, policy=policy, r_max=5)
            m = compute_metrics(log, inst)
            assert m.P >= m.S
    inst = generate(GenSpec("III-21", 2, seed=0, shard_size=2))
    inst = type(inst)(**{**inst.__dict__, "ground_truth": [1, 2, 3, 4]})
    _, q = pcs([[1, 3, 2, 4], None], inst)
    assert q[0] == 0.75


@criterion(6, "failure classifier: premature, split, full-coverage-wrong and combined fixtures")
def test_failure_fixtures():
    log, inst = scripted_run("I-01", 5, policy="premature", seed=3)
    assert classify(log, inst).has(PREMATURE)
    log, inst = scripted_run("I-05", 5, policy="split", options={"wrong_value": -1})
    assert classify(log, inst).has(CONSENSUS)
    log, inst = scripted_run("I-01", 5, policy="miscompute", options={"delta": 1})
    rep = classify(log, inst)
    assert rep.has(COMPUTATION) and not rep.has(PREMATURE)
    log, inst = scripted_run("I-01", 4, policy="premature", seed=1)
    rep = classify(log, inst)
    assert rep.has(PREMATURE) and rep.has(CONSENSUS)


@criterion(7, "leader detection: star N=20 gives {0}; allgather gives the empty set")
def test_leader_detection():
    log, _ = scripted_run("I-01", 20, policy="star")
    assert detect_leaders(log) == {0}
    log, _ = scripted_run("III-21", 20, policy="allgather")
    assert detect_leaders(log) == set()


@criterion(8, "determinism: two executions of a scripted matrix give byte-identical run logs")
def test_matrix_determinism(tmp_path):
    dirs = [tmp_path / "a", tmp_path / "b"]
    for out in dirs:
        run_matrix(ExperimentMatrix(tasks=("I-03", "II-16", "III-23", "III-28"), scales=(2, 5),
                                    out_dir=str(out), parallelism=4))
    logs = sorted(dirs[0].glob("cells/*/runlog.jsonl"))
    assert len(logs) == 4 * 2 * 3 + 4
    for path in logs:
        assert path.read_bytes() == (dirs[1] / path.relative_to(dirs[0])).read_bytes()


@criterion(9, "visibility: random action scripts never observe effects before round r+1; per-pair FIFO holds")
def test_visibility_property():
    @settings(max_examples=150, deadline=None, suppress_health_check=[HealthCheck.too_slow])
    @given(protocol=st.sampled_from(list(Protocol)), n=st.integers(2, 6), seed=st.integers(0, 10**9),
           budget=st.integers(1, 8))
    def check(protocol, n, seed, budget):
        seen = []
        inst = generate(GenSpec("I-01", n, seed=0))
        cfg = RunConfig(n_agents=n, protocol=protocol, r_max=6, action_budget=budget)
        run_episode(inst, cfg, lambda a: RandomActor(a, n, protocol, seed, seen))
        last = {}
        for reader, round_, writer, written, seq, via in seen:
            assert written < round_ or (writer == reader and via == "file" and written == round_)
            if via == "msg":
                assert seq > last.get((writer, reader), 0)
                last[(writer, reader)] = seq

    check()


@criterion(10, "heatmaps: star round-1 traffic all in column 0; single-pass chain is superdiagonal only")
def test_heatmap_patterns():
    for task in [t for t in TASKS if t.startswith("I-")]:
        log, _ = scripted_run(task, 5, policy="star")
        mat = comm_matrix(log, rounds=[1])
        total = sum(map(sum, mat))
        assert total > 0 and sum(row[0] for row in mat) == total
    level2 = [generate(GenSpec(t, 5, seed=0)) for t in TASKS if t.startswith("II-")]
    single_pass = [i.task_id for i in level2 if adapter_for(i.task_id, i.params).scan.mode == "single"]
    assert len(single_pass) >= 5
    for task in single_pass:
        log, _ = scripted_run(task, 5, policy="chain")
        mat = comm_matrix(log)
        assert all(mat[i][j] == (1 if j == i + 1 else 0) for i in range(5) for j in range(5)), task


@criterion(11, "LLM adapter on a mock endpoint: parsing, retry on timeout, budget, token sums")
def test_llm_adapter_contract():
    assert [a.name for a in parse_actions('{"action":"send_message","target_id":3,"content":"max=17"}')] == ["send_message"]
    assert parse_actions("no actions here") == []

    def flaky_then_gather(body, index):
        reply = max_gatherer(body, index)
        if index in (0, 1):
            reply.delay = 0.6
        return reply

    inst = generate(GenSpec("I-01", 4, seed=2))
    cfg = RunConfig(n_agents=4, protocol=Protocol.P2P, model="llm:mock")
    with MockChatServer(flaky_then_gather) as srv:
        conf = ChatEndpointConfig(base_url=srv.url, model="mock", timeout=0.3, retries=3, backoff=0.01, max_in_flight=1)
        with ChatClient(conf) as client:
            log = run_episode(inst, cfg, chat_factory(client, inst, cfg), max_workers=4)
        assert [s.value for s in log.submissions] == [inst.ground_truth] * 4
        assert sum(a.cost_units for a in log.actions) == srv.tokens_served
        assert len(srv.requests) == 4 * 3 + 2

    spam = "\n".join('{"action":"send_message","target_id":1,"content":"x"}' for _ in range(20))
    cfg = RunConfig(n_agents=2, protocol=Protocol.P2P, r_max=1, action_budget=5)
    with MockChatServer(lambda body, i: Reply(spam, tokens=9)) as srv:
        with ChatClient(ChatEndpointConfig(base_url=srv.url, model="mock", backoff=0.01)) as client:
            log = run_episode(inst := generate(GenSpec("I-01", 2)), cfg, chat_factory(client, inst, cfg))
        assert [sum(a.agent_id == i for a in log.actions) for i in range(2)] == [5, 5]
        assert sum(a.cost_units for a in log.actions) == srv.tokens_served == 18


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
