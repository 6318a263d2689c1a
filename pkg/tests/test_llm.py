import pytest

from mock_chat import MockChatServer, Reply, max_gatherer
from silosim.core import Protocol, RunConfig
from silosim.llm import (
    AuthError,
    ChatClient,
    ChatEndpointConfig,
    RetriesExhausted,
    RollingContext,
    build_prompt,
    chat_factory,
    parse_actions,
)
from silosim.metrics import compute_metrics
from silosim.runtime import FatalPolicyError, run_episode
from silosim.taskgen import GenSpec, generate


def cfg(n=3, protocol=Protocol.P2P, **kw):
    return RunConfig(n_agents=n, protocol=protocol, model="llm:mock", **kw)


# --- prompts ------------------------------------------------------------- #


def test_p2p_prompt_actions():
    inst = generate(GenSpec("I-01", 3))
    prompt = build_prompt(inst, cfg(), 1)
    for name in ("send_message", "receive_messages", "wait", "submit_result"):
        assert name in prompt.system
    assert "broadcast_message" not in prompt.system
    assert prompt.system.startswith("You are Agent 1 in a multi-agent system consisting of 3 agents")
    assert "No single agent has sufficient information" in prompt.system


def test_sfs_prompt_actions():
    inst = generate(GenSpec("I-01", 3))
    system = build_prompt(inst, cfg(protocol=Protocol.SFS), 0).system
    for name in ("list_files", "read_file", "write_file", "delete_file"):
        assert name in system


def test_prompts_identical_modulo_id_and_shard():
    inst = generate(GenSpec("I-01", 3))
    a, b = (build_prompt(inst, cfg(), i).system for i in (0, 2))
    strip = lambda s, i: s.replace(f"Agent {i}", "Agent ?").replace(str(list(inst.shards[i])), "DATA")
    assert strip(a, 0) == strip(b, 2)


def test_scaffolds_append_text():
    inst = generate(GenSpec("I-01", 3))
    plain = build_prompt(inst, cfg(), 0).system
    planned = build_prompt(inst, cfg(scaffold=frozenset({"planning_round"})), 0).system
    assert planned.startswith(plain) and "strategy" in planned[len(plain):]
    with pytest.raises(ValueError):
        build_prompt(inst, cfg(), 3)


# --- parsing ------------------------------------------------------------- #


def test_parse_send():
    (a,) = parse_actions('{"action":"send_message","target_id":3,"content":"max=17"}')
    assert (a.name, a.args, a.error) == ("send_message", {"target_id": 3, "content": "max=17"}, None)


def test_parse_submit_and_prose():
    assert parse_actions('{"action":"submit_result","answer":9}')[0].args == {"answer": 9}
    assert parse_actions("I think we should cooperate.") == []


def test_parse_fenced_list_and_nested_args():
    text = 'Plan:\n```json\n[{"action": "wait()"}, {"action": "read_file", "args": {"path": "/a"}}]\n```\ntrailing {junk'
    assert [(a.name, a.args) for a in parse_actions(text)] == [("wait", {}), ("read_file", {"path": "/a"})]


def test_parse_errors_are_reported_not_raised():
    acts = parse_actions('{"action":"send_message","content":"x"} {"action":"fly"} {"action":"send_message","target_id":"two","content":1}')
    assert [a.error is not None for a in acts] == [True, True, True]


def test_parse_coerces_ids_and_content():
    (a,) = parse_actions('{"action":"send_message","target_id":"2","content":[1,2]}')
    assert a.args == {"target_id": 2, "content": "[1, 2]"}


# --- client -------------------------------------------------------------- #


def client_for(server, **kw):
    kw.setdefault("backoff", 0.01)
    return ChatClient(ChatEndpointConfig(base_url=server.url, model="mock", api_key="secret", **kw))


def test_healthy_invoke():
    with MockChatServer(lambda body, i: Reply("hello", tokens=5)) as srv, client_for(srv, temperature=0.2) as cli:
        assert cli.invoke([{"role": "user", "content": "hi"}]) == ("hello", 5)
        assert srv.requests[0]["body"]["temperature"] == 0.2
        assert srv.requests[0]["auth"] == "Bearer secret"
        assert "secret" not in str(cli.audit)


def test_retry_after_two_timeouts():
    with MockChatServer(lambda body, i: Reply("ok", delay=0.5 if i < 2 else 0)) as srv:
        with client_for(srv, timeout=0.2, retries=3) as cli:
            assert cli.invoke([{"role": "user", "content": "x"}])[0] == "ok"
        assert len(srv.requests) == 3


def test_malformed_responses_are_retried():
    with MockChatServer(lambda body, i: Reply(raw="{not json") if i == 0 else Reply("fine")) as srv, client_for(srv) as cli:
        assert cli.invoke([])[0] == "fine"


def test_retries_exhausted():
    with MockChatServer(lambda body, i: Reply(status=503)) as srv, client_for(srv, retries=2) as cli:
        with pytest.raises(RetriesExhausted):
            cli.invoke([])
        assert len(srv.requests) == 3


def test_auth_failure_is_not_retried():
    with MockChatServer(lambda body, i: Reply(status=401)) as srv, client_for(srv) as cli:
        with pytest.raises(AuthError):
            cli.invoke([])
        assert len(srv.requests) == 1


def test_config_validation_and_env(monkeypatch):
    with pytest.raises(ValueError):
        ChatEndpointConfig(base_url="http://x", model="m", timeout=0)
    with pytest.raises(ValueError):
        ChatEndpointConfig(base_url="http://x", model="m", retries=-1)
    monkeypatch.delenv("SILOSIM_ENDPOINT", raising=False)
    with pytest.raises(ValueError):
        ChatEndpointConfig.from_env("m")
    monkeypatch.setenv("SILOSIM_ENDPOINT", "http://host/v1")
    monkeypatch.setenv("SILOSIM_API_KEY", "k")
    conf = ChatEndpointConfig.from_env("m", retries=1)
    assert (conf.base_url, conf.api_key, conf.retries) == ("http://host/v1", "k", 1)


# --- policy -------------------------------------------------------------- #


def test_rolling_context_is_capped():
    ctx = RollingContext(cap=100)
    for i in range(50):
        ctx.add("u" * 30, "a" * 30)
    assert ctx.size() <= 100 and ctx.dropped > 0
    assert ctx.messages()[0]["content"].startswith("[earlier")
    ctx.add("x" * 1000, "y" * 1000)
    assert ctx.size() <= 100


def test_llm_episode_end_to_end():
    inst = generate(GenSpec("I-01", 3, seed=4))
    with MockChatServer(max_gatherer) as srv, client_for(srv) as cli:
        log = run_episode(inst, cfg(), chat_factory(cli, inst, cfg()), max_workers=3)
    assert [s.value for s in log.submissions] == [inst.ground_truth] * 3
    assert log.rounds_executed == 3
    assert sum(a.cost_units for a in log.actions) == srv.tokens_served
    assert compute_metrics(log, inst).D == 1.0


def test_budget_is_enforced():
    many = "\n".join('{"action":"send_message","target_id":1,"content":"x"}' for _ in range(10))

    def responder(body, i):
        return Reply(many if "You are Agent 0" in body["messages"][0]["content"] else '{"action":"wait"}', tokens=11)

    inst = generate(GenSpec("I-01", 2))
    config = cfg(n=2, r_max=2, action_budget=3)
    with MockChatServer(responder) as srv, client_for(srv) as cli:
        log = run_episode(inst, config, chat_factory(cli, inst, config))
        second_round_prompt = [r for r in srv.requests if "You are Agent 0" in r["body"]["messages"][0]["content"]][1]
    sends = [a for a in log.actions if a.kind == "send" and a.round == 1]
    assert len(sends) == 3
    assert "budget exhausted" in second_round_prompt["body"]["messages"][-1]["content"]
    assert sum(a.cost_units for a in log.actions) == srv.tokens_served == 11 * 4


def test_invalid_and_unknown_actions_become_feedback():
    replies = iter(['{"action":"broadcast_message","content":"x"} {"action":"send_message","target_id":9,"content":"y"}',
                    '{"action":"submit_result","answer":1}'])

    def responder(body, i):
        return Reply(next(replies), tokens=3)

    inst = generate(GenSpec("I-01", 2))
    config = cfg(n=2)
    with MockChatServer(responder) as srv, client_for(srv) as cli:
        log = run_episode(inst, config, lambda a: chat_factory(cli, inst, config)(a) if a == 0 else _Submitter())
        feedback = srv.requests[1]["body"]["messages"][-1]["content"]
    assert "not available" in feedback and "failed" in feedback
    assert log.submissions[0].value == 1
    assert [a.kind for a in log.actions if a.agent_id == 0][0] == "invalid"


class _Submitter:
    def act(self, obs, ctl):
        ctl.submit(0)


def test_exhausted_retries_mean_wait():
    inst = generate(GenSpec("I-01", 2))
    config = cfg(n=2, r_max=2)
    with MockChatServer(lambda body, i: Reply(status=500)) as srv, client_for(srv, retries=1) as cli:
        log = run_episode(inst, config, chat_factory(cli, inst, config))
    assert log.terminated_by == "round_limit"
    assert {a.kind for a in log.actions} == {"wait"}
    assert sum(f.get("kind") == "endpoint" for f in log.faults) == 4


def test_auth_failure_aborts_episode():
    inst = generate(GenSpec("I-01", 2))
    with MockChatServer(lambda body, i: Reply(status=403)) as srv, client_for(srv) as cli:
        with pytest.raises(FatalPolicyError):
            run_episode(inst, cfg(n=2), chat_factory(cli, inst, cfg(n=2)))
