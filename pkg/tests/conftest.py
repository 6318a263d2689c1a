import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from silosim.core import Protocol, RunConfig  # noqa: E402
from silosim.policies import scripted_factory  # noqa: E402
from silosim.runtime import run_episode  # noqa: E402
from silosim.taskgen import GenSpec, generate  # noqa: E402


def scripted_run(task, n, protocol="P2P", policy="optimal", seed=0, instance=None, options=None, **config):
    instance = instance or generate(GenSpec(task, n, seed=seed))
    cfg = RunConfig(n_agents=n, protocol=Protocol(protocol), model=f"scripted:{policy}", **config)
    log = run_episode(instance, cfg, scripted_factory(policy, instance, **(options or {})))
    return log, instance


@pytest.fixture
def run():
    return scripted_run


def pytest_terminal_summary(terminalreporter):
    acceptance = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    if acceptance is None or not acceptance.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in acceptance.summary_lines():
        terminalreporter.write_line(line)
