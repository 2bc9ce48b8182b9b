import logging
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from fakebio.protocol import run_desk  # noqa: E402
from fakebio.synthetic import WorldConfig  # noqa: E402


@pytest.fixture(scope="session")
def desk_run(tmp_path_factory):
    """The default synthetic world trained and scored once per session (~2 min)."""
    logging.getLogger("fakebio").setLevel(logging.WARNING)
    return run_desk(tmp_path_factory.mktemp("desk"), WorldConfig())


@pytest.fixture(scope="session")
def failed_swap_run(tmp_path_factory, desk_run):
    """Same world with every swap failed; the real videos and encoder are shared."""
    return run_desk(tmp_path_factory.mktemp("desk_failed"), WorldConfig(failed_swap_fraction=1.0),
                    params=desk_run.params, history=desk_run.history)


def pytest_terminal_summary(terminalreporter):
    lines = []
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            if "test_acceptance" not in rep.nodeid or rep.when != "call" and outcome != "error":
                continue
            detail = dict(rep.user_properties).get("criterion", rep.nodeid.split("::")[-1])
            lines.append((detail, "PASS" if outcome == "passed" else "FAIL"))
    if lines:
        terminalreporter.section("acceptance criteria")
        for detail, verdict in sorted(lines):
            terminalreporter.write_line(f"{verdict}  {detail}")
