import sys

import numpy as np
import pytest

from pathconcord.inverse import ConstraintSet, InverseInstance, solve_stage1
from pathconcord.network import NetworkSpec, compile_network
from pathconcord.cli import bundled


def make_network(activities, transitions=(), references=(), complete=False, repeat=True, outcome=()):
    acts = [{"id": a, "allow_self_repeat": repeat} for a in activities]
    acts += [{"id": o, "outcome_layer": True} for o in outcome]
    return compile_network(
        NetworkSpec.from_dict(
            {
                "activities": acts,
                "transitions": [list(t) for t in transitions],
                "reference_pathways": [list(r) for r in references],
                "complete": complete,
            }
        )
    )


@pytest.fixture(scope="session")
def abc_network():
    """A, B, C plus a discordant X, every end->start arc present."""
    return make_network("ABCX", references=[["A", "B", "C"]], complete=True)


@pytest.fixture(scope="session")
def colon_network():
    return compile_network(NetworkSpec.load(bundled("colon_network.json")))


@pytest.fixture(scope="session")
def colon_constraints():
    return ConstraintSet.load(bundled("colon_constraints.json"))


@pytest.fixture(scope="session")
def colon_instance(colon_network, colon_constraints):
    return InverseInstance.from_sequences(colon_network, constraints=colon_constraints)


@pytest.fixture(scope="session")
def colon_stage1(colon_instance):
    return solve_stage1(colon_instance)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    if module is not None and module.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(module.RESULTS, key=lambda s: int(s[2:5].strip().split()[0])):
            terminalreporter.write_line(line)
