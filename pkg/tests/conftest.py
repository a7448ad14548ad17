import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

import goldens
from gsmgen import graphgen, render


@pytest.fixture(scope="session")
def med_config():
    return graphgen.preset_config("med")

@pytest.fixture(scope="session")
def hard_config():
    return graphgen.preset_config("hard")


@pytest.fixture(scope="session")
def easy_problem():
    """The op=7 worked example, rebuilt from its printed statement."""
    return render.problem_from_text(goldens.EASY_STATEMENT, goldens.EASY_QUESTION)


@pytest.fixture(scope="session")
def hard_problem():
    """The op=21 worked example, rebuilt from its printed statement."""
    return render.problem_from_text(goldens.HARD_STATEMENT, goldens.HARD_QUESTION)
