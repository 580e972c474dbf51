from pathlib import Path

import pytest

from arborparse import graph_from_weights, parse_grammar

DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def list_states_grammar():
    return parse_grammar((DATA / "list_states_grammar.txt").read_text())


@pytest.fixture(scope="session")
def list_states_weight_text():
    return (DATA / "list_states_weights.txt").read_text()


@pytest.fixture
def list_states_graph(list_states_grammar, list_states_weight_text):
    return graph_from_weights(list_states_grammar, "List states", list_states_weight_text)
