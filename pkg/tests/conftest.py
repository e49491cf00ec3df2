from pathlib import Path

import pytest

from scqc.surface_graph import CodeParams, build_graph

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def mem3():
    return build_graph(CodeParams.memory(3, 2))


@pytest.fixture(scope="session")
def mem5():
    return build_graph(CodeParams.memory(5, 5))


def tiny_graph_doc(edges, detectors, boundaries=0):
    """Hand-made graph document: ``detectors`` detector vertices on layer 0,
    then ``boundaries`` spatial-boundary vertices."""
    verts = [{"id": i, "x": 2 * i, "y": 0, "t": 0, "kind": "detector"} for i in range(detectors)]
    verts += [
        {"id": detectors + k, "x": -2 - 2 * k, "y": 0, "t": 0, "kind": "spatial-boundary"}
        for k in range(boundaries)
    ]
    return {
        "meta": {"experiment": "memory", "d": 3, "n": 0, "layers": 1},
        "vertices": verts,
        "edges": [
            {"u": u, "v": v, "w": w, "obs": 0, "kind": "spatial"} for u, v, w in edges
        ],
    }
