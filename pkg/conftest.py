import sys
from pathlib import Path

import numpy as np
import pytest

# The packages are plain directories at the repository root.
sys.path.insert(0, str(Path(__file__).resolve().parent))

from estimation.graph import Graph  # noqa: E402
from estimation.sysmodel import ContinuousModel, discretize, mixed_sensor_models  # noqa: E402

ROTATION_DRIFT = [[0.0, -3.0], [3.0, 0.0]]


@pytest.fixture
def rotation_model():
    """Rotating two-state target, F = [[0, -3], [3, 0]], G = I, Q = 25 I."""
    return ContinuousModel(f=np.array(ROTATION_DRIFT), g=np.eye(2), q_cov=25.0 * np.eye(2))


@pytest.fixture
def rotation_process(rotation_model):
    return discretize(rotation_model, 0.015)


@pytest.fixture
def mixed_sensors():
    return mixed_sensor_models(20)


@pytest.fixture
def path2():
    return Graph.path(2)


@pytest.fixture
def small_graph():
    """Path 0-1-2-3-4 with the chord 1-3."""
    return Graph(n=5, edges=((0, 1), (1, 2), (2, 3), (3, 4), (1, 3)))


def scenario_dict(n: int = 5, steps: int = 50, **overrides) -> dict:
    """
    Raw scenario mapping on a path graph. The first half of the sensors observe the state directly, the rest
    through [[1, 2], [2, 1]].
    """
    sensors = []
    for i in range(1, n + 1):
        h = [[1.0, 0.0], [0.0, 1.0]] if i <= (n + 1) // 2 else [[1.0, 2.0], [2.0, 1.0]]
        r = 0.01 * float(np.sqrt(i))
        sensors.append({"h": h, "r_cov": [[r, 0.0], [0.0, r]]})
    raw = {
        "name": f"test_n{n}",
        "process": {"kind": "continuous", "f": ROTATION_DRIFT, "g": [[1.0, 0.0], [0.0, 1.0]],
                    "q_cov": [[25.0, 0.0], [0.0, 25.0]], "dt": 0.015},
        "sensors": sensors,
        "graph": {"n": n, "edges": [[i, i + 1] for i in range(n - 1)]},
        "steps": steps,
        "initial_truth": [1.0, 1.0],
    }
    raw.update(overrides)
    return raw


@pytest.fixture
def make_scenario():
    return scenario_dict
