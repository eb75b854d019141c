import json

import numpy as np
import pytest
from rest_framework.test import APIClient

from mwnc_app.codec import CodecParams
from mwnc_app.coopsched import Topology


@pytest.fixture
def api_client():
    """
    DRF APIClient; the endpoints are open, so no login is needed.
    """
    return APIClient()


@pytest.fixture
def rng():
    """Fresh seeded generator per test so failures reproduce."""
    return np.random.default_rng(20240601)


@pytest.fixture
def small_params():
    """W=3, V=1/2: the small worked window the decoder trace tests replay."""
    return CodecParams(W=3, V="1/2")


@pytest.fixture
def relay_topology():
    """
    Source plus three nodes: 1 and 2 hear the source well (0.7, 0.9), node 3
    only at 0.4 but hears 1 and 2 at 0.9 and 0.8. Two channels.
    """
    return Topology(prp=[
        [0.0, 0.7, 0.9, 0.4],
        [0.7, 0.0, 0.5, 0.9],
        [0.9, 0.5, 0.0, 0.8],
        [0.4, 0.9, 0.8, 0.0],
    ], K=2)


@pytest.fixture
def topology_file(tmp_path, relay_topology):
    def _write(topology=None, name="topology.json"):
        topology = topology or relay_topology
        path = tmp_path / name
        path.write_text(json.dumps(topology.to_dict()))
        return str(path)
    return _write
