"""Jaringan kecil bersama untuk pengujian: T1 -> U1 (T2 | R1), R1 -> U2 -> T2, T2 -> treatment."""
import copy
import json
from pathlib import Path

from src.domain.models import NetworkTopology
from src.infrastructure.adapters.topology_loader import JsonTopologyLoader

BUNDLED_NETWORK = Path(__file__).resolve().parent.parent / "resources" / "networks" / "ten_tank.json"

SMALL_NETWORK = {
    "schema": 1,
    "delta_t": 300.0,
    "tanks": [
        {"id": "T1", "kind": "virtual", "max_volume": 2000.0, "beta": 0.001, "catchment_area": 500000.0,
         "has_weir": True, "outflow_to": None, "initial_volume": 100.0},
        {"id": "T2", "kind": "virtual", "max_volume": 3000.0, "beta": 0.001, "catchment_area": 300000.0,
         "has_weir": True, "outflow_to": "treatment", "initial_volume": 50.0},
        {"id": "R1", "kind": "real", "max_volume": 1500.0, "beta": 0.002, "catchment_area": 0.0,
         "has_weir": False, "outflow_to": None, "initial_volume": 0.0},
    ],
    "gates": [
        {"id": "U1", "kind": "redirection", "max_flow": 1.0, "source": "T1", "main_target": "T2", "diverted_target": "R1"},
        {"id": "U2", "kind": "retention", "max_flow": 0.5, "source": "R1", "main_target": "T2", "diverted_target": None},
    ],
    "rain_inputs": [
        {"catchment": "C1", "tank": "T1"},
        {"catchment": "C2", "tank": "T2"},
    ],
    "outputs": {"treatment": "treatment", "sea": "sea", "treatment_capacity": 0.3},
}


def small_network_document(**overrides) -> dict:
    doc = copy.deepcopy(SMALL_NETWORK)
    doc.update(overrides)
    return doc


def small_topology(**overrides) -> NetworkTopology:
    return JsonTopologyLoader().parse(json.dumps(small_network_document(**overrides)))


def bundled_topology() -> NetworkTopology:
    return JsonTopologyLoader().load(BUNDLED_NETWORK)
