import json
import logging
from pathlib import Path
from typing import Any, Dict

from src.domain.exceptions import ConfigParseError
from src.domain.interfaces import ITopologyLoader
from src.domain.models import (
    GateKind, GateSpec, NetworkTopology, RainInput, TankKind, TankSpec,
)

SCHEMA_VERSION = 1


class JsonTopologyLoader(ITopologyLoader):
    """
    Implementasi ITopologyLoader untuk dokumen jaringan JSON (schema 1).
    Hanya parsing dan serialisasi; aturan jaringan divalidasi di NetworkService.
    """

    def parse(self, document: str) -> NetworkTopology:
        try:
            data = json.loads(document)
        except json.JSONDecodeError as e:
            raise ConfigParseError(f"Dokumen jaringan bukan JSON valid: {e}") from e
        if not isinstance(data, dict):
            raise ConfigParseError("Dokumen jaringan harus berupa objek JSON.")
        if data.get("schema") != SCHEMA_VERSION:
            raise ConfigParseError(f"Versi schema tidak didukung: {data.get('schema')!r} (diharapkan {SCHEMA_VERSION}).")

        try:
            outputs = data.get("outputs", {})
            return NetworkTopology(
                tanks=tuple(self._parse_tank(t) for t in data["tanks"]),
                gates=tuple(self._parse_gate(g) for g in data.get("gates", [])),
                rain_inputs=tuple(
                    RainInput(catchment=str(r["catchment"]), tank=str(r["tank"]))
                    for r in data.get("rain_inputs", [])
                ),
                delta_t=float(data.get("delta_t", 300.0)),
                treatment_sink=str(outputs.get("treatment", "treatment")),
                sea_sink=str(outputs.get("sea", "sea")),
                treatment_capacity=float(outputs.get("treatment_capacity", 0.0)),
                schema=SCHEMA_VERSION,
            )
        except KeyError as e:
            raise ConfigParseError(f"Field wajib hilang: {e}") from e
        except (TypeError, ValueError) as e:
            raise ConfigParseError(f"Nilai field tidak valid: {e}") from e

    def load(self, path: Path) -> NetworkTopology:
        logging.debug(f"📄 Membaca konfigurasi jaringan: {path}")
        return self.parse(Path(path).read_text(encoding="utf-8"))

    def serialize(self, topology: NetworkTopology) -> str:
        data: Dict[str, Any] = {
            "schema": SCHEMA_VERSION,
            "delta_t": topology.delta_t,
            "tanks": [
                {
                    "id": t.id,
                    "kind": t.kind.value,
                    "max_volume": t.max_volume,
                    "beta": t.beta,
                    "catchment_area": t.catchment_area,
                    "has_weir": t.has_weir,
                    "outflow_to": t.outflow_to,
                    "initial_volume": t.initial_volume,
                }
                for t in topology.tanks
            ],
            "gates": [
                {
                    "id": g.id,
                    "kind": g.kind.value,
                    "max_flow": g.max_flow,
                    "source": g.source,
                    "main_target": g.main_target,
                    "diverted_target": g.diverted_target,
                }
                for g in topology.gates
            ],
            "rain_inputs": [{"catchment": r.catchment, "tank": r.tank} for r in topology.rain_inputs],
            "outputs": {
                "treatment": topology.treatment_sink,
                "sea": topology.sea_sink,
                "treatment_capacity": topology.treatment_capacity,
            },
        }
        return json.dumps(data, indent=2, sort_keys=True)

    @staticmethod
    def _parse_tank(t: Dict[str, Any]) -> TankSpec:
        return TankSpec(
            id=str(t["id"]),
            kind=TankKind(t["kind"]),
            max_volume=float(t["max_volume"]),
            beta=float(t["beta"]),
            catchment_area=float(t.get("catchment_area", 0.0)),
            has_weir=bool(t.get("has_weir", False)),
            outflow_to=t.get("outflow_to"),
            initial_volume=float(t.get("initial_volume", 0.0)),
        )

    @staticmethod
    def _parse_gate(g: Dict[str, Any]) -> GateSpec:
        return GateSpec(
            id=str(g["id"]),
            kind=GateKind(g["kind"]),
            max_flow=float(g["max_flow"]),
            source=str(g["source"]),
            main_target=str(g["main_target"]),
            diverted_target=g.get("diverted_target"),
        )
