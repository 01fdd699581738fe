import logging
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from src.domain.exceptions import TopologyValidationError
from src.domain.interfaces import ITopologyLoader
from src.domain.models import (
    Diagnostic, Dimensions, GateKind, NetworkMatrices, NetworkTopology, TankKind,
)

# 1 um/s hujan pada 1 m2 catchment = 1e-6 m3/s
INTENSITY_TO_FLOW = 1e-6


def catchment_flow_factors(topology: NetworkTopology) -> np.ndarray:
    """Faktor konversi intensitas (um/s) -> debit (m3/s) per input hujan."""
    by_id = {t.id: t for t in topology.tanks}
    return np.array([
        INTENSITY_TO_FLOW * (by_id[r.tank].catchment_area if r.tank in by_id else 0.0)
        for r in topology.rain_inputs
    ], dtype=float)


def _downstream_edges(topology: NetworkTopology) -> Dict[str, List[str]]:
    tank_ids = set(topology.tank_ids)
    edges: Dict[str, List[str]] = {t: [] for t in tank_ids}
    for tank in topology.tanks:
        if tank.outflow_to in tank_ids:
            edges[tank.id].append(tank.outflow_to)
    for gate in topology.gates:
        if gate.source not in tank_ids:
            continue
        for target in (gate.main_target, gate.diverted_target):
            if target in tank_ids:
                edges[gate.source].append(target)
    return edges


def topological_order(topology: NetworkTopology) -> Optional[List[str]]:
    """Urutan tangki dari hulu ke hilir; None bila graf aliran memiliki siklus."""
    edges = _downstream_edges(topology)
    indegree = {t: 0 for t in topology.tank_ids}
    for targets in edges.values():
        for target in targets:
            indegree[target] += 1
    # Urutan deklarasi dipertahankan agar hasil deterministik
    ready = [t for t in topology.tank_ids if indegree[t] == 0]
    order: List[str] = []
    while ready:
        current = ready.pop(0)
        order.append(current)
        for target in edges[current]:
            indegree[target] -= 1
            if indegree[target] == 0:
                ready.append(target)
    return order if len(order) == len(topology.tank_ids) else None


def validate_topology(topology: NetworkTopology) -> List[Diagnostic]:
    diags: List[Diagnostic] = []

    def flag(element: str, rule: str, message: str):
        diags.append(Diagnostic(element=element, rule=rule, message=message))

    if not topology.delta_t > 0:
        flag("delta_t", "positive-delta-t", f"delta_t harus > 0, didapat {topology.delta_t}")
    if topology.treatment_sink == topology.sea_sink:
        flag("outputs", "two-outputs", "Sink treatment dan sea harus berbeda.")
    if topology.treatment_capacity < 0:
        flag("outputs", "two-outputs", "treatment_capacity tidak boleh negatif.")

    tank_ids = topology.tank_ids
    gate_ids = topology.gate_ids
    sinks = set(topology.sinks)
    all_ids = tank_ids + gate_ids + topology.catchment_ids
    for element in sorted({i for i in all_ids if all_ids.count(i) > 1 or i in sinks}):
        flag(element, "duplicate-id", "ID dipakai lebih dari satu elemen atau bentrok dengan nama sink.")

    tanks = {t.id: t for t in topology.tanks}
    destinations = set(tank_ids) | sinks
    retention_by_tank: Dict[str, List[str]] = {}
    gates_by_source: Dict[str, List[str]] = {}
    for gate in topology.gates:
        gates_by_source.setdefault(gate.source, []).append(gate.id)

    for tank in topology.tanks:
        if not tank.max_volume > 0:
            flag(tank.id, "positive-volume", f"max_volume harus > 0, didapat {tank.max_volume}")
        if not tank.beta > 0:
            flag(tank.id, "positive-beta", f"beta harus > 0, didapat {tank.beta}")
        elif tank.beta * topology.delta_t >= 1.0:
            flag(tank.id, "discrete-stability",
                 f"beta*delta_t = {tank.beta * topology.delta_t:g} >= 1; outflow diskret melebihi volume tersimpan.")
        if tank.has_weir and tank.kind is not TankKind.VIRTUAL:
            flag(tank.id, "weir-virtual-only", "Weir hanya diperbolehkan pada virtual tank.")
        if tank.catchment_area < 0:
            flag(tank.id, "nonnegative-area", f"catchment_area negatif: {tank.catchment_area}")
        if not 0 <= tank.initial_volume <= tank.max_volume:
            flag(tank.id, "initial-volume-range", f"initial_volume {tank.initial_volume} di luar [0, {tank.max_volume}]")
        if tank.outflow_to is not None and tank.outflow_to not in destinations:
            flag(tank.id, "dangling-target", f"outflow_to '{tank.outflow_to}' tidak dikenal.")

        intercepting = gates_by_source.get(tank.id, [])
        if tank.kind is TankKind.VIRTUAL:
            if tank.outflow_to is None and len(intercepting) != 1:
                flag(tank.id, "single-outflow-path", "Virtual tank tanpa outflow_to harus disadap tepat satu redirection gate.")
            if tank.outflow_to is not None and intercepting:
                flag(tank.id, "single-outflow-path", "Virtual tank dengan outflow_to tidak boleh juga disadap gate.")
        else:
            if tank.outflow_to is not None:
                flag(tank.id, "real-tank-retention", "Outflow real tank diatur retention gate; outflow_to harus kosong.")

    for gate in topology.gates:
        if not gate.max_flow > 0:
            flag(gate.id, "positive-gate-flow", f"max_flow harus > 0, didapat {gate.max_flow}")
        for name, target in (("main_target", gate.main_target), ("diverted_target", gate.diverted_target)):
            if target is not None and target not in destinations:
                flag(gate.id, "dangling-target", f"{name} '{target}' tidak dikenal.")
        if gate.kind is GateKind.RETENTION:
            source = tanks.get(gate.source)
            if source is None or source.kind is not TankKind.REAL:
                flag(gate.id, "retention-on-real-tank", f"Retention gate harus terpasang pada real tank, bukan '{gate.source}'.")
            else:
                retention_by_tank.setdefault(source.id, []).append(gate.id)
        else:
            if gate.diverted_target is None:
                flag(gate.id, "dangling-target", "Redirection gate memerlukan diverted_target.")
            source = tanks.get(gate.source)
            if source is None and gate.source not in topology.catchment_ids:
                flag(gate.id, "dangling-source", f"Sumber '{gate.source}' bukan tangki maupun catchment.")
            elif source is not None and source.kind is not TankKind.VIRTUAL:
                flag(gate.id, "dangling-source", "Redirection gate hanya menyadap outflow virtual tank.")
        if len(gates_by_source.get(gate.source, [])) > 1:
            flag(gate.id, "single-outflow-path", f"Sumber '{gate.source}' disadap lebih dari satu gate.")

    for tank in topology.tanks:
        if tank.kind is TankKind.REAL and len(retention_by_tank.get(tank.id, [])) != 1:
            flag(tank.id, "real-tank-retention", "Real tank harus memiliki tepat satu retention gate.")

    for rain in topology.rain_inputs:
        if rain.tank not in tanks:
            flag(rain.catchment, "dangling-target", f"Input hujan menuju tangki '{rain.tank}' yang tidak dikenal.")

    if not diags and topological_order(topology) is None:
        flag("network", "acyclic-flow", "Graf aliran dari input hujan ke sink memiliki siklus.")
    return diags


class _FlowMap:
    """Akumulator ekspresi linear debit masuk per tujuan: in = EV.V + Eu.u + Ew.w."""

    def __init__(self, dims: Dimensions):
        self.dims = dims
        self.terms: Dict[str, Tuple[np.ndarray, np.ndarray, np.ndarray]] = {}

    def _entry(self, dest: str):
        if dest not in self.terms:
            self.terms[dest] = (
                np.zeros(self.dims.n_tanks), np.zeros(self.dims.n_controls), np.zeros(self.dims.n_rain)
            )
        return self.terms[dest]

    def add(self, dest: str, volume: Optional[Tuple[int, float]] = None,
            control: Optional[Tuple[int, float]] = None, rain: Optional[Tuple[int, float]] = None):
        ev, eu, ew = self._entry(dest)
        if volume is not None:
            ev[volume[0]] += volume[1]
        if control is not None:
            eu[control[0]] += control[1]
        if rain is not None:
            ew[rain[0]] += rain[1]

    def get(self, dest: str):
        return self._entry(dest)


def assemble_control_model(topology: NetworkTopology) -> NetworkMatrices:
    """Merakit (A,B,G,C,D,F) dan (M,P,S,K) model kontrol tanpa weir."""
    n, m, r = len(topology.tanks), len(topology.gates), len(topology.rain_inputs)
    dims = Dimensions(n_tanks=n, n_controls=m, n_rain=r)
    dt = topology.delta_t
    tank_idx = {t.id: i for i, t in enumerate(topology.tanks)}
    rain_idx = {c.catchment: j for j, c in enumerate(topology.rain_inputs)}
    rho = catchment_flow_factors(topology)
    intercepted = {g.source for g in topology.gates}

    flows = _FlowMap(dims)
    for j, rain in enumerate(topology.rain_inputs):
        if rain.catchment not in intercepted:
            flows.add(rain.tank, rain=(j, rho[j]))
    for i, tank in enumerate(topology.tanks):
        if tank.kind is TankKind.VIRTUAL and tank.outflow_to is not None:
            flows.add(tank.outflow_to, volume=(i, tank.beta))

    A = np.eye(n)
    B = np.zeros((n, m))
    rows_m: List[np.ndarray] = []
    rows_p: List[np.ndarray] = []
    rows_s: List[np.ndarray] = []
    rows_k: List[float] = []
    labels: List[str] = []

    def add_row(label: str, k: float, mu=None, pv=None, sw=None):
        rows_m.append(np.zeros(m) if mu is None else mu)
        rows_p.append(np.zeros(n) if pv is None else pv)
        rows_s.append(np.zeros(r) if sw is None else sw)
        rows_k.append(float(k))
        labels.append(label)

    for i, tank in enumerate(topology.tanks):
        if tank.kind is TankKind.VIRTUAL:
            A[i, i] -= dt * tank.beta
        unit = np.zeros(n)
        unit[i] = 1.0
        add_row(f"V_min[{tank.id}]", 0.0, pv=-unit)
        add_row(f"V_max[{tank.id}]", tank.max_volume, pv=unit.copy())

    for j, gate in enumerate(topology.gates):
        unit_u = np.zeros(m)
        unit_u[j] = 1.0
        add_row(f"u_min[{gate.id}]", 0.0, mu=-unit_u)
        add_row(f"u_max[{gate.id}]", gate.max_flow, mu=unit_u.copy())
        if gate.kind is GateKind.RETENTION:
            i = tank_idx[gate.source]
            B[i, j] -= dt
            flows.add(gate.main_target, control=(j, 1.0))
            pv = np.zeros(n)
            pv[i] = -topology.tanks[i].beta
            add_row(f"u_release[{gate.id}]", 0.0, mu=unit_u.copy(), pv=pv)
        else:
            pv, sw = np.zeros(n), np.zeros(r)
            if gate.source in tank_idx:
                i = tank_idx[gate.source]
                beta = topology.tanks[i].beta
                flows.add(gate.main_target, volume=(i, beta))
                pv[i] = -beta
            else:
                c = rain_idx[gate.source]
                flows.add(gate.main_target, rain=(c, rho[c]))
                sw[c] = -rho[c]
            flows.add(gate.main_target, control=(j, -1.0))
            if gate.diverted_target is not None:
                flows.add(gate.diverted_target, control=(j, 1.0))
            add_row(f"u_inflow[{gate.id}]", 0.0, mu=unit_u.copy(), pv=pv, sw=sw)

    G = np.zeros((n, r))
    for tank_id, i in tank_idx.items():
        ev, eu, ew = flows.get(tank_id)
        A[i, :] += dt * ev
        B[i, :] += dt * eu
        G[i, :] += dt * ew

    C = np.zeros((2, n))
    D = np.zeros((2, m))
    F = np.zeros((2, r))
    for row, sink in enumerate(topology.sinks):
        ev, eu, ew = flows.get(sink)
        C[row], D[row], F[row] = ev, eu, ew

    matrices = NetworkMatrices(
        A=A, B=B, G=G, C=C, D=D, F=F,
        M=np.array(rows_m).reshape(-1, m), P=np.array(rows_p).reshape(-1, n),
        S=np.array(rows_s).reshape(-1, r), K=np.array(rows_k),
        dims=dims, row_labels=tuple(labels), delta_t=dt,
    )
    logging.debug(f"🧱 Model kontrol dirakit: {n} tangki, {m} kontrol, {r} input hujan, {len(labels)} baris pertidaksamaan.")
    return matrices


class NetworkService:
    """Memuat, memvalidasi, dan merakit jaringan saluran pembuangan."""

    def __init__(self, loader: ITopologyLoader):
        self.loader = loader

    def load_topology(self, document: str) -> NetworkTopology:
        topology = self.loader.parse(document)
        self._ensure_valid(topology)
        return topology

    def load_file(self, path: Path) -> NetworkTopology:
        topology = self.loader.load(path)
        self._ensure_valid(topology)
        logging.info(f"🗺️ Jaringan dimuat dari {path.name}: {len(topology.tanks)} tangki, {len(topology.gates)} gate.")
        return topology

    def serialize(self, topology: NetworkTopology) -> str:
        return self.loader.serialize(topology)

    def validate_topology(self, topology: NetworkTopology) -> List[Diagnostic]:
        return validate_topology(topology)

    def assemble_control_model(self, topology: NetworkTopology) -> NetworkMatrices:
        self._ensure_valid(topology)
        return assemble_control_model(topology)

    @staticmethod
    def _ensure_valid(topology: NetworkTopology):
        diagnostics = validate_topology(topology)
        if diagnostics:
            for d in diagnostics:
                logging.warning(f"⚠️ {d}")
            raise TopologyValidationError(diagnostics)
