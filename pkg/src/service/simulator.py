import logging
from typing import Dict, List, Optional

import numpy as np

from src.domain.exceptions import DimensionMismatchError, ScenarioError
from src.domain.interfaces import IController, IForecastSource
from src.domain.models import (
    ControlDecision, GateKind, NetworkTopology, PlantState, RainScenario, SimStepResult,
    SimulationTrace, StepStatus, TankKind, TraceStep,
)
from src.service.network_service import catchment_flow_factors, topological_order

# Batas iterasi pengurangan diversion gate saat real tank akan meluap
MAX_DIVERSION_PASSES = 8


class _Routing:
    """Hasil satu lintasan routing dengan kontrol tertentu (belum di-clamp ke V_max real tank)."""

    def __init__(self, n: int, m: int):
        self.new_volumes = np.zeros(n)
        self.weir = np.zeros(n)
        self.inflows = np.zeros(n)
        self.outflows = np.zeros(n)
        self.applied = np.zeros(m)
        self.sinks: Dict[str, float] = {}


def _route(topology: NetworkTopology, order: List[str], volumes: np.ndarray,
           controls: np.ndarray, rain_flows: np.ndarray) -> _Routing:
    dt = topology.delta_t
    n, m = len(topology.tanks), len(topology.gates)
    tank_idx = {t.id: i for i, t in enumerate(topology.tanks)}
    result = _Routing(n, m)
    result.sinks = {s: 0.0 for s in topology.sinks}
    gate_by_source = {g.source: (j, g) for j, g in enumerate(topology.gates)}

    def deliver(dest: Optional[str], flow: float):
        if dest is None:
            return
        if dest in tank_idx:
            result.inflows[tank_idx[dest]] += flow
        else:
            result.sinks[dest] = result.sinks.get(dest, 0.0) + flow

    def redirect(j: int, gate, flow: float):
        u = min(max(controls[j], 0.0), gate.max_flow, flow)
        result.applied[j] = u
        deliver(gate.main_target, flow - u)
        deliver(gate.diverted_target, u)

    for c, rain in enumerate(topology.rain_inputs):
        if rain.catchment in gate_by_source:
            j, gate = gate_by_source[rain.catchment]
            redirect(j, gate, rain_flows[c])
        else:
            deliver(rain.tank, rain_flows[c])

    for tank_id in order:
        i = tank_idx[tank_id]
        tank = topology.tanks[i]
        v, q_in = volumes[i], result.inflows[i]

        if tank.kind is TankKind.VIRTUAL:
            shed = 0.0
            if tank.has_weir:
                keep = 1.0 - tank.beta * dt
                shed = max(0.0, v - tank.max_volume, v - (tank.max_volume - dt * q_in) / keep)
                shed = min(shed, v)
            outflow = tank.beta * (v - shed)
            new_v = v + dt * q_in - shed - dt * outflow
            if tank.has_weir and new_v > tank.max_volume:
                # Inflow satu langkah melebihi kapasitas: sisa ikut ditumpahkan lewat weir
                shed += new_v - tank.max_volume
                new_v = tank.max_volume
            result.weir[i] = shed / dt
            result.outflows[i] = outflow
            result.new_volumes[i] = max(new_v, 0.0)
            if tank.outflow_to is not None:
                deliver(tank.outflow_to, outflow)
            elif tank_id in gate_by_source:
                j, gate = gate_by_source[tank_id]
                redirect(j, gate, outflow)
        else:
            j, gate = gate_by_source[tank_id]
            u = min(max(controls[j], 0.0), gate.max_flow, tank.beta * v)
            result.applied[j] = u
            result.outflows[i] = u
            result.new_volumes[i] = v + dt * (q_in - u)
            deliver(gate.main_target, u)
    return result


def plant_step(topology: NetworkTopology, state: PlantState, controls: np.ndarray, rain: np.ndarray) -> SimStepResult:
    """
    Satu langkah plant nonlinear: clamp kontrol ke batas fisik, routing hulu ke hilir,
    weir pada virtual tank, dan diagnosa pelanggaran bila real tank melewati V_max.
    """
    n, m, r = len(topology.tanks), len(topology.gates), len(topology.rain_inputs)
    volumes = np.asarray(state.volumes, dtype=float)
    controls = np.asarray(controls, dtype=float)
    rain = np.asarray(rain, dtype=float)
    if volumes.shape != (n,) or controls.shape != (m,) or rain.shape != (r,):
        raise DimensionMismatchError(
            f"Dimensi tidak cocok: volumes {volumes.shape} (n={n}), controls {controls.shape} (m={m}), rain {rain.shape} (r={r})"
        )
    if not np.all(np.isfinite(rain)) or np.any(rain < 0):
        raise ScenarioError(f"Hujan harus finite dan >= 0: {rain}")
    if not np.all(np.isfinite(controls)):
        raise DimensionMismatchError("Kontrol mengandung NaN/inf.")

    order = topological_order(topology)
    if order is None:
        raise DimensionMismatchError("Topologi memiliki siklus; plant tidak dapat di-route.")
    rain_flows = catchment_flow_factors(topology) * rain
    requested = controls.copy()

    routing = _route(topology, order, volumes, requested, rain_flows)
    for _ in range(MAX_DIVERSION_PASSES):
        reduced = False
        for i, tank in enumerate(topology.tanks):
            excess = routing.new_volumes[i] - tank.max_volume
            if tank.kind is not TankKind.REAL or excess <= 1e-12:
                continue
            # Kurangi diversion ke tangki ini, gate terakhir lebih dulu
            needed = excess / topology.delta_t
            for j in reversed(range(m)):
                gate = topology.gates[j]
                if gate.kind is GateKind.REDIRECTION and gate.diverted_target == tank.id and routing.applied[j] > 0:
                    cut = min(needed, routing.applied[j])
                    requested[j] = routing.applied[j] - cut
                    needed -= cut
                    reduced = True
                    if needed <= 0:
                        break
        if not reduced:
            break
        routing = _route(topology, order, volumes, requested, rain_flows)

    violation = np.zeros(n)
    for i, tank in enumerate(topology.tanks):
        if tank.kind is TankKind.REAL and routing.new_volumes[i] > tank.max_volume:
            violation[i] = routing.new_volumes[i] - tank.max_volume
            routing.new_volumes[i] = tank.max_volume
            logging.debug(f"⚠️ Pelanggaran fisik di {tank.id}: {violation[i]:.3f} m3 di-clamp.")

    outputs = np.array([routing.sinks.get(s, 0.0) for s in topology.sinks])
    return SimStepResult(
        new_state=PlantState(volumes=routing.new_volumes, previous_controls=routing.applied.copy()),
        weir_flows=routing.weir,
        outputs=outputs,
        applied_controls=routing.applied,
        inflows=routing.inflows,
        outflows=routing.outflows,
        violation=violation,
    )


class PlanBuffer:
    """Rencana kontrol terakhir yang feasible; digeser satu langkah setiap kali dipakai sebagai fallback."""

    def __init__(self, initial_controls: np.ndarray):
        self.plan: Optional[np.ndarray] = None
        self.last = np.asarray(initial_controls, dtype=float).copy()

    def store(self, plan: Optional[np.ndarray], applied: np.ndarray):
        self.plan = None if plan is None else np.array(plan, dtype=float, copy=True)
        self.last = np.asarray(applied, dtype=float).copy()

    def fallback(self) -> np.ndarray:
        if self.plan is not None and len(self.plan) > 1:
            self.plan = self.plan[1:]
            return self.plan[0].copy()
        # Rencana habis: tahan kontrol terakhir
        self.plan = None
        return self.last.copy()


def run_closed_loop(
    topology: NetworkTopology,
    controller: IController,
    scenario: RainScenario,
    forecast_source: IForecastSource,
    initial_state: Optional[PlantState] = None,
) -> SimulationTrace:
    dt = topology.delta_t
    n_steps = scenario.n_steps(dt)
    if n_steps < 1:
        raise ScenarioError("Skenario harus memiliki minimal satu langkah.")
    n_rain = len(topology.rain_inputs)
    actual = scenario.actual_profile(dt)

    state = initial_state or PlantState(
        volumes=topology.initial_volumes(), previous_controls=np.zeros(len(topology.gates))
    )
    buffer = PlanBuffer(state.previous_controls)
    trace = SimulationTrace(tank_ids=topology.tank_ids, gate_ids=topology.gate_ids, delta_t=dt)

    for k in range(n_steps):
        try:
            forecast = forecast_source.window(k, controller.horizon)
            decision = controller.decide(state.volumes, state.previous_controls, forecast)
        except Exception as e:
            logging.error(f"❌ Controller gagal pada langkah {k}: {e}", exc_info=True)
            decision = ControlDecision(controls=None, status=StepStatus.ERROR)

        usable = decision.status in (StepStatus.OPTIMAL, StepStatus.MAX_ITERATIONS) and decision.controls is not None
        if usable:
            controls = decision.controls
        else:
            controls = buffer.fallback()
            logging.info(f"🚫 Langkah {k}: {decision.status.value} (gamma dicoba {list(decision.gamma_tried)}); pakai rencana sebelumnya.")

        result = plant_step(topology, state, controls, np.full(n_rain, actual[k]))
        if usable:
            buffer.store(decision.plan, result.applied_controls)

        expected = None
        if decision.objective is not None:
            expected = decision.objective + decision.constant_cost
        trace.steps.append(TraceStep(
            k=k,
            t_s=k * dt,
            volumes=result.new_state.volumes.copy(),
            controls=result.applied_controls.copy(),
            weir_flows=result.weir_flows.copy(),
            outputs=result.outputs.copy(),
            status=decision.status.value,
            gamma_used=decision.gamma_used,
            gamma_tried=tuple(decision.gamma_tried),
            objective=decision.objective,
            expected_cost=expected,
            violation=float(np.sum(result.violation)),
        ))
        state = result.new_state
    return trace


def total_overflow(trace: SimulationTrace) -> float:
    """Volume weir total (m3) sepanjang trace."""
    if not trace.steps:
        return 0.0
    return float(trace.delta_t * sum(float(np.sum(s.weir_flows)) for s in trace.steps))
