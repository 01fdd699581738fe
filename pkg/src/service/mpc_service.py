import logging
from typing import List, Optional, Tuple

import numpy as np

from src.domain.exceptions import DimensionMismatchError, StateBoundsError
from src.domain.interfaces import IController, IQpSolver
from src.domain.models import (
    ControlDecision, ForecastWindow, HorizonProgram, MpcConfig, NetworkMatrices,
    QpProblem, QpStatus, StepStatus, VariableLayout,
)

# Toleransi relatif saat memeriksa volume terukur terhadap [0, V_max]
STATE_TOLERANCE = 1e-9


def _check_inputs(matrices: NetworkMatrices, config: MpcConfig, v0: np.ndarray,
                  u_prev: np.ndarray, rain_forecast: np.ndarray,
                  max_volumes: Optional[np.ndarray]) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    dims = matrices.dims
    v0 = np.asarray(v0, dtype=float)
    u_prev = np.asarray(u_prev, dtype=float)
    rain = np.asarray(rain_forecast, dtype=float)
    if v0.shape != (dims.n_tanks,) or u_prev.shape != (dims.n_controls,):
        raise DimensionMismatchError(f"v0 {v0.shape} / u_prev {u_prev.shape} tidak cocok dengan n={dims.n_tanks}, m={dims.n_controls}")
    if rain.shape != (config.horizon, dims.n_rain):
        raise DimensionMismatchError(f"Ramalan hujan {rain.shape} harus ({config.horizon}, {dims.n_rain})")
    if not (np.all(np.isfinite(v0)) and np.all(np.isfinite(u_prev)) and np.all(np.isfinite(rain))):
        raise DimensionMismatchError("Input MPC mengandung NaN/inf.")

    if max_volumes is not None:
        slack = STATE_TOLERANCE * np.maximum(1.0, max_volumes)
        if np.any(v0 < -slack) or np.any(v0 > max_volumes + slack):
            raise StateBoundsError(f"Volume terukur di luar [0, V_max]: {v0}")
        v0 = np.clip(v0, 0.0, max_volumes)
    return v0, u_prev, rain


def max_volumes_from(matrices: NetworkMatrices) -> np.ndarray:
    """V_max per tangki dibaca dari baris V_max (P = e_i, M = 0, S = 0)."""
    n = matrices.dims.n_tanks
    caps = np.full(n, np.inf)
    for r in np.flatnonzero(matrices.state_only_rows):
        p = matrices.P[r]
        nz = np.flatnonzero(p)
        if nz.size == 1 and p[nz[0]] > 0:
            i = nz[0]
            caps[i] = min(caps[i], matrices.K[r] / p[i])
    return caps


def build_program(matrices: NetworkMatrices, config: MpcConfig, v0: np.ndarray,
                  u_prev: np.ndarray, rain_forecast: np.ndarray) -> HorizonProgram:
    """
    QP receding-horizon: sum_k |z_k - z_ref|^2_Q + |dq^u_k|^2_R dengan dinamika,
    persamaan output, dan definisi dq^u sebagai kesetaraan, serta baris (M,P,S,K)
    untuk k = 0..N-1 dengan ramalan hujan disubstitusi.
    """
    caps = max_volumes_from(matrices)
    v0, u_prev, rain = _check_inputs(matrices, config, v0, u_prev, rain_forecast, caps)

    n, m = matrices.dims.n_tanks, matrices.dims.n_controls
    N = config.horizon
    layout = VariableLayout(n_tanks=n, n_controls=m, horizon=N)
    nx = layout.size
    A, B, G, C, D, F = matrices.A, matrices.B, matrices.G, matrices.C, matrices.D, matrices.F

    # --- Biaya ---
    Q = np.diag(np.asarray(config.q_weights, dtype=float))
    R = config.r_weight * np.eye(m)
    z_ref = np.asarray(config.z_ref, dtype=float)
    H = np.zeros((nx, nx))
    g = np.zeros(nx)
    for k in range(N):
        zs, ms = layout.output(k), layout.move(k)
        H[zs, zs] = 2.0 * Q
        H[ms, ms] = 2.0 * R
        g[zs] = -2.0 * Q @ z_ref
    constant = float(N * (z_ref @ Q @ z_ref))

    # --- Kesetaraan: dinamika, output, perubahan kontrol ---
    n_eq = N * (n + 2 + m)
    Aeq = np.zeros((n_eq, nx))
    beq = np.zeros(n_eq)
    row = 0
    for k in range(N):
        vs, us, zs, ms = layout.volume(k), layout.control(k), layout.output(k), layout.move(k)
        eq = slice(row, row + n)
        Aeq[eq, vs] = np.eye(n)
        Aeq[eq, us] = -B
        beq[eq] = G @ rain[k]
        if k == 0:
            beq[eq] += A @ v0
        else:
            Aeq[eq, layout.volume(k - 1)] = -A
        row += n

        eq = slice(row, row + 2)
        Aeq[eq, zs] = np.eye(2)
        Aeq[eq, us] = -D
        beq[eq] = F @ rain[k]
        if k == 0:
            beq[eq] += C @ v0
        else:
            Aeq[eq, layout.volume(k - 1)] = -C
        row += 2

        eq = slice(row, row + m)
        Aeq[eq, ms] = np.eye(m)
        Aeq[eq, us] = -np.eye(m)
        if k == 0:
            beq[eq] = -u_prev
        else:
            Aeq[eq, layout.control(k - 1)] = np.eye(m)
        row += m

    # --- Pertidaksamaan ---
    state_only = matrices.state_only_rows
    step_rows = np.flatnonzero(~state_only)
    volume_rows = np.flatnonzero(state_only)
    n_ineq = N * (step_rows.size + volume_rows.size)
    Aineq = np.zeros((n_ineq, nx))
    bineq = np.zeros(n_ineq)
    row_index: List[Tuple[int, int]] = []
    row = 0
    for k in range(N):
        # Baris yang melibatkan kontrol/hujan langkah k dengan V_k
        block = slice(row, row + step_rows.size)
        Aineq[block, layout.control(k)] = matrices.M[step_rows]
        bineq[block] = matrices.K[step_rows] - matrices.S[step_rows] @ rain[k]
        if k == 0:
            bineq[block] -= matrices.P[step_rows] @ v0
        else:
            Aineq[block, layout.volume(k - 1)] = matrices.P[step_rows]
        row_index += [(k, int(i)) for i in step_rows]
        row += step_rows.size

        # Baris volume murni pada V_{k+1}
        block = slice(row, row + volume_rows.size)
        Aineq[block, layout.volume(k)] = matrices.P[volume_rows]
        bineq[block] = matrices.K[volume_rows]
        row_index += [(k + 1, int(i)) for i in volume_rows]
        row += volume_rows.size

    problem = QpProblem(H=H, g=g, Aeq=Aeq, beq=beq, Aineq=Aineq, bineq=bineq, constant=constant)
    return HorizonProgram(problem=problem, layout=layout, row_index=tuple(row_index))


def solve_program(solver: IQpSolver, program: HorizonProgram) -> ControlDecision:
    solution = solver.solve(program.problem)
    if solution.status is QpStatus.INFEASIBLE:
        return ControlDecision(controls=None, status=StepStatus.INFEASIBLE, gamma_used=None)
    plan = program.plan(solution.x)
    status = StepStatus.OPTIMAL if solution.status is QpStatus.OPTIMAL else StepStatus.MAX_ITERATIONS
    return ControlDecision(
        controls=plan[0].copy(),
        status=status,
        plan=plan,
        gamma_used=program.gamma,
        objective=solution.objective,
        constant_cost=program.constant_cost,
    )


def control_step(solver: IQpSolver, matrices: NetworkMatrices, config: MpcConfig, v0: np.ndarray,
                 u_prev: np.ndarray, rain_forecast: np.ndarray) -> ControlDecision:
    """Kontrol langkah pertama dari optimum QP; status infeasible diteruskan ke closed loop."""
    program = build_program(matrices, config, v0, u_prev, rain_forecast)
    return solve_program(solver, program)


def replay_plan(matrices: NetworkMatrices, v0: np.ndarray, plan: np.ndarray,
                rain_forecast: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Memutar rencana kontrol pada model linear. Mengembalikan volume (N+1, n) dan
    slack baris (M,P,S,K) per langkah (N, baris); slack >= 0 berarti baris terpenuhi.
    """
    N = len(plan)
    volumes = [np.asarray(v0, dtype=float)]
    slacks = []
    for k in range(N):
        v, u, w = volumes[-1], plan[k], rain_forecast[k]
        slacks.append(matrices.K - (matrices.M @ u + matrices.P @ v + matrices.S @ w))
        volumes.append(matrices.A @ v + matrices.B @ u + matrices.G @ w)
    return np.array(volumes), np.array(slacks)


class DeterministicMpcController(IController):
    """MPC dengan ramalan titik (sempurna atau sampel) yang dianggap pasti."""

    def __init__(self, solver: IQpSolver, matrices: NetworkMatrices, config: MpcConfig):
        self.solver = solver
        self.matrices = matrices
        self.config = config

    @property
    def horizon(self) -> int:
        return self.config.horizon

    def decide(self, volumes: np.ndarray, previous_controls: np.ndarray, forecast: ForecastWindow) -> ControlDecision:
        decision = control_step(self.solver, self.matrices, self.config, volumes, previous_controls, forecast.point)
        if decision.status is StepStatus.INFEASIBLE:
            logging.debug("🚫 QP MPC deterministik infeasible.")
        return decision
