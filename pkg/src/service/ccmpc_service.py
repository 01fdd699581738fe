"""
Chance-constrained MPC.

Volume dipisah menjadi mean affine-kontrol (tetap di QP) dan deviasi bebas-kontrol
akibat hujan. Kovarians deviasi dipropagasi sekali per langkah; tiap baris (M,P,S,K)
lalu diperketat dengan offset per-baris:
  - satu suku ramalan terpotong  -> kuantil terpotong eksak,
  - dua suku atau lebih          -> aproksimasi Gaussian sigma_baris * Phi^-1(gamma).
"""
import logging
from dataclasses import replace
from typing import Dict, List, Optional, Tuple

import numpy as np

from src.domain.distributions import std_normal_quantile, truncated_moments, truncated_quantile
from src.domain.exceptions import DimensionMismatchError, DistributionError, ScenarioError
from src.domain.interfaces import IController, IQpSolver
from src.domain.models import (
    ControlDecision, ForecastWindow, GammaSchedule, HorizonProgram, MomentTrajectory, MpcConfig,
    NetworkMatrices, StepStatus, TightenedConstraints, TruncatedGaussianSpec, UncertaintyModel,
)
from src.service.mpc_service import build_program, solve_program


def forecast_moments(uncertainty: UncertaintyModel, n_rain: int) -> Tuple[np.ndarray, np.ndarray]:
    """Mean dan varians terpotong per langkah (N x r)."""
    N = uncertainty.horizon
    means = np.zeros((N, n_rain))
    variances = np.zeros((N, n_rain))
    for k, row in enumerate(uncertainty.specs):
        if len(row) != n_rain:
            raise DimensionMismatchError(f"Langkah {k}: {len(row)} spec hujan, diharapkan {n_rain}")
        for c, spec in enumerate(row):
            means[k, c], variances[k, c] = truncated_moments(spec)
    return means, variances


def propagate_moments(matrices: NetworkMatrices, v0: np.ndarray, uncertainty: UncertaintyModel) -> MomentTrajectory:
    n, r = matrices.dims.n_tanks, matrices.dims.n_rain
    A, G, C, F, P, S = matrices.A, matrices.G, matrices.C, matrices.F, matrices.P, matrices.S
    N = uncertainty.horizon
    v0 = np.asarray(v0, dtype=float)
    if v0.shape != (n,):
        raise DimensionMismatchError(f"v0 {v0.shape} tidak cocok dengan n={n}")
    means, variances = forecast_moments(uncertainty, r)

    cov0 = uncertainty.initial_volume_covariance
    cov0 = np.zeros((n, n)) if cov0 is None else np.asarray(cov0, dtype=float)
    if cov0.shape != (n, n):
        raise DimensionMismatchError(f"Kovarians volume awal {cov0.shape} harus ({n}, {n})")
    has_initial = bool(np.any(cov0 != 0.0))

    mean_volumes = [v0.copy()]
    covs = [cov0.copy()]
    out_covs: List[np.ndarray] = []
    for k in range(N):
        # Hujan antar-catchment independen: kovarians W diagonal
        W = np.diag(variances[k])
        out_covs.append(C @ covs[k] @ C.T + F @ W @ F.T)
        mean_volumes.append(A @ mean_volumes[k] + G @ means[k])
        nxt = A @ covs[k] @ A.T + G @ W @ G.T
        covs.append(0.5 * (nxt + nxt.T))

    # Respons impuls A^p G untuk menghitung suku acak per baris
    impulses = [G]
    for _ in range(1, N):
        impulses.append(A @ impulses[-1])

    n_rows = P.shape[0]
    row_var = np.zeros((N + 1, n_rows))
    row_terms = np.zeros((N + 1, n_rows), dtype=int)
    single: Dict[Tuple[int, int], Tuple[float, TruncatedGaussianSpec]] = {}
    for t in range(N + 1):
        row_var[t] = np.einsum("ij,jk,ik->i", P, covs[t], P)
        contributions: List[Tuple[int, np.ndarray]] = [(j, P @ impulses[t - 1 - j]) for j in range(t)]
        if t < N:
            row_var[t] += (S * S) @ variances[t]
            contributions.append((t, S))
        initial_part = np.zeros(n_rows)
        if has_initial:
            At = np.linalg.matrix_power(A, t)
            initial_part = np.einsum("ij,jk,ik->i", P @ At, cov0, P @ At)

        for row in range(n_rows):
            found: List[Tuple[float, int, int]] = []
            for j, coefs in contributions:
                for c in range(r):
                    if coefs[row, c] != 0.0 and variances[j, c] > 0.0:
                        found.append((float(coefs[row, c]), j, c))
            row_terms[t, row] = len(found)
            if len(found) == 1 and initial_part[row] == 0.0:
                coef, j, c = found[0]
                single[(t, row)] = (coef, uncertainty.specs[j][c])
        row_var[t] = np.maximum(row_var[t], 0.0)

    return MomentTrajectory(
        mean_volumes=mean_volumes,
        volume_covariances=covs,
        output_covariances=out_covs,
        rain_means=means,
        rain_variances=variances,
        row_variances=row_var,
        row_terms=row_terms,
        row_single_term=single,
        has_initial_covariance=has_initial,
    )


def tighten_constraints(matrices: NetworkMatrices, moments: MomentTrajectory, gamma: float) -> TightenedConstraints:
    if not 0.0 < gamma < 1.0:
        raise DistributionError(f"gamma harus di (0,1), didapat {gamma}")
    z_gamma = std_normal_quantile(gamma)
    offsets = np.zeros_like(moments.row_variances)
    for t in range(offsets.shape[0]):
        for row in range(offsets.shape[1]):
            if (t, row) in moments.row_single_term:
                coef, spec = moments.row_single_term[(t, row)]
                mean, _ = truncated_moments(spec)
                # Deviasi coef*(w - mean): kuantil sisi atas bila coef > 0, sisi bawah bila coef < 0
                p = gamma if coef > 0 else 1.0 - gamma
                offsets[t, row] = coef * (truncated_quantile(spec, p) - mean)
            elif moments.row_terms[t, row] > 0 or moments.row_variances[t, row] > 0.0:
                offsets[t, row] = np.sqrt(moments.row_variances[t, row]) * z_gamma
    return TightenedConstraints(gamma=gamma, offsets=offsets, bounds=matrices.K[None, :] - offsets)


def expected_cost_constant(config: MpcConfig, moments: MomentTrajectory) -> float:
    """Suku trace sum_k tr(Q Sigma_z_k) yang konstan terhadap keputusan kontrol."""
    Q = np.diag(np.asarray(config.q_weights, dtype=float))
    return float(sum(np.trace(Q @ cov) for cov in moments.output_covariances))


def _apply_tightening(base: HorizonProgram, tightened: TightenedConstraints, constant_cost: float) -> HorizonProgram:
    offsets = np.array([tightened.offsets[t, row] for t, row in base.row_index])
    problem = replace(base.problem, bineq=base.problem.bineq - offsets)
    return replace(base, problem=problem, provenance="chance-constrained",
                   gamma=tightened.gamma, constant_cost=constant_cost)


def _check_horizon(config: MpcConfig, uncertainty: UncertaintyModel):
    if uncertainty.horizon != config.horizon:
        raise DimensionMismatchError(f"Horizon ketidakpastian {uncertainty.horizon} != N={config.horizon}")


def build_cc_program(matrices: NetworkMatrices, config: MpcConfig, v0: np.ndarray, u_prev: np.ndarray,
                     uncertainty: UncertaintyModel, gamma: float,
                     moments: Optional[MomentTrajectory] = None) -> HorizonProgram:
    """
    Program CC: biaya deterministik pada z harapan, kesetaraan dengan mean hujan terpotong,
    pertidaksamaan diperketat. Dimensi QP sama persis dengan program deterministik.
    """
    _check_horizon(config, uncertainty)
    moments = moments or propagate_moments(matrices, v0, uncertainty)
    base = build_program(matrices, config, v0, u_prev, moments.rain_means)
    tightened = tighten_constraints(matrices, moments, gamma)
    return _apply_tightening(base, tightened, expected_cost_constant(config, moments))


def control_step_with_backoff(solver: IQpSolver, matrices: NetworkMatrices, config: MpcConfig,
                              v0: np.ndarray, u_prev: np.ndarray, uncertainty: UncertaintyModel,
                              schedule: GammaSchedule) -> ControlDecision:
    """Mencoba gamma sesuai jadwal; solusi feasible pertama dipakai."""
    _check_horizon(config, uncertainty)
    moments = propagate_moments(matrices, v0, uncertainty)
    base = build_program(matrices, config, v0, u_prev, moments.rain_means)
    constant_cost = expected_cost_constant(config, moments)

    tried: List[float] = []
    for gamma in schedule.values:
        program = _apply_tightening(base, tighten_constraints(matrices, moments, gamma), constant_cost)
        decision = solve_program(solver, program)
        if decision.status is StepStatus.INFEASIBLE:
            tried.append(gamma)
            continue
        decision.gamma_used = gamma
        decision.gamma_tried = tuple(tried)
        if tried:
            logging.debug(f"↘️ Back-off: gamma {tried} infeasible, pakai {gamma}")
        return decision
    return ControlDecision(controls=None, status=StepStatus.INFEASIBLE, gamma_tried=tuple(tried))


class CcMpcController(IController):
    """CC-MPC; jadwal satu elemen berarti gamma tetap tanpa back-off."""

    def __init__(self, solver: IQpSolver, matrices: NetworkMatrices, config: MpcConfig, schedule: GammaSchedule):
        self.solver = solver
        self.matrices = matrices
        self.config = config
        self.schedule = schedule

    @property
    def horizon(self) -> int:
        return self.config.horizon

    def decide(self, volumes: np.ndarray, previous_controls: np.ndarray, forecast: ForecastWindow) -> ControlDecision:
        if forecast.uncertainty is None:
            raise ScenarioError("CC-MPC memerlukan model ketidakpastian pada jendela ramalan.")
        return control_step_with_backoff(
            self.solver, self.matrices, self.config, volumes, previous_controls,
            forecast.uncertainty, self.schedule,
        )
