import concurrent.futures
import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from src.config import ScenarioSettings, SolverSettings
from src.domain.distributions import truncated_sample
from src.domain.exceptions import ScenarioError
from src.domain.interfaces import FeasibilityLineRow, IController, IForecastSource, IQpSolver, SweepRow
from src.domain.models import (
    CellOutcome, ControllerSpec, ForecastWindow, GammaSchedule, GaussianSpec, HorizonProgram, MpcConfig,
    NetworkTopology, PredictionModel, RainScenario, RunOutcome, RunRecord, RunStatus,
    SimulationTrace, SweepGrid, TruncatedGaussianSpec,
)
from src.service.ccmpc_service import CcMpcController, build_cc_program
from src.service.mpc_service import DeterministicMpcController, build_program
from src.service.network_service import assemble_control_model
from src.service.simulator import run_closed_loop, total_overflow

# Overflow di bawah ambang ini dianggap sisa numerik solver, bukan luapan
OVERFLOW_TOLERANCE_M3 = 1e-2

BENCHMARK_LABEL = "benchmark"
UINT64_MASK = 0xFFFF_FFFF_FFFF_FFFF


def make_step_scenario(duration: float, intensity: float, settings: Optional[ScenarioSettings] = None,
                       bias: float = 0.0) -> RainScenario:
    """Hujan step: dry_flow selama pre_dry, dry_flow + intensity selama duration, lalu dry_flow."""
    settings = settings or ScenarioSettings()
    if not duration > 0:
        raise ScenarioError(f"Durasi hujan harus > 0, didapat {duration}")
    if not intensity >= 0:
        raise ScenarioError(f"Intensitas hujan harus >= 0, didapat {intensity}")
    return RainScenario(
        rain_duration=float(duration),
        rain_intensity=float(intensity),
        dry_flow=settings.dry_flow,
        pre_dry=settings.pre_dry,
        post_dry=settings.post_dry,
        bias=bias,
    )


def prediction_model(scenario: RainScenario, delta_t: float, settings: Optional[ScenarioSettings] = None) -> PredictionModel:
    """Spec per langkah: mean = intensitas aktual (tanpa bias), sigma = 0.01 + mean/3, terpotong [0, mean + 3 sigma]."""
    settings = settings or ScenarioSettings()
    specs = []
    for mean in scenario.profile(delta_t):
        sigma = settings.sigma_base + settings.sigma_per_intensity * mean
        specs.append(TruncatedGaussianSpec(
            base=GaussianSpec(mean=float(mean), stddev=float(sigma)),
            lower=0.0,
            upper=float(mean + settings.truncation_sigmas * sigma),
        ))
    return PredictionModel(specs=tuple(specs))


def realization_generator(seed: int, cell: int, realization: int) -> np.random.Generator:
    """Generator counter-based (Philox) dengan key (seed, cell, realization); posisi counter = langkah."""
    # seed negatif atau > 64 bit dipetakan ke ruang key yang sama
    key = np.array([seed & UINT64_MASK, ((cell << 32) | realization) & UINT64_MASK], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def sample_prediction(scenario: RainScenario, seed: int, delta_t: float, n_inputs: int = 1,
                      cell: int = 0, realization: int = 0,
                      settings: Optional[ScenarioSettings] = None) -> Tuple[np.ndarray, PredictionModel]:
    """Satu realisasi ramalan (langkah x input hujan) lewat sampling invers-CDF."""
    model = prediction_model(scenario, delta_t, settings)
    uniforms = realization_generator(seed, cell, realization).random((len(model.specs), n_inputs))
    samples = np.empty_like(uniforms)
    for k, spec in enumerate(model.specs):
        samples[k] = truncated_sample(spec, uniforms[k])
    return samples, model


def _padded(series: np.ndarray, k: int, horizon: int) -> np.ndarray:
    idx = np.minimum(np.arange(k, k + horizon), len(series) - 1)
    return series[idx]


class PerfectForecast(IForecastSource):
    """Ramalan titik = hujan aktual."""

    def __init__(self, actual: np.ndarray, n_inputs: int):
        self.series = np.repeat(np.asarray(actual, dtype=float)[:, None], n_inputs, axis=1)

    def window(self, k: int, horizon: int) -> ForecastWindow:
        return ForecastWindow(point=_padded(self.series, k, horizon))


class SampledForecast(IForecastSource):
    """Ramalan titik dari satu realisasi sampel, tetap sepanjang simulasi."""

    def __init__(self, samples: np.ndarray):
        self.series = np.asarray(samples, dtype=float)

    def window(self, k: int, horizon: int) -> ForecastWindow:
        return ForecastWindow(point=_padded(self.series, k, horizon))


class ModelForecast(IForecastSource):
    """Model prediksi lengkap untuk CC-MPC; titiknya adalah mean dasar."""

    def __init__(self, model: PredictionModel, n_inputs: int):
        self.model = model
        self.n_inputs = n_inputs
        self.series = np.repeat(model.means()[:, None], n_inputs, axis=1)

    def window(self, k: int, horizon: int) -> ForecastWindow:
        return ForecastWindow(
            point=_padded(self.series, k, horizon),
            uncertainty=self.model.window(k, horizon, self.n_inputs),
        )


def classify_outcome(trace: SimulationTrace, benchmark_feasible: bool = True) -> RunOutcome:
    """
    infeasible bila ada langkah infeasible (setelah back-off), false positive bila semua
    langkah feasible tetapi overflow > 0, selain itu feasible_clean. benchmark_feasible
    tidak mengubah label; dipakai laporan untuk menyaring sel.
    """
    if trace.has_errors:
        return RunOutcome(status=RunStatus.ERROR)
    step = trace.first_infeasible_step
    if step is not None:
        return RunOutcome(status=RunStatus.INFEASIBLE, infeasible_step=step)
    if total_overflow(trace) > OVERFLOW_TOLERANCE_M3:
        return RunOutcome(status=RunStatus.FALSE_POSITIVE)
    return RunOutcome(status=RunStatus.FEASIBLE_CLEAN)


@dataclass(frozen=True)
class SweepContext:
    """Semua input immutable satu sweep; dikirim utuh ke worker proses."""
    topology: NetworkTopology
    grid: SweepGrid
    controllers: Tuple[ControllerSpec, ...]
    mpc: MpcConfig
    solver: SolverSettings
    scenario: ScenarioSettings
    schedule: GammaSchedule
    solver_factory: Callable[[SolverSettings], IQpSolver]
    bias: float = 0.0


def build_controller(spec: ControllerSpec, ctx: SweepContext, solver: IQpSolver, matrices) -> IController:
    if spec.kind in ("perfect_mpc", "imperfect_mpc"):
        return DeterministicMpcController(solver, matrices, ctx.mpc)
    if spec.kind == "ccmpc":
        return CcMpcController(solver, matrices, ctx.mpc, GammaSchedule((spec.gamma,)))
    return CcMpcController(solver, matrices, ctx.mpc, ctx.schedule)


def _safe_run(run: Callable[[], SimulationTrace]) -> Tuple[Optional[SimulationTrace], Optional[str]]:
    try:
        return run(), None
    except Exception as e:
        logging.error(f"❌ Run gagal: {e}", exc_info=True)
        return None, str(e)


def _record(realization: int, trace: Optional[SimulationTrace], benchmark_feasible: bool) -> RunRecord:
    if trace is None:
        return RunRecord(realization=realization, outcome=RunOutcome(status=RunStatus.ERROR), overflow_volume=float("nan"))
    gammas = [s.gamma_used for s in trace.steps if s.gamma_used is not None]
    return RunRecord(
        realization=realization,
        outcome=classify_outcome(trace, benchmark_feasible),
        overflow_volume=total_overflow(trace),
        gamma_used=min(gammas) if gammas else None,
    )


def _imperfect_trace(ctx: SweepContext, spec: ControllerSpec, solver: IQpSolver, matrices,
                     scenario: RainScenario, cell_index: int, realization: int) -> SimulationTrace:
    topology = ctx.topology
    samples, _ = sample_prediction(scenario, ctx.grid.seed, topology.delta_t, len(topology.rain_inputs),
                                   cell_index, realization, ctx.scenario)
    return run_closed_loop(topology, build_controller(spec, ctx, solver, matrices), scenario, SampledForecast(samples))


def run_cell(ctx: SweepContext, cell: Tuple[int, float, float]) -> List[CellOutcome]:
    """Benchmark satu kali, lalu setiap controller yang diminta pada satu sel grid."""
    cell_index, duration, intensity = cell
    topology = ctx.topology
    n_inputs = len(topology.rain_inputs)
    dt = topology.delta_t
    solver = ctx.solver_factory(ctx.solver)
    matrices = assemble_control_model(topology)
    scenario = make_step_scenario(duration, intensity, ctx.scenario, bias=ctx.bias)
    perfect = PerfectForecast(scenario.actual_profile(dt), n_inputs)

    benchmark_spec = ControllerSpec(kind="perfect_mpc")
    benchmark_trace, _ = _safe_run(lambda: run_closed_loop(
        topology, build_controller(benchmark_spec, ctx, solver, matrices), scenario, perfect))
    benchmark_feasible = benchmark_trace is not None and classify_outcome(benchmark_trace).status in (
        RunStatus.FEASIBLE_CLEAN, RunStatus.FALSE_POSITIVE)

    outcomes: List[CellOutcome] = []
    for spec in ctx.controllers:
        records: List[RunRecord] = []
        if spec.kind == "perfect_mpc":
            records.append(_record(0, benchmark_trace, benchmark_feasible))
        elif spec.kind == "imperfect_mpc":
            for realization in range(ctx.grid.realizations_per_cell):
                trace, _ = _safe_run(lambda: _imperfect_trace(ctx, spec, solver, matrices, scenario, cell_index, realization))
                records.append(_record(realization, trace, benchmark_feasible))
        else:
            # Model prediksi tidak bergantung pada realisasi: CC-MPC cukup dijalankan sekali
            trace, _ = _safe_run(lambda: run_closed_loop(
                topology, build_controller(spec, ctx, solver, matrices), scenario,
                ModelForecast(prediction_model(scenario, dt, ctx.scenario), n_inputs)))
            records.append(_record(0, trace, benchmark_feasible))
        outcomes.append(CellOutcome(
            cell_index=cell_index, duration=duration, intensity=intensity,
            controller=spec, records=records, benchmark_feasible=benchmark_feasible,
        ))
    return outcomes


def _single_forecast(ctx: SweepContext, spec: ControllerSpec, scenario: RainScenario,
                     realization: int) -> IForecastSource:
    n_inputs, dt = len(ctx.topology.rain_inputs), ctx.topology.delta_t
    if spec.kind == "perfect_mpc":
        return PerfectForecast(scenario.actual_profile(dt), n_inputs)
    if spec.kind == "imperfect_mpc":
        samples, _ = sample_prediction(scenario, ctx.grid.seed, dt, n_inputs, 0, realization, ctx.scenario)
        return SampledForecast(samples)
    return ModelForecast(prediction_model(scenario, dt, ctx.scenario), n_inputs)


def simulate_single(ctx: SweepContext, spec: ControllerSpec, duration: float, intensity: float,
                    realization: int = 0) -> SimulationTrace:
    """Satu run closed-loop (perintah simulate); error solver dibiarkan naik ke pemanggil."""
    topology = ctx.topology
    scenario = make_step_scenario(duration, intensity, ctx.scenario, bias=ctx.bias)
    forecast = _single_forecast(ctx, spec, scenario, realization)
    controller = build_controller(spec, ctx, ctx.solver_factory(ctx.solver), assemble_control_model(topology))
    return run_closed_loop(topology, controller, scenario, forecast)


def initial_program(ctx: SweepContext, spec: ControllerSpec, duration: float, intensity: float) -> HorizonProgram:
    """Program QP langkah pertama dari keadaan awal jaringan (untuk dump debugging)."""
    topology = ctx.topology
    matrices = assemble_control_model(topology)
    scenario = make_step_scenario(duration, intensity, ctx.scenario, bias=ctx.bias)
    window = _single_forecast(ctx, spec, scenario, 0).window(0, ctx.mpc.horizon)
    u_prev = np.zeros(len(topology.gates))
    if window.uncertainty is None:
        return build_program(matrices, ctx.mpc, topology.initial_volumes(), u_prev, window.point)
    gamma = spec.gamma if spec.gamma is not None else ctx.schedule.values[0]
    return build_cc_program(matrices, ctx.mpc, topology.initial_volumes(), u_prev, window.uncertainty, gamma)


def _failed_cell(ctx: SweepContext, cell: Tuple[int, float, float], error: Exception) -> List[CellOutcome]:
    """Sel yang gagal di luar run individual dicatat sebagai error untuk setiap controller."""
    logging.error(f"❌ Sel {cell[0]} gagal total: {error}", exc_info=error)
    return [
        CellOutcome(cell_index=cell[0], duration=cell[1], intensity=cell[2], controller=spec,
                    records=[RunRecord(0, RunOutcome(RunStatus.ERROR), float("nan"))],
                    benchmark_feasible=False)
        for spec in ctx.controllers
    ]


def run_sweep(ctx: SweepContext, jobs: int = 1) -> List[CellOutcome]:
    cells = ctx.grid.cells()
    results: Dict[int, List[CellOutcome]] = {}
    logging.info(f"🌧️ Sweep: {len(cells)} sel x {len(ctx.controllers)} controller, {jobs} worker.")

    if jobs <= 1:
        for cell in tqdm(cells, desc="Sweep", unit="cell"):
            try:
                results[cell[0]] = run_cell(ctx, cell)
            except Exception as e:
                results[cell[0]] = _failed_cell(ctx, cell, e)
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as executor:
            futures = {executor.submit(run_cell, ctx, cell): cell for cell in cells}
            for future in tqdm(concurrent.futures.as_completed(futures), total=len(cells), desc="Sweep", unit="cell"):
                cell = futures[future]
                try:
                    results[cell[0]] = future.result()
                except Exception as e:
                    results[cell[0]] = _failed_cell(ctx, cell, e)

    # Urutan deterministik: indeks sel, lalu urutan controller
    return [outcome for index in sorted(results) for outcome in results[index]]


def _cell_feasible(outcome: CellOutcome) -> bool:
    return bool(outcome.records) and outcome.feasible_count == len(outcome.records)


def feasibility_lines(outcomes: Sequence[CellOutcome]) -> List[FeasibilityLineRow]:
    """
    Per controller dan per durasi: intensitas terbesar dari deret feasible yang bersambung
    mulai dari intensitas terendah. Baris benchmark dihitung dari benchmark_feasible.
    """
    by_key: Dict[Tuple[str, float], List[Tuple[float, bool]]] = {}
    bench: Dict[float, Dict[float, bool]] = {}
    for o in outcomes:
        by_key.setdefault((o.controller.label, o.duration), []).append((o.intensity, _cell_feasible(o)))
        bench.setdefault(o.duration, {})[o.intensity] = o.benchmark_feasible

    def line(points: List[Tuple[float, bool]]) -> str:
        best: Optional[float] = None
        for intensity, feasible in sorted(points):
            if not feasible:
                break
            best = intensity
        return "" if best is None else f"{best:g}"

    rows: List[FeasibilityLineRow] = []
    for duration in sorted(bench):
        rows.append(FeasibilityLineRow(
            controller=BENCHMARK_LABEL, duration_s=duration,
            max_feasible_intensity_ums=line(list(bench[duration].items())),
        ))
    labels = list(dict.fromkeys(label for label, _ in by_key))
    for label in labels:
        for duration in sorted(d for lab, d in by_key if lab == label):
            rows.append(FeasibilityLineRow(
                controller=label, duration_s=duration,
                max_feasible_intensity_ums=line(by_key[(label, duration)]),
            ))
    return rows


REPORT_FP_HEADERS = ["controller", "runs", "false_positive", "false_positive_benchmark_feasible"]


def _cc_gamma(label: str) -> Optional[float]:
    kind, _, gamma = label.partition(":")
    return float(gamma) if kind == "ccmpc" and gamma else None


def report_tables(rows: Sequence[SweepRow]) -> Tuple[List[str], List[List[str]], List[List[str]]]:
    """
    Tabel perbandingan dari baris sweep: per sel, tingkat infeasible MPC imperfect di samping
    status feasible tiap CC-MPC gamma tetap; lalu jumlah false positive per controller.
    """
    controllers = list(dict.fromkeys(r["controller"] for r in rows))
    cc_labels = sorted((c for c in controllers if _cc_gamma(c) is not None), key=lambda c: -_cc_gamma(c))
    feasible_states = (RunStatus.FEASIBLE_CLEAN.value, RunStatus.FALSE_POSITIVE.value)

    cells: Dict[Tuple[float, float], Dict[str, List[SweepRow]]] = {}
    for r in rows:
        cells.setdefault((r["duration_s"], r["intensity_ums"]), {}).setdefault(r["controller"], []).append(r)

    headers = ["duration_s", "intensity_ums", "benchmark_feasible", "imperfect_infeasible_rate"] + cc_labels + ["summary"]
    table: List[List[str]] = []
    for (duration, intensity) in sorted(cells):
        by_ctrl = cells[(duration, intensity)]
        any_row = next(iter(by_ctrl.values()))[0]
        imperfect = by_ctrl.get("imperfect_mpc", [])
        rate = ""
        if imperfect:
            failed = sum(1 for r in imperfect if r["status"] == RunStatus.INFEASIBLE.value)
            rate = f"{100.0 * failed / len(imperfect):.0f}%"
        flags, covered = [], None
        for label in cc_labels:
            runs = by_ctrl.get(label, [])
            ok = bool(runs) and all(r["status"] in feasible_states for r in runs)
            flags.append("" if not runs else ("feasible" if ok else "infeasible"))
            if ok and covered is None:
                covered = _cc_gamma(label)
        summary = f"{covered:.2f}-covered" if covered is not None else "not-covered"
        if rate:
            summary += f" / {rate} infeasible"
        table.append([f"{duration:g}", f"{intensity:g}", str(any_row["benchmark_feasible"]).lower(), rate] + flags + [summary])

    fp_table: List[List[str]] = []
    for label in controllers:
        runs = [r for r in rows if r["controller"] == label]
        fp = [r for r in runs if r["status"] == RunStatus.FALSE_POSITIVE.value]
        fp_table.append([label, str(len(runs)), str(len(fp)), str(sum(1 for r in fp if r["benchmark_feasible"]))])
    return headers, table, fp_table
