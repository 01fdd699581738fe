import csv
import logging
import re
from collections import Counter
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np

from src.config import AppConfig, SolverSettings
from src.domain.exceptions import SewerCcMpcError, TopologyValidationError
from src.domain.interfaces import (
    IHeatmapRenderer, IQpSolver, ISweepStore, ITraceWriter, FeasibilityLineRow,
)
from src.domain.models import (
    CellOutcome, ControllerSpec, GammaSchedule, MpcConfig, NetworkTopology, RunManifest,
    QpProblem, SimulationTrace, SweepGrid,
)
from src.infrastructure.cli_ui import ConsoleUI
from src.infrastructure.common.utils import JsonFile, file_hash
from src.service.network_service import NetworkService
from src.service.scenario_service import (
    BENCHMARK_LABEL, REPORT_FP_HEADERS, SweepContext, classify_outcome, feasibility_lines,
    initial_program, report_tables, run_sweep, simulate_single,
)
from src.service.simulator import total_overflow

EXIT_OK = 0
EXIT_DOMAIN = 1
EXIT_IO = 2


def safe_label(label: str) -> str:
    """Label controller ke nama file: 'ccmpc:0.95' -> 'ccmpc_0.95'."""
    return re.sub(r"[^\w.\-]", "_", label)


class Orchestrator:
    def __init__(
        self,
        config: AppConfig,
        ui: ConsoleUI,
        network: NetworkService,
        solver_factory: Callable[[SolverSettings], IQpSolver],
        trace_writer: ITraceWriter,
        sweep_store: ISweepStore,
        heatmap: IHeatmapRenderer,
        problem_dumper: Optional[Callable[[QpProblem, Path], None]] = None,
    ):
        self.config = config
        self.ui = ui
        self.network = network
        self.solver_factory = solver_factory
        self.trace_writer = trace_writer
        self.sweep_store = sweep_store
        self.heatmap = heatmap
        self.problem_dumper = problem_dumper

    # --- Penanganan error bersama ---

    def _guard(self, action: Callable[[], int]) -> int:
        """Memetakan error ke kode keluar: 1 domain/validasi, 2 I/O."""
        try:
            return action()
        except TopologyValidationError as e:
            self.ui.show_diagnostics(e.diagnostics)
            self.ui.show_error(str(e))
            return EXIT_DOMAIN
        except (SewerCcMpcError, ValueError) as e:
            self.ui.show_error(str(e))
            return EXIT_DOMAIN
        except OSError as e:
            self.ui.show_error(f"I/O gagal: {e}")
            return EXIT_IO
        except Exception as e:
            logging.error("Orchestrator Error", exc_info=True)
            self.ui.show_error(str(e))
            return EXIT_DOMAIN

    def _mpc_config(self, topology: NetworkTopology, horizon: Optional[int]) -> MpcConfig:
        settings = self.config.mpc
        return MpcConfig(
            horizon=horizon or settings.horizon,
            q_weights=tuple(settings.q_weights),
            r_weight=settings.r_weight,
            z_ref=(topology.treatment_capacity, 0.0),
        )

    def _manifest(self, command: str, config_path: Path, out_dir: Path, seed: int, params: Dict[str, Any]) -> RunManifest:
        manifest = RunManifest(
            config_path=str(config_path),
            command=command,
            parameters=params,
            seed=seed,
            output_dir=str(out_dir),
            tool_version=self.config.tool_version,
            config_hash=file_hash(config_path),
        )
        JsonFile.save({**manifest.to_dict(), "manifest_hash": manifest.manifest_hash}, out_dir / "manifest.json")
        return manifest

    def _context(self, topology: NetworkTopology, grid: SweepGrid, controllers: Sequence[ControllerSpec],
                 horizon: Optional[int], bias: float) -> SweepContext:
        return SweepContext(
            topology=topology,
            grid=grid,
            controllers=tuple(controllers),
            mpc=self._mpc_config(topology, horizon),
            solver=self.config.solver,
            scenario=self.config.scenario,
            schedule=GammaSchedule(tuple(self.config.mpc.gamma_schedule)),
            solver_factory=self.solver_factory,
            bias=bias,
        )

    # --- validate ---

    def cmd_validate(self, config_path: Path) -> int:
        def action() -> int:
            self.ui.show_step("Validasi Konfigurasi")
            topology = self.network.loader.load(Path(config_path))
            diagnostics = self.network.validate_topology(topology)
            if diagnostics:
                self.ui.show_diagnostics(diagnostics)
                self.ui.show_error(f"{len(diagnostics)} pelanggaran aturan jaringan.")
                return EXIT_DOMAIN
            self.ui.log(f"Konfigurasi valid: {len(topology.tanks)} tangki, {len(topology.gates)} gate, {len(topology.rain_inputs)} input hujan.")
            return EXIT_OK
        return self._guard(action)

    # --- simulate ---

    def cmd_simulate(self, config_path: Path, duration: float, intensity: float, controller: str,
                     seed: int, out_dir: Path, horizon: Optional[int] = None, bias: float = 0.0,
                     dump_qp: bool = False) -> int:
        def action() -> int:
            spec = ControllerSpec.parse(controller)
            topology = self.network.load_file(Path(config_path))
            out = Path(out_dir)
            params = {"duration_s": duration, "intensity_ums": intensity, "controller": spec.label,
                      "horizon": horizon or self.config.mpc.horizon, "bias": bias}
            manifest = self._manifest("simulate", Path(config_path), out, seed, params)

            ctx = self._context(topology, SweepGrid((duration,), (intensity,), 1, seed), [spec], horizon, bias)
            files = [out / "manifest.json"]
            if dump_qp and self.problem_dumper is not None:
                dump_path = out / "qp_step0.txt"
                self.problem_dumper(initial_program(ctx, spec, duration, intensity).problem, dump_path)
                files.append(dump_path)

            self.ui.show_step(f"Simulasi closed-loop ({spec.label})")
            trace = simulate_single(ctx, spec, duration, intensity)

            trace_path = out / "trace.csv"
            summary_path = out / "summary.json"
            self.trace_writer.write(trace, trace_path, manifest.manifest_hash)
            summary = self.summarize(trace, topology)
            summary.update({"controller": spec.label, "manifest_hash": manifest.manifest_hash, **params})
            JsonFile.save(summary, summary_path)
            self.ui.log(f"Overflow total: {summary['total_overflow_m3']:.3f} m3, status: {summary['outcome']}")
            self.ui.show_success(out, [trace_path, summary_path] + files)
            return EXIT_OK
        return self._guard(action)

    @staticmethod
    def summarize(trace: SimulationTrace, topology: NetworkTopology) -> Dict[str, Any]:
        volumes = np.array([s.volumes for s in trace.steps]) if trace.steps else np.zeros((0, len(trace.tank_ids)))
        timeline: List[Dict[str, Any]] = []
        for s in trace.steps:
            if timeline and timeline[-1]["status"] == s.status:
                timeline[-1]["to_step"] = s.k
            else:
                timeline.append({"from_step": s.k, "to_step": s.k, "status": s.status})
        gammas = Counter(f"{s.gamma_used:.2f}" for s in trace.steps if s.gamma_used is not None)
        costs = [s.expected_cost for s in trace.steps if s.expected_cost is not None]
        outcome = classify_outcome(trace)
        return {
            "steps": len(trace.steps),
            "delta_t_s": trace.delta_t,
            "total_overflow_m3": total_overflow(trace),
            "outcome": outcome.label,
            "first_infeasible_step": trace.first_infeasible_step,
            "min_volume_m3": {t: float(volumes[:, i].min()) for i, t in enumerate(trace.tank_ids)} if len(volumes) else {},
            "max_volume_m3": {t: float(volumes[:, i].max()) for i, t in enumerate(trace.tank_ids)} if len(volumes) else {},
            "capacity_m3": {t.id: t.max_volume for t in topology.tanks},
            "feasibility_timeline": timeline,
            "gamma_histogram": dict(sorted(gammas.items(), reverse=True)),
            "expected_cost_total": float(sum(costs)) if costs else None,
            "physical_violation_m3": float(sum(s.violation for s in trace.steps)),
        }

    # --- sweep ---

    def cmd_sweep(self, config_path: Path, controllers: Sequence[str], seed: int, out_dir: Path,
                  jobs: int = 1, full_grid: bool = False, realizations: Optional[int] = None,
                  horizon: Optional[int] = None, bias: float = 0.0) -> int:
        def action() -> int:
            specs = [ControllerSpec.parse(c) for c in controllers]
            topology = self.network.load_file(Path(config_path))
            n_real = realizations or self.config.sweep.realizations_per_cell
            grid = SweepGrid.fine(seed, n_real) if full_grid else SweepGrid.coarse(seed, n_real)
            out = Path(out_dir)
            params = {"controllers": [s.label for s in specs], "full_grid": full_grid,
                      "realizations_per_cell": n_real, "horizon": horizon or self.config.mpc.horizon, "bias": bias}
            manifest = self._manifest("sweep", Path(config_path), out, seed, params)

            self.ui.show_step(f"Sweep {len(grid.durations)} durasi x {len(grid.intensities)} intensitas")
            ctx = self._context(topology, grid, specs, horizon, bias)
            outcomes = run_sweep(ctx, jobs=jobs)

            self.ui.show_step("Menulis Artefak Sweep")
            files = self.write_sweep_outputs(outcomes, grid, ctx, out, manifest)
            self.ui.show_success(out, files)
            return EXIT_OK
        return self._guard(action)

    def write_sweep_outputs(self, outcomes: Sequence[CellOutcome], grid: SweepGrid, ctx: SweepContext,
                            out: Path, manifest: RunManifest) -> List[Path]:
        digest = manifest.manifest_hash
        files: List[Path] = []

        csv_path = out / "sweep.csv"
        self.sweep_store.write(outcomes, csv_path, digest)
        files.append(csv_path)

        meta_path = out / "sweep_meta.json"
        JsonFile.save({
            "manifest_hash": digest,
            "config_hash": manifest.config_hash,
            "grid": {"durations_s": list(grid.durations), "intensities_ums": list(grid.intensities),
                     "realizations_per_cell": grid.realizations_per_cell},
            "seed": grid.seed,
            "horizon": ctx.mpc.horizon,
            "delta_t_s": ctx.topology.delta_t,
            "controllers": [c.label for c in ctx.controllers],
            "gamma_schedule": list(ctx.schedule.values),
            "uncertainty_assumption": "langkah ramalan saling independen; ramalan tetap per realisasi",
        }, meta_path)
        files.append(meta_path)

        lines = feasibility_lines(outcomes)
        lines_path = out / "feasibility_lines.csv"
        self._write_lines(lines, lines_path, digest)
        files.append(lines_path)

        line_map: Dict[str, Dict[float, Optional[float]]] = {}
        for row in lines:
            value = row["max_feasible_intensity_ums"]
            line_map.setdefault(row["controller"], {})[row["duration_s"]] = float(value) if value else None

        bench = {(o.duration, o.intensity): int(o.benchmark_feasible) for o in outcomes}
        path = out / f"feasibility_{BENCHMARK_LABEL}.svg"
        self.heatmap.render_grid("Feasibility benchmark (MPC ramalan sempurna)", grid.durations, grid.intensities,
                                 bench, 1, path, line_map.get(BENCHMARK_LABEL), digest)
        files.append(path)

        for spec in ctx.controllers:
            cells = [o for o in outcomes if o.controller == spec]
            max_runs = max((len(o.records) for o in cells), default=1)
            feasible = {(o.duration, o.intensity): o.feasible_count for o in cells}
            false_pos = {(o.duration, o.intensity): o.false_positive_count for o in cells}
            path = out / f"feasibility_{safe_label(spec.label)}.svg"
            self.heatmap.render_grid(f"Realisasi feasible: {spec.label}", grid.durations, grid.intensities,
                                     feasible, max_runs, path, line_map.get(spec.label), digest)
            files.append(path)
            path = out / f"false_positive_{safe_label(spec.label)}.svg"
            self.heatmap.render_grid(f"False positive overflow: {spec.label}", grid.durations, grid.intensities,
                                     false_pos, max_runs, path, None, digest)
            files.append(path)
        return files

    @staticmethod
    def _write_lines(rows: Sequence[FeasibilityLineRow], path: Path, digest: str):
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as f:
            f.write(f"# manifest={digest}\n")
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(["controller", "duration_s", "max_feasible_intensity_ums"])
            for row in rows:
                writer.writerow([row["controller"], f"{row['duration_s']:g}", row["max_feasible_intensity_ums"]])

    # --- report ---

    def cmd_report(self, sweep_csvs: Sequence[Path], out_dir: Optional[Path] = None) -> int:
        def action() -> int:
            self.ui.show_step("Laporan Perbandingan")
            rows = []
            for path in sweep_csvs:
                rows.extend(self.sweep_store.read(Path(path)))
            headers, table, fp_table = report_tables(rows)
            self.ui.print_table(headers, table)
            print()
            self.ui.print_table(REPORT_FP_HEADERS, fp_table)

            if out_dir is not None:
                out = Path(out_dir)
                out.mkdir(parents=True, exist_ok=True)
                for name, head, body in (("report.csv", headers, table), ("false_positives.csv", REPORT_FP_HEADERS, fp_table)):
                    with open(out / name, "w", newline="", encoding="utf-8") as f:
                        writer = csv.writer(f, lineterminator="\n")
                        writer.writerow(head)
                        writer.writerows(body)
                self.ui.log(f"Laporan ditulis ke {out}")
            return EXIT_OK
        return self._guard(action)
