import json
import tempfile
import unittest
from pathlib import Path
from unittest.mock import MagicMock

import numpy as np

from src.config import AppConfig
from src.domain.exceptions import ReportSchemaError
from src.domain.interfaces import IHeatmapRenderer, IQpSolver, ISweepStore, ITraceWriter
from src.domain.models import (
    CellOutcome, ControllerSpec, FeasibilityCertificate, KktReport, QpProblem, QpSolution, QpStatus,
    RunOutcome, RunRecord, RunStatus, SimulationTrace, SweepGrid, TraceStep,
)
from src.infrastructure.adapters.topology_loader import JsonTopologyLoader
from src.infrastructure.cli_ui import ConsoleUI
from src.infrastructure.common.utils import JsonFile
from src.service.network_service import NetworkService
from src.service.orchestrator import EXIT_DOMAIN, EXIT_IO, EXIT_OK, Orchestrator, safe_label
from tests.fixtures import small_network_document, small_topology


def infeasible_solution(problem: QpProblem) -> QpSolution:
    return QpSolution(status=QpStatus.INFEASIBLE, x=np.zeros(problem.n_variables), objective=float("nan"),
                      kkt=KktReport(1.0, float("nan"), float("nan")),
                      certificate=FeasibilityCertificate(feasible=False, violation=1.0))


class OrchestratorTestCase(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.root = Path(self.tmp.name)
        self.config_path = self.root / "network.json"
        self.config_path.write_text(json.dumps(small_network_document()), encoding="utf-8")

        self.mock_ui = MagicMock(spec=ConsoleUI)
        self.mock_solver = MagicMock(spec=IQpSolver)
        self.mock_solver.solve.side_effect = infeasible_solution
        self.mock_trace_writer = MagicMock(spec=ITraceWriter)
        self.mock_sweep_store = MagicMock(spec=ISweepStore)
        self.mock_heatmap = MagicMock(spec=IHeatmapRenderer)
        self.mock_dumper = MagicMock()

        self.orchestrator = Orchestrator(
            config=AppConfig(),
            ui=self.mock_ui,
            network=NetworkService(loader=JsonTopologyLoader()),
            solver_factory=MagicMock(return_value=self.mock_solver),
            trace_writer=self.mock_trace_writer,
            sweep_store=self.mock_sweep_store,
            heatmap=self.mock_heatmap,
            problem_dumper=self.mock_dumper,
        )


class TestValidateCommand(OrchestratorTestCase):
    def test_valid_config(self):
        self.assertEqual(self.orchestrator.cmd_validate(self.config_path), EXIT_OK)
        self.mock_ui.show_diagnostics.assert_not_called()

    def test_rule_violation_prints_diagnostics(self):
        # Arrange
        self.config_path.write_text(json.dumps(small_network_document(delta_t=1200.0)), encoding="utf-8")

        # Act
        code = self.orchestrator.cmd_validate(self.config_path)

        # Assert
        self.assertEqual(code, EXIT_DOMAIN)
        diagnostics = self.mock_ui.show_diagnostics.call_args.args[0]
        self.assertIn("discrete-stability", {d.rule for d in diagnostics})

    def test_malformed_json_is_domain_error(self):
        self.config_path.write_text("{", encoding="utf-8")
        self.assertEqual(self.orchestrator.cmd_validate(self.config_path), EXIT_DOMAIN)

    def test_missing_file_is_io_error(self):
        self.assertEqual(self.orchestrator.cmd_validate(self.root / "absent.json"), EXIT_IO)
        self.mock_ui.show_error.assert_called_once()


class TestSimulateCommand(OrchestratorTestCase):
    def test_writes_trace_summary_and_manifest(self):
        # Arrange
        out = self.root / "sim"

        # Act
        code = self.orchestrator.cmd_simulate(self.config_path, duration=1800.0, intensity=0.5,
                                              controller="perfect_mpc", seed=3, out_dir=out,
                                              horizon=2, dump_qp=True)

        # Assert
        self.assertEqual(code, EXIT_OK)
        manifest = JsonFile.load(out / "manifest.json")
        summary = JsonFile.load(out / "summary.json")
        self.assertEqual(manifest["command"], "simulate")
        self.assertEqual(manifest["seed"], 3)
        self.assertEqual(summary["manifest_hash"], manifest["manifest_hash"])
        self.assertEqual(summary["outcome"], "infeasible_step_0")
        self.assertEqual(summary["steps"], 258)

        trace, trace_path, digest = self.mock_trace_writer.write.call_args.args
        self.assertIsInstance(trace, SimulationTrace)
        self.assertEqual(trace_path, out / "trace.csv")
        self.assertEqual(digest, manifest["manifest_hash"])

        problem, dump_path = self.mock_dumper.call_args.args
        self.assertIsInstance(problem, QpProblem)
        self.assertEqual(dump_path, out / "qp_step0.txt")

    def test_unknown_controller_is_domain_error(self):
        code = self.orchestrator.cmd_simulate(self.config_path, 1800.0, 0.5, "robust_mpc", 0, self.root / "sim")
        self.assertEqual(code, EXIT_DOMAIN)
        self.mock_trace_writer.write.assert_not_called()

    def test_unwritable_summary_is_io_error(self):
        # Arrange: direktori bernama summary.json membuat penulisan JSON gagal
        out = self.root / "sim"
        (out / "summary.json").mkdir(parents=True)

        # Act
        code = self.orchestrator.cmd_simulate(self.config_path, 1800.0, 0.5, "perfect_mpc", 0, out, horizon=2)

        # Assert
        self.assertEqual(code, EXIT_IO)
        self.mock_ui.show_error.assert_called_once()
        self.mock_ui.show_success.assert_not_called()

    def test_summary_fields(self):
        # Arrange
        trace = SimulationTrace(tank_ids=["T1", "T2", "R1"], gate_ids=["U1", "U2"], delta_t=300.0)
        for k, (status, gamma, weir) in enumerate([("optimal", 0.95, 0.0), ("optimal", 0.9, 0.2), ("infeasible", None, 0.0)]):
            trace.steps.append(TraceStep(
                k=k, t_s=300.0 * (k + 1), volumes=np.array([100.0 * (k + 1), 50.0, 0.0]),
                controls=np.zeros(2), weir_flows=np.array([weir, 0.0, 0.0]), outputs=np.zeros(2),
                status=status, gamma_used=gamma, expected_cost=1.0 if gamma else None,
            ))

        # Act
        summary = Orchestrator.summarize(trace, small_topology())

        # Assert
        self.assertEqual(summary["outcome"], "infeasible_step_2")
        self.assertAlmostEqual(summary["total_overflow_m3"], 60.0)
        self.assertEqual(summary["max_volume_m3"]["T1"], 300.0)
        self.assertEqual(summary["capacity_m3"]["R1"], 1500.0)
        self.assertEqual(summary["gamma_histogram"], {"0.95": 1, "0.90": 1})
        self.assertEqual(summary["feasibility_timeline"], [
            {"from_step": 0, "to_step": 1, "status": "optimal"},
            {"from_step": 2, "to_step": 2, "status": "infeasible"},
        ])
        self.assertEqual(summary["expected_cost_total"], 2.0)


class TestSweepOutputs(OrchestratorTestCase):
    def test_artifacts_and_heatmaps(self):
        # Arrange
        topology = small_topology()
        grid = SweepGrid(durations=(1800.0,), intensities=(0.25, 0.5), realizations_per_cell=1)
        specs = [ControllerSpec.parse("perfect_mpc"), ControllerSpec.parse("ccmpc:0.9")]
        ctx = self.orchestrator._context(topology, grid, specs, 2, 0.0)
        out = self.root / "sweep"
        manifest = self.orchestrator._manifest("sweep", self.config_path, out, 0, {})
        outcomes = [
            CellOutcome(i, 1800.0, intensity, spec, [RunRecord(0, RunOutcome(RunStatus.FEASIBLE_CLEAN), 0.0)], True)
            for i, intensity in enumerate(grid.intensities) for spec in specs
        ]

        # Act
        files = self.orchestrator.write_sweep_outputs(outcomes, grid, ctx, out, manifest)

        # Assert
        names = [f.name for f in files]
        self.assertIn("sweep.csv", names)
        self.assertIn("feasibility_lines.csv", names)
        self.assertIn("false_positive_ccmpc_0.90.svg", names)
        self.assertEqual(self.mock_heatmap.render_grid.call_count, 5)
        self.mock_sweep_store.write.assert_called_once_with(outcomes, out / "sweep.csv", manifest.manifest_hash)

        lines = (out / "feasibility_lines.csv").read_text(encoding="utf-8").splitlines()
        self.assertEqual(lines[0], f"# manifest={manifest.manifest_hash}")
        self.assertIn("ccmpc:0.90,1800,0.5", lines)
        meta = JsonFile.load(out / "sweep_meta.json")
        self.assertEqual(meta["controllers"], ["perfect_mpc", "ccmpc:0.90"])
        self.assertEqual(meta["horizon"], 2)


class TestReportCommand(OrchestratorTestCase):
    def test_report_writes_tables(self):
        # Arrange
        self.mock_sweep_store.read.return_value = [{
            "duration_s": 1800.0, "intensity_ums": 0.5, "realization": 0, "controller": "ccmpc:0.90",
            "gamma": "0.90", "status": "false_positive_overflow", "infeasible_step": "",
            "overflow_m3": 3.0, "benchmark_feasible": True,
        }]
        out = self.root / "report"

        # Act
        code = self.orchestrator.cmd_report([self.root / "a.csv", self.root / "b.csv"], out)

        # Assert
        self.assertEqual(code, EXIT_OK)
        self.assertEqual(self.mock_sweep_store.read.call_count, 2)
        self.assertEqual(self.mock_ui.print_table.call_count, 2)
        fp = (out / "false_positives.csv").read_text(encoding="utf-8").splitlines()
        self.assertEqual(fp[1], "ccmpc:0.90,2,2,2")
        self.assertTrue((out / "report.csv").exists())

    def test_schema_error_is_domain_error(self):
        self.mock_sweep_store.read.side_effect = ReportSchemaError("x.csv", ["status"])
        self.assertEqual(self.orchestrator.cmd_report([self.root / "x.csv"]), EXIT_DOMAIN)

    def test_missing_csv_is_io_error(self):
        self.mock_sweep_store.read.side_effect = FileNotFoundError("x.csv")
        self.assertEqual(self.orchestrator.cmd_report([self.root / "x.csv"]), EXIT_IO)

    def test_unexpected_error_is_reported(self):
        self.mock_sweep_store.read.side_effect = RuntimeError("boom")
        self.assertEqual(self.orchestrator.cmd_report([self.root / "x.csv"]), EXIT_DOMAIN)
        self.mock_ui.show_error.assert_called_once_with("boom")


class TestSafeLabel(unittest.TestCase):
    def test_colon_is_replaced(self):
        self.assertEqual(safe_label("ccmpc:0.95"), "ccmpc_0.95")
        self.assertEqual(safe_label("perfect_mpc"), "perfect_mpc")


if __name__ == '__main__':
    unittest.main()
