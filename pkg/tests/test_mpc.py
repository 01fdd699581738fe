import unittest
from unittest.mock import MagicMock

import numpy as np

from src.domain.exceptions import DimensionMismatchError, StateBoundsError
from src.domain.interfaces import IQpSolver
from src.domain.models import (
    FeasibilityCertificate, ForecastWindow, KktReport, MpcConfig, QpSolution, QpStatus, StepStatus,
)
from src.infrastructure.adapters.interior_point_solver import InteriorPointQpSolver
from src.service.mpc_service import (
    DeterministicMpcController, build_program, control_step, max_volumes_from, replay_plan,
)
from src.service.network_service import assemble_control_model
from tests.fixtures import small_topology


class TestBuildProgram(unittest.TestCase):
    def setUp(self):
        self.topology = small_topology()
        self.matrices = assemble_control_model(self.topology)
        self.config = MpcConfig(horizon=4, z_ref=(0.3, 0.0))
        self.v0 = self.topology.initial_volumes()
        self.rain = np.full((4, 2), 0.04)

    def test_dimensions(self):
        # Act
        program = build_program(self.matrices, self.config, self.v0, np.zeros(2), self.rain)

        # Assert: per langkah (V: 3, u: 2, z: 2, du: 2)
        problem = program.problem
        self.assertEqual(problem.n_variables, 4 * 9)
        self.assertEqual(problem.Aeq.shape, (4 * 7, 36))
        self.assertEqual(problem.Aineq.shape, (4 * 12, 36))
        self.assertEqual(len(program.row_index), 4 * 12)
        self.assertEqual(program.provenance, "deterministic")

    def test_row_index_maps_volume_rows_to_next_step(self):
        program = build_program(self.matrices, self.config, self.v0, np.zeros(2), self.rain)
        labels = self.matrices.row_labels
        for (t, r), row in zip(program.row_index[:12], range(12)):
            expected_t = 1 if labels[r].startswith("V_") else 0
            self.assertEqual(t, expected_t, msg=labels[r])

    def test_max_volumes_from_rows(self):
        np.testing.assert_allclose(max_volumes_from(self.matrices), [2000.0, 3000.0, 1500.0])

    def test_wrong_rain_shape_raises(self):
        with self.assertRaises(DimensionMismatchError):
            build_program(self.matrices, self.config, self.v0, np.zeros(2), np.zeros((3, 2)))

    def test_state_out_of_bounds_raises(self):
        with self.assertRaises(StateBoundsError):
            build_program(self.matrices, self.config, np.array([2500.0, 0.0, 0.0]), np.zeros(2), self.rain)

    def test_invalid_config_raises(self):
        with self.assertRaises(ValueError):
            MpcConfig(horizon=0)
        with self.assertRaises(ValueError):
            MpcConfig(q_weights=(0.0, 0.0), r_weight=0.0)


class TestControlStep(unittest.TestCase):
    def setUp(self):
        self.topology = small_topology()
        self.matrices = assemble_control_model(self.topology)
        self.config = MpcConfig(horizon=4, z_ref=(0.3, 0.0))
        self.solver = InteriorPointQpSolver()

    def test_optimal_plan_is_consistent_with_model(self):
        # Arrange
        v0 = np.array([1200.0, 800.0, 100.0])
        rain = np.full((4, 2), 0.5)

        # Act
        program = build_program(self.matrices, self.config, v0, np.zeros(2), rain)
        solution = self.solver.solve(program.problem)
        plan = program.plan(solution.x)
        volumes, slacks = replay_plan(self.matrices, v0, plan, rain)

        # Assert
        self.assertIs(solution.status, QpStatus.OPTIMAL)
        self.assertEqual(plan.shape, (4, 2))
        for k in range(4):
            np.testing.assert_allclose(volumes[k + 1], solution.x[program.layout.volume(k)], atol=1e-5)
        self.assertGreaterEqual(float(slacks.min()), -1e-4)

    def test_small_network_program_converges_quickly(self):
        cases = (
            (self.topology.initial_volumes(), 0.04),
            (np.array([1200.0, 800.0, 100.0]), 0.5),
        )
        for v0, intensity in cases:
            with self.subTest(v0=v0.tolist(), intensity=intensity):
                program = build_program(self.matrices, self.config, v0, np.zeros(2), np.full((4, 2), intensity))

                solution = self.solver.solve(program.problem)

                self.assertIs(solution.status, QpStatus.OPTIMAL)
                self.assertLessEqual(solution.kkt.iterations, 50)
                self.assertLessEqual(solution.kkt.dual_residual, 1e-6)

    def test_control_step_returns_first_move(self):
        decision = control_step(self.solver, self.matrices, self.config, self.topology.initial_volumes(),
                                np.zeros(2), np.full((4, 2), 0.04))
        self.assertIs(decision.status, StepStatus.OPTIMAL)
        np.testing.assert_array_equal(decision.controls, decision.plan[0])
        self.assertTrue(np.all(decision.controls >= -1e-6))
        self.assertTrue(np.all(decision.controls <= np.array([1.0, 0.5]) + 1e-6))

    def test_infeasible_solver_result_propagates(self):
        # Arrange
        solver = MagicMock(spec=IQpSolver)
        solver.solve.return_value = QpSolution(
            status=QpStatus.INFEASIBLE, x=np.zeros(36), objective=float("nan"),
            kkt=KktReport(1.0, float("nan"), float("nan")),
            certificate=FeasibilityCertificate(feasible=False, violation=1.0),
        )
        controller = DeterministicMpcController(solver, self.matrices, self.config)
        window = ForecastWindow(point=np.zeros((4, 2)))

        # Act
        decision = controller.decide(self.topology.initial_volumes(), np.zeros(2), window)

        # Assert
        self.assertIs(decision.status, StepStatus.INFEASIBLE)
        self.assertIsNone(decision.controls)
        solver.solve.assert_called_once()

    def test_max_iterations_result_is_usable(self):
        solver = MagicMock(spec=IQpSolver)
        solver.solve.return_value = QpSolution(
            status=QpStatus.MAX_ITERATIONS, x=np.zeros(36), objective=0.0, kkt=KktReport(0.0, 0.0, 1e-3),
        )
        decision = DeterministicMpcController(solver, self.matrices, self.config).decide(
            self.topology.initial_volumes(), np.zeros(2), ForecastWindow(point=np.zeros((4, 2))))
        self.assertIs(decision.status, StepStatus.MAX_ITERATIONS)
        np.testing.assert_array_equal(decision.controls, np.zeros(2))


if __name__ == "__main__":
    unittest.main()
