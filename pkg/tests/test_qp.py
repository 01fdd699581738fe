import itertools
import tempfile
import unittest
from pathlib import Path

import numpy as np

from src.config import SolverSettings
from src.domain.exceptions import QpInputError
from src.domain.models import QpProblem, QpStatus
from src.infrastructure.adapters.interior_point_solver import InteriorPointQpSolver
from src.infrastructure.adapters.problem_dump import dump_problem, read_problem_dump


def make_problem(H, g, Aineq=None, bineq=None, Aeq=None, beq=None) -> QpProblem:
    n = len(g)
    return QpProblem(
        H=np.asarray(H, dtype=float), g=np.asarray(g, dtype=float),
        Aeq=np.zeros((0, n)) if Aeq is None else np.asarray(Aeq, dtype=float),
        beq=np.zeros(0) if beq is None else np.asarray(beq, dtype=float),
        Aineq=np.zeros((0, n)) if Aineq is None else np.asarray(Aineq, dtype=float),
        bineq=np.zeros(0) if bineq is None else np.asarray(bineq, dtype=float),
    )


def enumerate_active_sets(problem: QpProblem):
    """Oracle: coba setiap himpunan aktif, ambil titik KKT feasible dengan objektif terkecil."""
    H, g = problem.H, problem.g
    n = len(g)
    A, b = problem.Aineq, problem.bineq
    E, e = problem.Aeq, problem.beq
    best = None
    for size in range(0, min(n, A.shape[0]) + 1):
        for active in itertools.combinations(range(A.shape[0]), size):
            rows = np.vstack([E, A[list(active)]]) if active else E
            rhs = np.concatenate([e, b[list(active)]])
            k = rows.shape[0]
            kkt = np.block([[H, rows.T], [rows, np.zeros((k, k))]])
            sol, *_ = np.linalg.lstsq(kkt, np.concatenate([-g, rhs]), rcond=None)
            x, lam = sol[:n], sol[n:]
            if np.max(np.abs(kkt @ sol - np.concatenate([-g, rhs])), initial=0.0) > 1e-9:
                continue
            if A.shape[0] and np.max(A @ x - b) > 1e-9:
                continue
            if np.any(lam[E.shape[0]:] < -1e-9):
                continue
            value = problem.objective_at(x)
            if best is None or value < best[1] - 1e-12:
                best = (x, value)
    return best


class TestInteriorPointSolver(unittest.TestCase):
    def setUp(self):
        self.solver = InteriorPointQpSolver()

    def test_bound_constrained_scalar(self):
        # min 0.5 x^2 - x  s.t. x <= 0.5
        solution = self.solver.solve(make_problem([[1.0]], [-1.0], [[1.0]], [0.5]))
        self.assertIs(solution.status, QpStatus.OPTIMAL)
        self.assertAlmostEqual(solution.x[0], 0.5, places=6)

    def test_equality_constrained(self):
        # min x1^2 + x2^2  s.t. x1 + x2 = 1
        solution = self.solver.solve(make_problem(2 * np.eye(2), [0.0, 0.0], Aeq=[[1.0, 1.0]], beq=[1.0]))
        self.assertIs(solution.status, QpStatus.OPTIMAL)
        np.testing.assert_allclose(solution.x, [0.5, 0.5], atol=1e-7)
        self.assertAlmostEqual(solution.objective, 0.5, places=6)

    def test_zero_hessian_linear_program(self):
        # min -x1 - x2  s.t. 0 <= x <= 1
        A = np.vstack([np.eye(2), -np.eye(2)])
        solution = self.solver.solve(make_problem(np.zeros((2, 2)), [-1.0, -1.0], A, [1.0, 1.0, 0.0, 0.0]))
        self.assertIn(solution.status, (QpStatus.OPTIMAL, QpStatus.MAX_ITERATIONS))
        np.testing.assert_allclose(solution.x, [1.0, 1.0], atol=1e-6)

    def assert_matches_oracle(self, problem: QpProblem, case: int):
        solution = self.solver.solve(problem)
        x_star, f_star = enumerate_active_sets(problem)
        self.assertIs(solution.status, QpStatus.OPTIMAL, msg=f"case {case}")
        self.assertLessEqual(abs(solution.objective - f_star), 1e-6 * (1.0 + abs(f_star)), msg=f"case {case}")
        np.testing.assert_allclose(solution.x, x_star, atol=1e-4, err_msg=f"case {case}")

    def test_matches_active_set_oracle(self):
        rng = np.random.default_rng(2024)
        for case in range(200):
            n = int(rng.integers(1, 9))
            q = int(rng.integers(1, 9))
            L = rng.normal(size=(n, n))
            H = L @ L.T + 0.1 * np.eye(n)
            A = rng.normal(size=(q, n))
            b = A @ rng.normal(size=n) + rng.uniform(0.0, 1.0, size=q)
            self.assert_matches_oracle(make_problem(H, rng.normal(size=n), A, b), case)

    def test_matches_oracle_with_equality(self):
        rng = np.random.default_rng(7)
        for case in range(20):
            n = int(rng.integers(2, 6))
            L = rng.normal(size=(n, n))
            H = L @ L.T + 0.1 * np.eye(n)
            x0 = rng.normal(size=n)
            Aeq = rng.normal(size=(1, n))
            A = rng.normal(size=(4, n))
            self.assert_matches_oracle(make_problem(H, rng.normal(size=n), A, A @ x0 + 0.5, Aeq, Aeq @ x0), case)

    def test_infeasible_inequalities(self):
        # x <= -1 dan x >= 0
        problem = make_problem([[1.0]], [0.0], [[1.0], [-1.0]], [-1.0, 0.0])
        solution = self.solver.solve(problem)
        self.assertIs(solution.status, QpStatus.INFEASIBLE)
        self.assertFalse(solution.certificate.feasible)
        self.assertGreater(solution.certificate.violation, 0.0)

    def test_inconsistent_equalities(self):
        problem = make_problem(np.eye(2), [0.0, 0.0], Aeq=[[1.0, 1.0], [1.0, 1.0]], beq=[1.0, 2.0])
        self.assertIs(self.solver.solve(problem).status, QpStatus.INFEASIBLE)

    def test_random_infeasible_detected(self):
        # a'x <= -1 dan -a'x <= 0 tidak pernah bisa dipenuhi bersamaan
        rng = np.random.default_rng(11)
        for _ in range(20):
            n = int(rng.integers(1, 5))
            a = rng.normal(size=n)
            A = np.vstack([a, -a, rng.normal(size=(2, n))])
            b = np.array([-1.0, 0.0, 5.0, 5.0])
            problem = make_problem(np.eye(n), rng.normal(size=n), A, b)
            self.assertIs(self.solver.solve(problem).status, QpStatus.INFEASIBLE)

    def test_check_feasible_certificate(self):
        certificate = self.solver.check_feasible(make_problem([[1.0]], [0.0], [[1.0]], [2.0]))
        self.assertTrue(certificate.feasible)
        self.assertLessEqual(certificate.x[0], 2.0 + 1e-9)

    def test_badly_scaled_objective_converges(self):
        # Hessian ~1e-12 dan gradien ~1e-10 seperti QP MPC tereduksi; optimum interior di (280, 0.6)
        problem = make_problem(
            np.diag([2e-12, 2e-8]), [-6e-10, 0.0],
            Aineq=[[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]], bineq=[2000.0, 0.0, 1.0, 0.0],
            Aeq=[[1.0, -300.0]], beq=[100.0],
        )

        solution = self.solver.solve(problem)

        self.assertIs(solution.status, QpStatus.OPTIMAL)
        self.assertLessEqual(solution.kkt.iterations, 50)
        np.testing.assert_allclose(solution.x, [280.0, 0.6], rtol=1e-4)

    def test_iteration_limit_reports_max_iterations(self):
        solver = InteriorPointQpSolver(SolverSettings(max_iterations=1))
        problem = make_problem(np.eye(2), [-1.0, -1.0], [[1.0, 1.0]], [1.0])
        self.assertIs(solver.solve(problem).status, QpStatus.MAX_ITERATIONS)

    def test_rejects_non_psd_hessian(self):
        with self.assertRaises(QpInputError):
            self.solver.solve(make_problem([[1.0, 0.0], [0.0, -1.0]], [0.0, 0.0]))

    def test_rejects_nan(self):
        with self.assertRaises(QpInputError):
            self.solver.solve(make_problem([[1.0]], [float("nan")]))

    def test_rejects_asymmetric_hessian(self):
        with self.assertRaises(QpInputError):
            self.solver.solve(make_problem([[1.0, 0.5], [0.0, 1.0]], [0.0, 0.0]))

    def test_rejects_shape_mismatch(self):
        problem = make_problem(np.eye(2), [0.0, 0.0], [[1.0, 0.0]], [1.0])
        problem.bineq = np.zeros(2)
        with self.assertRaises(QpInputError):
            self.solver.solve(problem)


class TestProblemDump(unittest.TestCase):
    def test_dump_is_readable(self):
        # Arrange
        problem = make_problem(2 * np.eye(2), [0.1, -0.3], [[1.0, 2.0]], [3.0], [[1.0, 1.0]], [1.0])
        problem.variable_names = ("x0", "x1")

        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "qp.txt"

            # Act
            dump_problem(problem, path)
            text = path.read_text(encoding="utf-8")
            restored = read_problem_dump(path)

        # Assert
        self.assertIn("# H 2x2", text)
        self.assertIn("# Aineq 1x2", text)
        np.testing.assert_array_equal(restored.H, problem.H)
        np.testing.assert_array_equal(restored.bineq, problem.bineq)
        self.assertEqual(restored.variable_names, ("x0", "x1"))


if __name__ == "__main__":
    unittest.main()
