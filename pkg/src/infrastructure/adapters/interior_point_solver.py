import hashlib
import logging
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np
from scipy import linalg
from scipy.optimize import linprog

from src.config import SolverSettings
from src.domain.exceptions import QpInputError
from src.domain.interfaces import IQpSolver
from src.domain.models import (
    FeasibilityCertificate, KktReport, QpProblem, QpSolution, QpStatus,
)


@dataclass
class _EqualityBasis:
    """Dekomposisi SVD dari Aeq: x = x_p + Z xi memenuhi Aeq x = beq."""
    null_basis: np.ndarray
    range_basis: np.ndarray
    left_basis: np.ndarray
    singular_values: np.ndarray

    def particular(self, beq: np.ndarray, n: int) -> np.ndarray:
        if self.singular_values.size == 0:
            return np.zeros(n)
        return self.range_basis @ ((self.left_basis.T @ beq) / self.singular_values)


@dataclass
class _ReducedProblem:
    """QP tereduksi pada koordinat null-space dengan baris pertidaksamaan ternormalisasi."""
    x_p: np.ndarray
    Z: np.ndarray
    H: np.ndarray
    g: np.ndarray
    A: np.ndarray
    b: np.ndarray
    row_norms: np.ndarray
    active_rows: np.ndarray
    constant_violation: float
    equality_residual: float

    def lift(self, xi: np.ndarray) -> np.ndarray:
        return self.x_p + self.Z @ xi


class InteriorPointQpSolver(IQpSolver):
    """
    Solver QP konveks padat: eliminasi kesetaraan lewat basis null-space ortonormal,
    lalu interior-point primal-dual Mehrotra (predictor-corrector) pada QP tereduksi.
    Kelayakan diperiksa dengan LP phase-1 (HiGHS) yang meminimalkan total pelanggaran.
    """

    def __init__(self, settings: Optional[SolverSettings] = None):
        self.settings = settings or SolverSettings()
        # Aeq dan H identik di setiap langkah receding horizon; dekomposisinya di-cache
        self._basis_cache: Dict[str, _EqualityBasis] = {}
        self._psd_cache: Dict[str, float] = {}

    # --- API publik ---

    def solve(self, problem: QpProblem) -> QpSolution:
        min_eig = self._validate(problem)
        reduced = self._reduce(problem)
        certificate = self._phase_one(problem, reduced)
        if not certificate.feasible:
            logging.debug(f"🚫 QP infeasible: pelanggaran minimum {certificate.violation:.3e}")
            x = certificate.x if certificate.x is not None else np.zeros(problem.n_variables)
            return QpSolution(
                status=QpStatus.INFEASIBLE,
                x=x,
                objective=float("nan"),
                kkt=KktReport(primal_residual=certificate.violation, dual_residual=float("nan"),
                              complementarity_gap=float("nan")),
                certificate=certificate,
            )

        # Regularisasi hanya masuk ke matriks Newton; residu KKT tetap dihitung pada QP asli
        regularize = -1e-9 <= min_eig <= self.settings.regularization
        xi, kkt, converged = self._mehrotra(reduced, regularize)
        x = reduced.lift(xi)
        kkt = KktReport(
            primal_residual=self._primal_residual(problem, x),
            dual_residual=kkt.dual_residual,
            complementarity_gap=kkt.complementarity_gap,
            iterations=kkt.iterations,
        )
        status = QpStatus.OPTIMAL if converged else QpStatus.MAX_ITERATIONS
        if not converged:
            logging.warning(f"⚠️ Interior-point berhenti di batas iterasi ({kkt.iterations}); gap={kkt.complementarity_gap:.2e}")
        return QpSolution(status=status, x=x, objective=problem.objective_at(x), kkt=kkt, certificate=certificate)

    def check_feasible(self, problem: QpProblem) -> FeasibilityCertificate:
        self._validate(problem)
        return self._phase_one(problem, self._reduce(problem))

    # --- Validasi ---

    @staticmethod
    def _key(*arrays: np.ndarray) -> str:
        digest = hashlib.sha1()
        for a in arrays:
            digest.update(str(a.shape).encode())
            digest.update(np.ascontiguousarray(a).tobytes())
        return digest.hexdigest()

    def _validate(self, problem: QpProblem) -> float:
        H, g = problem.H, problem.g
        n = g.shape[0] if g.ndim == 1 else -1
        if H.ndim != 2 or H.shape != (n, n):
            raise QpInputError(f"Dimensi H {H.shape} tidak cocok dengan g {g.shape}")
        for name, mat, vec in (("eq", problem.Aeq, problem.beq), ("ineq", problem.Aineq, problem.bineq)):
            if mat.ndim != 2 or mat.shape[1] != n or vec.ndim != 1 or vec.shape[0] != mat.shape[0]:
                raise QpInputError(f"Dimensi sistem {name} tidak konsisten: A{mat.shape}, b{vec.shape}, n={n}")
        for name, arr in (("H", H), ("g", g), ("Aeq", problem.Aeq), ("beq", problem.beq),
                          ("Aineq", problem.Aineq), ("bineq", problem.bineq)):
            if not np.all(np.isfinite(arr)):
                raise QpInputError(f"{name} mengandung NaN atau inf")
        if not np.isfinite(problem.constant):
            raise QpInputError("Konstanta objektif tidak finite")

        scale = max(1.0, float(np.max(np.abs(H))) if H.size else 1.0)
        if H.size and np.max(np.abs(H - H.T)) > 1e-12 * scale:
            raise QpInputError("H tidak simetris")

        min_eig = self._min_eigenvalue(H)
        if min_eig < -1e-9 * scale:
            raise QpInputError(f"H tidak semi-definit positif (eigenvalue minimum {min_eig:.3e})")
        return min_eig

    def _min_eigenvalue(self, H: np.ndarray) -> float:
        key = self._key(H)
        if key not in self._psd_cache:
            self._psd_cache[key] = float(np.min(linalg.eigvalsh(H))) if H.shape[0] > 0 else 0.0
        return self._psd_cache[key]

    # --- Eliminasi kesetaraan ---

    def _equality_basis(self, Aeq: np.ndarray) -> _EqualityBasis:
        key = self._key(Aeq)
        cached = self._basis_cache.get(key)
        if cached is not None:
            return cached
        n = Aeq.shape[1]
        if Aeq.shape[0] == 0:
            basis = _EqualityBasis(np.eye(n), np.zeros((n, 0)), np.zeros((0, 0)), np.zeros(0))
        else:
            U, s, Vt = linalg.svd(Aeq, full_matrices=True)
            tol = max(Aeq.shape) * np.finfo(float).eps * (s[0] if s.size else 0.0)
            rank = int(np.sum(s > tol))
            basis = _EqualityBasis(
                null_basis=Vt[rank:].T.copy(),
                range_basis=Vt[:rank].T.copy(),
                left_basis=U[:, :rank].copy(),
                singular_values=s[:rank].copy(),
            )
        self._basis_cache[key] = basis
        return basis

    def _reduce(self, problem: QpProblem) -> _ReducedProblem:
        n = problem.n_variables
        basis = self._equality_basis(problem.Aeq)
        x_p = basis.particular(problem.beq, n)
        eq_res = 0.0
        if problem.Aeq.shape[0]:
            eq_res = float(np.max(np.abs(problem.Aeq @ x_p - problem.beq))) / (1.0 + float(np.max(np.abs(problem.beq))))

        Z = basis.null_basis
        H = Z.T @ problem.H @ Z
        H = 0.5 * (H + H.T)
        g = Z.T @ (problem.H @ x_p + problem.g)
        A = problem.Aineq @ Z
        b = problem.bineq - problem.Aineq @ x_p

        norms = np.max(np.abs(A), axis=1) if A.size else np.zeros(A.shape[0])
        coef_scale = np.max(np.abs(problem.Aineq), axis=1) if problem.Aineq.size else np.zeros(A.shape[0])
        active = norms > 1e-12 * np.maximum(1.0, coef_scale)
        # Baris tanpa derajat kebebasan: layak hanya bila ruas kanan tidak negatif
        const_b = b[~active]
        const_scale = np.maximum(1.0, np.abs(problem.bineq[~active]))
        constant_violation = float(np.max(np.maximum(0.0, -const_b) / const_scale)) if const_b.size else 0.0

        return _ReducedProblem(
            x_p=x_p, Z=Z, H=H, g=g,
            A=A[active] / norms[active, None], b=b[active] / norms[active],
            row_norms=norms[active], active_rows=active,
            constant_violation=constant_violation, equality_residual=eq_res,
        )

    # --- Phase 1 ---

    def _phase_one(self, problem: QpProblem, reduced: _ReducedProblem) -> FeasibilityCertificate:
        tol = self.settings.feasibility_tol
        if reduced.equality_residual > tol:
            return FeasibilityCertificate(feasible=False, violation=reduced.equality_residual)
        if reduced.constant_violation > tol:
            return FeasibilityCertificate(feasible=False, violation=reduced.constant_violation)

        A, b = reduced.A, reduced.b
        q, d = A.shape
        if q == 0:
            return FeasibilityCertificate(feasible=True, violation=0.0, x=reduced.lift(np.zeros(d)))

        c = np.concatenate([np.zeros(d), np.ones(q)])
        A_ub = np.hstack([A, -np.eye(q)])
        bounds = [(None, None)] * d + [(0.0, None)] * q
        res = linprog(c, A_ub=A_ub, b_ub=b, bounds=bounds, method="highs")
        if res.status != 0 or res.x is None:
            logging.warning(f"⚠️ LP phase-1 gagal ({res.status}): {res.message}")
            return FeasibilityCertificate(feasible=False, violation=float("inf"))

        violation = float(np.sum(res.x[d:]))
        threshold = tol * max(1.0, float(np.max(np.abs(b))))
        return FeasibilityCertificate(
            feasible=violation <= threshold,
            violation=violation,
            x=reduced.lift(res.x[:d]),
        )

    # --- Interior point ---

    def _newton_system(self, H: np.ndarray, A: np.ndarray, w: np.ndarray, reg: float):
        K = H + A.T @ (w[:, None] * A)
        K_reg = K.copy()
        K_reg[np.diag_indices_from(K_reg)] += reg
        try:
            factor = ("chol", linalg.cho_factor(K_reg, lower=True, check_finite=False))
        except linalg.LinAlgError:
            factor = ("lu", linalg.lu_factor(K_reg + 1e-12 * np.eye(K.shape[0]), check_finite=False))
        return factor, K

    def _solve_newton(self, system, rhs: np.ndarray, reg: float) -> np.ndarray:
        factor, K = system
        dxi = self._solve_with(factor, rhs)
        if reg > 0.0:
            # satu langkah refinement terhadap K tanpa regularisasi
            dxi = dxi + self._solve_with(factor, rhs - K @ dxi)
        return dxi

    @staticmethod
    def _solve_with(factor, rhs: np.ndarray) -> np.ndarray:
        kind, fac = factor
        if kind == "chol":
            return linalg.cho_solve(fac, rhs, check_finite=False)
        return linalg.lu_solve(fac, rhs, check_finite=False)

    @staticmethod
    def _max_step(v: np.ndarray, dv: np.ndarray) -> float:
        neg = dv < 0
        if not np.any(neg):
            return np.inf
        return float(np.min(-v[neg] / dv[neg]))

    @staticmethod
    def _norm(v: np.ndarray) -> float:
        return float(np.max(np.abs(v), initial=0.0))

    def _mehrotra(self, rp: _ReducedProblem, regularize: bool) -> Tuple[np.ndarray, KktReport, bool]:
        settings = self.settings
        q, d = rp.A.shape
        A, b = rp.A, rp.b
        # Objektif diskalakan ke orde satu; minimizer tidak berubah
        magnitude = max(self._norm(rp.H), self._norm(rp.g))
        obj_scale = 1.0 / magnitude if magnitude > 0.0 else 1.0
        H, g = rp.H * obj_scale, rp.g * obj_scale
        reg = settings.regularization * max(1.0, self._norm(H)) if regularize else 0.0

        if q == 0:
            system = self._newton_system(H, A, np.zeros(0), max(reg, settings.regularization))
            xi = self._solve_newton(system, -g, max(reg, settings.regularization))
            r_d = H @ xi + g
            dual = self._norm(r_d) / max(1.0, self._norm(H @ xi), self._norm(g))
            return xi, KktReport(0.0, dual, 0.0, 1), True

        # Titik awal: kuadrat terkecil dari sistem KKT dengan S = Z = I
        system = self._newton_system(H, A, np.ones(q), max(reg, settings.regularization))
        xi = self._solve_newton(system, -g + A.T @ b, max(reg, settings.regularization))
        s = np.maximum(1.0, np.abs(b - A @ xi))
        z = np.ones(q)

        b_scale = 1.0 + self._norm(b)
        kkt = KktReport(float("inf"), float("inf"), float("inf"), 0)
        best_dual, stalled = float("inf"), 0

        for iteration in range(1, settings.max_iterations + 1):
            Hxi, Atz = H @ xi, A.T @ z
            r_d = Hxi + g + Atz
            r_p = A @ xi + s - b
            mu = float(s @ z) / q
            objective = 0.5 * xi @ Hxi + g @ xi
            primal = self._norm(r_p) / b_scale
            dual = self._norm(r_d) / max(1.0, self._norm(Hxi), self._norm(Atz), self._norm(g))
            gap = mu / max(1.0, abs(float(objective)))
            kkt = KktReport(primal, dual, gap, iteration)
            logging.debug(f"   it {iteration:3d}: f={objective:.6e} rp={primal:.2e} rd={dual:.2e} mu={mu:.2e}")

            closed = primal <= settings.feasibility_tol and gap <= settings.optimality_tol
            if closed and dual <= settings.optimality_tol:
                return xi, kkt, True
            if dual < 0.9 * best_dual:
                best_dual, stalled = dual, 0
            else:
                stalled += 1
            if closed and dual <= settings.acceptable_tol and stalled >= settings.stall_iterations:
                logging.debug(f"   residu dual macet di {dual:.2e}; diterima")
                return xi, kkt, True

            w = z / s
            system = self._newton_system(H, A, w, reg)

            def direction(r_c: np.ndarray):
                rhs = -r_d + A.T @ ((r_c - z * r_p) / s)
                dxi = self._solve_newton(system, rhs, reg)
                ds = -r_p - A @ dxi
                dz = -(r_c + z * ds) / s
                return dxi, ds, dz

            # Predictor (affine scaling)
            dxi_a, ds_a, dz_a = direction(s * z)
            alpha_a = min(1.0, self._max_step(s, ds_a), self._max_step(z, dz_a))
            mu_aff = float((s + alpha_a * ds_a) @ (z + alpha_a * dz_a)) / q
            sigma = min(1.0, max(0.0, mu_aff / mu)) ** 3 if mu > 0 else 0.0

            # Corrector + centering
            dxi, ds, dz = direction(s * z + ds_a * dz_a - sigma * mu)
            if not (np.all(np.isfinite(dxi)) and np.all(np.isfinite(ds)) and np.all(np.isfinite(dz))):
                logging.debug("   arah Newton tidak finite; iterasi dihentikan")
                break
            # Fraction-to-boundary: s dan z tetap interior
            alpha = settings.step_fraction * min(1.0, self._max_step(s, ds), self._max_step(z, dz))

            xi = xi + alpha * dxi
            s = s + alpha * ds
            z = z + alpha * dz

        return xi, kkt, False

    @staticmethod
    def _primal_residual(problem: QpProblem, x: np.ndarray) -> float:
        eq = float(np.max(np.abs(problem.Aeq @ x - problem.beq), initial=0.0))
        ineq = float(np.max(problem.Aineq @ x - problem.bineq, initial=0.0))
        return max(eq, ineq, 0.0)
