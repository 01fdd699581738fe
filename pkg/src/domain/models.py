import hashlib
import json
import math
from dataclasses import dataclass, field, asdict
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from src.domain.exceptions import DistributionError, ScenarioError

# --- Distribusi ---

@dataclass(frozen=True)
class GaussianSpec:
    mean: float
    stddev: float

    def __post_init__(self):
        if not (math.isfinite(self.mean) and math.isfinite(self.stddev)):
            raise DistributionError(f"Parameter Gaussian harus finite: mean={self.mean}, stddev={self.stddev}")
        if self.stddev < 0:
            raise DistributionError(f"stddev tidak boleh negatif: {self.stddev}")

@dataclass(frozen=True)
class TruncatedGaussianSpec:
    base: GaussianSpec
    lower: float = -math.inf
    upper: float = math.inf

    def __post_init__(self):
        if math.isnan(self.lower) or math.isnan(self.upper) or not self.lower < self.upper:
            raise DistributionError(f"Batas truncation tidak valid: [{self.lower}, {self.upper}]")

    @property
    def is_untruncated(self) -> bool:
        return math.isinf(self.lower) and math.isinf(self.upper)

# --- Jaringan ---

class TankKind(str, Enum):
    VIRTUAL = "virtual"
    REAL = "real"

class GateKind(str, Enum):
    REDIRECTION = "redirection"
    RETENTION = "retention"

@dataclass(frozen=True)
class Diagnostic:
    element: str
    rule: str
    message: str

    def __str__(self) -> str:
        return f"[{self.rule}] {self.element}: {self.message}"

@dataclass(frozen=True)
class TankSpec:
    id: str
    kind: TankKind
    max_volume: float
    beta: float
    catchment_area: float = 0.0
    has_weir: bool = False
    outflow_to: Optional[str] = None
    initial_volume: float = 0.0

@dataclass(frozen=True)
class GateSpec:
    id: str
    kind: GateKind
    max_flow: float
    source: str
    main_target: str
    diverted_target: Optional[str] = None

@dataclass(frozen=True)
class RainInput:
    catchment: str
    tank: str

@dataclass(frozen=True)
class NetworkTopology:
    tanks: Tuple[TankSpec, ...]
    gates: Tuple[GateSpec, ...]
    rain_inputs: Tuple[RainInput, ...]
    delta_t: float = 300.0
    treatment_sink: str = "treatment"
    sea_sink: str = "sea"
    treatment_capacity: float = 0.0
    schema: int = 1

    @property
    def tank_ids(self) -> List[str]:
        return [t.id for t in self.tanks]

    @property
    def gate_ids(self) -> List[str]:
        return [g.id for g in self.gates]

    @property
    def catchment_ids(self) -> List[str]:
        return [r.catchment for r in self.rain_inputs]

    @property
    def sinks(self) -> Tuple[str, str]:
        return (self.treatment_sink, self.sea_sink)

    def initial_volumes(self) -> np.ndarray:
        return np.array([t.initial_volume for t in self.tanks], dtype=float)

    def max_volumes(self) -> np.ndarray:
        return np.array([t.max_volume for t in self.tanks], dtype=float)

@dataclass(frozen=True)
class Dimensions:
    n_tanks: int
    n_controls: int
    n_rain: int

@dataclass(frozen=True)
class NetworkMatrices:
    """Model kontrol linear: V+ = AV + Bu + Gw, z = CV + Du + Fw, Mu + PV + Sw <= K."""
    A: np.ndarray
    B: np.ndarray
    G: np.ndarray
    C: np.ndarray
    D: np.ndarray
    F: np.ndarray
    M: np.ndarray
    P: np.ndarray
    S: np.ndarray
    K: np.ndarray
    dims: Dimensions
    row_labels: Tuple[str, ...] = ()
    delta_t: float = 300.0

    @property
    def state_only_rows(self) -> np.ndarray:
        """Baris yang hanya melibatkan volume (tanpa kontrol maupun hujan)."""
        no_control = ~np.any(self.M != 0.0, axis=1)
        no_rain = ~np.any(self.S != 0.0, axis=1)
        return no_control & no_rain

# --- Simulator ---

@dataclass
class PlantState:
    volumes: np.ndarray
    previous_controls: np.ndarray

@dataclass
class SimStepResult:
    new_state: PlantState
    weir_flows: np.ndarray
    outputs: np.ndarray
    applied_controls: np.ndarray
    inflows: np.ndarray
    outflows: np.ndarray
    violation: np.ndarray

class StepStatus(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    MAX_ITERATIONS = "max_iterations"
    ERROR = "error"

@dataclass
class TraceStep:
    k: int
    t_s: float
    volumes: np.ndarray
    controls: np.ndarray
    weir_flows: np.ndarray
    outputs: np.ndarray
    status: str
    gamma_used: Optional[float] = None
    gamma_tried: Tuple[float, ...] = ()
    objective: Optional[float] = None
    expected_cost: Optional[float] = None
    violation: float = 0.0

    @property
    def feasible(self) -> bool:
        # max_iterations tetap dihitung feasible: phase-1 sudah membuktikan kelayakan
        return self.status in (StepStatus.OPTIMAL.value, StepStatus.MAX_ITERATIONS.value)

@dataclass
class SimulationTrace:
    tank_ids: List[str]
    gate_ids: List[str]
    delta_t: float
    steps: List[TraceStep] = field(default_factory=list)

    @property
    def first_infeasible_step(self) -> Optional[int]:
        for step in self.steps:
            if step.status == StepStatus.INFEASIBLE.value:
                return step.k
        return None

    @property
    def has_errors(self) -> bool:
        return any(step.status == StepStatus.ERROR.value for step in self.steps)

# --- QP ---

class QpStatus(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    MAX_ITERATIONS = "max_iterations"

@dataclass
class QpProblem:
    """minimize 0.5 x'Hx + g'x + constant  s.t.  Aeq x = beq,  Aineq x <= bineq."""
    H: np.ndarray
    g: np.ndarray
    Aeq: np.ndarray
    beq: np.ndarray
    Aineq: np.ndarray
    bineq: np.ndarray
    constant: float = 0.0
    variable_names: Tuple[str, ...] = ()

    @property
    def n_variables(self) -> int:
        return self.H.shape[0]

    def objective_at(self, x: np.ndarray) -> float:
        return float(0.5 * x @ self.H @ x + self.g @ x + self.constant)

@dataclass(frozen=True)
class KktReport:
    primal_residual: float
    dual_residual: float
    complementarity_gap: float
    iterations: int = 0

@dataclass(frozen=True)
class FeasibilityCertificate:
    feasible: bool
    violation: float
    x: Optional[np.ndarray] = None

@dataclass
class QpSolution:
    status: QpStatus
    x: np.ndarray
    objective: float
    kkt: KktReport
    certificate: Optional[FeasibilityCertificate] = None

# --- MPC ---

@dataclass(frozen=True)
class MpcConfig:
    horizon: int = 24
    q_weights: Tuple[float, float] = (0.5, 1.0)
    r_weight: float = 0.01
    z_ref: Tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError(f"Horizon harus >= 1, didapat {self.horizon}")
        weights = list(self.q_weights) + [self.r_weight]
        if any(w < 0 for w in weights) or not any(w > 0 for w in weights):
            raise ValueError(f"Bobot Q/R harus >= 0 dan minimal satu > 0: {weights}")

@dataclass(frozen=True)
class VariableLayout:
    """Tata letak variabel QP per langkah k: (V_{k+1}, q^u_k, z_k, dq^u_k)."""
    n_tanks: int
    n_controls: int
    horizon: int
    n_outputs: int = 2

    @property
    def block(self) -> int:
        return self.n_tanks + 2 * self.n_controls + self.n_outputs

    @property
    def size(self) -> int:
        return self.block * self.horizon

    def volume(self, k: int) -> slice:
        """Slice untuk V_{k+1}."""
        start = k * self.block
        return slice(start, start + self.n_tanks)

    def control(self, k: int) -> slice:
        start = k * self.block + self.n_tanks
        return slice(start, start + self.n_controls)

    def output(self, k: int) -> slice:
        start = k * self.block + self.n_tanks + self.n_controls
        return slice(start, start + self.n_outputs)

    def move(self, k: int) -> slice:
        start = k * self.block + self.n_tanks + self.n_controls + self.n_outputs
        return slice(start, start + self.n_controls)

    def variable_names(self, tank_ids: List[str], gate_ids: List[str]) -> Tuple[str, ...]:
        names: List[str] = []
        for k in range(self.horizon):
            names += [f"V[{k + 1}].{t}" for t in tank_ids]
            names += [f"qu[{k}].{g}" for g in gate_ids]
            names += [f"z[{k}].treatment", f"z[{k}].sea"]
            names += [f"dqu[{k}].{g}" for g in gate_ids]
        return tuple(names)

@dataclass
class HorizonProgram:
    problem: QpProblem
    layout: VariableLayout
    provenance: str = "deterministic"
    gamma: Optional[float] = None
    constant_cost: float = 0.0
    # (t, r) per baris pertidaksamaan: baris r dari (M,P,S,K) dievaluasi pada V_t dan hujan langkah t
    row_index: Tuple[Tuple[int, int], ...] = ()

    def plan(self, x: np.ndarray) -> np.ndarray:
        """Rencana kontrol N x m dari solusi QP."""
        return np.array([x[self.layout.control(k)] for k in range(self.layout.horizon)])

# --- CC-MPC ---

@dataclass(frozen=True)
class UncertaintyModel:
    """specs[k][c]: ramalan intensitas (um/s) langkah k untuk input hujan c."""
    specs: Tuple[Tuple[TruncatedGaussianSpec, ...], ...]
    initial_volume_covariance: Optional[np.ndarray] = None

    @property
    def horizon(self) -> int:
        return len(self.specs)

@dataclass
class MomentTrajectory:
    """
    Momen sepanjang horizon. mean_volumes hanya memuat bagian bebas-kontrol (A^t v0 + kontribusi
    mean hujan); bagian B u tetap simbolik di QP. Array baris berbentuk (N+1, jumlah baris K).
    """
    mean_volumes: List[np.ndarray]
    volume_covariances: List[np.ndarray]
    output_covariances: List[np.ndarray]
    rain_means: np.ndarray
    rain_variances: np.ndarray
    row_variances: np.ndarray
    row_terms: np.ndarray
    row_single_term: Dict[Tuple[int, int], Tuple[float, TruncatedGaussianSpec]]
    has_initial_covariance: bool = False

@dataclass
class TightenedConstraints:
    """Baris (M,P,S,K) per waktu t dengan batas K dikurangi offset chance-constraint."""
    gamma: float
    offsets: np.ndarray
    bounds: np.ndarray

@dataclass(frozen=True)
class GammaSchedule:
    values: Tuple[float, ...] = (0.95, 0.90, 0.80, 0.70, 0.60, 0.50)

    def __post_init__(self):
        if not self.values:
            raise DistributionError("Jadwal gamma tidak boleh kosong.")
        if any(not 0.0 < g < 1.0 for g in self.values):
            raise DistributionError(f"Nilai gamma harus di (0,1): {self.values}")
        if any(a <= b for a, b in zip(self.values, self.values[1:])):
            raise DistributionError(f"Jadwal gamma harus menurun tegas: {self.values}")

@dataclass(frozen=True)
class ForecastWindow:
    """Jendela ramalan untuk langkah k..k+N-1 (baris = langkah, kolom = input hujan)."""
    point: np.ndarray
    uncertainty: Optional[UncertaintyModel] = None

@dataclass
class ControlDecision:
    controls: Optional[np.ndarray]
    status: StepStatus
    plan: Optional[np.ndarray] = None
    gamma_used: Optional[float] = None
    gamma_tried: Tuple[float, ...] = ()
    objective: Optional[float] = None
    constant_cost: float = 0.0

# --- Skenario ---

@dataclass(frozen=True)
class RainScenario:
    rain_duration: float
    rain_intensity: float
    dry_flow: float = 0.04
    pre_dry: float = 2 * 3600.0
    post_dry: float = 19 * 3600.0
    bias: float = 0.0

    def __post_init__(self):
        for name in ("rain_duration", "pre_dry", "post_dry"):
            if not getattr(self, name) > 0:
                raise ScenarioError(f"Durasi {name} harus > 0: {getattr(self, name)}")
        values = (self.rain_duration, self.rain_intensity, self.dry_flow, self.pre_dry, self.post_dry, self.bias)
        if not all(math.isfinite(v) for v in values):
            raise ScenarioError(f"Parameter skenario harus finite: {values}")
        if self.rain_intensity < 0 or self.dry_flow < 0:
            raise ScenarioError("Intensitas hujan dan dry flow harus >= 0.")

    @property
    def total_duration(self) -> float:
        return self.pre_dry + self.rain_duration + self.post_dry

    def n_steps(self, delta_t: float) -> int:
        return int(math.ceil(self.total_duration / delta_t - 1e-9))

    def profile(self, delta_t: float) -> np.ndarray:
        """Intensitas rata-rata per langkah (um/s) tanpa bias: dry_flow + porsi hujan yang jatuh di langkah itu."""
        n = self.n_steps(delta_t)
        start = np.arange(n) * delta_t
        end = start + delta_t
        rain_start, rain_end = self.pre_dry, self.pre_dry + self.rain_duration
        overlap = np.clip(np.minimum(end, rain_end) - np.maximum(start, rain_start), 0.0, delta_t)
        return self.dry_flow + self.rain_intensity * overlap / delta_t

    def actual_profile(self, delta_t: float) -> np.ndarray:
        """Hujan aktual yang diterima plant: profil ditambah bias, di-clamp >= 0."""
        return np.maximum(0.0, self.profile(delta_t) + self.bias)

@dataclass(frozen=True)
class PredictionModel:
    specs: Tuple[TruncatedGaussianSpec, ...]

    def window(self, k: int, horizon: int, n_rain: int) -> UncertaintyModel:
        """
        Jendela N langkah mulai k; setiap catchment memakai spec yang sama tetapi
        dimodelkan sebagai variabel acak independen (kovarians hujan diagonal).
        Sampel imperfect MPC juga diundi independen per catchment.
        """
        last = len(self.specs) - 1
        rows = tuple(
            tuple(self.specs[min(j, last)] for _ in range(n_rain))
            for j in range(k, k + horizon)
        )
        return UncertaintyModel(specs=rows)

    def means(self) -> np.ndarray:
        return np.array([s.base.mean for s in self.specs], dtype=float)

class RunStatus(str, Enum):
    FEASIBLE_CLEAN = "feasible_clean"
    INFEASIBLE = "infeasible"
    FALSE_POSITIVE = "false_positive_overflow"
    ERROR = "error"

@dataclass(frozen=True)
class RunOutcome:
    status: RunStatus
    infeasible_step: Optional[int] = None

    @property
    def label(self) -> str:
        if self.status is RunStatus.INFEASIBLE and self.infeasible_step is not None:
            return f"infeasible_step_{self.infeasible_step}"
        return self.status.value

@dataclass(frozen=True)
class ControllerSpec:
    kind: str
    gamma: Optional[float] = None

    KINDS = ("perfect_mpc", "imperfect_mpc", "ccmpc", "ccmpc_backoff")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"Jenis controller tidak dikenal: {self.kind}")
        if self.kind == "ccmpc" and (self.gamma is None or not 0.0 < self.gamma < 1.0):
            raise ValueError("ccmpc memerlukan gamma di (0,1), contoh 'ccmpc:0.95'.")

    @classmethod
    def parse(cls, text: str) -> "ControllerSpec":
        kind, _, gamma = text.strip().partition(":")
        return cls(kind=kind, gamma=float(gamma) if gamma else None)

    @property
    def label(self) -> str:
        return f"{self.kind}:{self.gamma:.2f}" if self.kind == "ccmpc" else self.kind

@dataclass(frozen=True)
class SweepGrid:
    durations: Tuple[float, ...]
    intensities: Tuple[float, ...]
    realizations_per_cell: int = 10
    seed: int = 0

    @classmethod
    def coarse(cls, seed: int = 0, realizations: int = 10) -> "SweepGrid":
        return cls(
            durations=tuple(h * 3600.0 for h in (0.5, 1.5, 3.0, 5.0)),
            intensities=tuple(round(0.25 * i, 2) for i in range(1, 25)),
            realizations_per_cell=realizations,
            seed=seed,
        )

    @classmethod
    def fine(cls, seed: int = 0, realizations: int = 10) -> "SweepGrid":
        return cls(
            durations=tuple(0.5 * h * 3600.0 for h in range(1, 11)),
            intensities=tuple(round(0.1 * i, 1) for i in range(1, 111)),
            realizations_per_cell=realizations,
            seed=seed,
        )

    def cells(self) -> List[Tuple[int, float, float]]:
        out = []
        for d_idx, duration in enumerate(self.durations):
            for i_idx, intensity in enumerate(self.intensities):
                out.append((d_idx * len(self.intensities) + i_idx, duration, intensity))
        return out

@dataclass(frozen=True)
class RunRecord:
    realization: int
    outcome: RunOutcome
    overflow_volume: float
    gamma_used: Optional[float] = None

@dataclass
class CellOutcome:
    cell_index: int
    duration: float
    intensity: float
    controller: ControllerSpec
    records: List[RunRecord]
    benchmark_feasible: bool

    @property
    def feasible_count(self) -> int:
        return sum(1 for r in self.records if r.outcome.status in (RunStatus.FEASIBLE_CLEAN, RunStatus.FALSE_POSITIVE))

    @property
    def false_positive_count(self) -> int:
        return sum(1 for r in self.records if r.outcome.status is RunStatus.FALSE_POSITIVE)

# --- CLI ---

@dataclass
class RunManifest:
    config_path: str
    command: str
    parameters: Dict[str, Any]
    seed: int
    output_dir: str
    tool_version: str
    config_hash: str

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @property
    def manifest_hash(self) -> str:
        """Hash isi manifest (tanpa output_dir agar hasil tidak bergantung pada lokasi)."""
        payload = self.to_dict()
        payload.pop("output_dir", None)
        canonical = json.dumps(payload, sort_keys=True, default=str)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]
