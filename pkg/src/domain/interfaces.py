from abc import ABC, abstractmethod
from pathlib import Path
from typing import Dict, List, Optional, Sequence, TypedDict

import numpy as np

from .models import (
    CellOutcome, ControlDecision, FeasibilityCertificate, ForecastWindow,
    NetworkTopology, QpProblem, QpSolution, SimulationTrace,
)

# --- Data Transfer Objects (DTOs) untuk file CSV ---

class SweepRow(TypedDict):
    duration_s: float
    intensity_ums: float
    realization: int
    controller: str
    gamma: str
    status: str
    infeasible_step: str
    overflow_m3: float
    benchmark_feasible: bool

class FeasibilityLineRow(TypedDict):
    controller: str
    duration_s: float
    max_feasible_intensity_ums: str

class IQpSolver(ABC):
    """Interface solver QP konveks padat."""

    @abstractmethod
    def solve(self, problem: QpProblem) -> QpSolution: ...

    @abstractmethod
    def check_feasible(self, problem: QpProblem) -> FeasibilityCertificate: ...

class IForecastSource(ABC):
    """Penyedia ramalan hujan untuk jendela horizon pada langkah k."""

    @abstractmethod
    def window(self, k: int, horizon: int) -> ForecastWindow: ...

class IController(ABC):
    """Langkah kontrol receding-horizon."""

    @property
    @abstractmethod
    def horizon(self) -> int: ...

    @abstractmethod
    def decide(self, volumes: np.ndarray, previous_controls: np.ndarray, forecast: ForecastWindow) -> ControlDecision: ...

class ITopologyLoader(ABC):
    @abstractmethod
    def parse(self, document: str) -> NetworkTopology: ...

    @abstractmethod
    def load(self, path: Path) -> NetworkTopology: ...

    @abstractmethod
    def serialize(self, topology: NetworkTopology) -> str: ...

class ITraceWriter(ABC):
    @abstractmethod
    def write(self, trace: SimulationTrace, output_path: Path, manifest_hash: Optional[str] = None) -> None: ...

class ISweepStore(ABC):
    @abstractmethod
    def write(self, outcomes: Sequence[CellOutcome], output_path: Path, manifest_hash: Optional[str] = None) -> None: ...

    @abstractmethod
    def read(self, path: Path) -> List[SweepRow]: ...

class IHeatmapRenderer(ABC):
    @abstractmethod
    def render_grid(
        self,
        title: str,
        durations: Sequence[float],
        intensities: Sequence[float],
        values: Dict[tuple, int],
        max_value: int,
        output_path: Path,
        line: Optional[Dict[float, Optional[float]]] = None,
        manifest_hash: Optional[str] = None,
    ) -> None: ...
