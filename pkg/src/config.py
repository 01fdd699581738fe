import os
from pathlib import Path
from dataclasses import dataclass, field
from typing import Tuple

@dataclass
class SolverSettings:
    feasibility_tol: float = 1e-7
    optimality_tol: float = 1e-8   # gap komplementaritas (relatif)
    max_iterations: int = 100
    regularization: float = 1e-10
    step_fraction: float = 0.995
    # residu dual yang masih diterima bila iterasi macet setelah gap tertutup
    acceptable_tol: float = 1e-6
    stall_iterations: int = 5

@dataclass
class MpcSettings:
    horizon: int = 24
    q_weights: Tuple[float, float] = (0.5, 1.0)   # (treatment, sea)
    r_weight: float = 0.01
    gamma_schedule: Tuple[float, ...] = (0.95, 0.90, 0.80, 0.70, 0.60, 0.50)

@dataclass
class ScenarioSettings:
    dry_flow: float = 0.04          # um/s
    pre_dry: float = 2 * 3600.0     # s
    post_dry: float = 19 * 3600.0   # s
    sigma_base: float = 0.01
    sigma_per_intensity: float = 1.0 / 3.0
    truncation_sigmas: float = 3.0

@dataclass
class SweepSettings:
    realizations_per_cell: int = 10
    jobs: int = 1
    controllers: Tuple[str, ...] = (
        "perfect_mpc", "imperfect_mpc",
        "ccmpc:0.95", "ccmpc:0.90", "ccmpc:0.80", "ccmpc:0.70", "ccmpc:0.60",
    )

@dataclass
class AppPaths:
    BASE_DIR: Path = field(default_factory=lambda: Path(__file__).parent.parent.resolve())

    # Diisi otomatis oleh __post_init__
    RESOURCES_DIR: Path = field(init=False)
    NETWORKS_DIR: Path = field(init=False)
    DEFAULT_NETWORK_FILE: Path = field(init=False)
    FILES_DIR: Path = field(init=False)
    ENV_FILE: Path = field(init=False)
    LOGS_DIR: Path = field(init=False)
    LOG_FILE: Path = field(init=False)
    OUTPUT_DIR: Path = field(init=False)

    def __post_init__(self):
        self.RESOURCES_DIR = self.BASE_DIR / "resources"
        self.NETWORKS_DIR = self.RESOURCES_DIR / "networks"
        self.DEFAULT_NETWORK_FILE = self.NETWORKS_DIR / "ten_tank.json"

        self.FILES_DIR = self.BASE_DIR / "files"
        self.ENV_FILE = self.FILES_DIR / ".env"

        self.LOGS_DIR = self.BASE_DIR / "logs"
        self.LOG_FILE = self.LOGS_DIR / "app.log"

        # SEWER_CCMPC_OUT (dari environment atau files/.env) menggantikan folder output default
        self.OUTPUT_DIR = Path(os.getenv("SEWER_CCMPC_OUT", str(self.BASE_DIR / "Output")))

    def create_dirs(self):
        for path in (self.FILES_DIR, self.LOGS_DIR, self.OUTPUT_DIR):
            path.mkdir(parents=True, exist_ok=True)

@dataclass
class AppConfig:
    paths: AppPaths = field(default_factory=AppPaths)
    solver: SolverSettings = field(default_factory=SolverSettings)
    mpc: MpcSettings = field(default_factory=MpcSettings)
    scenario: ScenarioSettings = field(default_factory=ScenarioSettings)
    sweep: SweepSettings = field(default_factory=SweepSettings)
    tool_version: str = "0.1.0"
