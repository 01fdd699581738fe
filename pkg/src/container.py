from src.config import AppConfig
from src.infrastructure.cli_ui import ConsoleUI

# Adapters
from src.infrastructure.adapters.topology_loader import JsonTopologyLoader
from src.infrastructure.adapters.interior_point_solver import InteriorPointQpSolver
from src.infrastructure.adapters.trace_writer import CsvTraceWriter
from src.infrastructure.adapters.sweep_store import CsvSweepStore
from src.infrastructure.adapters.svg_heatmap import MatplotlibHeatmapRenderer
from src.infrastructure.adapters.problem_dump import dump_problem

# Services
from src.service.network_service import NetworkService
from src.service.orchestrator import Orchestrator

class Container:
    def __init__(self, config: AppConfig, ui: ConsoleUI):
        self.config = config
        self.ui = ui

        # 1. Init Adapters
        self.topology_loader = JsonTopologyLoader()
        self.trace_writer = CsvTraceWriter()
        self.sweep_store = CsvSweepStore()
        self.heatmap_renderer = MatplotlibHeatmapRenderer()

        # Solver dibuat per worker (cache faktorisasi tidak dibagi antar proses)
        self.solver_factory = InteriorPointQpSolver

        # 2. Init Services
        self.network_service = NetworkService(loader=self.topology_loader)

        # 3. Init Orchestrator
        self.orchestrator = Orchestrator(
            config, ui,
            network=self.network_service,
            solver_factory=self.solver_factory,
            trace_writer=self.trace_writer,
            sweep_store=self.sweep_store,
            heatmap=self.heatmap_renderer,
            problem_dumper=dump_problem,
        )
