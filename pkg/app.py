import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

from dotenv import load_dotenv

# Config & UI
from src.config import AppConfig, AppPaths
from src.infrastructure.cli_ui import ConsoleUI
from src.common import setup_logging
from src.container import Container
from src.service.orchestrator import EXIT_DOMAIN, EXIT_IO

# Nama kunci di manifest hasil run -> nama flag argparse
MANIFEST_ALIASES = {
    "config_path": "config",
    "output_dir": "out",
    "duration_s": "duration",
    "intensity_ums": "intensity",
    "realizations_per_cell": "realizations",
}

# Nilai bawaan flag; None berarti diambil dari AppConfig
FLAG_DEFAULTS: Dict[str, Any] = {
    "seed": 0,
    "jobs": None,
    "full_grid": False,
    "bias": 0.0,
    "horizon": None,
    "controller": "perfect_mpc",
    "controllers": None,
    "duration": 5400.0,
    "intensity": 0.7,
    "realizations": None,
    "dump_qp": False,
}

def load_manifest_values(path: Path) -> Dict[str, Any]:
    """
    Membaca run-manifest JSON. Menerima kunci flag langsung atau bentuk manifest
    yang ditulis perintah simulate/sweep (nilai di 'parameters' diratakan).
    """
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(data, dict):
        raise ValueError(f"Manifest harus berupa objek JSON: {path}")
    flat = {k: v for k, v in data.items() if k != "parameters"}
    flat.update(data.get("parameters") or {})
    values = {}
    for key, value in flat.items():
        name = MANIFEST_ALIASES.get(key, key).replace("-", "_")
        if name in FLAG_DEFAULTS or name in ("config", "out"):
            values[name] = value
    return values

def resolve_args(args: argparse.Namespace, config: AppConfig) -> argparse.Namespace:
    """Urutan prioritas: flag eksplisit > manifest > bawaan."""
    manifest = load_manifest_values(args.manifest) if args.manifest else {}
    for name, default in list(FLAG_DEFAULTS.items()) + [("config", None), ("out", None)]:
        if getattr(args, name, None) is None:
            setattr(args, name, manifest.get(name, default))

    args.config = Path(args.config) if args.config else config.paths.DEFAULT_NETWORK_FILE
    args.out = Path(args.out) if args.out else config.paths.OUTPUT_DIR
    if args.jobs is None:
        args.jobs = config.sweep.jobs
    if args.realizations is None:
        args.realizations = config.sweep.realizations_per_cell
    if not args.controllers:
        args.controllers = list(config.sweep.controllers)
    elif isinstance(args.controllers, str):
        args.controllers = [c for c in args.controllers.split(",") if c]
    return args

def build_parser() -> argparse.ArgumentParser:
    # Semua default None: nilai yang tidak diisi dilengkapi manifest lalu bawaan
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="File jaringan JSON (default: jaringan sepuluh tangki bawaan)")
    common.add_argument("--out", default=None, help="Folder output (default: $SEWER_CCMPC_OUT atau ./Output)")
    common.add_argument("--seed", type=int, default=None, help="Seed realisasi ramalan")
    common.add_argument("--jobs", type=int, default=None, help="Jumlah worker proses untuk sweep")
    common.add_argument("--full-grid", dest="full_grid", action="store_true", default=None, help="Grid sweep lengkap (10 durasi x 110 intensitas)")
    common.add_argument("--manifest", default=None, help="Run-manifest JSON; flag eksplisit menang")
    common.add_argument("--bias", type=float, default=None, help="Bias hujan aktual terhadap ramalan (um/s)")
    common.add_argument("--horizon", type=int, default=None, help="Horizon prediksi N (langkah)")
    common.add_argument("-v", "--verbose", action="store_true", help="Log DEBUG di konsol")

    parser = argparse.ArgumentParser(description="Sewer CC-MPC - MPC deterministik & chance-constrained untuk jaringan saluran pembuangan")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("validate", parents=[common], help="Validasi file jaringan")

    p_sim = sub.add_parser("simulate", parents=[common], help="Satu simulasi closed-loop")
    p_sim.add_argument("--duration", type=float, default=None, help="Durasi hujan (detik)")
    p_sim.add_argument("--intensity", type=float, default=None, help="Intensitas hujan (um/s)")
    p_sim.add_argument("--controller", default=None, help="perfect_mpc | imperfect_mpc | ccmpc:<gamma> | ccmpc_backoff")
    p_sim.add_argument("--dump-qp", dest="dump_qp", action="store_true", default=None, help="Tulis QP langkah pertama ke qp_step0.txt")

    p_sweep = sub.add_parser("sweep", parents=[common], help="Sweep grid durasi x intensitas")
    p_sweep.add_argument("--controllers", default=None, help="Daftar dipisah koma, contoh perfect_mpc,imperfect_mpc,ccmpc:0.95")
    p_sweep.add_argument("--realizations", type=int, default=None, help="Realisasi ramalan per sel")

    p_report = sub.add_parser("report", parents=[common], help="Tabel perbandingan dari CSV sweep")
    p_report.add_argument("sweep_csv", nargs="+", help="Satu atau lebih file sweep.csv")
    return parser

def dispatch(args: argparse.Namespace, container: Container) -> int:
    orchestrator = container.orchestrator
    if args.command == "validate":
        return orchestrator.cmd_validate(args.config)
    if args.command == "simulate":
        return orchestrator.cmd_simulate(
            args.config, float(args.duration), float(args.intensity), args.controller,
            int(args.seed), args.out, horizon=args.horizon, bias=float(args.bias), dump_qp=bool(args.dump_qp),
        )
    if args.command == "sweep":
        return orchestrator.cmd_sweep(
            args.config, args.controllers, int(args.seed), args.out, jobs=int(args.jobs),
            full_grid=bool(args.full_grid), realizations=int(args.realizations),
            horizon=args.horizon, bias=float(args.bias),
        )
    return orchestrator.cmd_report([Path(p) for p in args.sweep_csv], args.out)

def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)

    # SEWER_CCMPC_OUT dari files/.env harus terbaca sebelum AppConfig dibuat
    load_dotenv(AppPaths().ENV_FILE)
    config = AppConfig()
    config.paths.create_dirs()
    setup_logging(config.paths.LOG_FILE, logging.DEBUG if args.verbose else logging.INFO)

    ui = ConsoleUI()
    ui.print_banner()

    try:
        args = resolve_args(args, config)
    except FileNotFoundError as e:
        ui.show_error(f"Manifest tidak ditemukan: {e.filename}")
        return EXIT_IO
    except (ValueError, json.JSONDecodeError) as e:
        ui.show_error(f"Manifest tidak valid: {e}")
        return EXIT_DOMAIN

    try:
        container = Container(config, ui)
        return dispatch(args, container)
    except KeyboardInterrupt:
        print("\n👋 Dibatalkan pengguna.")
        return EXIT_DOMAIN

if __name__ == "__main__":
    sys.exit(main())
