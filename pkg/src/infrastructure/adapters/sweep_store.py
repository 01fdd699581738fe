import csv
import logging
from pathlib import Path
from typing import List, Optional, Sequence

from src.domain.exceptions import ReportSchemaError
from src.domain.interfaces import ISweepStore, SweepRow
from src.domain.models import CellOutcome, RunStatus

SWEEP_COLUMNS = [
    "duration_s", "intensity_ums", "realization", "controller", "gamma",
    "status", "infeasible_step", "overflow_m3", "benchmark_feasible",
]


class CsvSweepStore(ISweepStore):
    """Hasil sweep ke/dari CSV; urutan baris mengikuti urutan outcome (indeks sel, controller, realisasi)."""

    def write(self, outcomes: Sequence[CellOutcome], output_path: Path, manifest_hash: Optional[str] = None) -> None:
        output_path = Path(output_path)
        output_path.parent.mkdir(parents=True, exist_ok=True)
        with open(output_path, "w", newline="", encoding="utf-8") as f:
            if manifest_hash:
                f.write(f"# manifest={manifest_hash}\n")
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(SWEEP_COLUMNS)
            for cell in outcomes:
                for record in cell.records:
                    gamma = cell.controller.gamma if cell.controller.gamma is not None else record.gamma_used
                    step = record.outcome.infeasible_step
                    writer.writerow([
                        f"{cell.duration:g}",
                        f"{cell.intensity:g}",
                        record.realization,
                        cell.controller.label,
                        "" if gamma is None else f"{gamma:.2f}",
                        record.outcome.status.value,
                        "" if step is None else step,
                        f"{record.overflow_volume:.6f}",
                        "true" if cell.benchmark_feasible else "false",
                    ])
        logging.info(f"💾 Sweep CSV ditulis: {output_path}")

    def read(self, path: Path) -> List[SweepRow]:
        path = Path(path)
        with open(path, newline="", encoding="utf-8") as f:
            lines = [line for line in f if not line.startswith("#") and line.strip()]
        if not lines:
            return []
        reader = csv.DictReader(lines)
        missing = [c for c in SWEEP_COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise ReportSchemaError(str(path), missing)

        rows: List[SweepRow] = []
        valid_status = {s.value for s in RunStatus}
        for raw in reader:
            if raw["status"] not in valid_status:
                raise ReportSchemaError(str(path), [f"status={raw['status']}"])
            rows.append(SweepRow(
                duration_s=float(raw["duration_s"]),
                intensity_ums=float(raw["intensity_ums"]),
                realization=int(raw["realization"]),
                controller=raw["controller"],
                gamma=raw["gamma"],
                status=raw["status"],
                infeasible_step=raw["infeasible_step"],
                overflow_m3=float(raw["overflow_m3"]),
                benchmark_feasible=raw["benchmark_feasible"] == "true",
            ))
        return rows
