import csv
import logging
from pathlib import Path
from typing import Dict, List, Optional

from src.domain.interfaces import ITraceWriter
from src.domain.models import SimulationTrace


def _fmt(value: Optional[float]) -> str:
    return "" if value is None else repr(float(value))


class CsvTraceWriter(ITraceWriter):
    """Trace closed-loop ke CSV, satu baris per langkah; baris '#' di awal memuat hash manifest."""

    @staticmethod
    def header(trace: SimulationTrace) -> List[str]:
        return (
            ["k", "t_s"]
            + [f"V_{t}" for t in trace.tank_ids]
            + [f"qu_{g}" for g in trace.gate_ids]
            + [f"qw_{t}" for t in trace.tank_ids]
            + ["z_treatment", "z_sea", "status", "gamma_used", "gamma_tried",
               "objective", "expected_cost", "violation_m3"]
        )

    def write(self, trace: SimulationTrace, output_path: Path, manifest_hash: Optional[str] = None) -> None:
        output_path = Path(output_path)
        output_path.parent.mkdir(parents=True, exist_ok=True)
        with open(output_path, "w", newline="", encoding="utf-8") as f:
            if manifest_hash:
                f.write(f"# manifest={manifest_hash}\n")
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(self.header(trace))
            for s in trace.steps:
                writer.writerow(
                    [s.k, _fmt(s.t_s)]
                    + [_fmt(v) for v in s.volumes]
                    + [_fmt(u) for u in s.controls]
                    + [_fmt(w) for w in s.weir_flows]
                    + [_fmt(s.outputs[0]), _fmt(s.outputs[1]), s.status, _fmt(s.gamma_used),
                       ";".join(f"{g:.2f}" for g in s.gamma_tried),
                       _fmt(s.objective), _fmt(s.expected_cost), _fmt(s.violation)]
                )
        logging.debug(f"💾 Trace ditulis: {output_path} ({len(trace.steps)} langkah)")

    @staticmethod
    def read(path: Path) -> List[Dict[str, str]]:
        """Membaca trace CSV (melewati baris komentar '#')."""
        with open(path, newline="", encoding="utf-8") as f:
            lines = [line for line in f if not line.startswith("#")]
        return list(csv.DictReader(lines))


def overflow_from_rows(rows: List[Dict[str, str]], delta_t: float) -> float:
    """Total overflow (m3) dihitung ulang dari kolom qw_* trace CSV."""
    total = 0.0
    for row in rows:
        total += sum(float(v) for k, v in row.items() if k.startswith("qw_") and v)
    return delta_t * total
