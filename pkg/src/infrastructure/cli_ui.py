import logging
import sys
from pathlib import Path
from typing import List, Sequence

from src.domain.models import Diagnostic

class ConsoleUI:
    """Antarmuka Pengguna berbasis Terminal."""

    def print_banner(self):
        print("\n" + "="*40)
        print("   🌧️ SEWER CC-MPC - CLEAN ARCH   ")
        print("="*40 + "\n")

    def show_step(self, step_name: str):
        logging.info(f"🚀 [STEP] {step_name}...")

    def show_error(self, msg: str):
        logging.error(f"❌ ERROR: {msg}")

    def show_diagnostics(self, diagnostics: Sequence[Diagnostic]):
        """Diagnostik validasi ditulis ke stderr, satu per baris."""
        for d in diagnostics:
            print(f"{d.rule}\t{d.element}\t{d.message}", file=sys.stderr)

    def show_success(self, output_dir: Path, files: List[Path]):
        logging.info("="*40)
        logging.info("✨ PROSES SELESAI!")
        logging.info("="*40)
        logging.info(f"📂 Folder Output: {output_dir}")
        if files:
            logging.info(f"📄 {len(files)} File Dihasilkan:")
            for f in files:
                logging.info(f"   - {f.name}")
        else:
            logging.warning("⚠️ Tidak ada file yang dihasilkan.")

    def log(self, msg: str):
        """Wrapper untuk print biasa agar user melihat progress."""
        logging.info(f"   -> {msg}")

    def format_table(self, headers: Sequence[str], rows: Sequence[Sequence[object]]) -> str:
        cells = [[str(h) for h in headers]] + [[str(c) for c in row] for row in rows]
        widths = [max(len(r[i]) for r in cells) for i in range(len(headers))]
        lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in cells]
        lines.insert(1, "  ".join("-" * w for w in widths))
        return "\n".join(lines)

    def print_table(self, headers: Sequence[str], rows: Sequence[Sequence[object]]):
        print(self.format_table(headers, rows))
