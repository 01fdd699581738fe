import logging
from pathlib import Path
from typing import Dict, Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from src.domain.interfaces import IHeatmapRenderer


class MatplotlibHeatmapRenderer(IHeatmapRenderer):
    """
    Heatmap durasi x intensitas ke SVG. Salt hash dan metadata tanggal dibuat tetap
    sehingga input yang sama menghasilkan file yang identik byte-per-byte.
    """

    def __init__(self, colormap: str = "viridis"):
        self.colormap = colormap

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
    ) -> None:
        durations = sorted(durations)
        intensities = sorted(intensities)
        grid = np.full((len(durations), len(intensities)), np.nan)
        for i, d in enumerate(durations):
            for j, x in enumerate(intensities):
                if (d, x) in values:
                    grid[i, j] = values[(d, x)]

        hours = np.array(durations) / 3600.0
        with plt.rc_context({"svg.hashsalt": manifest_hash or "sewer-ccmpc", "svg.fonttype": "none"}):
            fig, ax = plt.subplots(figsize=(10, 4))
            mesh = ax.pcolormesh(
                self._edges(np.array(intensities, dtype=float)), self._edges(hours), grid,
                cmap=self.colormap, vmin=0, vmax=max(max_value, 1), shading="flat",
            )
            fig.colorbar(mesh, ax=ax, label=f"jumlah (maks {max_value})")

            if line:
                ys = [h for h, d in zip(hours, durations) if line.get(d) is not None]
                xs = [line[d] for d in durations if line.get(d) is not None]
                if xs:
                    ax.plot(xs, ys, color="red", marker="o", linewidth=1.5, label="batas feasible")
                    ax.legend(loc="upper right")

            ax.set_xlabel("Intensitas hujan (um/s)")
            ax.set_ylabel("Durasi hujan (jam)")
            ax.set_title(title)

            output_path = Path(output_path)
            output_path.parent.mkdir(parents=True, exist_ok=True)
            metadata = {"Date": None, "Title": title}
            if manifest_hash:
                metadata["Description"] = f"manifest={manifest_hash}"
            fig.savefig(output_path, format="svg", metadata=metadata)
            plt.close(fig)
        logging.debug(f"🖼️ Heatmap ditulis: {output_path.name}")

    @staticmethod
    def _edges(centers: np.ndarray) -> np.ndarray:
        """Batas sel dari titik tengah grid (jarak seragam maupun tidak)."""
        if centers.size == 1:
            half = max(abs(centers[0]) * 0.1, 0.5)
            return np.array([centers[0] - half, centers[0] + half])
        mids = (centers[:-1] + centers[1:]) / 2.0
        first = centers[0] - (mids[0] - centers[0])
        last = centers[-1] + (centers[-1] - mids[-1])
        return np.concatenate([[first], mids, [last]])
