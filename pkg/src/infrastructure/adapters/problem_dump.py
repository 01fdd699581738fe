import logging
from pathlib import Path

import numpy as np

from src.domain.models import QpProblem


def dump_problem(problem: QpProblem, output_path: Path) -> None:
    """
    Menulis QP ke teks untuk debugging: satu blok per matriks/vektor,
    diawali baris header '# <nama> <baris>x<kolom>', lalu baris CSV row-major.
    """
    blocks = [
        ("H", problem.H),
        ("g", problem.g.reshape(1, -1)),
        ("Aeq", problem.Aeq),
        ("beq", problem.beq.reshape(1, -1)),
        ("Aineq", problem.Aineq),
        ("bineq", problem.bineq.reshape(1, -1)),
        ("constant", np.array([[problem.constant]])),
    ]
    output_path = Path(output_path)
    output_path.parent.mkdir(parents=True, exist_ok=True)
    with open(output_path, "w", encoding="utf-8") as f:
        if problem.variable_names:
            f.write("# variables " + ",".join(problem.variable_names) + "\n")
        for name, matrix in blocks:
            rows, cols = matrix.shape
            f.write(f"# {name} {rows}x{cols}\n")
            for row in matrix:
                f.write(",".join(repr(float(v)) for v in row) + "\n")
    logging.debug(f"💾 QP ditulis ke {output_path}")


def read_problem_dump(path: Path) -> QpProblem:
    """Membaca kembali file hasil dump_problem."""
    blocks = {}
    names = ()
    current = None
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.startswith("# variables "):
            names = tuple(line[len("# variables "):].split(","))
        elif line.startswith("# "):
            name, shape = line[2:].split()
            rows, cols = (int(v) for v in shape.split("x"))
            current = (name, rows, cols, [])
            blocks[name] = current
        elif current is not None and line:
            current[3].append([float(v) for v in line.split(",")])

    def matrix(name: str) -> np.ndarray:
        _, rows, cols, data = blocks[name]
        return np.array(data, dtype=float).reshape(rows, cols)

    return QpProblem(
        H=matrix("H"), g=matrix("g").ravel(),
        Aeq=matrix("Aeq"), beq=matrix("beq").ravel(),
        Aineq=matrix("Aineq"), bineq=matrix("bineq").ravel(),
        constant=float(matrix("constant")[0, 0]),
        variable_names=names,
    )
