"""Deterministic CSV tables with a commented header block, and optional SVG plots."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Sequence

__all__ = ["Column", "Table", "fmt", "UNIT_CONVENTIONS", "write_svg"]

UNIT_CONVENTIONS = (
    "velocity [m/s]; distance [m]; time [s]; frequency [Hz]",
    "mu = 1 - M (P Ts + T_IFS) / T [fraction of the CPI carrying data]",
    "phi_c = (1/N) Tr log2 DMMSE = -mu r [bits]",
    "dmmse_db = 10 log10(2) phi_c [dB]",
    "phi_r = (1/K) sum ln CRB_kk [ln (m/s)^2]",
    "rcrb_db = (10/K) sum log10 CRB_kk = 20 log10 of the geometric-mean RCRB [dB re 1 m/s]",
    "rmse, rcrb [m/s]; snr_db [dB]",
    "weighted objective = (1 - omega_c) phi_r~ + omega_c phi_c~ with ~ = min-max over the feasible sweep",
)


def fmt(value: Any) -> str:
    """Format a cell: fixed notation for 1e-4 <= |x| < 1e4, exponent notation otherwise."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        if value == 0.0:
            return "0"
        if 1e-4 <= abs(value) < 1e4:
            return format(value, ".12g")
        return format(value, ".12e")
    if isinstance(value, (tuple, list)):
        return " ".join(fmt(v) for v in value)
    try:  # numpy scalars
        return fmt(value.item())
    except AttributeError:
        pass
    text = str(value)
    if any(c in text for c in ',"\n'):
        text = '"' + text.replace('"', '""') + '"'
    return text


@dataclass(frozen=True)
class Column:
    name: str
    unit: str = "-"


@dataclass
class Table:
    name: str
    columns: Sequence[Column]
    rows: list[Sequence[Any]] = field(default_factory=list)

    def add(self, *values: Any) -> None:
        if len(values) != len(self.columns):
            raise ValueError(f"{self.name}: expected {len(self.columns)} values, got {len(values)}")
        self.rows.append(values)

    def column(self, name: str) -> list[Any]:
        idx = [c.name for c in self.columns].index(name)
        return [r[idx] for r in self.rows]

    def to_csv(self, header: Sequence[str] = ()) -> str:
        buf = io.StringIO()
        for line in header:
            buf.write(f"# {line}\n")
        buf.write("# columns: " + "; ".join(f"{c.name} [{c.unit}]" for c in self.columns) + "\n")
        buf.write(",".join(c.name for c in self.columns) + "\n")
        for row in self.rows:
            buf.write(",".join(fmt(v) for v in row) + "\n")
        return buf.getvalue()

    def write(self, directory: Path, header: Sequence[str] = ()) -> Path:
        directory.mkdir(parents=True, exist_ok=True)
        path = directory / f"{self.name}.csv"
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.to_csv(header))
        return path


def write_svg(path: Path, series: dict[str, tuple[Sequence[float], Sequence[float]]],
              xlabel: str, ylabel: str, title: Optional[str] = None) -> Path:
    """Line plot of the given series, byte-stable across runs."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with matplotlib.rc_context({"svg.hashsalt": "jcrwave", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(6.4, 4.8))
        for label, (x, y) in series.items():
            ax.plot(x, y, marker="o", markersize=3, label=label)
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        ax.grid(True, alpha=0.3)
        if series:
            ax.legend(fontsize="small")
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
        plt.close(fig)
    return path
