# Run artifacts: CSV, JSON, SVG figures and the run manifest

import csv
import hashlib
import json
import logging
import subprocess
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import List, Optional

import matplotlib
import numpy as np
from matplotlib.figure import Figure

from core.targets.analytic import TargetDistribution
from core.utils.errors import ParseError, UnsupportedConfigurationError

logger = logging.getLogger(__name__)

GRID_SIZE = 200
SVG_SALT = "dft-scatter"

# deterministic SVG element ids
matplotlib.rcParams["svg.hashsalt"] = SVG_SALT


def float_text(value) -> str:
    """Shortest round-trip text of a 64-bit float."""
    return repr(float(value))


def write_samples_csv(points, path) -> Path:
    path = Path(path)
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow([f"x{j}" for j in range(points.shape[1])])
        for row in points:
            writer.writerow([float_text(v) for v in row])
    return path


def read_samples_csv(path) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise ParseError(f"samples file not found: {path}", row=None, column=None)
    with path.open(newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if not header:
            raise ParseError("empty samples file", row=0, column=None)
        rows = []
        for row_number, row in enumerate(reader, start=1):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} cells, got {len(row)}", row=row_number, column=None)
            try:
                rows.append([float(cell) for cell in row])
            except ValueError:
                bad = next(h for h, cell in zip(header, row) if not _is_number(cell))
                raise ParseError("non-numeric cell", row=row_number, column=bad)
    return np.asarray(rows, dtype=np.float64).reshape(len(rows), len(header))


def _is_number(cell) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def write_json(payload, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(payload, indent=2) + "\n")
    return path


def emit_scatter_svg(samples, target: TargetDistribution, path) -> Path:
    """Sample points over log-density contours on a 200 x 200 grid."""
    if target.dim != 2:
        raise UnsupportedConfigurationError(f"scatter plots need a 2D target, got dimension {target.dim}")
    path = Path(path)
    points = np.asarray(samples, dtype=np.float64).reshape(-1, 2)
    x_lo, x_hi, y_lo, y_hi = target.bounds
    xs = np.linspace(x_lo, x_hi, GRID_SIZE)
    ys = np.linspace(y_lo, y_hi, GRID_SIZE)
    grid_x, grid_y = np.meshgrid(xs, ys)
    with np.errstate(over="ignore", invalid="ignore"):
        log_q = target.log_density(np.column_stack([grid_x.ravel(), grid_y.ravel()])).reshape(grid_x.shape)
    finite = np.isfinite(log_q)
    top = log_q[finite].max() if finite.any() else 0.0
    log_q = np.where(finite, np.maximum(log_q, top - 30.0), top - 30.0)

    fig = Figure(figsize=(5, 5))
    ax = fig.subplots()
    ax.contour(grid_x, grid_y, log_q, levels=12, linewidths=0.6, cmap="viridis")
    if len(points):
        ax.scatter(points[:, 0], points[:, 1], s=4, c="tab:red", alpha=0.6, linewidths=0)
    ax.set_xlim(x_lo, x_hi)
    ax.set_ylim(y_lo, y_hi)
    ax.set_title(f"{target.name}: {len(points)} samples")
    fig.savefig(path, format="svg", metadata={"Date": None})
    return path


def sha256_file(path) -> str:
    digest = hashlib.sha256()
    with Path(path).open("rb") as handle:
        for block in iter(lambda: handle.read(1 << 16), b""):
            digest.update(block)
    return digest.hexdigest()


def git_describe(cwd=None) -> str:
    try:
        result = subprocess.run(["git", "describe", "--always", "--dirty"], cwd=cwd, capture_output=True,
                                text=True, timeout=5)
    except (OSError, subprocess.SubprocessError):
        return "unknown"
    return result.stdout.strip() if result.returncode == 0 and result.stdout.strip() else "unknown"


@dataclass
class RunManifest:
    config_snapshot: str
    version: str
    git: str
    started: str
    finished: Optional[str] = None
    status: str = "running"
    wall_seconds: Optional[float] = None
    files: List[dict] = field(default_factory=list)
    host: dict = field(default_factory=dict)

    def record(self, out_dir, names) -> None:
        """Digest emitted files in the given order."""
        out_dir = Path(out_dir)
        self.files = [
            {"name": name, "sha256": sha256_file(out_dir / name), "bytes": (out_dir / name).stat().st_size}
            for name in names
            if (out_dir / name).is_file()
        ]

    def write(self, out_dir) -> Path:
        return write_json(asdict(self), Path(out_dir) / "manifest.json")
