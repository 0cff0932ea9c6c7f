import json
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from config import ARTIFACT_VERSION, Config
from experiment import ExperimentConfig, serialize_config
from geometry import CollocationSet, SubdomainSpec, points_frame
from network import NetworkParams, save_checkpoint
from optimizers import LossHistory
from utils import get_current_time, get_logger

FLOAT_FORMAT = "%.17g"
MANIFEST_NAME = "manifest.json"
ERROR_LOG_NAME = "errors.log"


class OutputManager:
    """Writes run artifacts into one output directory and keeps the manifest inventory."""

    def __init__(self, out_dir: Union[str, Path], timezone: Optional[str] = None):
        self.logger = get_logger(__name__)
        self.out_dir = Path(out_dir)
        self.timezone = timezone or Config.TIMEZONE
        self.started = get_current_time(self.timezone)

    def _path(self, name: str) -> Path:
        # directory is created on first write so failed runs leave nothing behind
        self.out_dir.mkdir(parents=True, exist_ok=True)
        return self.out_dir / name

    def _write_frame(self, frame: pd.DataFrame, name: str) -> Path:
        path = self._path(name)
        frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, na_rep="")
        self.logger.debug(f"Wrote {len(frame)} rows to {path}")
        return path

    def subdirectory(self, name: str) -> "OutputManager":
        return OutputManager(self.out_dir / name, self.timezone)

    # --- artifacts -----------------------------------------------------------

    def write_checkpoints(self, params: Sequence[NetworkParams]) -> List[Path]:
        return [save_checkpoint(p, self._path(f"network_{i}.ckpt")) for i, p in enumerate(params)]

    def write_history(self, history: LossHistory) -> Path:
        return self._write_frame(history.to_frame(), "loss_history.csv")

    def write_residuals(self, frame: pd.DataFrame) -> Path:
        return self._write_frame(frame, "residuals.csv")

    def write_fields(self, frame: pd.DataFrame, t: float, index: int = 0) -> Path:
        """Field snapshot with an added velocity magnitude column; `index` keeps close times apart."""
        frame = frame.copy()
        frame["magnitude"] = np.sqrt(frame["u"] ** 2 + frame["v"] ** 2)
        return self._write_frame(frame, f"fields_{index:03d}_t{t:.4f}.csv")

    def write_boundary_flux(self, frame: pd.DataFrame) -> Path:
        return self._write_frame(frame, "boundary_flux.csv")

    def write_metrics(self, table: pd.DataFrame) -> List[Path]:
        """Metrics as CSV and as an aligned text table."""
        csv_path = self._write_frame(table, "metrics.csv")
        text_path = self._path("metrics.txt")
        text_path.write_text(table.to_string(index=False) + "\n", encoding="utf-8")
        return [csv_path, text_path]

    def write_points(self, collocation: CollocationSet, subdomains: Sequence[SubdomainSpec]) -> List[Path]:
        paths = [self._write_frame(collocation.to_frame(), "points.csv")]
        for spec in subdomains:
            paths.append(self._write_frame(spec.collocation.to_frame(), f"subdomain_{spec.index}_points.csv"))
            for j, side in sorted(spec.interfaces.items()):
                if spec.index < j:
                    paths.append(self._write_frame(points_frame(side.points), f"interface_{spec.index}_{j}.csv"))
        return paths

    def log_error(self, error_message: str) -> bool:
        """Append a timestamped line to errors.log."""
        try:
            stamp = get_current_time(self.timezone).isoformat()
            with self._path(ERROR_LOG_NAME).open("a", encoding="utf-8") as f:
                f.write(f"{stamp} {error_message}\n")
            return True
        except OSError as e:
            self.logger.error(f"Error writing to {ERROR_LOG_NAME}: {e}")
            return False

    # --- manifest ------------------------------------------------------------

    def inventory(self) -> List[Dict[str, Any]]:
        if not self.out_dir.exists():
            return []
        entries = []
        for path in sorted(p for p in self.out_dir.rglob("*") if p.is_file()):
            name = path.relative_to(self.out_dir).as_posix()
            if name != MANIFEST_NAME:
                entries.append({"name": name, "bytes": path.stat().st_size})
        return entries

    def write_manifest(self, config: ExperimentConfig, status: str,
                       extra: Optional[Dict[str, Any]] = None) -> Path:
        """manifest.json: config echo, seed, version, timestamps, status and every file in the directory."""
        manifest = {
            "artifact_version": ARTIFACT_VERSION,
            "experiment": config.name,
            "seed": config.seed,
            "config": serialize_config(config),
            "started": self.started.isoformat(),
            "finished": get_current_time(self.timezone).isoformat(),
            "status": status,
        }
        if extra:
            manifest.update(_finite(extra))
        manifest["files"] = self.inventory() + [{"name": MANIFEST_NAME, "bytes": None}]
        path = self._path(MANIFEST_NAME)
        path.write_text(json.dumps(manifest, indent=2, allow_nan=False, default=_json_default) + "\n",
                        encoding="utf-8")
        self.logger.info(f"Manifest written to {path} ({len(manifest['files'])} files)")
        return path


def _finite(value):
    """Non-finite floats become null."""
    if isinstance(value, dict):
        return {k: _finite(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_finite(v) for v in value]
    if isinstance(value, (float, np.floating)):
        return float(value) if np.isfinite(value) else None
    return value


def _json_default(value):
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    raise TypeError(f"{type(value).__name__} is not JSON serializable")
