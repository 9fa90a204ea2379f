"""
Artifacts Module

Byte-stable JSON, CSV and SVG writers and the per-run manifest. JSON keys
are sorted and non-finite floats become strings; CSV floats use twelve
significant digits; SVG output uses the Agg backend with a fixed hash salt
and no date stamp.
"""

import hashlib
import json
import logging
import math
from dataclasses import asdict, is_dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

from src.geometry import Arc, Domain, Segment  # noqa: E402

logger = logging.getLogger(__name__)

matplotlib.rcParams["svg.hashsalt"] = "corona-harmonic"
CSV_FLOAT_FORMAT = "%.12g"


def to_jsonable(obj: Any) -> Any:
    """Recursively convert numpy values, tuples, paths and dataclasses to JSON types."""
    if hasattr(obj, "to_dict") and callable(obj.to_dict) and not isinstance(obj, pd.DataFrame):
        return to_jsonable(obj.to_dict())
    if is_dataclass(obj) and not isinstance(obj, type):
        return to_jsonable(asdict(obj))
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        value = float(obj)
        return value if math.isfinite(value) else str(value)
    if isinstance(obj, Path):
        return str(obj)
    if isinstance(obj, pd.DataFrame):
        return to_jsonable(obj.to_dict(orient="records"))
    return obj


def dumps(obj: Any) -> str:
    return json.dumps(to_jsonable(obj), sort_keys=True, indent=2) + "\n"


def sha256_file(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


class ArtifactWriter:
    """
    Writes the artifacts of one run under ``output_dir`` and records them.

    Example:
        >>> writer = ArtifactWriter(Path("out"), "whitney")
        >>> writer.json("cells.json", {"cells": 3})  # doctest: +SKIP
    """

    def __init__(self, output_dir: Path, command: str):
        self.output_dir = Path(output_dir)
        self.command = command
        self.files: List[str] = []
        self.output_dir.mkdir(parents=True, exist_ok=True)

    def _path(self, name: str) -> Path:
        self.files.append(name)
        return self.output_dir / name

    def json(self, name: str, obj: Any) -> Path:
        path = self._path(name)
        path.write_text(dumps(obj), encoding="utf-8")
        logger.debug(f"Wrote {path}")
        return path

    def csv(self, name: str, frame: pd.DataFrame) -> Path:
        path = self._path(name)
        frame.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n")
        logger.debug(f"Wrote {path} ({len(frame)} rows)")
        return path

    def svg(self, name: str, fig: "plt.Figure") -> Path:
        path = self._path(name)
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
        logger.debug(f"Wrote {path}")
        return path

    def manifest(self, config: Dict[str, Any], ledger: Optional[Dict[str, Any]] = None, **extra: Any) -> Path:
        """manifest.json: resolved config, constants ledger and checksums of every artifact."""
        checksums = {name: sha256_file(self.output_dir / name) for name in sorted(set(self.files))}
        payload = {
            "command": self.command,
            "config": config,
            "ledger": ledger or {},
            "artifacts": checksums,
            **extra,
        }
        path = self.output_dir / "manifest.json"
        path.write_text(dumps(payload), encoding="utf-8")
        logger.info(f"Wrote manifest with {len(checksums)} artifacts to {path}")
        return path


# ============================================================================
# Figures
# ============================================================================


def plot_domain(domain: Domain, boxes: Sequence[Sequence[float]] = (), title: str = "") -> "plt.Figure":
    """Boundary pieces (and optional Whitney boxes) of a domain."""
    fig, ax = plt.subplots(figsize=(6, 6))
    for (x0, y0, x1, y1) in boxes:
        ax.add_patch(plt.Rectangle((x0, y0), x1 - x0, y1 - y0, fill=False, lw=0.3, color="0.6"))
    for piece in domain.pieces:
        color = {"boundary": "k", "window": "0.5", "cap": "tab:red"}[piece.role]
        if isinstance(piece, Segment):
            ax.plot([piece.a[0], piece.b[0]], [piece.a[1], piece.b[1]], color=color, lw=0.6)
        elif isinstance(piece, Arc):
            t = np.linspace(piece.theta0, piece.theta1, 128)
            pts = piece.point(t)
            ax.plot(pts[:, 0], pts[:, 1], color=color, lw=0.6)
    ax.set_aspect("equal")
    ax.set_title(title or f"{domain.kind} domain")
    fig.tight_layout()
    return fig


def plot_trend(frame: pd.DataFrame, x: str, y: str, hue: str, title: str = "", logy: bool = False) -> "plt.Figure":
    """One line per value of ``hue``."""
    fig, ax = plt.subplots(figsize=(7, 5))
    for key, group in frame.groupby(hue, sort=True):
        group = group.sort_values(x)
        ax.plot(group[x], group[y], marker="o", label=f"{hue}={key}")
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel(x)
    ax.set_ylabel(y)
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    return fig


def ledger_dict(*ledgers: Any) -> Dict[str, Any]:
    """Constants of all given ledgers in recording order."""
    constants: List[Dict[str, Any]] = []
    for ledger in ledgers:
        if ledger is not None:
            constants.extend(ledger.to_dict()["constants"])
    return {"constants": constants}
