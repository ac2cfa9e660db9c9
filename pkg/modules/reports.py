"""Writers for the run artifacts (CSV with headers, JSONL for candidates)."""
import csv
import json
import math
from pathlib import Path
from typing import Any, Iterable, Optional, TextIO

import numpy as np

from utils import dump_yaml, ensure_dir
from utils.logger import LOGGER
from .baselines import Dendrogram, dendrogram_to_text
from .bounds import BoundsReport
from .graph import Graph
from .ncp import BiasRow, NcpProfile
from .scoring import ScoredCluster, ScoreValue

NCP_FIELDS = ["kind", "k", "phi", "witness_id", "generator"]
BIAS_FIELDS = ["cluster_id", "generator", "k", "phi_external", "phi_internal", "ratio", "avg_path", "connected", "flagged"]
BOUNDS_FIELDS = ["network", "spectral_lb", "sdp_lb_half_volume", "ratio", "certified"]
SCORE_FIELDS = ["kind", "value", "applicable"]


def _json_default(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if hasattr(value, "value"):
        return value.value
    return float(value)


def write_csv(sink: TextIO, fieldnames: list[str], rows: Iterable[dict[str, str]]) -> int:
    writer = csv.DictWriter(sink, fieldnames=fieldnames, lineterminator="\n")
    writer.writeheader()
    count = 0
    for row in rows:
        writer.writerow(row)
        count += 1
    return count


def score_rows(values: Iterable[ScoreValue]) -> list[dict[str, str]]:
    return [
        {
            "kind": value.kind.value,
            "value": "" if math.isnan(value.value) else f"{value.value:.6f}",
            "applicable": "yes" if value.applicable else "no",
        }
        for value in values
    ]


class ReportService:
    """Writes every artifact of one run into ``out_dir``."""

    def __init__(self, out_dir: str | Path):
        """
        Args:
            out_dir: Output directory, created if missing.
        """
        self.out_dir = ensure_dir(out_dir)

    def _write_rows(self, name: str, fieldnames: list[str], rows: Iterable[dict[str, str]]) -> Path:
        path = self.out_dir / name
        try:
            with open(path, "w", newline="", encoding="utf-8") as handle:
                count = write_csv(handle, fieldnames, rows)
        except OSError as e:
            LOGGER.error(f"Failed to write {path}: {e}")
            raise
        LOGGER.info(f"Wrote {count} rows to {path}")
        return path

    def write_ncp(self, profiles: Iterable[NcpProfile], name: str = "ncp.csv") -> Path:
        rows = [row for profile in profiles for row in profile.to_rows()]
        return self._write_rows(name, NCP_FIELDS, rows)

    def write_bias(self, rows: Iterable[BiasRow]) -> Path:
        return self._write_rows("bias.csv", BIAS_FIELDS, (row.to_row() for row in rows))

    def write_bounds(self, report: BoundsReport) -> Path:
        return self._write_rows("bounds.csv", BOUNDS_FIELDS, [report.to_row()])

    def write_scores(self, values: Iterable[ScoreValue], name: str = "scores.csv") -> Path:
        return self._write_rows(name, SCORE_FIELDS, score_rows(values))

    def write_candidates(self, graph: Graph, candidates: Iterable[ScoredCluster]) -> Path:
        """
        One JSON object per line, keys sorted, members as original node ids.

        Returns:
            Path: The written ``candidates.jsonl``.
        """
        path = self.out_dir / "candidates.jsonl"
        count = 0
        with open(path, "w", encoding="utf-8", newline="\n") as handle:
            for candidate in candidates:
                cluster = candidate.cluster
                record = {
                    "id": candidate.cluster_id,
                    "generator": candidate.generator.value,
                    "connected": candidate.connected,
                    "params": candidate.params,
                    "n_s": cluster.n_s,
                    "m_s": cluster.m_s,
                    "c_s": cluster.c_s,
                    "vol_s": cluster.vol_s,
                    "members": graph.labels[cluster.members].tolist(),
                }
                handle.write(json.dumps(record, sort_keys=True, default=_json_default) + "\n")
                count += 1
        LOGGER.info(f"Wrote {count} candidates to {path}")
        return path

    def write_dendrogram(self, graph: Graph, dendrogram: Dendrogram, name: str = "dendrogram.txt") -> Path:
        path = self.out_dir / name
        path.write_text(dendrogram_to_text(dendrogram, graph.labels), encoding="utf-8")
        LOGGER.info(f"Wrote dendrogram to {path}")
        return path

    def write_config(self, config: Any, name: str = "config.yml") -> Optional[Path]:
        return dump_yaml(config.model_dump(mode="json"), self.out_dir / name)
