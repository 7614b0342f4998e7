"""Run-store helpers: config hashing, lineage stamps, artifact paths.

Every artifact in a run directory embeds the config hash and master seed
so later stages can refuse inputs produced under a different setup. The
hash covers the semantic settings only (paths are excluded), which keeps
artifacts byte-identical across runs in different directories.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Mapping

from .errors import LineageError


# keys that do not change what gets computed, only where/how it is emitted
_NON_SEMANTIC_KEYS = ("paths", "with_rankings")


def config_hash(config: Mapping) -> str:
    semantic = {k: v for k, v in config.items() if k not in _NON_SEMANTIC_KEYS}
    canonical = json.dumps(semantic, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12]


def lineage_for(config: Mapping) -> dict:
    return {
        "config_hash": config_hash(config),
        "seed": config.get("seeds", {}).get("master", 0),
    }


def check_lineage(expected: Mapping, header: Mapping, artifact: str) -> None:
    got = str(header.get("config_hash"))
    want = str(expected["config_hash"])
    if got != want:
        raise LineageError(
            f"{artifact}: produced under config {got}, current config is {want}; "
            "re-run the earlier stages"
        )


class RunStore:
    """Fixed file layout inside one run's output directory."""

    def __init__(self, output_dir: str | Path):
        self.root = Path(output_dir)

    def ensure(self) -> "RunStore":
        self.root.mkdir(parents=True, exist_ok=True)
        (self.root / "targets").mkdir(exist_ok=True)
        return self

    @property
    def pool(self) -> Path:
        return self.root / "pool.jsonl"

    @property
    def base_model(self) -> Path:
        return self.root / "base.json"

    def target_path(self, label: str) -> Path:
        safe = "".join(c if c.isalnum() or c in "-_." else "_" for c in label)
        return self.root / "targets" / f"{safe}.json"

    @property
    def clusters(self) -> Path:
        return self.root / "clusters.jsonl"

    @property
    def matrix(self) -> Path:
        return self.root / "matrix.csv"

    @property
    def selections(self) -> Path:
        return self.root / "selections.jsonl"

    @property
    def prompts(self) -> Path:
        return self.root / "prompts.jsonl"

    @property
    def rankings(self) -> Path:
        return self.root / "rankings.jsonl"

    @property
    def gradcheck(self) -> Path:
        return self.root / "gradcheck.json"

    @property
    def report_json(self) -> Path:
        return self.root / "report.json"

    @property
    def report_text(self) -> Path:
        return self.root / "report.txt"

    @property
    def predictions(self) -> Path:
        return self.root / "predictions.jsonl"

    @property
    def sorted_losses(self) -> Path:
        return self.root / "sorted_losses.csv"

    @property
    def figures_dir(self) -> Path:
        return self.root / "figures"
