"""Client for external scorer processes speaking the ced-scorer/1 protocol.

The scorer is any executable exchanging one JSON object per line over
stdin/stdout: a ``hello`` version handshake, then ``train_base`` /
``adapt`` / ``score`` requests answered strictly in order, and a final
``shutdown``. Model ids are opaque strings owned by the scorer, so the
engine stays agnostic to what kind of model sits behind the stream.
"""

from __future__ import annotations

import json
import subprocess
from typing import Mapping, Sequence

import numpy as np

from .corpus import Example, Pool, input_text, training_text
from .errors import BridgeError
from .scoring import ScoreMatrix

PROTOCOL_VERSION = "ced-scorer/1"


class BridgeScorer:
    """Line-delimited JSON RPC client around a scorer subprocess."""

    def __init__(self, cmd: Sequence[str]):
        self.cmd = list(cmd)
        try:
            self.proc = subprocess.Popen(
                self.cmd,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise BridgeError(f"cannot start scorer {self.cmd}: {exc}") from exc
        self._closed = False
        self.hello()

    def _call(self, request: Mapping) -> dict:
        if self._closed or self.proc.stdin is None or self.proc.stdout is None:
            raise BridgeError("scorer stream is closed")
        self.proc.stdin.write(json.dumps(request) + "\n")
        self.proc.stdin.flush()
        line = self.proc.stdout.readline()
        if not line:
            raise BridgeError(f"scorer exited while handling {request.get('op')!r}")
        try:
            response = json.loads(line)
        except json.JSONDecodeError as exc:
            raise BridgeError(f"scorer sent invalid JSON: {line!r}") from exc
        if not response.get("ok"):
            raise BridgeError(
                f"scorer error for {request.get('op')!r}: {response.get('error')}"
            )
        return response

    def hello(self) -> str:
        response = self._call({"op": "hello", "version": PROTOCOL_VERSION})
        version = response.get("version")
        if version != PROTOCOL_VERSION:
            raise BridgeError(f"protocol mismatch: scorer speaks {version!r}")
        return version

    def train_base(self, texts: Sequence[str], dev_texts: Sequence[str] = ()) -> str:
        response = self._call(
            {"op": "train_base", "texts": list(texts), "dev_texts": list(dev_texts)}
        )
        return response["model_id"]

    def adapt(self, model_id: str, text: str) -> str:
        response = self._call({"op": "adapt", "model_id": model_id, "text": text})
        return response["model_id"]

    def score(self, model_id: str, text: str) -> tuple[float, int]:
        response = self._call({"op": "score", "model_id": model_id, "text": text})
        return float(response["ce_per_token"]), int(response["token_count"])

    def close(self) -> None:
        if self._closed:
            return
        self._closed = True
        try:
            if self.proc.stdin is not None:
                self.proc.stdin.write(json.dumps({"op": "shutdown"}) + "\n")
                self.proc.stdin.flush()
                self.proc.stdin.close()
            self.proc.wait(timeout=10)
        except Exception:
            self.proc.kill()

    def __enter__(self) -> "BridgeScorer":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()


def score_matrix_via_bridge(
    scorer: BridgeScorer,
    pool: Pool,
    tests: Sequence[Example] | None = None,
    lineage: Mapping | None = None,
) -> ScoreMatrix:
    """Full train-and-score pass through an external scorer.

    Trains the scorer's base model on the pool candidates, adapts one
    target per candidate, and scores every test input under the base and
    every target. Output shape matches the in-process path exactly.
    """
    candidates = pool.candidates
    if not candidates:
        raise BridgeError("pool has no candidates to train on")
    tests = list(tests) if tests is not None else list(pool.tests)
    base_id = scorer.train_base(
        [training_text(c) for c in candidates],
        [training_text(d) for d in pool.dev],
    )
    target_ids = [(c.id, scorer.adapt(base_id, training_text(c))) for c in candidates]
    base_ce = np.empty(len(tests))
    target_ce = np.empty((len(tests), len(candidates)))
    for i, test in enumerate(tests):
        text = input_text(test)
        base_ce[i], _ = scorer.score(base_id, text)
        for j, (_, model_id) in enumerate(target_ids):
            target_ce[i, j], _ = scorer.score(model_id, text)
    return ScoreMatrix(
        [t.id for t in tests],
        [c for c, _ in target_ids],
        base_ce,
        target_ce,
        lineage,
    )
