#!/usr/bin/env python3
"""Minimal ced-scorer/1 server wrapping the built-in n-gram models.

Test fixture for the engine's bridge client: speaks one JSON object per
line on stdin/stdout. Supports a --fail-adapt flag to exercise error
propagation.
"""

import json
import sys

from cedsel.lm import AdaptConfig, adapt_texts, cross_entropy, train_base_texts

PROTOCOL_VERSION = "ced-scorer/1"


def main() -> int:
    fail_adapt = "--fail-adapt" in sys.argv[1:]
    models = {}
    next_id = 0
    said_hello = False
    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        try:
            request = json.loads(line)
            op = request["op"]
        except (json.JSONDecodeError, KeyError, TypeError):
            print(json.dumps({"ok": False, "error": "malformed request line"}), flush=True)
            continue
        if not said_hello and op != "hello":
            print(json.dumps({"ok": False, "error": "hello required first"}), flush=True)
            return 1
        if op == "hello":
            if request.get("version") != PROTOCOL_VERSION:
                print(
                    json.dumps({"ok": False, "error": "unsupported protocol version"}),
                    flush=True,
                )
                return 1
            said_hello = True
            print(
                json.dumps({"ok": True, "version": PROTOCOL_VERSION, "backend": "stub"}),
                flush=True,
            )
        elif op == "shutdown":
            print(json.dumps({"ok": True}), flush=True)
            return 0
        elif op == "train_base":
            model = train_base_texts(request["texts"], request.get("dev_texts", ()))
            model_id = f"m{next_id}"
            next_id += 1
            models[model_id] = model
            print(json.dumps({"ok": True, "model_id": model_id}), flush=True)
        elif op == "adapt":
            if fail_adapt:
                print(json.dumps({"ok": False, "error": "adapt disabled"}), flush=True)
                continue
            base = models.get(request.get("model_id"))
            if base is None:
                print(json.dumps({"ok": False, "error": "unknown model id"}), flush=True)
                continue
            target = adapt_texts(base, [request["text"]], ["remote"], AdaptConfig())
            model_id = f"m{next_id}"
            next_id += 1
            models[model_id] = target
            print(json.dumps({"ok": True, "model_id": model_id}), flush=True)
        elif op == "score":
            model = models.get(request.get("model_id"))
            if model is None:
                print(json.dumps({"ok": False, "error": "unknown model id"}), flush=True)
                continue
            ids = model.vocab.encode(request["text"])
            ce = cross_entropy(model, ids)
            print(
                json.dumps(
                    {"ok": True, "ce_per_token": ce, "token_count": len(ids) - 1}
                ),
                flush=True,
            )
        else:
            print(json.dumps({"ok": False, "error": f"unknown op {op!r}"}), flush=True)
    return 0


if __name__ == "__main__":
    sys.exit(main())
