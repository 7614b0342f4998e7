"""Deterministic word/punctuation tokenizer shared by models and prompt budgeting.

Tokens are lowercased alphanumeric runs or single punctuation characters.
Sequences fed to models are wrapped in BOS/EOS sentinels; the sentinels are
reserved strings that the tokenizer itself can never emit (it never produces
a multi-character token containing ``<``).
"""

from __future__ import annotations

import re

UNK = "<unk>"
BOS = "<s>"
EOS = "</s>"
RESERVED = (UNK, BOS, EOS)

UNK_ID = 0
BOS_ID = 1
EOS_ID = 2

# Case-insensitive so that token spans computed on the original string stay
# valid for truncation (no case folding before matching).
_TOKEN_RE = re.compile(r"[a-z0-9_]+|[^a-z0-9_\s]", re.IGNORECASE)


def tokenize(text: str) -> list[str]:
    """Split ``text`` into lowercased tokens wrapped in sentinels.

    >>> tokenize("A b.")
    ['<s>', 'a', 'b', '.', '</s>']
    >>> tokenize("")
    ['<s>', '</s>']
    """
    return [BOS, *(m.group().lower() for m in _TOKEN_RE.finditer(text)), EOS]


def count_tokens(text: str) -> int:
    """Number of word/punctuation tokens in ``text``, sentinels excluded."""
    return sum(1 for _ in _TOKEN_RE.finditer(text))


def truncate_to_tokens(text: str, keep: int) -> str:
    """Keep the first ``keep`` tokens of ``text``, cutting at a token boundary.

    The returned string is a prefix of the original, so spacing and case of
    the kept region are untouched. ``keep <= 0`` yields the empty string.
    """
    if keep <= 0:
        return ""
    end = 0
    for n, match in enumerate(_TOKEN_RE.finditer(text), start=1):
        end = match.end()
        if n == keep:
            break
    return text[:end]
