"""One-shot exemplar selection by code similarity.

The exemplar shown to the generator is the corpus entry whose code is most
similar to the task's reference code (code similarity retrieves better
exemplars than instruction similarity). Similarity is a weighted Jaccard
over lexical token multisets: deterministic, dependency-free, and cheap.
An embedding-backed scorer can be plugged in through the same signature.
"""

from __future__ import annotations

import json
import logging
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

from .errors import ParseError, ValidationError, Violation

logger = logging.getLogger(__name__)

# Longest-match-first lexer. Strings and comments are stripped entirely;
# identifiers are lowercased; anything unlexable falls through to
# single-character tokens.
_TOKEN_RE = re.compile(
    r"""
    (?P<string>\"\"\"(?:.|\n)*?\"\"\"|'''(?:.|\n)*?'''
      |"(?:[^"\\\n]|\\.)*"|'(?:[^'\\\n]|\\.)*')
  | (?P<comment>\#[^\n]*)
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<number>\d+(?:\.\d+)?(?:[eE][+-]?\d+)?)
  | (?P<op>\*\*|//|<<|>>|<=|>=|==|!=|->|:=|\+=|-=|\*=|/=|&&|\|\|)
  | (?P<char>\S)
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class CorpusEntry:
    """One candidate exemplar: id, kernel source, optional instruction."""

    entry_id: str
    code: str
    instruction: str = ""


def tokenize_code(code: str) -> Counter[str]:
    """Lex source text into a token multiset.

    Comments and string literals are dropped, identifiers lowercased,
    numerics and operators kept verbatim.
    """
    tokens: Counter[str] = Counter()
    for match in _TOKEN_RE.finditer(code):
        kind = match.lastgroup
        if kind in ("string", "comment"):
            continue
        text = match.group()
        if kind == "name":
            text = text.lower()
        tokens[text] += 1
    return tokens


def similarity(a: Counter[str], b: Counter[str]) -> float:
    """Weighted Jaccard over multisets: sum(min)/sum(max), in [0, 1].

    Two empty multisets are defined as identical (1.0).
    """
    if not a and not b:
        return 1.0
    keys = a.keys() | b.keys()
    overlap = sum(min(a[k], b[k]) for k in keys)
    union = sum(max(a[k], b[k]) for k in keys)
    if union == 0:
        return 1.0
    return overlap / union


def retrieve_top1(
    query_code: str,
    corpus: list[CorpusEntry] | tuple[CorpusEntry, ...],
    exclude: frozenset[str] | set[str] = frozenset(),
) -> CorpusEntry | None:
    """Most similar corpus entry to the query, or None if nothing eligible.

    Ties break toward the lexicographically smallest entry_id, so retrieval
    is a total order and fully deterministic.
    """
    query_tokens = tokenize_code(query_code)
    best: tuple[float, str] | None = None
    winner: CorpusEntry | None = None
    for entry in corpus:
        if entry.entry_id in exclude:
            continue
        score = similarity(query_tokens, tokenize_code(entry.code))
        # Max score; on equal score the smaller id wins.
        key = (-score, entry.entry_id)
        if best is None or key < best:
            best = key
            winner = entry
    return winner


def retrieval_query(reference_code: str, instruction: str, task_id: str = "") -> str:
    """Pick what to match against the corpus for one task.

    Reference code when present; otherwise the instruction text (degraded
    mode, flagged in logs because instruction similarity retrieves worse
    exemplars).
    """
    if reference_code.strip():
        return reference_code
    logger.warning(
        "task %s has no reference code; falling back to instruction-text retrieval",
        task_id or "<unknown>",
    )
    return instruction


def load_corpus(path: str | Path) -> list[CorpusEntry]:
    """Load an exemplar corpus file.

    Format: one JSON document ``{"entries": [{"id", "code"|"code_path",
    "instruction"?}]}`` with code paths relative to the corpus file.
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"cannot read corpus {path}: {exc}") from exc
    raw_entries = doc.get("entries", []) if isinstance(doc, dict) else None
    if raw_entries is None:
        raise ParseError(f"corpus {path} is not an object with an 'entries' list")

    entries = []
    violations = []
    seen: set[str] = set()
    for raw in raw_entries:
        entry_id = str(raw.get("id", ""))
        if not entry_id:
            violations.append(Violation("EmptyEntryId", "corpus entry missing 'id'"))
            continue
        if entry_id in seen:
            violations.append(
                Violation("DuplicateEntryId", f"duplicate corpus entry id {entry_id!r}")
            )
        seen.add(entry_id)
        if "code" in raw:
            code = str(raw["code"])
        elif "code_path" in raw:
            try:
                code = (path.parent / str(raw["code_path"])).read_text(encoding="utf-8")
            except OSError as exc:
                raise ParseError(f"corpus entry {entry_id!r}: {exc}") from exc
        else:
            code = ""
        if not code.strip():
            violations.append(
                Violation("EmptyCode", f"corpus entry {entry_id!r} has empty code")
            )
        entries.append(
            CorpusEntry(entry_id=entry_id, code=code, instruction=str(raw.get("instruction", "")))
        )
    if violations:
        raise ValidationError(violations)
    return entries
