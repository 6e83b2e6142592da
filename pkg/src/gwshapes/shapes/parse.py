"""Inverse of the caption generator: recover the verbalized bins from text.

Only sentences produced by the shipped grammar tables are supported. Any
unrecognized phrase raises :class:`ParseError` carrying the byte offset of
the offending clause.
"""

from __future__ import annotations

import re

from .grammar import (
    GRID,
    ROT_CARDINAL,
    ROT_CORNER,
    ROT_DEGREES,
    AttributeBins,
    Grammar,
    default_grammar,
)


class ParseError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


_SUBJECTS = ("the shape is ", "it's ", "it is ")
_SPLIT = re.compile(r", (?:and )?(?=(?:the shape is|it's|it is) )")
_DEGREES = re.compile(r"^(?:rotated|turned) (\d+) degrees(?: clockwise)?$")


def _strip_prefix(text: str, options) -> tuple[str, str] | None:
    for opt in sorted(options, key=len, reverse=True):
        if opt and text.startswith(opt):
            return opt, text[len(opt):]
    return None


def _parse_location(body: str, g: Grammar):
    loc = g.tables["location"]
    for verb in sorted((v for v in loc["verbs"] if v), key=len, reverse=True):
        if body.startswith(verb):
            body = body[len(verb):]
            break
    if body in loc["center"]:
        return {"cell": (GRID // 2, GRID // 2)}
    row = col = GRID // 2
    segments = body.split(", ")
    if len(segments) > 2:
        return None
    for seg in segments:
        hit = False
        for r, phrases in enumerate(loc["rows"]):
            if seg in phrases and seg:
                if row != GRID // 2:
                    return None
                row, hit = r, True
                break
        if hit:
            continue
        for c, phrases in enumerate(loc["cols"]):
            if seg in phrases and seg:
                if col != GRID // 2:
                    return None
                col, hit = c, True
                break
        if not hit:
            return None
    return {"cell": (row, col)}


def _parse_size(body: str, g: Grammar):
    size = g.tables["size"]
    for pre in sorted((p for p in size["intensifiers"] if p), key=len, reverse=True):
        if body.startswith(pre):
            body = body[len(pre):]
            break
    for suf in sorted((s for s in size["suffixes"] if s), key=len, reverse=True):
        if body.endswith(suf):
            body = body[: -len(suf)]
            break
    for k, words in enumerate(size["words"]):
        if body in words:
            return {"size_class": k}
    return None


def _parse_color(body: str, g: Grammar):
    if body.startswith("in ") and body.endswith(" colored"):
        name = body[3:-8]
    elif body.endswith(" colored"):
        name = body[:-8]
    elif body.endswith(" color"):
        name = body[:-6]
    else:
        return None
    if name not in g.color_index:
        return None
    return {"color_id": g.color_index[name]}


def _parse_rotation(body: str, g: Grammar):
    rot = g.tables["rotation"]
    hit = _strip_prefix(body, [v + " " for v in rot["cardinal_verbs"]])
    if hit:
        rest = hit[1]
        if rest.startswith("the "):
            rest = rest[4:]
        if rest in rot["cardinal_names"]:
            return {"rotation_variant": ROT_CARDINAL,
                    "rotation_value": rot["cardinal_names"].index(rest)}
        return None
    hit = _strip_prefix(body, [v + " " for v in rot["corner_verbs"]])
    if hit:
        if hit[1] in rot["corner_names"]:
            return {"rotation_variant": ROT_CORNER,
                    "rotation_value": rot["corner_names"].index(hit[1])}
        return None
    m = _DEGREES.match(body)
    if m:
        deg = int(m.group(1))
        if deg % 5 == 0 and 0 <= deg < 360:
            return {"rotation_variant": ROT_DEGREES, "rotation_value": deg}
    return None


_CLAUSE_PARSERS = (
    ("location", _parse_location),
    ("size", _parse_size),
    ("color", _parse_color),
    ("rotation", _parse_rotation),
)


def parse_caption(text: str, grammar: Grammar | None = None) -> AttributeBins:
    """Recover the exact bins verbalized in a generated sentence."""
    g = grammar or default_grammar()
    t = g.tables
    hit = _strip_prefix(text, [o + " " for o in t["openings"]])
    if hit is None:
        raise ParseError("unrecognized opening", 0)
    pos = len(hit[0])
    hit = _strip_prefix(text[pos:], ["an ", "a ", "one "])
    if hit is None:
        raise ParseError("missing article", pos)
    pos += len(hit[0])
    shape_word = None
    for idx, word in sorted(enumerate(g.shape_words), key=lambda kv: -len(kv[1])):
        if text.startswith(word, pos):
            shape_word, pos = idx, pos + len(word)
            break
    if shape_word is None:
        raise ParseError("unrecognized shape word", pos)
    if not text.endswith("."):
        raise ParseError("missing final period", len(text) - 1)
    body = text[pos:-1]
    if not body.startswith(", "):
        raise ParseError("expected clause list", pos)

    fields: dict = {"shape_word": shape_word}
    offset = pos + 2
    clauses = _SPLIT.split(body[2:])
    if len(clauses) != 4:
        raise ParseError(f"expected 4 clauses, found {len(clauses)}", offset)
    for clause in clauses:
        stripped = _strip_prefix(clause, _SUBJECTS)
        if stripped is None:
            raise ParseError("clause lacks a subject", offset)
        parsed = None
        for kind, parser in _CLAUSE_PARSERS:
            result = parser(stripped[1], g)
            if result is not None:
                if any(k in fields for k in result):
                    raise ParseError(f"duplicate {kind} clause", offset)
                parsed = result
                break
        if parsed is None:
            raise ParseError(f"unrecognized phrase {stripped[1]!r}", offset)
        fields.update(parsed)
        offset += len(clause) + 2
    missing = {"cell", "size_class", "rotation_variant", "color_id"} - set(fields)
    if missing:
        raise ParseError(f"missing clauses for {sorted(missing)}", len(text) - 1)
    return AttributeBins(**fields)
