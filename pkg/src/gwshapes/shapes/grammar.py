"""Caption generation: attribute binning, choice slots and text assembly.

One caption is produced by (1) quantizing the attributes into word-level
bins (7x7 location cell, size quartile, nearest named color, one of three
rotation descriptors) and (2) drawing one value for each of the 39 grammar
choice slots. The slot draws are recorded as a trace, so a caption can be
regenerated bit-exactly from its (bins, trace) pair; slots whose values end
up unused for a given sentence are still drawn, keeping the trace length
fixed at 39.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path

import numpy as np
import tomli

from .attributes import CATEGORIES, Attributes, ShapeConfig

GRID = 7
SIZE_CLASSES = 4
ROT_CARDINAL, ROT_CORNER, ROT_DEGREES = 0, 1, 2
N_DEGREE_BINS = 72  # multiples of 5 in [0, 360)

VOWELS = "aeiou"


@dataclass(frozen=True)
class AttributeBins:
    """The quantized descriptors a caption verbalizes."""

    shape_word: int  # category * n_synonyms + synonym index
    cell: tuple[int, int]  # (row, col) in the 7x7 grid
    size_class: int
    rotation_variant: int  # ROT_CARDINAL | ROT_CORNER | ROT_DEGREES
    rotation_value: int  # sector 0..15, or degrees (multiple of 5)
    color_id: int


@dataclass(frozen=True)
class Caption:
    text: str
    trace: tuple[int, ...]
    bins: AttributeBins


class Grammar:
    """Grammar tables plus the derived 39-slot choice schema."""

    def __init__(self, tables: dict, color_names: list[str]):
        self.tables = tables
        self.color_names = list(color_names)
        self.color_index = {n: i for i, n in enumerate(self.color_names)}
        loc, size, rot = tables["location"], tables["size"], tables["rotation"]
        slots = [
            ("attr_order", len(tables["attr_orders"])),
            ("opening", len(tables["openings"])),
            ("shape_article", len(tables["shape_articles"])),
            ("shape_synonym", len(tables["shape_synonyms"]["egg"])),
            ("final_connector", len(tables["final_connectors"])),
            ("loc_subject", len(loc["subjects"])),
            ("loc_verb", len(loc["verbs"])),
            ("loc_cell_order", 2),
        ]
        slots += [(f"loc_row_syn_{r}", len(loc["rows"][r])) for r in range(GRID)]
        slots += [(f"loc_col_syn_{c}", len(loc["cols"][c])) for c in range(GRID)]
        slots += [
            ("loc_center_syn", len(loc["center"])),
            ("size_subject", len(size["subjects"])),
            ("size_intensifier", len(size["intensifiers"])),
            ("size_suffix", len(size["suffixes"])),
        ]
        slots += [(f"size_syn_{k}", len(size["words"][k])) for k in range(SIZE_CLASSES)]
        slots += [
            ("color_subject", len(tables["color"]["subjects"])),
            ("color_style", len(tables["color"]["styles"])),
            ("rot_subject", len(rot["subjects"])),
            ("rot_variant", 3),
            ("rot_card_verb", len(rot["cardinal_verbs"])),
            ("rot_card_article", len(rot["cardinal_articles"])),
            ("rot_corner_verb", len(rot["corner_verbs"])),
            ("rot_deg_verb", len(rot["degree_verbs"])),
            ("rot_deg_suffix", len(rot["degree_suffixes"])),
        ]
        self.slots = slots
        self.slot_index = {name: i for i, (name, _) in enumerate(slots)}
        assert len(slots) == 39, f"grammar defines {len(slots)} choice slots, expected 39"
        syn = tables["shape_synonyms"]
        self.shape_words = [w for cat in CATEGORIES for w in syn[cat]]
        self.n_shape_synonyms = len(syn["egg"])

    def arity(self, name: str) -> int:
        return self.slots[self.slot_index[name]][1]

    def choice(self, trace, name: str) -> int:
        return trace[self.slot_index[name]]


def _asset_text(name: str) -> str:
    return resources.files("gwshapes.shapes").joinpath("assets", name).read_text()


def load_color_table(path: Path | None = None) -> list[tuple[str, int, int, int]]:
    text = Path(path).read_text() if path else _asset_text("colors.tsv")
    rows = []
    for line in text.strip().split("\n"):
        name, r, g, b = line.split("\t")
        rows.append((name, int(r), int(g), int(b)))
    if not rows:
        raise ValueError("empty color table")
    return rows


@lru_cache(maxsize=1)
def default_grammar() -> Grammar:
    tables = tomli.loads(_asset_text("grammar.toml"))
    colors = load_color_table()
    return Grammar(tables, [c[0] for c in colors])


@lru_cache(maxsize=1)
def default_color_rgb() -> np.ndarray:
    return np.array([[r, g, b] for _, r, g, b in load_color_table()], dtype=np.float64)


def nearest_color(rgb: tuple[int, int, int], table: np.ndarray | None = None) -> int:
    """Index of the nearest table entry in RGB space; ties go to the lowest index."""
    table = default_color_rgb() if table is None else table
    if len(table) == 0:
        raise ValueError("empty color table")
    d = table - np.asarray(rgb, dtype=np.float64)
    return int(np.argmin(np.einsum("ij,ij->i", d, d)))


def _half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def location_cell(a: Attributes, config: ShapeConfig) -> tuple[int, int]:
    row = min(GRID - 1, int(a.y * GRID / config.image_size))
    col = min(GRID - 1, int(a.x * GRID / config.image_size))
    return (row, col)


def size_class(a: Attributes, config: ShapeConfig) -> int:
    frac = (a.size - config.size_min) / (config.size_max - config.size_min)
    return min(SIZE_CLASSES - 1, int(frac * SIZE_CLASSES))


def rotation_sector(a: Attributes) -> int:
    """16 sectors of 22.5 degrees centered on the compass directions, clockwise from up."""
    return _half_up(a.rotation / (2.0 * math.pi / 16.0)) % 16


def rotation_degrees(a: Attributes) -> int:
    """Rotation to the closest multiple of 5 degrees."""
    return (_half_up(math.degrees(a.rotation) / 5.0) * 5) % 360


def quantize(a: Attributes, trace, grammar: Grammar, config: ShapeConfig) -> AttributeBins:
    variant = grammar.choice(trace, "rot_variant")
    value = rotation_degrees(a) if variant == ROT_DEGREES else rotation_sector(a)
    return AttributeBins(
        shape_word=a.category * grammar.n_shape_synonyms + grammar.choice(trace, "shape_synonym"),
        cell=location_cell(a, config),
        size_class=size_class(a, config),
        rotation_variant=variant,
        rotation_value=value,
        color_id=nearest_color(a.color_rgb),
    )


def _with_article(article: str, noun: str) -> str:
    if article == "a" and noun[0] in VOWELS:
        return "an " + noun
    return article + " " + noun


def _location_clause(bins, trace, g: Grammar) -> str:
    loc = g.tables["location"]
    row, col = bins.cell
    part = loc["subjects"][g.choice(trace, "loc_subject")] + " " + loc["verbs"][g.choice(trace, "loc_verb")]
    if (row, col) == (GRID // 2, GRID // 2):
        return part + loc["center"][g.choice(trace, "loc_center_syn")]
    pieces = []
    if row != GRID // 2:
        pieces.append(loc["rows"][row][g.choice(trace, f"loc_row_syn_{row}")])
    if col != GRID // 2:
        pieces.append(loc["cols"][col][g.choice(trace, f"loc_col_syn_{col}")])
    if len(pieces) == 2 and g.choice(trace, "loc_cell_order") == 1:
        pieces.reverse()
    return part + ", ".join(pieces)


def _size_clause(bins, trace, g: Grammar) -> str:
    size = g.tables["size"]
    word = size["words"][bins.size_class][g.choice(trace, f"size_syn_{bins.size_class}")]
    return (size["subjects"][g.choice(trace, "size_subject")] + " "
            + size["intensifiers"][g.choice(trace, "size_intensifier")]
            + word + size["suffixes"][g.choice(trace, "size_suffix")])


def _color_clause(bins, trace, g: Grammar) -> str:
    color = g.tables["color"]
    style = color["styles"][g.choice(trace, "color_style")]
    return (color["subjects"][g.choice(trace, "color_subject")] + " "
            + style.format(g.color_names[bins.color_id]))


def _rotation_clause(bins, trace, g: Grammar) -> str:
    rot = g.tables["rotation"]
    subject = rot["subjects"][g.choice(trace, "rot_subject")]
    if bins.rotation_variant == ROT_CARDINAL:
        return (subject + " " + rot["cardinal_verbs"][g.choice(trace, "rot_card_verb")] + " "
                + rot["cardinal_articles"][g.choice(trace, "rot_card_article")]
                + rot["cardinal_names"][bins.rotation_value])
    if bins.rotation_variant == ROT_CORNER:
        return (subject + " " + rot["corner_verbs"][g.choice(trace, "rot_corner_verb")] + " "
                + rot["corner_names"][bins.rotation_value])
    return (subject + " " + rot["degree_verbs"][g.choice(trace, "rot_deg_verb")]
            + f" {bins.rotation_value} degrees"
            + rot["degree_suffixes"][g.choice(trace, "rot_deg_suffix")])


_CLAUSES = {
    "location": _location_clause,
    "size": _size_clause,
    "color": _color_clause,
    "rotation": _rotation_clause,
}


def render_text(bins: AttributeBins, trace, grammar: Grammar) -> str:
    """Assemble the sentence; pure function of (bins, trace)."""
    g = grammar
    t = g.tables
    shape_word = g.shape_words[bins.shape_word]
    opening = (t["openings"][g.choice(trace, "opening")] + " "
               + _with_article(t["shape_articles"][g.choice(trace, "shape_article")], shape_word))
    order = t["attr_orders"][g.choice(trace, "attr_order")]
    clauses = [_CLAUSES[kind](bins, trace, g) for kind in order]
    connector = t["final_connectors"][g.choice(trace, "final_connector")]
    return opening + ", " + ", ".join(clauses[:-1]) + connector + clauses[-1] + "."


def generate_caption(a: Attributes, rng: np.random.Generator,
                     grammar: Grammar | None = None,
                     config: ShapeConfig | None = None) -> Caption:
    """Draw the 39 grammar choices in slot order and assemble the sentence."""
    g = grammar or default_grammar()
    config = config or ShapeConfig()
    trace = tuple(int(rng.integers(arity)) for _, arity in g.slots)
    bins = quantize(a, trace, g, config)
    return Caption(render_text(bins, trace, g), trace, bins)
