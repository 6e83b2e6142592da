import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gwshapes.shapes import (
    Attributes,
    ShapeConfig,
    default_grammar,
    generate_caption,
    location_cell,
    nearest_color,
    parse_caption,
    render_text,
    rotation_degrees,
    sample_attributes,
    size_class,
)
from gwshapes.shapes.grammar import ROT_CARDINAL, ROT_CORNER, ROT_DEGREES, default_color_rgb, quantize
from gwshapes.shapes.parse import ParseError

CFG = ShapeConfig()
G = default_grammar()


def draw(seed):
    return sample_attributes(np.random.default_rng(seed), CFG)


def with_fields(a, **kw):
    fields = dict(category=a.category, x=a.x, y=a.y, size=a.size,
                  rotation=a.rotation, color_hsl=a.color_hsl, color_rgb=a.color_rgb)
    fields.update(kw)
    return Attributes(**fields)


def test_grammar_has_39_choice_slots():
    assert len(G.slots) == 39
    assert all(arity >= 2 for _, arity in G.slots if not _.startswith("attr"))
    assert G.arity("attr_order") == 18


def test_trace_has_39_entries_within_arity():
    rng = np.random.default_rng(0)
    for seed in range(200):
        cap = generate_caption(draw(seed), rng)
        assert len(cap.trace) == 39
        assert all(0 <= v < arity for v, (_, arity) in zip(cap.trace, G.slots))


def test_fixed_seed_gives_identical_sentence():
    a = draw(1)
    c1 = generate_caption(a, np.random.default_rng(7))
    c2 = generate_caption(a, np.random.default_rng(7))
    assert c1.text == c2.text and c1.trace == c2.trace


def test_text_regenerable_from_bins_and_trace():
    rng = np.random.default_rng(2)
    for seed in range(300):
        cap = generate_caption(draw(seed), rng)
        assert render_text(cap.bins, cap.trace, G) == cap.text


def test_seventeen_degrees_verbalizes_fifteen():
    a = with_fields(draw(3), rotation=np.radians(17.0))
    assert rotation_degrees(a) == 15
    trace = [0] * 39
    trace[G.slot_index["rot_variant"]] = ROT_DEGREES
    bins = quantize(a, trace, G, CFG)
    assert bins.rotation_value == 15
    assert "15 degrees" in render_text(bins, trace, G)


def test_center_position_maps_to_middle_cell():
    a = with_fields(draw(4), x=16.0, y=16.0)
    assert location_cell(a, CFG) == (3, 3)
    trace = [0] * 39
    text = render_text(quantize(a, trace, G, CFG), trace, G)
    assert "in the center" in text
    assert parse_caption(text).cell == (3, 3)


def test_spec_style_sentence_shape():
    a = with_fields(draw(5), category=1, x=16.0, y=16.0)
    trace = [0] * 39
    text = render_text(quantize(a, trace, G, CFG), trace, G)
    assert text.startswith("There is an isosceles triangle, it's located in the center, ")
    assert text.endswith(".")


def test_nearest_color_exact_entries():
    names = [n for n, _ in ((row[0], row) for row in _color_rows())]
    assert names[nearest_color((255, 255, 255))] == "white"
    assert names[nearest_color((0, 0, 0))] == "black"


def _color_rows():
    from gwshapes.shapes.grammar import load_color_table

    return load_color_table()


def test_nearest_color_matches_exhaustive_scan():
    rows = _color_rows()
    rng = np.random.default_rng(6)
    for _ in range(100):
        rgb = tuple(int(v) for v in rng.integers(0, 256, 3))
        best, best_d = None, None
        for i, (_, r, g, b) in enumerate(rows):
            d = (r - rgb[0]) ** 2 + (g - rgb[1]) ** 2 + (b - rgb[2]) ** 2
            if best_d is None or d < best_d:
                best, best_d = i, d
        assert nearest_color(rgb) == best


def test_nearest_color_tie_break_lowest_index():
    table = np.array([[10, 0, 0], [0, 0, 10], [10, 0, 0]], dtype=np.float64)
    assert nearest_color((10, 0, 0), table) == 0
    assert nearest_color((5, 0, 5), table) == 0  # equidistant from 0 and 1


def test_empty_color_table_rejected():
    with pytest.raises(ValueError):
        nearest_color((1, 2, 3), np.zeros((0, 3)))


def test_caption_naming_navy_parses_to_navy_id():
    rows = _color_rows()
    navy = next(i for i, row in enumerate(rows) if row[0] == "navy")
    a = with_fields(draw(7), color_rgb=(0, 0, 128))
    cap = generate_caption(a, np.random.default_rng(0))
    assert cap.bins.color_id == navy
    assert parse_caption(cap.text).color_id == navy
    assert "navy" in cap.text


def test_parse_inverts_generate_on_samples():
    rng = np.random.default_rng(8)
    for seed in range(1000):
        cap = generate_caption(draw(seed), rng)
        assert parse_caption(cap.text) == cap.bins


def test_parsed_bins_consistent_with_source_attributes():
    rng = np.random.default_rng(9)
    for seed in range(500):
        a = draw(seed + 5000)
        cap = generate_caption(a, rng)
        bins = parse_caption(cap.text)
        assert bins.cell == location_cell(a, CFG)
        assert bins.size_class == size_class(a, CFG)
        assert bins.color_id == nearest_color(a.color_rgb)
        assert bins.shape_word // G.n_shape_synonyms == a.category
        if bins.rotation_variant == ROT_DEGREES:
            assert bins.rotation_value == rotation_degrees(a)


def test_rotation_variants_round_trip():
    a = draw(10)
    for variant in (ROT_CARDINAL, ROT_CORNER, ROT_DEGREES):
        trace = [0] * 39
        trace[G.slot_index["rot_variant"]] = variant
        bins = quantize(a, trace, G, CFG)
        parsed = parse_caption(render_text(bins, trace, G))
        assert (parsed.rotation_variant, parsed.rotation_value) == (variant, bins.rotation_value)


def test_caption_length_bounded_analytically():
    # Upper bound: longest option of every slot with the longest attribute
    # words, maximized over clause structures. Must stay under 300 bytes.
    t = G.tables
    longest_color = max(G.color_names, key=len)
    opening = max(t["openings"], key=len) + " one " + max(G.shape_words, key=len)
    loc = ("the shape is " + max(t["location"]["verbs"], key=len)
           + max(max(p, key=len) for p in t["location"]["rows"]) + ", "
           + max(max(p, key=len) for p in t["location"]["cols"]))
    size = ("the shape is " + max(t["size"]["intensifiers"], key=len)
            + max(w for ws in t["size"]["words"] for w in ws) + max(t["size"]["suffixes"], key=len))
    color = "it is " + max(t["color"]["styles"], key=len).format(longest_color)
    rot_options = [
        max(t["rotation"]["cardinal_verbs"], key=len) + " the " + max(t["rotation"]["cardinal_names"], key=len),
        max(t["rotation"]["corner_verbs"], key=len) + " " + max(t["rotation"]["corner_names"], key=len),
        max(t["rotation"]["degree_verbs"], key=len) + " 355 degrees" + max(t["rotation"]["degree_suffixes"], key=len),
    ]
    rot = "the shape is " + max(rot_options, key=len)
    bound = len(opening) + 2 + len(loc) + len(size) + len(color) + len(rot) + 3 * len(", and ") + 1
    assert bound < 300


@settings(max_examples=300, deadline=None)
@given(st.integers(min_value=0, max_value=2**32 - 1), st.integers(min_value=0, max_value=2**32 - 1))
def test_caption_round_trip_property(attr_seed, trace_seed):
    a = sample_attributes(np.random.default_rng(attr_seed), CFG)
    cap = generate_caption(a, np.random.default_rng(trace_seed))
    assert len(cap.text.encode()) < 300
    assert parse_caption(cap.text) == cap.bins


def test_unrecognized_phrase_reports_offset():
    cap = generate_caption(draw(11), np.random.default_rng(1))
    with pytest.raises(ParseError) as exc:
        parse_caption(cap.text.replace(".", " upside down."))
    assert exc.value.offset > 0
    with pytest.raises(ParseError):
        parse_caption("Completely unrelated text.")
