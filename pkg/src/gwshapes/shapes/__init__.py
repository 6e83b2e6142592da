from .attributes import (
    CATEGORIES,
    PROTO_DIM,
    Attributes,
    ConfigurationError,
    ContractViolation,
    ShapeConfig,
    decode_proto,
    encode_proto,
    hsl_to_rgb,
    sample_attributes,
)
from .dataset import (
    Dataset,
    Records,
    build_dataset,
    generate_dataset,
    generate_records,
    load_dataset,
    load_manifest,
    record_rng,
)
from .grammar import (
    AttributeBins,
    Caption,
    Grammar,
    default_grammar,
    generate_caption,
    location_cell,
    nearest_color,
    render_text,
    rotation_degrees,
    rotation_sector,
    size_class,
)
from .parse import ParseError, parse_caption
from .render import read_ppm, render_image, shape_mask, write_ppm

__all__ = [name for name in dir() if not name.startswith("_")]
