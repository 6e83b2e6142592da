#!/usr/bin/env python3
"""Regenerate the named-color asset from matplotlib's CSS4 color list.

Keeps the 'gray' spellings and drops the 7 'grey'-spelled aliases, leaving
141 named colors. Display names get spaces inserted via a greedy dictionary
split so captions can verbalize them ("darkslategray" -> "dark slate gray").
"""

from pathlib import Path

from matplotlib.colors import CSS4_COLORS, to_rgb

WORDS = sorted(
    """alice antique aqua aquamarine azure beige bisque black blanched almond blue
    violet brown burly wood cadet chartreuse chocolate coral cornflower corn
    silk crimson cyan dark goldenrod gray green khaki magenta olive orange
    orchid red salmon sea slate turquoise deep pink sky dim dodger fire brick
    floral white forest fuchsia gainsboro ghost gold honeydew hot indian
    indigo ivory lavender blush lawn lemon chiffon light yellow steel lime
    linen maroon medium purple spring midnight mint cream misty rose moccasin
    navajo navy old lace drab pale papaya whip peach puff peru plum powder
    rebecca rosy royal saddle sandy shell sienna silver smoke snow tan teal
    thistle tomato wheat""".split(),
    key=len,
    reverse=True,
)


def split_name(name: str) -> str:
    parts = []
    rest = name
    while rest:
        for w in WORDS:
            if rest.startswith(w):
                parts.append(w)
                rest = rest[len(w):]
                break
        else:
            raise ValueError(f"cannot split color name {name!r} at {rest!r}")
    return " ".join(parts)


def main() -> None:
    names = sorted(n for n in CSS4_COLORS if "grey" not in n)
    assert len(names) == 141, f"expected 141 colors, got {len(names)}"
    out = Path(__file__).resolve().parents[1] / "src/gwshapes/shapes/assets/colors.tsv"
    lines = []
    for n in names:
        r, g, b = (round(255 * c) for c in to_rgb(CSS4_COLORS[n]))
        lines.append(f"{split_name(n)}\t{r}\t{g}\t{b}")
    out.write_text("\n".join(lines) + "\n")
    print(f"wrote {len(lines)} colors to {out}")


if __name__ == "__main__":
    main()
