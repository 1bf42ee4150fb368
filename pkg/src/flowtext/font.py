"""Glyph sources for the seed renderer.

A rasterizer turns a string into a coverage bitmap (2-D float array in
[0, 1], row 0 at the top), cropped to its ink. Anything with a
``render(text)`` method of that shape can be plugged into :class:`TextStyle`.
"""

from __future__ import annotations

import numpy as np

from .errors import UnsupportedCharacterError

# Classic 5x7 LCD font, ASCII 0x20..0x7E. Five column bytes per glyph, bit 0 is
# the top row.
_GLYPHS_5X7 = bytes.fromhex(
    "0000000000" "00005f0000" "0007000700" "147f147f14" "242a7f2a12" "2313086462"
    "3649552250" "0005030000" "001c224100" "0041221c00" "082a1c2a08" "08083e0808"
    "0050300000" "0808080808" "0060600000" "2010080402" "3e5149453e" "00427f4000"
    "4261514946" "2141454b31" "1814127f10" "2745454539" "3c4a494930" "0171090503"
    "3649494936" "064949291e" "0036360000" "0056360000" "0008142241" "1414141414"
    "4122140800" "0201510906" "324979413e" "7e1111117e" "7f49494936" "3e41414122"
    "7f4141221c" "7f49494941" "7f09090101" "3e41415132" "7f0808087f" "00417f4100"
    "2040413f01" "7f08142241" "7f40404040" "7f0204027f" "7f0408107f" "3e4141413e"
    "7f09090906" "3e4151215e" "7f09192946" "4649494931" "01017f0101" "3f4040403f"
    "1f2040201f" "7f2018207f" "6314081463" "0304780403" "6151494543" "00007f4141"
    "0204081020" "41417f0000" "0402010204" "4040404040" "0001020400" "2054545478"
    "7f48444438" "3844444420" "384444487f" "3854545418" "087e090102" "0c5252523e"
    "7f08040478" "00447d4000" "2040443d00" "007f102844" "00417f4000" "7c04180478"
    "7c08040478" "3844444438" "7c14141408" "081414187c" "7c08040408" "4854545420"
    "043f444020" "3c4040207c" "1c2040201c" "3c4030403c" "4428102844" "0c5050503c"
    "4464544c44" "0008364100" "00007f0000" "0041360800" "0804080408"
)


class BitmapFont:
    """Built-in monospace 5x7 bitmap font; needs no font files.

    Glyph cells are 6 units wide (5 ink columns plus one spacing column) and
    7 units tall.
    """

    first = 0x20
    last = 0x7E

    def glyph(self, ch: str) -> np.ndarray:
        code = ord(ch)
        if not self.first <= code <= self.last:
            raise UnsupportedCharacterError(f"no glyph for {ch!r} (U+{code:04X})")
        cols = _GLYPHS_5X7[(code - self.first) * 5 : (code - self.first) * 5 + 5]
        g = np.zeros((7, 5))
        for x, byte in enumerate(cols):
            for y in range(7):
                if byte >> y & 1:
                    g[y, x] = 1.0
        return g

    def render(self, text: str) -> np.ndarray:
        if not text:
            raise ValueError("text must be non-empty")
        bitmap = np.zeros((7, 6 * len(text) - 1))
        for i, ch in enumerate(text):
            bitmap[:, 6 * i : 6 * i + 5] = self.glyph(ch)
        return crop_to_ink(bitmap)


class FreeTypeRasterizer:
    """Any TrueType/OpenType font file, rendered through Pillow."""

    def __init__(self, path, size: int = 48):
        from PIL import ImageFont

        self.path = str(path)
        self.size = size
        self.font = ImageFont.truetype(self.path, size)

    def render(self, text: str) -> np.ndarray:
        from PIL import Image, ImageDraw

        if not text:
            raise ValueError("text must be non-empty")
        left, top, right, bottom = self.font.getbbox(text)
        img = Image.new("L", (right - left + 4, bottom - top + 4), 0)
        ImageDraw.Draw(img).text((2 - left, 2 - top), text, fill=255, font=self.font)
        bitmap = np.asarray(img, dtype=np.float64) / 255.0
        if not bitmap.any():
            raise UnsupportedCharacterError(f"font {self.path} produced no ink for {text!r}")
        return crop_to_ink(bitmap)


def crop_to_ink(bitmap: np.ndarray) -> np.ndarray:
    ys, xs = np.nonzero(bitmap > 0)
    if len(ys) == 0:
        raise UnsupportedCharacterError("text has no visible glyphs")
    return bitmap[ys.min() : ys.max() + 1, xs.min() : xs.max() + 1]
