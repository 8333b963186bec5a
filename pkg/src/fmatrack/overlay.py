"""Static overlays of detected and field-predicted boxes.

Former-frame boxes are blue, latter-frame boxes magenta and boxes predicted
by the forward field yellow.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .geometry import BBox

BLUE = (0, 0, 255)
MAGENTA = (255, 0, 255)
YELLOW = (255, 255, 0)


@dataclass(frozen=True)
class Layer:
    boxes: Sequence[BBox]
    color: tuple[int, int, int]
    label: str
    ids: Sequence[int] = ()


def _hex(c) -> str:
    return "#{:02x}{:02x}{:02x}".format(*c)


def to_svg(width: int, height: int, layers: Sequence[Layer]) -> str:
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="#202020"/>',
    ]
    for layer in layers:
        out.append(f'<g class="{layer.label}" stroke="{_hex(layer.color)}" fill="none" stroke-width="2">')
        for k, b in enumerate(layer.boxes):
            out.append(f'<rect x="{b.left:.2f}" y="{b.top:.2f}" width="{b.width:.2f}" height="{b.height:.2f}"/>')
            if k < len(layer.ids):
                out.append(f'<text x="{b.left:.2f}" y="{b.top - 2:.2f}" fill="{_hex(layer.color)}" '
                           f'stroke="none" font-size="10">{layer.ids[k]}</text>')
        out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def rasterize(width: int, height: int, layers: Sequence[Layer]) -> np.ndarray:
    """RGB image with one-pixel box outlines drawn on black, later layers on top."""
    img = np.zeros((height, width, 3), dtype=np.uint8)
    for layer in layers:
        for b in layer.boxes:
            x0 = int(np.floor(b.left))
            x1 = int(np.floor(b.right))
            y0 = int(np.floor(b.top))
            y1 = int(np.floor(b.bottom))
            cx0, cx1 = max(x0, 0), min(x1, width - 1)
            cy0, cy1 = max(y0, 0), min(y1, height - 1)
            if cx0 > cx1 or cy0 > cy1:
                continue
            if 0 <= y0 < height:
                img[y0, cx0:cx1 + 1] = layer.color
            if 0 <= y1 < height:
                img[y1, cx0:cx1 + 1] = layer.color
            if 0 <= x0 < width:
                img[cy0:cy1 + 1, x0] = layer.color
            if 0 <= x1 < width:
                img[cy0:cy1 + 1, x1] = layer.color
    return img


def to_ppm(img: np.ndarray) -> bytes:
    h, w, _ = img.shape
    return f"P6\n{w} {h}\n255\n".encode("ascii") + np.ascontiguousarray(img, dtype=np.uint8).tobytes()
