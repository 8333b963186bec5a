import numpy as np

from fmatrack.geometry import BBox
from fmatrack.overlay import BLUE, MAGENTA, YELLOW, Layer, rasterize, to_ppm, to_svg


def test_rasterize_outline_pixels():
    img = rasterize(10, 8, [Layer([BBox(1, 2, 3, 4)], BLUE, "former")])
    mask = (img == BLUE).all(axis=2)
    expect = np.zeros((8, 10), bool)
    expect[2, 1:5] = expect[6, 1:5] = True
    expect[2:7, 1] = expect[2:7, 4] = True
    assert np.array_equal(mask, expect)


def test_later_layers_draw_on_top_and_clip():
    b = BBox(-2, -2, 5, 5)
    img = rasterize(6, 6, [Layer([b], MAGENTA, "latter"), Layer([b], YELLOW, "predicted")])
    assert not (img == MAGENTA).all(axis=2).any()
    assert (img[3, 0:4] == YELLOW).all()
    assert rasterize(4, 4, [Layer([BBox(10, 10, 2, 2)], BLUE, "x")]).sum() == 0


def test_svg_and_ppm_encoding():
    layers = [Layer([BBox(1, 2, 3, 4)], YELLOW, "predicted", [7])]
    svg = to_svg(10, 8, layers)
    assert '<rect x="1.00" y="2.00" width="3.00" height="4.00"/>' in svg and ">7</text>" in svg
    assert to_ppm(np.zeros((2, 3, 3), np.uint8)) == b"P6\n3 2\n255\n" + bytes(18)
