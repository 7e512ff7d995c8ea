"""Pins the stroke rasterization shared with the studio frontend.

The frontend test reads the same fixture file; regenerating it after an
algorithm change keeps both sides honest.
"""

import json
import os

import numpy as np

from exinpaint.masks import StudioStroke, rasterize_strokes

FIXTURE = os.path.join(os.path.dirname(__file__), "..", "frontend", "fixtures",
                       "stroke_raster_16.json")


def test_rasterization_matches_shared_fixture():
    with open(FIXTURE, "r", encoding="utf-8") as fh:
        fixture = json.load(fh)
    strokes = [
        StudioStroke(points=[(p["x"], p["y"]) for p in s["points"]], radius=s["radius"])
        for s in fixture["strokes"]
    ]
    mask = rasterize_strokes(strokes, fixture["height"], fixture["width"])
    expected = np.array(fixture["mask"], dtype=np.float32).reshape(
        fixture["height"], fixture["width"], 1
    )
    assert np.array_equal(mask, expected)
