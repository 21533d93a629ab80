import json

import jsonschema
import numpy as np
import pytest
from PIL import Image as PILImage

from errors import ImageValidationError
from output import STATS_SCHEMA, STATS_VERSION, load_stats_json, tone_map, write_image, write_ppm, write_stats_json


def minimal_stats(**extra):
    stats = {"version": STATS_VERSION, "mode": "seq", "transport": "none", "workers": 1, "hres": 1, "yres": 1, "frames": 1,
             "primary_total": 1, "total_rays": 1, "per_worker": [], "speedup": None}
    stats.update(extra)
    return stats


def test_black_pixel_ppm(tmp_path):
    path = tmp_path / "black.ppm"
    write_ppm(np.zeros((1, 1, 3), dtype=np.float32), path)
    data = path.read_bytes()
    assert data == b"P6\n1 1\n255\n\x00\x00\x00"
    assert len(data) == 14


def test_tone_map_curve():
    assert tone_map(np.array([[[1.0, 0.0, 1e9]]]))[0, 0].tolist() == [128, 0, 255]


@pytest.mark.parametrize("bad", [np.nan, np.inf, -0.5])
def test_invalid_pixels_are_rejected(tmp_path, bad):
    image = np.zeros((2, 2, 3), dtype=np.float32)
    image[1, 0, 2] = bad
    with pytest.raises(ImageValidationError):
        write_ppm(image, tmp_path / "bad.ppm")
    assert not (tmp_path / "bad.ppm").exists()


def test_ppm_layout_is_row_major(tmp_path):
    image = np.zeros((2, 3, 3), dtype=np.float32)
    image[1, 2] = (1.0, 1.0, 1.0)
    path = tmp_path / "rows.ppm"
    write_ppm(image, path)
    body = path.read_bytes()[len(b"P6\n3 2\n255\n"):]
    assert len(body) == 18
    assert body[-3:] == bytes([128, 128, 128]) and set(body[:-3]) == {0}


def test_png_goes_through_pillow(tmp_path):
    image = np.full((4, 5, 3), 1.0, dtype=np.float32)
    path = tmp_path / "out.png"
    write_image(image, path)
    with PILImage.open(path) as img:
        assert img.size == (5, 4)
        assert img.getpixel((0, 0)) == (128, 128, 128)


def test_stats_round_trip(tmp_path):
    path = tmp_path / "stats.json"
    stats = minimal_stats(makespan=12.0, speedup=1.0, timelines={"0": [[0.0, 12.0]]})
    write_stats_json(stats, path)
    assert json.loads(path.read_text(encoding="utf-8")) == stats
    assert load_stats_json(path) == stats


def test_stats_schema_rejects_bad_documents(tmp_path):
    with pytest.raises(jsonschema.ValidationError):
        write_stats_json(minimal_stats(mode="turbo"), tmp_path / "x.json")
    with pytest.raises(jsonschema.ValidationError):
        jsonschema.validate(minimal_stats(workers=0), STATS_SCHEMA)


def test_loading_is_tolerant(tmp_path):
    assert load_stats_json(tmp_path / "missing.json") is None
    (tmp_path / "broken.json").write_text("{not json", encoding="utf-8")
    assert load_stats_json(tmp_path / "broken.json") is None
    (tmp_path / "other.json").write_text(json.dumps({"version": 99}), encoding="utf-8")
    assert load_stats_json(tmp_path / "other.json") is None
