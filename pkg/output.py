import json
import logging

import jsonschema
import numpy as np
from PIL import Image as PILImage

from errors import ImageValidationError

logger = logging.getLogger(__name__)

STATS_VERSION = 1

_COUNTERS = {
    "type": "object",
    "required": ["rays", "total_rays", "intersection_tests", "ambient_records_created", "ambient_records_merged"],
    "properties": {
        "rays": {"type": "object", "additionalProperties": {"type": "integer", "minimum": 0}},
        "total_rays": {"type": "integer", "minimum": 0},
        "intersection_tests": {"type": "integer", "minimum": 0},
        "ambient_records_created": {"type": "integer", "minimum": 0},
        "ambient_records_merged": {"type": "integer", "minimum": 0},
    },
}

STATS_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["version", "mode", "workers", "hres", "yres", "frames", "primary_total", "total_rays", "per_worker", "speedup"],
    "properties": {
        "version": {"const": STATS_VERSION},
        "mode": {"enum": ["seq", "static", "static_lb", "dyn_scanbar", "dyn_window"]},
        "transport": {"enum": ["sim", "tcp", "none"]},
        "workers": {"type": "integer", "minimum": 1},
        "hres": {"type": "integer", "minimum": 1},
        "yres": {"type": "integer", "minimum": 1},
        "frames": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "primary_total": {"type": "integer", "minimum": 0},
        "total_rays": {"type": "integer", "minimum": 0},
        "intersection_tests": {"type": "integer", "minimum": 0},
        "ambient_records_created": {"type": "integer", "minimum": 0},
        "ambient_records_merged": {"type": "integer", "minimum": 0},
        "per_worker": {"type": "array", "items": _COUNTERS},
        "timelines": {"type": "object", "additionalProperties": {"type": "array", "items": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}}},
        "finish_ticks": {"type": "array", "items": {"type": "number"}},
        "makespan": {"type": "number", "minimum": 0},
        "work_ticks": {"type": "number", "minimum": 0},
        "start_delay": {"type": "number", "minimum": 0},
        "speedup": {"type": ["number", "null"]},
        "wall_time": {"type": ["number", "null"]},
        "plan": {"type": ["object", "null"]},
        "estimates": {"type": ["array", "null"]},
        "schedule": {"type": "array"},
        "transfers": {"type": "array"},
        "scanbar_primary": {"type": "array", "items": {"type": "integer"}},
    },
}


def tone_map(image):
    image = np.asarray(image, dtype=np.float64)
    if not np.all(np.isfinite(image)): raise ImageValidationError("image contains non-finite values")
    if np.any(image < 0): raise ImageValidationError("image contains negative values")
    return np.clip(np.round(255.0 * image / (1.0 + image)), 0, 255).astype(np.uint8)


def write_ppm(image, path):
    pixels = tone_map(image)
    h, w = pixels.shape[:2]
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(pixels.tobytes())
    logger.info("wrote %dx%d image to %s", w, h, path)


def write_image(image, path):
    """PPM for .ppm paths, anything else through Pillow by extension."""
    if str(path).lower().endswith(".ppm"): return write_ppm(image, path)
    PILImage.fromarray(tone_map(image), mode="RGB").save(path)
    logger.info("wrote image to %s", path)


def write_stats_json(stats, path):
    jsonschema.validate(stats, STATS_SCHEMA)
    with open(path, "w", encoding="utf-8") as f: json.dump(stats, f, indent=2, sort_keys=True)


def load_stats_json(path):
    try:
        with open(path, "r", encoding="utf-8") as f: stats = json.load(f)
    except (FileNotFoundError, json.JSONDecodeError) as exc:
        logger.warning("cannot read stats %s: %s", path, exc)
        return None
    try:
        jsonschema.validate(stats, STATS_SCHEMA)
    except jsonschema.ValidationError as exc:
        logger.warning("stats %s do not match the schema: %s", path, exc.message)
        return None
    return stats
