import math
from dataclasses import dataclass

import numpy as np

from ambient_cache import quantize
from scene_core import Ray, intersect, v_add, v_cross, v_dot, v_mul, v_normalize, v_scale, v_sub

BLACK = (0.0, 0.0, 0.0)
SURFACE_OFFSET = 1e-6
MIN_AMBIENT_RADIUS = 0.05
MAX_AMBIENT_RADIUS = 10.0


@dataclass(frozen=True)
class ShadingParams:
    max_specular_depth: int = 3
    ambient_divisions: int = 16
    ambient_error_tolerance: float = 0.3
    ambient_bounces: int = 1
    rng_seed: int = 0

    def __post_init__(self):
        if self.max_specular_depth < 0 or self.ambient_divisions < 1 or self.ambient_bounces < 0:
            raise ValueError("invalid shading parameters")
        if not self.ambient_error_tolerance > 0: raise ValueError("ambient_error_tolerance must be > 0")


def pixel_rng(seed, frame, x, y):
    return np.random.default_rng([int(seed) & (2**64 - 1), int(frame), int(x), int(y)])


def _basis(n):
    a = (1.0, 0.0, 0.0) if abs(n[0]) < 0.9 else (0.0, 1.0, 0.0)
    t = v_normalize(v_cross(a, n))
    return t, v_cross(n, t)


def _offset(point, normal): return v_add(point, v_scale(normal, SURFACE_OFFSET))


# --- Sombreado ---
def shade(ray, octree, ambient, params, counters, rng, bounce=0):
    hit = intersect(ray, octree, counters)
    return BLACK if hit is None else shade_hit(ray, hit, octree, ambient, params, counters, rng, bounce)


def shade_hit(ray, hit, octree, ambient, params, counters, rng, bounce=0):
    scene = octree.scene
    mat = scene.material_of(hit.index)
    n = hit.normal if v_dot(hit.normal, ray.direction) <= 0.0 else v_scale(hit.normal, -1.0)
    p = hit.point
    origin = _offset(p, n)
    color = mat.emission
    for light in scene.lights:
        to_light = v_sub(light.position, p)
        d = math.sqrt(v_dot(to_light, to_light))
        if d == 0.0: continue
        l = v_scale(to_light, 1.0 / d)
        cos = v_dot(n, l)
        if cos <= 0.0: continue
        counters.add_ray("shadow")
        blocker = intersect(Ray(origin, l, ray.depth + 1, "shadow"), octree, counters)
        if blocker is not None and blocker.distance < d - SURFACE_OFFSET: continue
        color = v_add(color, v_scale(v_mul(mat.albedo, light.intensity), cos / (math.pi * d * d)))
    if mat.specularity > 0.0 and ray.depth < params.max_specular_depth:
        r = v_normalize(v_sub(ray.direction, v_scale(n, 2.0 * v_dot(ray.direction, n))))
        counters.add_ray("specular")
        color = v_add(color, v_scale(shade(Ray(origin, r, ray.depth + 1, "specular"), octree, ambient, params, counters, rng, bounce), mat.specularity))
    if bounce < params.ambient_bounces and max(mat.albedo) > 0.0:
        indirect = indirect_illumination(p, n, octree, ambient, params, counters, rng, bounce, ray.depth)
        color = v_add(color, v_mul(mat.albedo, indirect))
    return color


def indirect_illumination(point, normal, octree, ambient, params, counters, rng, bounce=0, depth=0):
    if bounce >= params.ambient_bounces: return BLACK
    cached = ambient.lookup(point, normal, params.ambient_error_tolerance)
    if cached is not None: return cached
    t, b = _basis(normal)
    origin = _offset(point, normal)
    n_div = params.ambient_divisions
    u = rng.random((n_div, 2))
    total, inv_dist = BLACK, 0.0
    for i in range(n_div):
        u1 = (i + u[i, 0]) / n_div
        r, phi = math.sqrt(u1), 2.0 * math.pi * u[i, 1]
        local = (r * math.cos(phi), r * math.sin(phi), math.sqrt(max(0.0, 1.0 - u1)))
        d = v_normalize(v_add(v_add(v_scale(t, local[0]), v_scale(b, local[1])), v_scale(normal, local[2])))
        counters.add_ray("ambient")
        ray = Ray(origin, d, depth + 1, "ambient")
        hit = intersect(ray, octree, counters)
        if hit is None: continue
        inv_dist += 1.0 / max(hit.distance, 1e-12)
        total = v_add(total, shade_hit(ray, hit, octree, ambient, params, counters, rng, bounce + 1))
    value = v_scale(total, 1.0 / n_div)
    radius = n_div / inv_dist if inv_dist > 0.0 else MAX_AMBIENT_RADIUS
    radius = min(max(radius, MIN_AMBIENT_RADIUS), MAX_AMBIENT_RADIUS)
    if not ambient.enabled: return quantize(value)
    counters.ambient_records_created += 1
    return ambient.create(point, normal, value, radius).value


class PixelTracer:
    """Pixel -> float32-rounded rgb for one frame; pixel coordinates are global to the image."""

    def __init__(self, octree, params, ambient, counters, camera, hres, yres, frame=0):
        self.octree, self.params, self.ambient, self.counters = octree, params, ambient, counters
        self.camera, self.hres, self.yres, self.frame = camera, hres, yres, frame

    def __call__(self, x, y):
        rng = pixel_rng(self.params.rng_seed, self.frame, x, y)
        ray = self.camera.primary_ray(x, y, self.hres, self.yres)
        return quantize(shade(ray, self.octree, self.ambient, self.params, self.counters, rng))
