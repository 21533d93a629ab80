import logging
import math
from collections import Counter
from dataclasses import dataclass, field

from errors import SceneParseError, SceneValidationError

logger = logging.getLogger(__name__)

T_MIN = 1e-6
RAY_KINDS = ("primary", "shadow", "specular", "ambient")
BUILD_COUNTER = Counter()

# --- Vectores ---
def v_add(a, b): return (a[0] + b[0], a[1] + b[1], a[2] + b[2])
def v_sub(a, b): return (a[0] - b[0], a[1] - b[1], a[2] - b[2])
def v_scale(a, s): return (a[0] * s, a[1] * s, a[2] * s)
def v_mul(a, b): return (a[0] * b[0], a[1] * b[1], a[2] * b[2])
def v_dot(a, b): return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
def v_cross(a, b): return (a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0])
def v_length(a): return math.sqrt(v_dot(a, a))

def v_normalize(a):
    n = v_length(a)
    if n == 0.0: raise ValueError("cannot normalize a zero vector")
    return (a[0] / n, a[1] / n, a[2] / n)


# --- Tipos de escena ---
@dataclass(frozen=True)
class Material:
    albedo: tuple
    specularity: float
    emission: tuple


@dataclass(frozen=True)
class Sphere:
    center: tuple
    radius: float
    material: int


@dataclass(frozen=True)
class Plane:
    point: tuple
    normal: tuple
    material: int


@dataclass(frozen=True)
class Triangle:
    v0: tuple
    v1: tuple
    v2: tuple
    material: int


@dataclass(frozen=True)
class Light:
    position: tuple
    intensity: tuple


@dataclass(frozen=True)
class Ray:
    origin: tuple
    direction: tuple
    depth: int = 0
    kind: str = "primary"


@dataclass(frozen=True)
class Hit:
    point: tuple
    normal: tuple
    index: int
    distance: float


@dataclass(frozen=True)
class Camera:
    eye: tuple = (0.0, 0.0, -5.0)
    look: tuple = (0.0, 0.0, 0.0)
    up: tuple = (0.0, 1.0, 0.0)
    fov: float = 60.0

    def primary_ray(self, x, y, hres, yres):
        """Ray through the center of pixel (x, y); y = 0 is the top row."""
        forward = v_normalize(v_sub(self.look, self.eye))
        right = v_normalize(v_cross(forward, self.up))
        up = v_cross(right, forward)
        half = math.tan(math.radians(self.fov) / 2.0)
        u = (2.0 * (x + 0.5) / hres - 1.0) * half
        v = (1.0 - 2.0 * (y + 0.5) / yres) * half * yres / hres
        d = v_normalize(v_add(forward, v_add(v_scale(right, u), v_scale(up, v))))
        return Ray(self.eye, d, 0, "primary")


@dataclass(frozen=True)
class Scene:
    objects: tuple
    materials: dict
    lights: tuple
    camera: Camera
    bounds: tuple  # (center, half_size)

    def material_of(self, index): return self.materials[self.objects[index].material]


@dataclass
class TraceCounters:
    rays: Counter = field(default_factory=Counter)
    intersection_tests: int = 0
    ambient_records_created: int = 0
    ambient_records_merged: int = 0

    def add_ray(self, kind, n=1): self.rays[kind] += n

    @property
    def primary_rays(self): return self.rays["primary"]

    @property
    def total_rays(self): return sum(self.rays.values())

    def merge(self, other):
        self.rays.update(other.rays)
        self.intersection_tests += other.intersection_tests
        self.ambient_records_created += other.ambient_records_created
        self.ambient_records_merged += other.ambient_records_merged
        return self

    def copy(self): return TraceCounters(Counter(self.rays), self.intersection_tests, self.ambient_records_created, self.ambient_records_merged)

    def delta(self, earlier):
        rays = Counter({k: self.rays[k] - earlier.rays[k] for k in RAY_KINDS})
        return TraceCounters(rays, self.intersection_tests - earlier.intersection_tests,
                             self.ambient_records_created - earlier.ambient_records_created,
                             self.ambient_records_merged - earlier.ambient_records_merged)

    def as_dict(self):
        return {"rays": {k: int(self.rays[k]) for k in RAY_KINDS}, "total_rays": int(self.total_rays),
                "intersection_tests": int(self.intersection_tests),
                "ambient_records_created": int(self.ambient_records_created),
                "ambient_records_merged": int(self.ambient_records_merged)}


# --- Lectura de escenas ---
_ARITY = {"material": 8, "sphere": 5, "plane": 7, "triangle": 10, "light": 6, "camera": 10}


def _floats(tokens, line_number):
    try:
        values = [float(t) for t in tokens]
    except ValueError as exc:
        raise SceneParseError(line_number, f"bad number ({exc})") from exc
    if not all(math.isfinite(v) for v in values): raise SceneParseError(line_number, "non-finite number")
    return values


def _index(token, line_number):
    try: return int(token)
    except ValueError as exc: raise SceneParseError(line_number, f"bad index {token!r}") from exc


def parse_scene(text):
    materials, objects, lights, camera = {}, [], [], None
    for line_number, raw in enumerate(text.splitlines(), start=1):
        tokens = raw.split("#", 1)[0].split()
        if not tokens: continue
        keyword, args = tokens[0], tokens[1:]
        if keyword not in _ARITY: raise SceneParseError(line_number, f"unknown entity {keyword!r}")
        if len(args) != _ARITY[keyword]: raise SceneParseError(line_number, f"{keyword} expects {_ARITY[keyword]} fields, got {len(args)}")
        if keyword == "material":
            mid = _index(args[0], line_number)
            v = _floats(args[1:], line_number)
            if mid in materials: raise SceneValidationError(f"line {line_number}: duplicate material {mid}")
            if not all(0.0 <= c <= 1.0 for c in v[0:4]) or any(c < 0.0 for c in v[4:7]):
                raise SceneValidationError(f"line {line_number}: material channel out of range")
            materials[mid] = Material(tuple(v[0:3]), v[3], tuple(v[4:7]))
        elif keyword == "sphere":
            v = _floats(args[:4], line_number)
            if v[3] <= 0.0: raise SceneValidationError(f"line {line_number}: sphere radius must be > 0")
            objects.append((line_number, Sphere(tuple(v[0:3]), v[3], _index(args[4], line_number))))
        elif keyword == "plane":
            v = _floats(args[:6], line_number)
            if v_length(v[3:6]) == 0.0: raise SceneValidationError(f"line {line_number}: plane normal is zero")
            objects.append((line_number, Plane(tuple(v[0:3]), v_normalize(tuple(v[3:6])), _index(args[6], line_number))))
        elif keyword == "triangle":
            v = _floats(args[:9], line_number)
            tri = Triangle(tuple(v[0:3]), tuple(v[3:6]), tuple(v[6:9]), _index(args[9], line_number))
            if v_length(v_cross(v_sub(tri.v1, tri.v0), v_sub(tri.v2, tri.v0))) == 0.0:
                raise SceneValidationError(f"line {line_number}: degenerate triangle")
            objects.append((line_number, tri))
        elif keyword == "light":
            v = _floats(args, line_number)
            lights.append(Light(tuple(v[0:3]), tuple(v[3:6])))
        else:
            camera = parse_camera_fields(args, line_number)
    for line_number, obj in objects:
        if obj.material not in materials: raise SceneValidationError(f"line {line_number}: dangling material index {obj.material}")
    objects = tuple(obj for _, obj in objects)
    scene = Scene(objects, materials, tuple(lights), camera or Camera(), scene_bounds(objects))
    logger.debug("parsed scene: %d objects, %d materials, %d lights", len(objects), len(materials), len(lights))
    return scene


def parse_camera_fields(args, line_number=0):
    v = _floats(args, line_number)
    if not 0.0 < v[9] < 180.0: raise SceneValidationError(f"line {line_number}: fov must be in (0, 180)")
    cam = Camera(tuple(v[0:3]), tuple(v[3:6]), tuple(v[6:9]), v[9])
    try: cam.primary_ray(0, 0, 1, 1)
    except ValueError as exc: raise SceneValidationError(f"line {line_number}: degenerate camera") from exc
    return cam


def load_scene(path):
    with open(path, "r", encoding="utf-8") as f: return parse_scene(f.read())


def object_box(obj):
    if isinstance(obj, Sphere):
        return v_sub(obj.center, (obj.radius,) * 3), v_add(obj.center, (obj.radius,) * 3)
    if isinstance(obj, Triangle):
        pts = (obj.v0, obj.v1, obj.v2)
        return tuple(min(p[i] for p in pts) for i in range(3)), tuple(max(p[i] for p in pts) for i in range(3))
    return None


def scene_bounds(objects):
    """Bounding cube of spheres and triangles; planes are unbounded and left out."""
    boxes = [b for b in (object_box(o) for o in objects) if b is not None]
    if not boxes: return (0.0, 0.0, 0.0), 0.5
    lo = tuple(min(b[0][i] for b in boxes) for i in range(3))
    hi = tuple(max(b[1][i] for b in boxes) for i in range(3))
    center = v_scale(v_add(lo, hi), 0.5)
    half = max(hi[i] - lo[i] for i in range(3)) / 2.0
    return center, max(half * (1.0 + 1e-6), 1e-6)


# --- Octree de escena ---
@dataclass
class OctreeNode:
    center: tuple
    half: float
    depth: int
    objects: list = None
    children: list = None

    @property
    def is_leaf(self): return self.children is None


@dataclass
class SceneOctree:
    scene: Scene
    root: OctreeNode
    max_depth: int
    leaf_capacity: int
    unbounded: tuple  # plane indices, tested for every ray

    def leaves(self):
        stack = [self.root]
        while stack:
            node = stack.pop()
            if node.is_leaf: yield node
            else: stack.extend(node.children)

    def depth(self): return max(leaf.depth for leaf in self.leaves())


def child_cube(center, half, k):
    q = half / 2.0
    return (center[0] + (q if k & 1 else -q), center[1] + (q if k & 2 else -q), center[2] + (q if k & 4 else -q)), q


def object_overlaps_cube(obj, center, half):
    if isinstance(obj, Sphere):
        d2 = 0.0
        for i in range(3):
            lo, hi = center[i] - half, center[i] + half
            c = obj.center[i]
            if c < lo: d2 += (lo - c) ** 2
            elif c > hi: d2 += (c - hi) ** 2
        return d2 <= obj.radius * obj.radius
    box = object_box(obj)
    if box is None: return False
    return all(box[0][i] <= center[i] + half and box[1][i] >= center[i] - half for i in range(3))


def build_octree(scene, max_depth=8, leaf_capacity=4):
    if max_depth < 1 or leaf_capacity < 1: raise ValueError("max_depth and leaf_capacity must be >= 1")
    BUILD_COUNTER["octree"] += 1
    center, half = scene.bounds
    bounded = [i for i, o in enumerate(scene.objects) if not isinstance(o, Plane)]
    unbounded = tuple(i for i, o in enumerate(scene.objects) if isinstance(o, Plane))

    def build(c, h, depth, indices):
        if len(indices) <= leaf_capacity or depth >= max_depth: return OctreeNode(c, h, depth, objects=list(indices))
        children = []
        for k in range(8):
            cc, ch = child_cube(c, h, k)
            children.append(build(cc, ch, depth + 1, [i for i in indices if object_overlaps_cube(scene.objects[i], cc, ch)]))
        return OctreeNode(c, h, depth, children=children)

    root = build(center, half, 0, [i for i in bounded if object_overlaps_cube(scene.objects[i], center, half)])
    tree = SceneOctree(scene, root, max_depth, leaf_capacity, unbounded)
    logger.debug("octree built: depth %d, %d bounded and %d unbounded objects", tree.depth(), len(bounded), len(unbounded))
    return tree


# --- Intersecciones ---
def intersect_object(ray, obj):
    """Nearest distance > T_MIN along the ray and the outward normal, or None."""
    o, d = ray.origin, ray.direction
    if isinstance(obj, Sphere):
        oc = v_sub(o, obj.center)
        b = v_dot(oc, d)
        disc = b * b - (v_dot(oc, oc) - obj.radius * obj.radius)
        if disc < 0.0: return None
        s = math.sqrt(disc)
        t = -b - s
        if t <= T_MIN: t = -b + s
        if t <= T_MIN: return None
        p = v_add(o, v_scale(d, t))
        return t, v_scale(v_sub(p, obj.center), 1.0 / obj.radius)
    if isinstance(obj, Plane):
        denom = v_dot(obj.normal, d)
        if abs(denom) < 1e-12: return None
        t = v_dot(v_sub(obj.point, o), obj.normal) / denom
        return (t, obj.normal) if t > T_MIN else None
    e1, e2 = v_sub(obj.v1, obj.v0), v_sub(obj.v2, obj.v0)
    pvec = v_cross(d, e2)
    det = v_dot(e1, pvec)
    if abs(det) < 1e-12: return None
    inv = 1.0 / det
    tvec = v_sub(o, obj.v0)
    u = v_dot(tvec, pvec) * inv
    if u < 0.0 or u > 1.0: return None
    qvec = v_cross(tvec, e1)
    v = v_dot(d, qvec) * inv
    if v < 0.0 or u + v > 1.0: return None
    t = v_dot(e2, qvec) * inv
    return (t, v_normalize(v_cross(e1, e2))) if t > T_MIN else None


def _slab(origin, inv, center, half):
    t0, t1 = -math.inf, math.inf
    for i in range(3):
        lo, hi = center[i] - half, center[i] + half
        if inv[i] is None:
            if origin[i] < lo or origin[i] > hi: return None
            continue
        a, b = (lo - origin[i]) * inv[i], (hi - origin[i]) * inv[i]
        if a > b: a, b = b, a
        t0, t1 = max(t0, a), min(t1, b)
        if t0 > t1: return None
    return (t0, t1) if t1 >= T_MIN else None


def _make_hit(ray, best):
    t, index, normal = best
    return Hit(v_add(ray.origin, v_scale(ray.direction, t)), normal, index, t)


def intersect(ray, octree, counters):
    """Nearest hit; ties on distance go to the lower object index."""
    objects = octree.scene.objects
    best = [math.inf, -1, None]
    tested = set()

    def test(i):
        tested.add(i)
        counters.intersection_tests += 1
        r = intersect_object(ray, objects[i])
        if r is not None and (r[0] < best[0] or (r[0] == best[0] and i < best[1])):
            best[0], best[1], best[2] = r[0], i, r[1]

    for i in octree.unbounded: test(i)
    inv = tuple(1.0 / c if c != 0.0 else None for c in ray.direction)

    def visit(node, t_enter):
        if t_enter > best[0]: return
        if node.is_leaf:
            for i in node.objects:
                if i not in tested: test(i)
            return
        spans = []
        for k, child in enumerate(node.children):
            span = _slab(ray.origin, inv, child.center, child.half)
            if span is not None: spans.append((span[0], k, child))
        for t0, _, child in sorted(spans, key=lambda s: s[:2]):
            visit(child, t0)

    root_span = _slab(ray.origin, inv, octree.root.center, octree.root.half)
    if root_span is not None: visit(octree.root, root_span[0])
    return None if best[1] < 0 else _make_hit(ray, best)


def intersect_brute_force(ray, scene, counters=None):
    best = [math.inf, -1, None]
    for i, obj in enumerate(scene.objects):
        if counters is not None: counters.intersection_tests += 1
        r = intersect_object(ray, obj)
        if r is not None and (r[0] < best[0] or (r[0] == best[0] and i < best[1])):
            best[0], best[1], best[2] = r[0], i, r[1]
    return None if best[1] < 0 else _make_hit(ray, best)


def parse_animation(text):
    """One `camera` line per frame; the scene stays the same for the whole sequence."""
    cameras = []
    for line_number, raw in enumerate(text.splitlines(), start=1):
        tokens = raw.split("#", 1)[0].split()
        if not tokens: continue
        if tokens[0] != "camera": raise SceneParseError(line_number, f"expected camera, got {tokens[0]!r}")
        if len(tokens) != 11: raise SceneParseError(line_number, f"camera expects 10 fields, got {len(tokens) - 1}")
        cameras.append(parse_camera_fields(tokens[1:], line_number))
    if not cameras: raise SceneValidationError("animation has no frames")
    return cameras


def load_animation(path):
    with open(path, "r", encoding="utf-8") as f: return parse_animation(f.read())
