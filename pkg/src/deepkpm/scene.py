"""Scene description, the text scene format, and the packed arrays the kernels read.

Scene files are block structured::

    # comment
    camera { position 0 1 4  look_at 0 0.5 0  up 0 1 0  fov_degrees 40  width 64  height 48 }
    material floor { kind lambertian  albedo 0.8 0.8 0.8 }
    primitive { shape sphere  center 0 1 0  radius 0.5  material floor }
    light { corner -0.25 2 -0.25  edge_u 0.5 0 0  edge_v 0 0 0.5  radiance 10 10 10 }
    background { radiance 0 0 0 }

A light emits from the side of ``cross(edge_u, edge_v)``.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .errors import SceneParseError, SceneValidationError

SPHERE, TRIANGLE, QUAD = 0, 1, 2
LAMBERTIAN, MIRROR, DIELECTRIC, EMISSIVE = 0, 1, 2, 3

MATERIAL_KINDS = {"lambertian": LAMBERTIAN, "mirror": MIRROR, "dielectric": DIELECTRIC, "emissive": EMISSIVE}
_COLOR_KEY = {"lambertian": "albedo", "mirror": "reflectance", "dielectric": "tint", "emissive": "radiance"}

Vec3 = tuple[float, float, float]


def _vec(v) -> Vec3:
    x, y, z = (float(c) for c in v)
    return (x, y, z)


def _sub(a, b):
    return (a[0] - b[0], a[1] - b[1], a[2] - b[2])


def _cross(a, b):
    return (a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0])


def _dot(a, b):
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


def _normalize(a):
    n = math.sqrt(_dot(a, a))
    return (a[0] / n, a[1] / n, a[2] / n)


@dataclass(frozen=True)
class Sphere:
    center: Vec3
    radius: float

    @property
    def kind(self):
        return "sphere"


@dataclass(frozen=True)
class Triangle:
    v0: Vec3
    v1: Vec3
    v2: Vec3

    @property
    def kind(self):
        return "triangle"


@dataclass(frozen=True)
class Quad:
    """Parallelogram ``corner + s*edge_u + t*edge_v`` for s, t in [0, 1]."""

    corner: Vec3
    edge_u: Vec3
    edge_v: Vec3

    @property
    def kind(self):
        return "quad"

    @property
    def area(self):
        c = _cross(self.edge_u, self.edge_v)
        return math.sqrt(_dot(c, c))

    @property
    def normal(self):
        return _normalize(_cross(self.edge_u, self.edge_v))


@dataclass(frozen=True)
class Material:
    """``color`` is the albedo, reflectance, tint or emitted radiance depending on ``kind``."""

    kind: str
    color: Vec3 = (0.0, 0.0, 0.0)
    ior: float = 1.5
    name: str = ""

    @property
    def code(self):
        return MATERIAL_KINDS[self.kind]

    @property
    def is_specular(self):
        return self.kind in ("mirror", "dielectric")

    @classmethod
    def lambertian(cls, albedo, name=""):
        return cls("lambertian", _vec(albedo), name=name)

    @classmethod
    def mirror(cls, reflectance, name=""):
        return cls("mirror", _vec(reflectance), name=name)

    @classmethod
    def dielectric(cls, ior, tint=(1.0, 1.0, 1.0), name=""):
        return cls("dielectric", _vec(tint), float(ior), name=name)

    @classmethod
    def emissive(cls, radiance, name=""):
        return cls("emissive", _vec(radiance), name=name)


@dataclass(frozen=True)
class Primitive:
    shape: Sphere | Triangle | Quad
    material_id: int


@dataclass(frozen=True)
class AreaLight:
    corner: Vec3
    edge_u: Vec3
    edge_v: Vec3
    radiance: Vec3

    @property
    def quad(self):
        return Quad(self.corner, self.edge_u, self.edge_v)

    @property
    def area(self):
        return self.quad.area

    @property
    def normal(self):
        return self.quad.normal

    @property
    def power(self) -> Vec3:
        """Emitted flux per channel, L_e * area * pi."""
        k = self.area * math.pi
        return (self.radiance[0] * k, self.radiance[1] * k, self.radiance[2] * k)


@dataclass(frozen=True)
class Camera:
    position: Vec3
    look_at: Vec3
    up: Vec3
    fov_degrees: float
    width: int
    height: int

    def basis(self):
        """(origin, right, up, forward, tan(fov/2), aspect) for a pinhole with vertical fov."""
        w = _normalize(_sub(self.look_at, self.position))
        u = _normalize(_cross(w, self.up))
        v = _cross(u, w)
        return self.position, u, v, w, math.tan(math.radians(self.fov_degrees) / 2.0), self.width / self.height

    def packed(self) -> np.ndarray:
        o, u, v, w, h, aspect = self.basis()
        return np.array([*o, *u, *v, *w, h, aspect, self.width, self.height], dtype=np.float64)


class PackedScene(NamedTuple):
    prim_type: np.ndarray  # int32 (P,)
    prim_geom: np.ndarray  # float64 (P, 12)
    prim_mat: np.ndarray  # int32 (P,)
    mat_kind: np.ndarray  # int32 (Mt,)
    mat_color: np.ndarray  # float64 (Mt, 3)
    mat_ior: np.ndarray  # float64 (Mt,)
    light_geom: np.ndarray  # float64 (L, 16): corner, edge_u, edge_v, N/|N|^2, area, radiance
    light_cdf: np.ndarray  # float64 (L,) cumulative selection probability by power
    background: np.ndarray  # float64 (3,)


@dataclass(frozen=True)
class Scene:
    primitives: tuple[Primitive, ...]
    materials: tuple[Material, ...]
    lights: tuple[AreaLight, ...]
    camera: Camera
    background_radiance: Vec3 = (0.0, 0.0, 0.0)

    def __post_init__(self):
        validate(self)

    def with_camera(self, camera: Camera) -> "Scene":
        return Scene(self.primitives, self.materials, self.lights, camera, self.background_radiance)

    def material_of(self, prim_index: int) -> Material:
        return self.materials[self.primitives[prim_index].material_id]

    @cached_property
    def packed(self) -> PackedScene:
        return pack_scene(self)


def _pack_quad(q: Quad):
    n = _cross(q.edge_u, q.edge_v)
    nn2 = _dot(n, n)
    return [*q.corner, *q.edge_u, *q.edge_v, n[0] / nn2, n[1] / nn2, n[2] / nn2]


def pack_scene(scene: Scene) -> PackedScene:
    P = len(scene.primitives)
    prim_type = np.zeros(P, dtype=np.int32)
    prim_geom = np.zeros((P, 12), dtype=np.float64)
    prim_mat = np.zeros(P, dtype=np.int32)
    for i, prim in enumerate(scene.primitives):
        s = prim.shape
        if isinstance(s, Sphere):
            prim_type[i] = SPHERE
            prim_geom[i, :4] = [*s.center, s.radius]
        elif isinstance(s, Triangle):
            prim_type[i] = TRIANGLE
            e1, e2 = _sub(s.v1, s.v0), _sub(s.v2, s.v0)
            prim_geom[i] = [*s.v0, *e1, *e2, *_normalize(_cross(e1, e2))]
        else:
            prim_type[i] = QUAD
            prim_geom[i] = _pack_quad(s)
        prim_mat[i] = prim.material_id
    mat_kind = np.array([m.code for m in scene.materials], dtype=np.int32)
    mat_color = np.array([m.color for m in scene.materials], dtype=np.float64).reshape(-1, 3)
    mat_ior = np.array([m.ior for m in scene.materials], dtype=np.float64)
    light_geom = np.zeros((len(scene.lights), 16), dtype=np.float64)
    weights = []
    for i, light in enumerate(scene.lights):
        light_geom[i, :12] = _pack_quad(light.quad)
        light_geom[i, 12] = light.area
        light_geom[i, 13:16] = light.radiance
        p = light.power
        weights.append(0.2126 * p[0] + 0.7152 * p[1] + 0.0722 * p[2])
    total = sum(weights)
    cdf, acc = [], 0.0
    for w in weights:
        acc += w
        cdf.append(acc / total if total > 0 else 1.0)
    if cdf:
        cdf[-1] = 1.0
    return PackedScene(
        prim_type, prim_geom, prim_mat, mat_kind, mat_color, mat_ior,
        light_geom, np.array(cdf, dtype=np.float64), np.array(scene.background_radiance, dtype=np.float64),
    )


def validate(scene: Scene) -> None:
    """Raise SceneValidationError naming the first violated invariant."""
    if scene.camera is None:
        raise SceneValidationError("scene requires a camera block")
    cam = scene.camera
    if cam.width <= 0 or cam.height <= 0:
        raise SceneValidationError("camera width/height must be positive")
    if not 0.0 < cam.fov_degrees < 180.0:
        raise SceneValidationError("camera fov_degrees must lie in (0, 180)")
    fwd = _sub(cam.look_at, cam.position)
    if _dot(fwd, fwd) == 0.0 or _dot(_cross(fwd, cam.up), _cross(fwd, cam.up)) == 0.0:
        raise SceneValidationError("camera look_at/up are degenerate")
    for m in scene.materials:
        if m.kind not in MATERIAL_KINDS:
            raise SceneValidationError(f"unknown material kind {m.kind!r}")
        if m.kind == "emissive":
            if min(m.color) < 0.0:
                raise SceneValidationError(f"material {m.name!r}: radiance must be >= 0")
        elif not all(0.0 <= c <= 1.0 for c in m.color):
            raise SceneValidationError(f"material {m.name!r}: {_COLOR_KEY[m.kind]} must lie in [0, 1]")
        if m.kind == "dielectric" and not m.ior > 0.0:
            raise SceneValidationError(f"material {m.name!r}: ior must be > 0")
        if not all(math.isfinite(c) for c in m.color):
            raise SceneValidationError(f"material {m.name!r}: non-finite color")
    for i, prim in enumerate(scene.primitives):
        if not 0 <= prim.material_id < len(scene.materials):
            raise SceneValidationError(f"primitive {i} references missing material {prim.material_id}")
        s = prim.shape
        if isinstance(s, Sphere):
            if not s.radius > 0.0:
                raise SceneValidationError(f"primitive {i}: sphere radius must be > 0")
        elif isinstance(s, Triangle):
            c = _cross(_sub(s.v1, s.v0), _sub(s.v2, s.v0))
            if _dot(c, c) == 0.0:
                raise SceneValidationError(f"primitive {i}: triangle vertices are collinear")
        elif isinstance(s, Quad):
            if s.area == 0.0:
                raise SceneValidationError(f"primitive {i}: quad edges are degenerate")
        else:
            raise SceneValidationError(f"primitive {i}: unknown shape")
    for i, light in enumerate(scene.lights):
        if light.area == 0.0:
            raise SceneValidationError(f"light {i}: quad edges are degenerate")
        if min(light.radiance) < 0.0:
            raise SceneValidationError(f"light {i}: radiance must be >= 0")


# --- text format -------------------------------------------------------------

_TOKEN = re.compile(r"\{|\}|[^\s{}]+")

# block -> key -> arity; arity 0 means a single word
_SCHEMA = {
    "camera": {"position": 3, "look_at": 3, "up": 3, "fov_degrees": 1, "width": 1, "height": 1},
    "material": {"kind": 0, "albedo": 3, "reflectance": 3, "tint": 3, "radiance": 3, "ior": 1},
    "primitive": {
        "shape": 0, "material": 0, "center": 3, "radius": 1,
        "v0": 3, "v1": 3, "v2": 3, "corner": 3, "edge_u": 3, "edge_v": 3,
    },
    "light": {"corner": 3, "edge_u": 3, "edge_v": 3, "radiance": 3},
    "background": {"radiance": 3},
}
_REQUIRED = {
    "camera": ("position", "look_at", "up", "fov_degrees", "width", "height"),
    "light": ("corner", "edge_u", "edge_v", "radiance"),
    "background": ("radiance",),
}
_SHAPE_KEYS = {"sphere": ("center", "radius"), "triangle": ("v0", "v1", "v2"), "quad": ("corner", "edge_u", "edge_v")}


def _tokenize(text):
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0]
        for m in _TOKEN.finditer(line):
            yield m.group(0), lineno


def _parse_blocks(text):
    tokens = list(_tokenize(text))
    blocks = []
    i = 0
    while i < len(tokens):
        name, line = tokens[i]
        if name not in _SCHEMA:
            raise SceneParseError(f"unknown block {name!r}", line=line)
        i += 1
        label = None
        if i < len(tokens) and tokens[i][0] != "{":
            label = tokens[i][0]
            i += 1
        if i >= len(tokens) or tokens[i][0] != "{":
            raise SceneParseError(f"expected '{{' after {name!r}", line=line)
        i += 1
        schema = _SCHEMA[name]
        values = {}
        while True:
            if i >= len(tokens):
                raise SceneParseError(f"unterminated {name!r} block", line=line)
            key, kline = tokens[i]
            i += 1
            if key == "}":
                break
            if key not in schema:
                raise SceneParseError(f"unknown key in {name!r} block", line=kline, key=key)
            if key in values:
                raise SceneParseError("duplicate key", line=kline, key=key)
            arity = schema[key]
            raw = tokens[i:i + max(arity, 1)]
            if len(raw) < max(arity, 1) or any(t in ("{", "}") for t, _ in raw):
                raise SceneParseError("missing value", line=kline, key=key)
            i += max(arity, 1)
            if arity == 0:
                values[key] = raw[0][0]
            else:
                try:
                    nums = [float(t) for t, _ in raw]
                except ValueError:
                    raise SceneParseError("expected a decimal number", line=kline, key=key) from None
                if not all(math.isfinite(x) for x in nums):
                    raise SceneParseError("non-finite number", line=kline, key=key)
                values[key] = tuple(nums) if arity == 3 else nums[0]
        blocks.append((name, label, values, line))
    return blocks


def _require(block, values, keys, line):
    for k in keys:
        if k not in values:
            raise SceneValidationError(f"{block} block at line {line} is missing required key {k!r}")


def parse_scene(text: str) -> Scene:
    materials, names = [], {}
    prim_specs, lights = [], []
    camera = None
    background = (0.0, 0.0, 0.0)
    for name, label, values, line in _parse_blocks(text):
        if name == "camera":
            if camera is not None:
                raise SceneValidationError(f"second camera block at line {line}")
            _require(name, values, _REQUIRED[name], line)
            w, h = values["width"], values["height"]
            if w != int(w) or h != int(h):
                raise SceneValidationError("camera width/height must be integers")
            camera = Camera(values["position"], values["look_at"], values["up"],
                            values["fov_degrees"], int(w), int(h))
        elif name == "material":
            if label is None:
                raise SceneParseError("material block needs a name", line=line)
            if label in names:
                raise SceneValidationError(f"duplicate material name {label!r}")
            kind = values.get("kind")
            if kind not in MATERIAL_KINDS:
                raise SceneValidationError(f"material {label!r} at line {line}: kind must be one of {sorted(MATERIAL_KINDS)}")
            ckey = _COLOR_KEY[kind]
            _require(f"material {label!r}", values, (ckey,) + (("ior",) if kind == "dielectric" else ()), line)
            extra = set(values) - {"kind", ckey, "ior"}
            if extra or (kind != "dielectric" and "ior" in values):
                raise SceneParseError(f"key not valid for {kind}", line=line, key=sorted(extra or {"ior"})[0])
            names[label] = len(materials)
            materials.append(Material(kind, values[ckey], float(values.get("ior", 1.5)), name=label))
        elif name == "primitive":
            prim_specs.append((values, line))
        elif name == "light":
            _require(name, values, _REQUIRED[name], line)
            lights.append(AreaLight(values["corner"], values["edge_u"], values["edge_v"], values["radiance"]))
        elif name == "background":
            _require(name, values, _REQUIRED[name], line)
            background = values["radiance"]
    if camera is None:
        raise SceneValidationError("scene has no camera block; 'camera' is required")
    prims = []
    for values, line in prim_specs:
        shape_kind = values.get("shape")
        if shape_kind not in _SHAPE_KEYS:
            raise SceneValidationError(f"primitive at line {line}: shape must be one of {sorted(_SHAPE_KEYS)}")
        _require(f"{shape_kind} primitive", values, _SHAPE_KEYS[shape_kind] + ("material",), line)
        extra = set(values) - set(_SHAPE_KEYS[shape_kind]) - {"shape", "material"}
        if extra:
            raise SceneParseError(f"key not valid for {shape_kind}", line=line, key=sorted(extra)[0])
        if values["material"] not in names:
            raise SceneValidationError(f"primitive at line {line} references unknown material {values['material']!r}")
        args = [values[k] for k in _SHAPE_KEYS[shape_kind]]
        shape = {"sphere": Sphere, "triangle": Triangle, "quad": Quad}[shape_kind](*args)
        prims.append(Primitive(shape, names[values["material"]]))
    return Scene(tuple(prims), tuple(materials), tuple(lights), camera, background)


def load_scene(path) -> Scene:
    return parse_scene(Path(path).read_text())


def _fmt(v):
    if isinstance(v, (tuple, list)):
        return " ".join(repr(float(x)) for x in v)
    return repr(float(v))


def dump_scene(scene: Scene) -> str:
    """Serialize so that ``parse_scene(dump_scene(s)) == s``."""
    c = scene.camera
    out = [
        "camera {",
        f"  position {_fmt(c.position)}",
        f"  look_at {_fmt(c.look_at)}",
        f"  up {_fmt(c.up)}",
        f"  fov_degrees {_fmt(c.fov_degrees)}",
        f"  width {c.width}",
        f"  height {c.height}",
        "}",
    ]
    names = []
    for i, m in enumerate(scene.materials):
        name = m.name or f"m{i}"
        names.append(name)
        line = f"material {name} {{ kind {m.kind} {_COLOR_KEY[m.kind]} {_fmt(m.color)}"
        if m.kind == "dielectric":
            line += f" ior {_fmt(m.ior)}"
        out.append(line + " }")
    for p in scene.primitives:
        s = p.shape
        fields_ = " ".join(f"{k} {_fmt(getattr(s, k))}" for k in _SHAPE_KEYS[s.kind])
        out.append(f"primitive {{ shape {s.kind} {fields_} material {names[p.material_id]} }}")
    for lt in scene.lights:
        out.append(
            f"light {{ corner {_fmt(lt.corner)} edge_u {_fmt(lt.edge_u)} "
            f"edge_v {_fmt(lt.edge_v)} radiance {_fmt(lt.radiance)} }}"
        )
    out.append(f"background {{ radiance {_fmt(scene.background_radiance)} }}")
    return "\n".join(out) + "\n"


def save_scene(scene: Scene, path) -> None:
    Path(path).write_text(dump_scene(scene))


def bundled_scene_path(name: str) -> Path:
    """Path of a scene shipped with the package, e.g. ``bundled_scene_path("caustic")``."""
    p = Path(__file__).parent / "scenes" / f"{name}.scene"
    if not p.exists():
        raise FileNotFoundError(p)
    return p


def bundled_scenes() -> Sequence[str]:
    return sorted(p.stem for p in (Path(__file__).parent / "scenes").glob("*.scene"))
