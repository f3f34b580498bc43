"""Scene description: axis-aligned geometry, materials and transmitters.

Scenes live in JSON files with the top-level keys ``bounds``, ``materials``,
``obstacles``, ``humans`` and ``transmitters``; lengths are metres, powers
dBm and frequencies Hz. ``materials`` entries override or extend the
built-in library from :mod:`raylaunch.materials`. Humans are ordinary box
obstacles that default to a 0.4 x 0.25 x 1.7 m body with the human-tissue
preset; the shorthand ``{"at": [x, y]}`` drops such a box on the floor.

Obstacle ids used by :func:`intersect` index the combined sequence
``scene.obstacles + scene.humans``; the scene boundary terminates rays and
reports the distinguished id :data:`BOUNDS_ID`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import EPS_GEOM, Vec3, as_vec3, boxes_intervals, cross3, unit, vec3
from .materials import MaterialSpec, default_materials

BOUNDS_ID = -1

HUMAN_BODY_SIZE = (0.4, 0.25, 1.7)

_ANTENNA_KINDS = ("isotropic", "monopole")


class SceneFormatError(ValueError):
    """Scene file could not be parsed; message carries line/field context."""


class SceneValidationError(ValueError):
    """Scene parsed but violates a structural invariant."""


@dataclass(frozen=True)
class AntennaPattern:
    """Antenna model: ``isotropic`` or a vertical ``monopole``.

    The monopole axis is +z and its gain follows g(theta) =
    g_peak * sin^2(theta) with theta measured from the axis.
    """

    kind: str = "isotropic"
    peak_gain_dbi: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in _ANTENNA_KINDS:
            raise SceneValidationError(
                f"antenna kind must be one of {_ANTENNA_KINDS}, got {self.kind!r}"
            )

    @property
    def peak_gain_linear(self) -> float:
        return 10.0 ** (self.peak_gain_dbi / 10.0)


@dataclass
class Obstacle:
    """Axis-aligned box with a surface material.

    ``diffracting`` opts the box's twelve edges into wedge diffraction.
    """

    name: str
    box_min: Vec3
    box_max: Vec3
    material: MaterialSpec
    diffracting: bool = False


@dataclass
class TransmitterSpec:
    position: Vec3
    power_dbm: float
    frequency_hz: float
    antenna: AntennaPattern = field(default_factory=AntennaPattern)

    @property
    def power_watts(self) -> float:
        return 10.0 ** ((self.power_dbm - 30.0) / 10.0)


@dataclass
class Hit:
    """Nearest surface along a ray.

    ``normal`` faces the incoming ray (normal . direction < 0); for the
    scene boundary that is the inward-pointing face normal of the exit face.
    """

    obstacle_id: int
    point: Vec3
    normal: Vec3
    distance: float

    @property
    def is_bounds(self) -> bool:
        return self.obstacle_id == BOUNDS_ID


@dataclass(frozen=True)
class Wedge:
    """One box edge prepared for diffraction.

    ``n1``/``n2`` are the outward normals of the two adjacent faces
    (ordered by axis), ``o_face_tangent`` points from the edge along the
    face-1 surface, and azimuthal angles around ``edge_dir`` are measured
    from it. The interior right angle gives exterior angle ``n * pi`` with
    ``n = 1.5``.
    """

    obstacle_id: int
    edge_index: int
    p0: Vec3
    p1: Vec3
    edge_dir: Vec3
    n1: Vec3
    n2: Vec3
    o_face_tangent: Vec3
    n: float = 1.5
    interior_angle: float = np.pi / 2.0

    @property
    def length(self) -> float:
        return float(np.linalg.norm(self.p1 - self.p0))

    def azimuth_of(self, w: Vec3) -> float:
        """Angle of direction ``w`` around the edge, measured from face 1.

        Returns a value in [0, 2*pi); the exterior region is [0, n*pi].
        """
        w_perp = w - (w @ self.edge_dir) * self.edge_dir
        phi = float(np.arctan2(w_perp @ self.n1, w_perp @ self.o_face_tangent))
        return phi if phi >= 0.0 else phi + 2.0 * np.pi


@dataclass
class Scene:
    """Immutable-by-convention container for one simulation environment."""

    bounds_min: Vec3
    bounds_max: Vec3
    materials: dict[str, MaterialSpec]
    obstacles: list[Obstacle]
    humans: list[Obstacle]
    transmitters: list[TransmitterSpec]
    _mins: np.ndarray | None = field(default=None, repr=False, compare=False)
    _maxs: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def all_obstacles(self) -> list[Obstacle]:
        return self.obstacles + self.humans

    def obstacle_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Corner matrices (N, 3) for the vectorised intersection test."""
        if self._mins is None or len(self._mins) != len(self.all_obstacles):
            boxes = self.all_obstacles
            object.__setattr__(self, "_mins", np.array([o.box_min for o in boxes]).reshape(-1, 3))
            object.__setattr__(self, "_maxs", np.array([o.box_max for o in boxes]).reshape(-1, 3))
        return self._mins, self._maxs


# ---------------------------------------------------------------------------
# intersection


def intersect(
    origin: Vec3, direction: Vec3, scene: Scene, exclude_id: int | None = None
) -> Hit:
    """Nearest hit of a ray against the scene.

    Obstacle hits require an entry distance of at least ``EPS_GEOM`` so a
    ray restarted on a surface cannot immediately re-hit it. When
    ``exclude_id`` names the obstacle just left, that box is skipped and
    entries into *other* boxes are accepted from distance zero, which lets
    rays cross shared faces of adjacent boxes. If no obstacle is hit the
    scene boundary terminates the ray with id :data:`BOUNDS_ID`.
    """
    mins, maxs = scene.obstacle_arrays()
    best_id = BOUNDS_ID
    best_t = _bounds_exit(origin, direction, scene)
    if len(mins):
        t_near, t_far = boxes_intervals(origin, direction, mins, maxs)
        t_min = -EPS_GEOM if exclude_id is not None else EPS_GEOM
        ok = (t_near <= t_far) & (t_far > EPS_GEOM) & (t_near >= t_min)
        if exclude_id is not None and 0 <= exclude_id < len(mins):
            ok[exclude_id] = False
        candidates = np.nonzero(ok)[0]
        for idx in candidates:
            t = max(float(t_near[idx]), 0.0)
            if t < best_t:
                best_t = t
                best_id = int(idx)

    point = origin + best_t * direction
    if best_id == BOUNDS_ID:
        normal = -_exit_normal(origin, direction, scene.bounds_min, scene.bounds_max, best_t)
    else:
        normal = _entry_normal(origin, direction, mins[best_id], maxs[best_id])
    return Hit(obstacle_id=best_id, point=point, normal=normal, distance=best_t)


def _bounds_exit(origin: Vec3, direction: Vec3, scene: Scene) -> float:
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / direction
        t0 = (scene.bounds_min - origin) * inv
        t1 = (scene.bounds_max - origin) * inv
    hi = np.where(np.isnan(t1), np.inf, np.maximum(t0, t1))
    hi = np.where(np.isnan(hi), np.inf, hi)
    t_exit = float(hi.min())
    # transmission exits through boundary-flush obstacles can overshoot the
    # bounds plane by round-off; treat those as leaving immediately
    if t_exit < -EPS_GEOM or not np.isfinite(t_exit):
        raise SceneValidationError("ray origin lies outside the scene bounds")
    return max(t_exit, 0.0)


def _exit_normal(origin: Vec3, direction: Vec3, bmin: Vec3, bmax: Vec3, t_exit: float) -> Vec3:
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / direction
        t0 = (bmin - origin) * inv
        t1 = (bmax - origin) * inv
    hi = np.where(np.isnan(t1), np.inf, np.maximum(t0, t1))
    hi = np.where(np.isnan(hi), np.inf, hi)
    axis = int(np.argmin(hi))
    n = np.zeros(3)
    n[axis] = 1.0 if direction[axis] > 0 else -1.0
    return n


def _entry_normal(origin: Vec3, direction: Vec3, bmin: Vec3, bmax: Vec3) -> Vec3:
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / direction
        t0 = (bmin - origin) * inv
        t1 = (bmax - origin) * inv
    lo = np.where(np.isnan(t0), -np.inf, np.minimum(t0, t1))
    lo = np.where(np.isnan(lo), -np.inf, lo)
    axis = int(np.argmax(lo))
    n = np.zeros(3)
    n[axis] = -1.0 if direction[axis] > 0 else 1.0
    return n


# ---------------------------------------------------------------------------
# wedge enumeration

_EDGE_TABLE: list[tuple[int, tuple[int, int]]] = []
for _axis in range(3):
    _i, _j = [a for a in range(3) if a != _axis]
    for _si in (0, 1):
        for _sj in (0, 1):
            _EDGE_TABLE.append((_axis, (_si, _sj)))


def enumerate_edges(scene: Scene) -> list[Wedge]:
    """Wedge descriptors for every edge of every diffracting obstacle.

    Twelve wedges per box; edges shared between adjacent boxes are reported
    once per owning box without deduplication.
    """
    wedges: list[Wedge] = []
    for obstacle_id, obstacle in enumerate(scene.all_obstacles):
        if not obstacle.diffracting:
            continue
        lo, hi = obstacle.box_min, obstacle.box_max
        corners = np.stack([lo, hi])
        for edge_index, (axis, signs) in enumerate(_EDGE_TABLE):
            i, j = [a for a in range(3) if a != axis]
            si, sj = signs
            p0 = np.empty(3)
            p1 = np.empty(3)
            p0[axis], p1[axis] = lo[axis], hi[axis]
            p0[i] = p1[i] = corners[si][i]
            p0[j] = p1[j] = corners[sj][j]
            n1 = np.zeros(3)
            n1[i] = 1.0 if si else -1.0
            n2 = np.zeros(3)
            n2[j] = 1.0 if sj else -1.0
            edge_dir = unit(cross3(n1, n2))
            wedges.append(
                Wedge(
                    obstacle_id=obstacle_id,
                    edge_index=edge_index,
                    p0=p0,
                    p1=p1,
                    edge_dir=edge_dir,
                    n1=n1,
                    n2=n2,
                    o_face_tangent=-n2,
                )
            )
    return wedges


# ---------------------------------------------------------------------------
# file i/o


def load_scene(path: str | Path) -> Scene:
    """Parse and validate a scene file.

    Raises :class:`SceneFormatError` with line/column context for malformed
    JSON or wrongly typed fields, and :class:`SceneValidationError` naming
    the violated invariant for structurally bad scenes.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise SceneFormatError(f"cannot read scene file {path}: {exc}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SceneFormatError(
            f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc
    return scene_from_dict(raw, context=str(path))


def scene_from_dict(raw: dict, context: str = "<dict>") -> Scene:
    if not isinstance(raw, dict):
        raise SceneFormatError(f"{context}: top level must be an object")

    bounds = _expect(raw, "bounds", dict, context)
    bounds_min = _vector(bounds, "min", f"{context}: bounds")
    bounds_max = _vector(bounds, "max", f"{context}: bounds")

    materials = default_materials()
    for name, spec in _expect(raw, "materials", dict, context, default={}).items():
        where = f"{context}: materials[{name!r}]"
        if not isinstance(spec, dict):
            raise SceneFormatError(f"{where}: must be an object")
        try:
            materials[name] = MaterialSpec(
                name=name,
                eps_r=float(spec.get("eps_r", 1.0)),
                sigma=float(spec.get("sigma", 0.0)),
                pec=bool(spec.get("pec", False)),
            )
        except (TypeError, ValueError) as exc:
            raise SceneFormatError(f"{where}: {exc}") from exc

    obstacles = [
        _obstacle(entry, materials, f"{context}: obstacles[{k}]", default_material="concrete")
        for k, entry in enumerate(_expect(raw, "obstacles", list, context, default=[]))
    ]
    humans = [
        _human(entry, materials, bounds_min, f"{context}: humans[{k}]")
        for k, entry in enumerate(_expect(raw, "humans", list, context, default=[]))
    ]
    transmitters = [
        _transmitter(entry, f"{context}: transmitters[{k}]")
        for k, entry in enumerate(_expect(raw, "transmitters", list, context, default=[]))
    ]
    scene = Scene(
        bounds_min=bounds_min,
        bounds_max=bounds_max,
        materials=materials,
        obstacles=obstacles,
        humans=humans,
        transmitters=transmitters,
    )
    validate_scene(scene)
    return scene


def _expect(obj: dict, key: str, kind, context: str, default=None):
    if key not in obj:
        if default is not None:
            return default
        raise SceneFormatError(f"{context}: missing required key {key!r}")
    value = obj[key]
    if not isinstance(value, kind):
        wanted = kind.__name__ if isinstance(kind, type) else "/".join(k.__name__ for k in kind)
        raise SceneFormatError(
            f"{context}: field {key!r} must be {wanted}, got {type(value).__name__}"
        )
    return value


def _vector(obj: dict, key: str, context: str) -> Vec3:
    value = _expect(obj, key, list, context)
    if len(value) != 3 or not all(isinstance(v, (int, float)) for v in value):
        raise SceneFormatError(f"{context}: field {key!r} must be a list of 3 numbers")
    return as_vec3(value)


def _material_ref(entry: dict, materials: dict[str, MaterialSpec], context: str, default: str):
    name = entry.get("material", default)
    if name not in materials:
        raise SceneFormatError(f"{context}: unknown material {name!r}")
    return materials[name]


def _obstacle(entry, materials, context: str, default_material: str) -> Obstacle:
    if not isinstance(entry, dict):
        raise SceneFormatError(f"{context}: must be an object")
    return Obstacle(
        name=str(entry.get("name", context.rsplit(": ", 1)[-1])),
        box_min=_vector(entry, "min", context),
        box_max=_vector(entry, "max", context),
        material=_material_ref(entry, materials, context, default_material),
        diffracting=bool(entry.get("diffracting", False)),
    )


def _human(entry, materials, bounds_min: Vec3, context: str) -> Obstacle:
    if not isinstance(entry, dict):
        raise SceneFormatError(f"{context}: must be an object")
    if "at" in entry:
        at = entry["at"]
        if not isinstance(at, list) or len(at) != 2:
            raise SceneFormatError(f"{context}: field 'at' must be [x, y]")
        sx, sy, sz = HUMAN_BODY_SIZE
        x, y = float(at[0]), float(at[1])
        z0 = float(entry.get("z", bounds_min[2]))
        box_min = vec3(x - sx / 2, y - sy / 2, z0)
        box_max = vec3(x + sx / 2, y + sy / 2, z0 + sz)
    else:
        box_min = _vector(entry, "min", context)
        box_max = _vector(entry, "max", context)
    return Obstacle(
        name=str(entry.get("name", context.rsplit(": ", 1)[-1])),
        box_min=box_min,
        box_max=box_max,
        material=_material_ref(entry, materials, context, "human"),
        diffracting=bool(entry.get("diffracting", False)),
    )


def _transmitter(entry, context: str) -> TransmitterSpec:
    if not isinstance(entry, dict):
        raise SceneFormatError(f"{context}: must be an object")
    antenna_raw = entry.get("antenna", {})
    if not isinstance(antenna_raw, dict):
        raise SceneFormatError(f"{context}: field 'antenna' must be an object")
    try:
        antenna = AntennaPattern(
            kind=str(antenna_raw.get("kind", "isotropic")),
            peak_gain_dbi=float(antenna_raw.get("peak_gain_dbi", 0.0)),
        )
    except SceneValidationError as exc:
        raise SceneFormatError(f"{context}: {exc}") from exc
    try:
        power = float(_expect(entry, "power_dbm", (int, float), context))
        frequency = float(_expect(entry, "frequency_hz", (int, float), context))
    except TypeError as exc:
        raise SceneFormatError(f"{context}: {exc}") from exc
    return TransmitterSpec(
        position=_vector(entry, "position", context),
        power_dbm=power,
        frequency_hz=frequency,
        antenna=antenna,
    )


def validate_scene(scene: Scene) -> None:
    """Check structural invariants, raising with the offender's name."""
    if not np.all(scene.bounds_min < scene.bounds_max):
        raise SceneValidationError("bounds: min must be strictly below max on every axis")
    for label, obstacle in [("obstacles", o) for o in scene.obstacles] + [
        ("humans", h) for h in scene.humans
    ]:
        if not np.all(obstacle.box_min < obstacle.box_max):
            raise SceneValidationError(
                f"{label} entry {obstacle.name!r}: min must be strictly below max on every axis"
            )
        if np.any(obstacle.box_min < scene.bounds_min - 1e-9) or np.any(
            obstacle.box_max > scene.bounds_max + 1e-9
        ):
            raise SceneValidationError(
                f"{label} entry {obstacle.name!r}: box extends outside the scene bounds"
            )
    for k, tx in enumerate(scene.transmitters):
        if np.any(tx.position <= scene.bounds_min) or np.any(tx.position >= scene.bounds_max):
            raise SceneValidationError(
                f"transmitters[{k}]: position must lie strictly inside the scene bounds"
            )
        if tx.frequency_hz <= 0.0:
            raise SceneValidationError(f"transmitters[{k}]: frequency_hz must be positive")


def scene_to_dict(scene: Scene) -> dict:
    """Plain-dict form of a scene, inverse of :func:`scene_from_dict`."""
    used = {o.material.name for o in scene.all_obstacles}
    defaults = default_materials()
    materials = {}
    for name, mat in sorted(scene.materials.items()):
        if name in used or defaults.get(name) != mat:
            materials[name] = {"eps_r": mat.eps_r, "sigma": mat.sigma, "pec": mat.pec}

    def box(o: Obstacle) -> dict:
        return {
            "name": o.name,
            "min": list(o.box_min),
            "max": list(o.box_max),
            "material": o.material.name,
            "diffracting": o.diffracting,
        }

    return {
        "bounds": {"min": list(scene.bounds_min), "max": list(scene.bounds_max)},
        "materials": materials,
        "obstacles": [box(o) for o in scene.obstacles],
        "humans": [box(h) for h in scene.humans],
        "transmitters": [
            {
                "position": list(tx.position),
                "power_dbm": tx.power_dbm,
                "frequency_hz": tx.frequency_hz,
                "antenna": {
                    "kind": tx.antenna.kind,
                    "peak_gain_dbi": tx.antenna.peak_gain_dbi,
                },
            }
            for tx in scene.transmitters
        ],
    }


def save_scene(scene: Scene, path: str | Path) -> None:
    """Write a scene back to disk in canonical (sorted, indented) JSON."""
    Path(path).write_text(json.dumps(scene_to_dict(scene), indent=2, sort_keys=True) + "\n")
