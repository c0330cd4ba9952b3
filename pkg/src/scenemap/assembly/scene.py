from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

import jsonschema
import numpy as np

from ..errors import DataError, RetrievalError
from .catalog import AssetCatalog, retrieve_asset
from .geometry import (
    DOOR_HEIGHT,
    WALL_HEIGHT,
    WINDOW_SPAN,
    Opening,
    RoomMesh,
    build_room_mesh,
    floor_polygon_from_mask,
    openings_from_mask,
)

SCENE_FORMAT = "scenemap-scene"
SCENE_VERSION = 1

# cos / sin of r * 90 degrees
_COS = (1, 0, -1, 0)
_SIN = (0, 1, 0, -1)


@dataclass(frozen=True)
class Placement:
    asset_id: str
    category: int
    position: tuple[float, float, float]  # footprint centre x, bottom y, footprint centre z
    orientation: int
    size: tuple[float, float, float]  # local (width, height, depth)


@dataclass
class Scene3D:
    room: RoomMesh
    placements: list[Placement] = field(default_factory=list)
    failures: list[tuple[int, str]] = field(default_factory=list)
    room_type: int = 0


def local_size(footprint: tuple[float, float], s_y: float, r: int) -> tuple[float, float, float]:
    """Local (width, height, depth) whose rotation by class ``r`` covers ``footprint`` (x extent, z extent)."""
    fx, fz = footprint
    return (fx, s_y, fz) if r % 2 == 0 else (fz, s_y, fx)


def rotate(local_xz: np.ndarray, r: int) -> np.ndarray:
    """Rotate local (x, z) offsets by r * 90 degrees about +y; r = 1 turns +z into +x."""
    c, s = _COS[r % 4], _SIN[r % 4]
    x, z = local_xz[..., 0], local_xz[..., 1]
    return np.stack([c * x + s * z, -s * x + c * z], axis=-1)


def footprint_corners(p: Placement) -> np.ndarray:
    """World (x, z) corners of the rotated footprint, (4, 2)."""
    w, _, d = p.size
    local = np.array([[-w / 2, -d / 2], [w / 2, -d / 2], [w / 2, d / 2], [-w / 2, d / 2]])
    return rotate(local, p.orientation) + np.array([p.position[0], p.position[2]])


def footprint_extent(p: Placement) -> tuple[float, float, float, float]:
    """Axis-aligned (x0, z0, x1, z1) of the footprint."""
    c = footprint_corners(p)
    return float(c[:, 0].min()), float(c[:, 1].min()), float(c[:, 0].max()), float(c[:, 1].max())


def room_from_mask(cells, scale: float, wall_height: float = WALL_HEIGHT, door_height: float = DOOR_HEIGHT,
                   window_span=WINDOW_SPAN) -> RoomMesh:
    poly = floor_polygon_from_mask(cells, scale)
    doors, windows = openings_from_mask(cells, scale, poly)
    return build_room_mesh(poly, doors, windows, wall_height, door_height, window_span)


def assemble_scene(instances: Sequence, predictions: Sequence, catalog: AssetCatalog, room_cells, scale: float,
                   rescale: bool = False, room_type: int = 0, **room_kw) -> Scene3D:
    """Retrieve and place one asset per extracted instance inside a room built from ``room_cells``.

    ``predictions`` hold ``s_y``, ``p_y`` and ``orientation`` per instance.
    Retrieval failures are recorded in ``Scene3D.failures`` and skipped.
    """
    if len(instances) != len(predictions):
        raise DataError("need one attribute prediction per instance")
    scene = Scene3D(room_from_mask(room_cells, scale, **room_kw), room_type=room_type)
    for i, (inst, pred) in enumerate(zip(instances, predictions)):
        r = int(pred.orientation)
        want = local_size(inst.footprint, float(pred.s_y), r)
        try:
            aid = retrieve_asset(catalog, inst.category, want)
        except RetrievalError as exc:
            scene.failures.append((i, str(exc)))
            continue
        size = want if rescale else catalog[aid].size
        pos = (float(inst.center[0]), float(pred.p_y), float(inst.center[1]))
        scene.placements.append(Placement(aid, inst.category, pos, r, tuple(float(v) for v in size)))
    return scene


# -- export ----------------------------------------------------------------


def scene_schema() -> dict:
    return json.loads(resources.files("scenemap").joinpath("schemas/scene.schema.json").read_text())


def scene_to_json(scene: Scene3D) -> dict:
    room = scene.room
    return {
        "format": SCENE_FORMAT,
        "version": SCENE_VERSION,
        "room_type": scene.room_type,
        "room": {
            "polygon": room.polygon.tolist(),
            "wall_height": room.wall_height,
            "door_height": room.door_height,
            "window_span": list(room.window_span),
            "openings": [{"kind": o.kind, "edge": o.edge, "start": o.start, "end": o.end} for o in room.openings],
        },
        "placements": [
            {"asset_id": p.asset_id, "category": p.category, "position": list(p.position),
             "orientation": p.orientation, "size": list(p.size)}
            for p in scene.placements
        ],
        "failures": [{"index": i, "reason": msg} for i, msg in scene.failures],
    }


def scene_from_json(d: dict, validate: bool = True) -> Scene3D:
    if validate:
        try:
            jsonschema.validate(d, scene_schema())
        except jsonschema.ValidationError as exc:
            raise DataError(f"scene record does not match the schema: {exc.message}") from exc
    r = d["room"]
    ops = [Opening(o["kind"], o["edge"], o["start"], o["end"]) for o in r["openings"]]
    mesh = build_room_mesh(
        np.array(r["polygon"], dtype=np.float64),
        [o for o in ops if o.kind == "door"],
        [o for o in ops if o.kind == "window"],
        r["wall_height"], r["door_height"], tuple(r["window_span"]),
    )
    placements = [
        Placement(p["asset_id"], p["category"], tuple(p["position"]), p["orientation"], tuple(p["size"]))
        for p in d["placements"]
    ]
    failures = [(f["index"], f["reason"]) for f in d.get("failures", [])]
    return Scene3D(mesh, placements, failures, d.get("room_type", 0))


def _cube(p: Placement) -> tuple[np.ndarray, list[tuple[int, int, int]]]:
    c = footprint_corners(p)
    y0, y1 = p.position[1], p.position[1] + p.size[1]
    verts = np.array([[x, y0, z] for x, z in c] + [[x, y1, z] for x, z in c])
    faces = [(0, 2, 1), (0, 3, 2), (4, 5, 6), (4, 6, 7)]
    for k in range(4):
        a, b = k, (k + 1) % 4
        faces += [(a, b, b + 4), (a, b + 4, a + 4)]
    return verts, faces


def scene_to_obj(scene: Scene3D) -> str:
    lines = ["# scenemap room mesh with proxy boxes", "o room"]
    lines += [f"v {x:.6f} {y:.6f} {z:.6f}" for x, y, z in scene.room.vertices]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in scene.room.triangles]
    base = len(scene.room.vertices)
    for i, p in enumerate(scene.placements):
        verts, faces = _cube(p)
        lines.append(f"o {i:03d}_{p.asset_id}")
        lines += [f"v {x:.6f} {y:.6f} {z:.6f}" for x, y, z in verts]
        lines += [f"f {a + base + 1} {b + base + 1} {c + base + 1}" for a, b, c in faces]
        base += 8
    return "\n".join(lines) + "\n"


def export_scene(scene: Scene3D, path, fmt: str | None = None) -> Path:
    path = Path(path)
    fmt = fmt or path.suffix.lstrip(".").lower()
    if fmt == "json":
        path.write_text(json.dumps(scene_to_json(scene), indent=1))
    elif fmt == "obj":
        path.write_text(scene_to_obj(scene))
    else:
        raise DataError(f"unknown export format {fmt!r}")
    return path


def import_scene(path) -> Scene3D:
    return scene_from_json(json.loads(Path(path).read_text()))
