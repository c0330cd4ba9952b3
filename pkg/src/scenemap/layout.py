"""Semantic maps, room masks, object instances and the grid/world conventions.

Conventions used throughout the package:

* index 0..3 are reserved for void, floor, door and window; object
  categories start at 4.
* rows map to world ``z`` and columns to world ``x``; the floor is ``y = 0``.
* a cell ``(row, col)`` covers ``[col*s, (col+1)*s) x [row*s, (row+1)*s)``
  and is represented by its center.
* orientation class ``r`` rotates the object's local front axis (+z) by
  ``r * 90`` degrees about +y, so r=0 faces +z, 1 faces +x, 2 faces -z and
  3 faces -x.
"""

from __future__ import annotations

import colorsys
import enum
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import CategoryError, ConfigError, DataError, DimensionError

VOID, FLOOR, DOOR, WINDOW = 0, 1, 2, 3
RESERVED = ("void", "floor", "door", "window")
FIRST_OBJECT = 4

ROOM_TYPES = ("bedroom", "living_room", "dining_room")

MAP_FORMAT = "scenemap-semantic-map"
MAP_VERSION = 1

DESK_OBJECTS = (
    "bed",
    "nightstand",
    "wardrobe",
    "ceiling_lamp",
    "dining_table",
    "dining_chair",
    "sofa",
    "coffee_table",
)

FULL_OBJECTS = (
    "kids_bed", "single_bed", "double_bed", "corner_side_table",
    "round_end_table", "coffee_table", "console_table", "tv_stand", "desk",
    "dressing_table", "table", "dining_table", "stool", "dressing_chair",
    "dining_chair", "chinese_chair", "armchair", "chair", "lounge_chair",
    "loveseat_sofa", "lazy_sofa", "sofa", "multi_seat_sofa",
    "chaise_longue_sofa", "l_shaped_sofa", "nightstand", "shelf", "bookshelf",
    "children_cabinet", "wine_cabinet", "cabinet", "wardrobe", "pendant_lamp",
    "ceiling_lamp",
)

# front direction (dx, dz) for each orientation class
ORIENTATION_DIRECTIONS = ((0, 1), (1, 0), (0, -1), (-1, 0))


def _reserved_colors() -> list[tuple[int, int, int]]:
    return [(0, 0, 0), (200, 200, 200), (140, 90, 40), (80, 160, 230)]


@dataclass(frozen=True)
class CategoryPalette:
    names: tuple[str, ...]

    def __post_init__(self):
        names = tuple(self.names)
        object.__setattr__(self, "names", names)
        if len(names) < FIRST_OBJECT + 1:
            raise ConfigError(f"palette needs at least 5 categories, got {len(names)}")
        if len(set(names)) != len(names):
            raise ConfigError("palette names must be unique")
        if names[:FIRST_OBJECT] != RESERVED:
            raise ConfigError(f"reserved categories must come first as {RESERVED}")

    @classmethod
    def from_objects(cls, objects: Sequence[str]) -> "CategoryPalette":
        return cls(RESERVED + tuple(objects))

    @classmethod
    def desk(cls) -> "CategoryPalette":
        return cls.from_objects(DESK_OBJECTS)

    @classmethod
    def full(cls) -> "CategoryPalette":
        return cls.from_objects(FULL_OBJECTS)

    @property
    def K(self) -> int:
        return len(self.names)

    @property
    def object_indices(self) -> range:
        return range(FIRST_OBJECT, self.K)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise CategoryError(f"unknown category {name!r}") from None

    @property
    def colors(self) -> np.ndarray:
        """(K, 3) uint8 colors; reserved ones fixed, objects spread by golden-ratio hue."""
        cols = _reserved_colors()
        for i in range(self.K - FIRST_OBJECT):
            hue = (0.61803398875 * i) % 1.0
            r, g, b = colorsys.hsv_to_rgb(hue, 0.75, 0.95)
            cols.append((int(round(r * 255)), int(round(g * 255)), int(round(b * 255))))
        return np.array(cols, dtype=np.uint8)

    def hash(self) -> str:
        return hashlib.sha256("\n".join(self.names).encode()).hexdigest()[:16]


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class SemanticMap:
    cells: np.ndarray
    scale: float

    def __post_init__(self):
        cells = np.asarray(self.cells)
        if cells.ndim != 2 or cells.shape[0] < 1 or cells.shape[1] < 1:
            raise DimensionError(f"semantic map must be a non-empty 2D grid, got shape {cells.shape}")
        if not np.issubdtype(cells.dtype, np.integer):
            raise DataError("semantic map cells must be integer category indices")
        if cells.min() < 0:
            raise CategoryError("negative category index in semantic map")
        if not self.scale > 0:
            raise ConfigError("scale must be positive")
        object.__setattr__(self, "cells", _frozen(cells.astype(np.int64)))
        object.__setattr__(self, "scale", float(self.scale))

    @property
    def height(self) -> int:
        return self.cells.shape[0]

    @property
    def width(self) -> int:
        return self.cells.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.cells.shape

    def check_palette(self, K: int) -> None:
        if self.cells.max() >= K:
            raise CategoryError(f"cell index {int(self.cells.max())} outside palette of size {K}")

    def __eq__(self, other):
        if not isinstance(other, SemanticMap):
            return NotImplemented
        return self.scale == other.scale and np.array_equal(self.cells, other.cells)

    def __hash__(self):
        return hash((self.cells.tobytes(), self.cells.shape, self.scale))


@dataclass(frozen=True, eq=False)
class ArchMask:
    """Room mask over {void, floor, door, window}; a floor mask only uses {0, 1}."""

    cells: np.ndarray

    def __post_init__(self):
        cells = np.asarray(self.cells)
        if cells.ndim != 2:
            raise DimensionError("arch mask must be 2D")
        if cells.size and (cells.min() < 0 or cells.max() > WINDOW):
            raise CategoryError("arch mask values must lie in {0,1,2,3}")
        object.__setattr__(self, "cells", _frozen(cells.astype(np.int64)))

    @property
    def shape(self) -> tuple[int, int]:
        return self.cells.shape

    @classmethod
    def zeros(cls, shape: tuple[int, int]) -> "ArchMask":
        return cls(np.zeros(shape, dtype=np.int64))

    @classmethod
    def from_map(cls, smap: SemanticMap) -> "ArchMask":
        """Architecture of a full map: objects sit on floor, door/window kept."""
        c = smap.cells
        out = np.where(c >= FIRST_OBJECT, FLOOR, c)
        return cls(out)

    def floor_mask(self) -> "ArchMask":
        return ArchMask((self.cells != VOID).astype(np.int64))

    @property
    def is_binary(self) -> bool:
        return bool(self.cells.max(initial=0) <= FLOOR)

    def has_floor(self) -> bool:
        return bool((self.cells != VOID).any())

    def __eq__(self, other):
        if not isinstance(other, ArchMask):
            return NotImplemented
        return np.array_equal(self.cells, other.cells)

    def __hash__(self):
        return hash((self.cells.tobytes(), self.cells.shape))


class ConditionKind(enum.IntEnum):
    NONE = 0
    FLOOR = 1
    ARCH = 2

    @classmethod
    def parse(cls, value) -> "ConditionKind":
        if isinstance(value, ConditionKind):
            return value
        if isinstance(value, str):
            try:
                return cls[value.upper()]
            except KeyError:
                raise ConfigError(f"unknown condition kind {value!r}") from None
        return cls(int(value))


@dataclass(frozen=True)
class ConditionSpec:
    kind: ConditionKind
    mask: ArchMask
    room_type: int

    def __post_init__(self):
        kind = ConditionKind.parse(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind == ConditionKind.NONE and self.mask.cells.any():
            raise ConfigError("condition kind 'none' requires an all-zero mask")
        if kind == ConditionKind.FLOOR and not self.mask.is_binary:
            raise ConfigError("condition kind 'floor' requires a binary mask")
        if kind != ConditionKind.NONE and not self.mask.has_floor():
            raise ConfigError("a floor/arch condition needs at least one floor cell")
        if not 0 <= int(self.room_type) < len(ROOM_TYPES):
            raise ConfigError(f"room type index {self.room_type} out of range")
        object.__setattr__(self, "room_type", int(self.room_type))

    @classmethod
    def from_arch(cls, arch: ArchMask, kind, room_type: int) -> "ConditionSpec":
        """Build the mask matching ``kind`` from a ground-truth arch mask."""
        kind = ConditionKind.parse(kind)
        if kind == ConditionKind.NONE:
            mask = ArchMask.zeros(arch.shape)
        elif kind == ConditionKind.FLOOR:
            mask = arch.floor_mask()
        else:
            mask = arch
        return cls(kind, mask, room_type)


@dataclass(frozen=True)
class ObjectInstance:
    category: int
    size: tuple[float, float, float]
    position: tuple[float, float, float]
    orientation: int

    def __post_init__(self):
        if self.category < FIRST_OBJECT:
            raise CategoryError(f"object category must be >= {FIRST_OBJECT}")
        size = tuple(float(v) for v in self.size)
        if len(size) != 3 or min(size) <= 0:
            raise DataError(f"object size must be three positive extents, got {self.size}")
        if int(self.orientation) not in (0, 1, 2, 3):
            raise DataError(f"orientation class must be in 0..3, got {self.orientation}")
        object.__setattr__(self, "category", int(self.category))
        object.__setattr__(self, "size", size)
        object.__setattr__(self, "position", tuple(float(v) for v in self.position))
        object.__setattr__(self, "orientation", int(self.orientation))


@dataclass(frozen=True)
class SceneLayout:
    map: SemanticMap
    instances: tuple[ObjectInstance, ...] = field(default_factory=tuple)
    room_type: int = 0

    def __post_init__(self):
        object.__setattr__(self, "instances", tuple(self.instances))
        present = set(np.unique(self.map.cells).tolist())
        for inst in self.instances:
            if inst.category not in present:
                raise DataError(f"instance category {inst.category} does not appear in the map")


def pad_to_canvas(smap: SemanticMap, target_h: int, target_w: int) -> SemanticMap:
    """Center ``smap`` on a void canvas; the top/left margin is floor(margin / 2)."""
    h, w = smap.shape
    if target_h < h or target_w < w:
        raise DimensionError(f"cannot pad {h}x{w} map into {target_h}x{target_w}")
    top, left = (target_h - h) // 2, (target_w - w) // 2
    out = np.full((target_h, target_w), VOID, dtype=np.int64)
    out[top:top + h, left:left + w] = smap.cells
    return SemanticMap(out, smap.scale)


def canvas_offset(shape: tuple[int, int], target_h: int, target_w: int) -> tuple[int, int]:
    return (target_h - shape[0]) // 2, (target_w - shape[1]) // 2


def pixel_to_world(row: int, col: int, smap: SemanticMap) -> tuple[float, float]:
    if not (0 <= row < smap.height and 0 <= col < smap.width):
        raise IndexError(f"cell ({row}, {col}) outside {smap.height}x{smap.width} map")
    return (col + 0.5) * smap.scale, (row + 0.5) * smap.scale


def world_to_pixel(x: float, z: float, smap: SemanticMap) -> tuple[int, int]:
    row, col = int(np.floor(z / smap.scale)), int(np.floor(x / smap.scale))
    if not (0 <= row < smap.height and 0 <= col < smap.width):
        raise IndexError(f"world point ({x}, {z}) falls outside the map")
    return row, col


def one_hot(cells, K: int, dtype=np.float64) -> np.ndarray:
    """Per-pixel one-hot encoding with the category axis last."""
    if isinstance(cells, SemanticMap):
        cells = cells.cells
    cells = np.asarray(cells)
    if cells.size and (cells.min() < 0 or cells.max() >= K):
        raise CategoryError(f"category index outside 0..{K - 1}")
    return np.eye(K, dtype=dtype)[cells]


# --- serialization -------------------------------------------------------


def map_to_dict(smap: SemanticMap, K: int) -> dict:
    smap.check_palette(K)
    return {
        "format": MAP_FORMAT,
        "version": MAP_VERSION,
        "K": int(K),
        "scale": smap.scale,
        "H": smap.height,
        "W": smap.width,
        "cells": smap.cells.reshape(-1).tolist(),
    }


def map_from_dict(d: dict) -> SemanticMap:
    if d.get("format") != MAP_FORMAT or d.get("version") != MAP_VERSION:
        raise DataError(f"not a version-{MAP_VERSION} semantic map record")
    cells = np.asarray(d["cells"], dtype=np.int64).reshape(d["H"], d["W"])
    smap = SemanticMap(cells, d["scale"])
    smap.check_palette(d["K"])
    return smap


def save_map_json(smap: SemanticMap, K: int, path) -> None:
    Path(path).write_text(json.dumps(map_to_dict(smap, K)))


def load_map_json(path) -> SemanticMap:
    return map_from_dict(json.loads(Path(path).read_text()))


def save_map_png(smap: SemanticMap, palette: CategoryPalette, path) -> None:
    from PIL import Image

    smap.check_palette(palette.K)
    if palette.K > 256:
        raise ConfigError("indexed PNG supports at most 256 categories")
    img = Image.fromarray(smap.cells.astype(np.uint8), mode="P")
    img.putpalette(palette.colors.reshape(-1).tolist())
    img.save(path, format="PNG", optimize=False)


def load_map_png(path, scale: float) -> SemanticMap:
    from PIL import Image

    with Image.open(path) as img:
        if img.mode != "P":
            raise DataError(f"{path} is not an indexed PNG")
        return SemanticMap(np.asarray(img, dtype=np.int64), scale)


def render_rgb(smap: SemanticMap, palette: CategoryPalette) -> np.ndarray:
    smap.check_palette(palette.K)
    return palette.colors[smap.cells]
