"""Procedural ground-truth rooms standing in for a real furnished-room corpus.

Rooms are built directly on the pixel grid: object footprints are whole
pixels, so rasterizing a scene and extracting it again is lossless. Every
placement keeps objects disjoint, inside the floor, off doors/windows and
out of the door clearance zone, and keeps same-category objects at least
one pixel apart so they remain separate 4-connected components.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .assembly.catalog import Asset, AssetCatalog
from .errors import ConfigError, DataError, PlacementError
from .layout import (
    DOOR,
    FLOOR,
    ROOM_TYPES,
    VOID,
    WINDOW,
    ArchMask,
    CategoryPalette,
    ObjectInstance,
    SceneLayout,
    SemanticMap,
    map_from_dict,
    map_to_dict,
    save_map_png,
)

log = logging.getLogger(__name__)

DATASET_FORMAT = "scenemap-dataset"
SCENE_FORMAT = "scenemap-scene-record"
FORMAT_VERSION = 1
SPLITS = ("train", "val", "test")

# (width, height, depth) in meters; width/depth get snapped to whole pixels
NOMINAL_ASSETS = {
    "bed": [(1.6, 1.0, 2.0), (1.4, 0.9, 2.0), (1.8, 1.1, 2.1), (1.0, 0.7, 2.0)],
    "nightstand": [(0.45, 0.55, 0.45), (0.6, 0.5, 0.45)],
    "wardrobe": [(1.2, 2.0, 0.6), (1.6, 2.2, 0.6), (0.9, 1.9, 0.55)],
    "ceiling_lamp": [(0.45, 0.3, 0.45), (0.6, 0.4, 0.6), (0.3, 0.25, 0.3)],
    "dining_table": [(1.4, 0.75, 0.8), (1.6, 0.76, 0.9), (1.2, 0.74, 0.8), (0.9, 0.73, 0.9)],
    "dining_chair": [(0.45, 0.9, 0.45), (0.5, 0.95, 0.5)],
    "sofa": [(2.0, 0.8, 0.9), (1.8, 0.85, 0.85), (2.4, 0.75, 0.95)],
    "coffee_table": [(1.1, 0.45, 0.6), (0.9, 0.4, 0.5), (1.2, 0.5, 0.7)],
}

# probability tables over per-room object counts
COUNT_RULES = {
    "bedroom": {
        "bed": {1: 1.0},
        "nightstand": {0: 0.2, 1: 0.3, 2: 0.5},
        "wardrobe": {0: 0.4, 1: 0.6},
        "ceiling_lamp": {0: 0.3, 1: 0.7},
    },
    "living_room": {
        "sofa": {1: 1.0},
        "coffee_table": {0: 0.2, 1: 0.8},
        "wardrobe": {0: 0.6, 1: 0.4},
        "ceiling_lamp": {0: 0.3, 1: 0.7},
    },
    "dining_room": {
        "dining_table": {1: 1.0},
        "dining_chair": {2: 0.2, 3: 0.1, 4: 0.35, 5: 0.1, 6: 0.25},
        "wardrobe": {0: 0.7, 1: 0.3},
        "ceiling_lamp": {0: 0.3, 1: 0.7},
    },
}

ROOM_SIZES = {
    "bedroom": (3.0, 4.5),
    "living_room": (3.2, 4.5),
    "dining_room": (3.0, 4.4),
}

WINDOW_COUNTS = {0: 0.25, 1: 0.45, 2: 0.3}
LAMP_HEIGHT = (2.2, 2.5)
CLEARANCE = 1  # pixels between a bed and its nightstands, and a table and its chairs
MAX_ATTEMPTS = 100
MAX_FLOORS = 10


@dataclass(frozen=True)
class GrammarConfig:
    scale: float = 0.15
    canvas: tuple[int, int] = (32, 32)
    room_probs: tuple[float, ...] = (1 / 3, 1 / 3, 1 / 3)
    l_shape_prob: float = 0.3
    door_width: float = 0.9
    window_width: float = 1.2
    door_clearance: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "canvas", tuple(int(v) for v in self.canvas))
        object.__setattr__(self, "room_probs", tuple(float(v) for v in self.room_probs))
        if len(self.room_probs) != len(ROOM_TYPES) or abs(sum(self.room_probs) - 1) > 1e-9:
            raise ConfigError("room_probs must give one probability per room type, summing to 1")
        if self.scale <= 0:
            raise ConfigError("scale must be positive")

    def px(self, meters: float) -> int:
        return max(1, int(round(meters / self.scale)))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["canvas"] = list(self.canvas)
        d["room_probs"] = list(self.room_probs)
        return d

    def hash(self) -> str:
        blob = json.dumps({"config": self.to_dict(), "counts": _jsonable_rules(), "assets": NOMINAL_ASSETS,
                           "sizes": ROOM_SIZES}, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _jsonable_rules() -> dict:
    return {rt: {c: {str(k): p for k, p in tab.items()} for c, tab in rules.items()} for rt, rules in COUNT_RULES.items()}


def build_catalog(palette: CategoryPalette, grammar: GrammarConfig) -> AssetCatalog:
    """Synthetic asset sizes with footprints snapped to the grammar's pixel grid."""
    s = grammar.scale
    assets = []
    for name, sizes in NOMINAL_ASSETS.items():
        if name not in palette.names:
            continue
        cat = palette.index(name)
        seen = set()
        for w, h, d in sizes:
            snapped = (grammar.px(w) * s, float(h), grammar.px(d) * s)
            if snapped in seen:
                continue
            seen.add(snapped)
            assets.append(Asset(f"{name}_{len(seen) - 1:02d}", cat, snapped))
    return AssetCatalog(assets)


def expected_category_frequencies(palette: CategoryPalette, grammar: GrammarConfig) -> np.ndarray:
    """Analytic object-category frequencies implied by the count tables."""
    expected = np.zeros(palette.K)
    for prob, rt in zip(grammar.room_probs, ROOM_TYPES):
        for name, table in COUNT_RULES[rt].items():
            expected[palette.index(name)] += prob * sum(k * p for k, p in table.items())
    return expected / expected.sum()


@dataclass
class GeneratedScene:
    layout: SceneLayout
    arch: ArchMask
    boxes: list[tuple[int, int, int, int]] = field(default_factory=list)  # r0, c0, r1, c1 (exclusive)
    asset_ids: list[str] = field(default_factory=list)
    index: int = -1

    @property
    def room_type(self) -> int:
        return self.layout.room_type

    def instance_mask(self, i: int) -> np.ndarray:
        r0, c0, r1, c1 = self.boxes[i]
        m = np.zeros(self.layout.map.shape, dtype=bool)
        m[r0:r1, c0:c1] = True
        return m


# --- grid helpers --------------------------------------------------------


def _window_all_zero(grid: np.ndarray, h: int, w: int) -> np.ndarray:
    """Top-left positions whose h x w window of ``grid`` is all zero/False."""
    H, W = grid.shape
    if h > H or w > W:
        return np.zeros((0, 0), dtype=bool)
    return ~sliding_window_view(grid, (h, w)).any(axis=(-2, -1))


def _extents(asset: Asset, r: int, s: float) -> tuple[int, int]:
    """(rows, cols) covered by an asset at orientation r."""
    wx, dz = int(round(asset.size[0] / s)), int(round(asset.size[2] / s))
    return (dz, wx) if r % 2 == 0 else (wx, dz)


def _back_strip_void(floor: np.ndarray, r: int, h: int, w: int) -> np.ndarray:
    """For each top-left position, whether the strip behind the object is all void."""
    H, W = floor.shape
    void_p = np.pad(~floor, 1, constant_values=True)
    if r % 2 == 0:
        strip = sliding_window_view(void_p, (1, w)).all(axis=(-2, -1))
        row_off = -1 if r == 0 else h
        out = strip[row_off + 1: row_off + 1 + H - h + 1, 1: 1 + W - w + 1]
    else:
        strip = sliding_window_view(void_p, (h, 1)).all(axis=(-2, -1))
        col_off = -1 if r == 1 else w
        out = strip[1: 1 + H - h + 1, col_off + 1: col_off + 1 + W - w + 1]
    return out


class _Room:
    def __init__(self, floor: np.ndarray, grammar: GrammarConfig):
        self.grammar = grammar
        self.floor = floor
        self.cells = np.where(floor, FLOOR, VOID).astype(np.int64)
        self.blocked = ~floor.copy()
        self.placed: list[tuple[int, Asset, int, tuple[int, int, int, int], float]] = []

    def snapshot(self):
        return self.cells.copy(), self.blocked.copy()

    def restore(self, snap):
        self.cells, self.blocked = snap[0].copy(), snap[1].copy()
        self.placed = []

    def free_positions(self, cat: int, h: int, w: int) -> np.ndarray:
        ok = _window_all_zero(self.blocked, h, w)
        if ok.size == 0:
            return ok
        same = np.pad(self.cells == cat, 1)
        ok &= _window_all_zero(same, h + 2, w + 2)
        return ok

    def rect_ok(self, cat: int, r0: int, c0: int, h: int, w: int) -> bool:
        H, W = self.floor.shape
        if r0 < 0 or c0 < 0 or r0 + h > H or c0 + w > W:
            return False
        if self.blocked[r0:r0 + h, c0:c0 + w].any():
            return False
        same = self.cells == cat
        return not same[max(r0 - 1, 0):r0 + h + 1, max(c0 - 1, 0):c0 + w + 1].any()

    def put(self, cat: int, asset: Asset, r: int, r0: int, c0: int, h: int, w: int, p_y: float = 0.0):
        self.cells[r0:r0 + h, c0:c0 + w] = cat
        self.blocked[r0:r0 + h, c0:c0 + w] = True
        self.placed.append((cat, asset, r, (r0, c0, r0 + h, c0 + w), p_y))


def _sample_floor(grammar: GrammarConfig, room: str, rng) -> np.ndarray:
    H, W = grammar.canvas
    lo, hi = ROOM_SIZES[room]
    hpx = int(np.clip(grammar.px(rng.uniform(lo, hi)), 6, H - 2))
    wpx = int(np.clip(grammar.px(rng.uniform(lo, hi)), 6, W - 2))
    local = np.ones((hpx, wpx), dtype=bool)
    if rng.random() < grammar.l_shape_prob:
        ch = int(rng.integers(max(2, hpx // 4), hpx // 2 + 1))
        cw = int(rng.integers(max(2, wpx // 4), wpx // 2 + 1))
        corner = int(rng.integers(4))
        rs = slice(0, ch) if corner in (0, 1) else slice(hpx - ch, hpx)
        cs = slice(0, cw) if corner in (0, 2) else slice(wpx - cw, wpx)
        local[rs, cs] = False
    floor = np.zeros((H, W), dtype=bool)
    top, left = (H - hpx) // 2, (W - wpx) // 2
    floor[top:top + hpx, left:left + wpx] = local
    return floor


def _wall_runs(floor: np.ndarray) -> list[tuple[int, list[tuple[int, int]]]]:
    """Contiguous boundary runs as (inward direction class, cells).

    The direction class follows the orientation convention: a run on a wall
    whose inward normal is +z (rows increasing) gets class 0, +x gets 1, and so on.
    """
    void_p = np.pad(~floor, 1, constant_values=True)
    H, W = floor.shape
    runs = []
    # inward class, (dr, dc) to the void neighbour, whether the run walks along columns
    for cls, (dr, dc), along_cols in ((0, (-1, 0), True), (2, (1, 0), True), (1, (0, -1), False), (3, (0, 1), False)):
        edge = floor & void_p[1 + dr:1 + dr + H, 1 + dc:1 + dc + W]
        lines = range(H) if along_cols else range(W)
        for line in lines:
            vec = edge[line, :] if along_cols else edge[:, line]
            idx = np.flatnonzero(vec)
            if idx.size == 0:
                continue
            breaks = np.flatnonzero(np.diff(idx) > 1)
            for seg in np.split(idx, breaks + 1):
                cells = [(line, int(k)) if along_cols else (int(k), line) for k in seg]
                runs.append((cls, cells))
    return runs


def _place_openings(room: _Room, rng) -> bool:
    g = room.grammar
    runs = _wall_runs(room.floor)
    door_px, win_px = g.px(g.door_width), g.px(g.window_width)
    clear_px = int(np.ceil(g.door_clearance / g.scale - 1e-9))

    long_enough = [r for r in runs if len(r[1]) >= door_px + 2]
    if not long_enough:
        return False
    cls, cells = long_enough[int(rng.integers(len(long_enough)))]
    start = int(rng.integers(1, len(cells) - door_px))
    dr, dc = ((1, 0), (0, 1), (-1, 0), (0, -1))[cls]
    H, W = room.floor.shape
    for (r, c) in cells[start:start + door_px]:
        room.cells[r, c] = DOOR
        room.blocked[r, c] = True
        for k in range(1, clear_px + 1):
            rr, cc = r + dr * k, c + dc * k
            if 0 <= rr < H and 0 <= cc < W:
                room.blocked[rr, cc] = True

    n_win = int(rng.choice(list(WINDOW_COUNTS), p=list(WINDOW_COUNTS.values())))
    for _ in range(n_win):
        for _try in range(20):
            cand = [r for r in runs if len(r[1]) >= win_px + 2]
            if not cand:
                break
            _, cells = cand[int(rng.integers(len(cand)))]
            start = int(rng.integers(1, len(cells) - win_px))
            span = cells[start - 1:start + win_px + 1]
            if all(room.cells[r, c] == FLOOR for r, c in span):
                for (r, c) in cells[start:start + win_px]:
                    room.cells[r, c] = WINDOW
                    room.blocked[r, c] = True
                break
    return True


# --- object rules -------------------------------------------------------


def _pick(rng, options):
    return options[int(rng.integers(len(options)))]


def _place_against_wall(room: _Room, cat: int, asset: Asset, rng, p_y: float = 0.0) -> tuple | None:
    s = room.grammar.scale
    options = []
    for r in range(4):
        h, w = _extents(asset, r, s)
        ok = room.free_positions(cat, h, w)
        if ok.size == 0:
            continue
        ok &= _back_strip_void(room.floor, r, h, w)
        for r0, c0 in zip(*np.nonzero(ok)):
            options.append((r, int(r0), int(c0), h, w))
    if not options:
        return None
    r, r0, c0, h, w = _pick(rng, options)
    room.put(cat, asset, r, r0, c0, h, w, p_y)
    return r, r0, c0, h, w


def _place_anywhere(room: _Room, cat: int, asset: Asset, r: int, rng, p_y: float = 0.0) -> bool:
    h, w = _extents(asset, r, room.grammar.scale)
    ok = room.free_positions(cat, h, w)
    if ok.size == 0 or not ok.any():
        return False
    r0, c0 = _pick(rng, list(zip(*np.nonzero(ok))))
    room.put(cat, asset, r, int(r0), int(c0), h, w, p_y)
    return True


def _nightstand_slots(bed, nh: int, nw: int, gap: int = 0):
    r, r0, c0, h, w = bed
    if r == 0:
        return [(r0, c0 - nw - gap), (r0, c0 + w + gap)]
    if r == 2:
        return [(r0 + h - nh, c0 - nw - gap), (r0 + h - nh, c0 + w + gap)]
    if r == 1:
        return [(r0 - nh - gap, c0), (r0 + h + gap, c0)]
    return [(r0 - nh - gap, c0 + w - nw), (r0 + h + gap, c0 + w - nw)]


def _in_front(anchor, h2: int, w2: int, gap: int):
    """Top-left of a rectangle centered in front of ``anchor`` at ``gap`` pixels."""
    r, r0, c0, h, w = anchor
    if r == 0:
        return r0 + h + gap, c0 + (w - w2) // 2
    if r == 2:
        return r0 - gap - h2, c0 + (w - w2) // 2
    if r == 1:
        return r0 + (h - h2) // 2, c0 + w + gap
    return r0 + (h - h2) // 2, c0 - gap - w2


def _chair_slots(table, cs: int, n: int, rng, gap: int = 0):
    """Chair rectangles (r, r0, c0) around a table, facing its center, ``gap`` pixels out."""
    r0, c0, h, w = table
    along_cols = w >= h

    def side(which: str, k: int):
        # which: 'a' = lower-index long side, 'b' = higher-index long side
        if along_cols:
            base = (r0 - cs - gap, 0) if which == "a" else (r0 + h + gap, 2)
            length, start = w, c0
        else:
            base = (c0 - cs - gap, 1) if which == "a" else (c0 + w + gap, 3)
            length, start = h, r0
        if k == 1:
            offs = [start + (length - cs) // 2]
        else:
            span = 2 * cs + 1
            first = start + (length - span) // 2
            offs = [first, first + cs + 1]
        out = []
        for o in offs:
            if along_cols:
                out.append((base[1], base[0], o))
            else:
                out.append((base[1], o, base[0]))
        return out

    def end(which: str):
        if along_cols:
            rr = r0 + (h - cs) // 2
            return (1, rr, c0 - cs - gap) if which == "a" else (3, rr, c0 + w + gap)
        cc = c0 + (w - cs) // 2
        return (0, r0 - cs - gap, cc) if which == "a" else (2, r0 + h + gap, cc)

    per_long = {2: 1, 3: 1, 4: 2, 5: 2, 6: 2}[n]
    n_ends = n - 2 * per_long
    slots = side("a", per_long) + side("b", per_long)
    ends = ["a", "b"] if n_ends == 2 else ([_pick(rng, ["a", "b"])] if n_ends == 1 else [])
    slots += [end(e) for e in ends]
    return slots


def _plan_counts(room_type: str, rng) -> dict[str, int]:
    plan = {}
    for name, table in COUNT_RULES[room_type].items():
        ks = list(table)
        plan[name] = int(ks[int(rng.choice(len(ks), p=[table[k] for k in ks]))])
    return plan


def _furnish(room: _Room, room_type: str, plan: dict[str, int], palette: CategoryPalette,
             catalog: AssetCatalog, rng) -> bool:
    s = room.grammar.scale

    def asset_of(name):
        return _pick(rng, catalog.for_category(palette.index(name)))

    def wall_item(name):
        cat = palette.index(name)
        return _place_against_wall(room, cat, asset_of(name), rng)

    if room_type == "bedroom":
        bed = wall_item("bed")
        if bed is None:
            return False
        cat = palette.index("nightstand")
        ns = asset_of("nightstand")
        nh, nw = _extents(ns, bed[0], s)
        slots = _nightstand_slots(bed, nh, nw, CLEARANCE)
        if plan["nightstand"] == 1:
            slots = [_pick(rng, slots)]
        for (r0, c0) in slots[:plan["nightstand"]]:
            if not room.rect_ok(cat, r0, c0, nh, nw):
                return False
            room.put(cat, ns, bed[0], r0, c0, nh, nw)
    elif room_type == "living_room":
        sofa = wall_item("sofa")
        if sofa is None:
            return False
        if plan["coffee_table"]:
            cat = palette.index("coffee_table")
            ct = asset_of("coffee_table")
            h2, w2 = _extents(ct, sofa[0], s)
            r0, c0 = _in_front(sofa, h2, w2, int(rng.integers(2, 4)))
            if not room.rect_ok(cat, r0, c0, h2, w2):
                return False
            room.put(cat, ct, sofa[0], r0, c0, h2, w2)
    elif room_type == "dining_room":
        cat = palette.index("dining_table")
        tab = asset_of("dining_table")
        rows, cols = np.nonzero(room.floor)
        fh, fw = rows.max() - rows.min() + 1, cols.max() - cols.min() + 1
        r = 0 if fw > fh else 1 if fh > fw else int(rng.integers(2))
        h, w = _extents(tab, r, s)
        cr, cc = (rows.min() + rows.max() + 1) / 2, (cols.min() + cols.max() + 1) / 2
        jitters = [(int(a), int(b)) for a, b in rng.integers(-1, 2, size=(6, 2))] + [(0, 0)]
        for jr, jc in jitters:
            r0, c0 = int(round(cr - h / 2)) + jr, int(round(cc - w / 2)) + jc
            if room.rect_ok(cat, r0, c0, h, w):
                break
        else:
            return False
        room.put(cat, tab, r, r0, c0, h, w)
        ccat = palette.index("dining_chair")
        chair = asset_of("dining_chair")
        cs = int(round(chair.size[0] / s))
        for (rr, a0, b0) in _chair_slots((r0, c0, h, w), cs, plan["dining_chair"], rng, CLEARANCE):
            if not room.rect_ok(ccat, a0, b0, cs, cs):
                return False
            room.put(ccat, chair, rr, a0, b0, cs, cs)

    for _ in range(plan.get("wardrobe", 0)):
        if wall_item("wardrobe") is None:
            return False
    for _ in range(plan.get("ceiling_lamp", 0)):
        p_y = round(float(rng.uniform(*LAMP_HEIGHT)), 3)
        if not _place_anywhere(room, palette.index("ceiling_lamp"), asset_of("ceiling_lamp"), 0, rng, p_y):
            return False
    return True


def generate_scene(grammar: GrammarConfig, room_type, rng, palette: CategoryPalette | None = None,
                   catalog: AssetCatalog | None = None) -> GeneratedScene:
    """One furnished room; raises :class:`PlacementError` after ``MAX_FLOORS`` failed floors."""
    palette = palette or CategoryPalette.desk()
    catalog = catalog or build_catalog(palette, grammar)
    rt_name = ROOM_TYPES[room_type] if isinstance(room_type, (int, np.integer)) else room_type
    rt_index = ROOM_TYPES.index(rt_name)
    plan = _plan_counts(rt_name, rng)
    s = grammar.scale

    for _floor in range(MAX_FLOORS):
        room = _Room(_sample_floor(grammar, rt_name, rng), grammar)
        if not _place_openings(room, rng):
            continue
        snap = room.snapshot()
        for _attempt in range(MAX_ATTEMPTS):
            room.restore(snap)
            if _furnish(room, rt_name, plan, palette, catalog, rng):
                break
        else:
            continue
        smap = SemanticMap(room.cells, s)
        instances, boxes, ids = [], [], []
        for cat, asset, r, (r0, c0, r1, c1), p_y in room.placed:
            instances.append(ObjectInstance(cat, asset.size, ((c0 + c1) / 2 * s, p_y, (r0 + r1) / 2 * s), r))
            boxes.append((r0, c0, r1, c1))
            ids.append(asset.id)
        layout = SceneLayout(smap, tuple(instances), rt_index)
        return GeneratedScene(layout, ArchMask.from_map(smap), boxes, ids)
    raise PlacementError(f"could not furnish a {rt_name} after {MAX_FLOORS} floors")


def generate_corpus(n: int, seed: int, grammar: GrammarConfig | None = None,
                    palette: CategoryPalette | None = None) -> list[GeneratedScene]:
    """``n`` scenes, each from its own ``default_rng([seed, index])`` stream."""
    grammar = grammar or GrammarConfig()
    palette = palette or CategoryPalette.desk()
    catalog = build_catalog(palette, grammar)
    out = []
    for i in range(n):
        rng = np.random.default_rng([seed, i])
        rt = int(rng.choice(len(ROOM_TYPES), p=grammar.room_probs))
        scene = generate_scene(grammar, rt, rng, palette, catalog)
        scene.index = i
        out.append(scene)
    return out


def split_counts(n: int, ratios: Sequence[float] = (0.7, 0.1, 0.2)) -> tuple[int, int, int]:
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ConfigError("split ratios must sum to 1")
    n_train = int(round(n * ratios[0]))
    n_val = int(round(n * ratios[1]))
    return n_train, n_val, n - n_train - n_val


def split_indices(n: int, seed: int, ratios: Sequence[float] = (0.7, 0.1, 0.2)) -> dict[str, list[int]]:
    perm = np.random.default_rng([seed, 2**31 - 1]).permutation(n)
    a, b, _ = split_counts(n, ratios)
    return {
        "train": sorted(perm[:a].tolist()),
        "val": sorted(perm[a:a + b].tolist()),
        "test": sorted(perm[a + b:].tolist()),
    }


# --- on-disk dataset ----------------------------------------------------


def scene_to_dict(scene: GeneratedScene, palette: CategoryPalette) -> dict:
    insts = []
    for inst, box, aid in zip(scene.layout.instances, scene.boxes, scene.asset_ids):
        insts.append({
            "category": inst.category,
            "name": palette.names[inst.category],
            "asset_id": aid,
            "size": list(inst.size),
            "position": list(inst.position),
            "orientation": inst.orientation,
            "bbox_px": list(box),
        })
    return {
        "format": SCENE_FORMAT,
        "version": FORMAT_VERSION,
        "index": scene.index,
        "room_type": ROOM_TYPES[scene.room_type],
        "map": map_to_dict(scene.layout.map, palette.K),
        "arch_mask": scene.arch.cells.reshape(-1).tolist(),
        "instances": insts,
    }


def scene_from_dict(d: dict) -> GeneratedScene:
    if d.get("format") != SCENE_FORMAT or d.get("version") != FORMAT_VERSION:
        raise DataError("not a scene record")
    smap = map_from_dict(d["map"])
    arch = ArchMask(np.asarray(d["arch_mask"], dtype=np.int64).reshape(smap.shape))
    insts = [ObjectInstance(e["category"], tuple(e["size"]), tuple(e["position"]), e["orientation"])
             for e in d["instances"]]
    layout = SceneLayout(smap, tuple(insts), ROOM_TYPES.index(d["room_type"]))
    return GeneratedScene(layout, arch, [tuple(e["bbox_px"]) for e in d["instances"]],
                          [e["asset_id"] for e in d["instances"]], d["index"])


def build_dataset(root, n: int, seed: int, grammar: GrammarConfig | None = None,
                  palette: CategoryPalette | None = None, ratios=(0.7, 0.1, 0.2)) -> dict:
    if n <= 0:
        raise ConfigError("dataset needs at least one scene")
    grammar = grammar or GrammarConfig()
    palette = palette or CategoryPalette.desk()
    root = Path(root)
    scenes = generate_corpus(n, seed, grammar, palette)
    splits = split_indices(n, seed, ratios)
    for name, idxs in splits.items():
        d = root / "splits" / name
        d.mkdir(parents=True, exist_ok=True)
        for i in idxs:
            sc = scenes[i]
            save_map_png(sc.layout.map, palette, d / f"scene_{i:06d}.png")
            (d / f"scene_{i:06d}.json").write_text(json.dumps(scene_to_dict(sc, palette)))
    build_catalog(palette, grammar).save(root / "catalog.json")
    manifest = {
        "format": DATASET_FORMAT,
        "version": FORMAT_VERSION,
        "seed": seed,
        "counts": {k: len(v) for k, v in splits.items()},
        "ratios": list(ratios),
        "palette": list(palette.names),
        "palette_hash": palette.hash(),
        "grammar": grammar.to_dict(),
        "grammar_hash": grammar.hash(),
    }
    (root / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True))
    return manifest


def load_manifest(root) -> dict:
    path = Path(root) / "manifest.json"
    if not path.exists():
        raise DataError(f"no dataset manifest at {path}")
    m = json.loads(path.read_text())
    if m.get("format") != DATASET_FORMAT or m.get("version") != FORMAT_VERSION:
        raise DataError(f"{path} is not a dataset manifest")
    return m


def load_split(root, split: str) -> list[GeneratedScene]:
    load_manifest(root)
    d = Path(root) / "splits" / split
    if not d.is_dir():
        raise DataError(f"missing split directory {d}")
    return [scene_from_dict(json.loads(p.read_text())) for p in sorted(d.glob("scene_*.json"))]


def dataset_grammar(manifest: dict) -> GrammarConfig:
    return GrammarConfig(**manifest["grammar"])


def dataset_palette(manifest: dict) -> CategoryPalette:
    return CategoryPalette(tuple(manifest["palette"]))
