"""Floor polygons traced from masks and extruded room meshes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from ..errors import GeometryError
from ..layout import DOOR, VOID, WINDOW

WALL_HEIGHT = 3.0
DOOR_HEIGHT = 2.0
WINDOW_SPAN = (0.5, 2.0)
TOL = 1e-9
FOUR_CONNECTED = ndimage.generate_binary_structure(2, 1)

# (dx, dz) unit steps; turning left from direction k gives (k + 1) % 4
_DIRS = ((1, 0), (0, 1), (-1, 0), (0, -1))


def _largest_region(region: np.ndarray) -> np.ndarray:
    labels, n = ndimage.label(region, structure=FOUR_CONNECTED)
    if n == 0:
        raise GeometryError("mask has no floor pixels")
    sizes = ndimage.sum_labels(np.ones_like(labels), labels, index=np.arange(1, n + 1))
    return labels == (int(np.argmax(sizes)) + 1)


def _boundary_edges(region: np.ndarray) -> dict[tuple[int, int], list[tuple[int, int]]]:
    """Directed unit edges with the region on the left, keyed by start vertex (x, z)."""
    padded = np.pad(region, 1)
    inner = padded[1:-1, 1:-1]
    out: dict[tuple[int, int], list[tuple[int, int]]] = {}

    def add(mask, fn):
        for r, c in zip(*np.nonzero(mask)):
            a, b = fn(int(r), int(c))
            out.setdefault(a, []).append(b)

    add(inner & ~padded[:-2, 1:-1], lambda r, c: ((c, r), (c + 1, r)))
    add(inner & ~padded[2:, 1:-1], lambda r, c: ((c + 1, r + 1), (c, r + 1)))
    add(inner & ~padded[1:-1, :-2], lambda r, c: ((c, r + 1), (c, r)))
    add(inner & ~padded[1:-1, 2:], lambda r, c: ((c + 1, r), (c + 1, r + 1)))
    return out


def _direction(a, b) -> int:
    return _DIRS.index((int(np.sign(b[0] - a[0])), int(np.sign(b[1] - a[1]))))


def _trace_loops(edges: dict) -> list[list[tuple[int, int]]]:
    edges = {k: sorted(v) for k, v in edges.items()}
    loops = []
    for start in sorted(edges):
        while edges.get(start):
            loop = [start]
            prev_dir = None
            cur = start
            while True:
                options = edges[cur]
                if prev_dir is None or len(options) == 1:
                    nxt = options[0]
                else:
                    # at a pinch vertex keep hugging the current cell: left turn first
                    pref = [(prev_dir + 1) % 4, prev_dir, (prev_dir + 3) % 4]
                    nxt = min(options, key=lambda b: pref.index(_direction(cur, b)) if _direction(cur, b) in pref else 3)
                options.remove(nxt)
                prev_dir = _direction(cur, nxt)
                cur = nxt
                if cur == start:
                    break
                loop.append(cur)
            loops.append(loop)
    return loops


def _merge_collinear(loop: list[tuple[int, int]]) -> list[tuple[int, int]]:
    n = len(loop)
    keep = []
    for i in range(n):
        a, b, c = loop[i - 1], loop[i], loop[(i + 1) % n]
        if _direction(a, b) != _direction(b, c):
            keep.append(b)
    return keep


def polygon_area(poly: np.ndarray) -> float:
    """Signed shoelace area in the (x, z) plane; positive for counter-clockwise."""
    p = np.asarray(poly, dtype=np.float64)
    x, z = p[:, 0], p[:, 1]
    return 0.5 * float(np.sum(x * np.roll(z, -1) - np.roll(x, -1) * z))


def floor_polygon_from_mask(cells, scale: float) -> np.ndarray:
    """Counter-clockwise rectilinear outline (n, 2) in meters of the largest non-void region.

    Vertices are (x, z) with x along columns and z along rows; the first vertex
    is the smallest by (z, x). Interior holes are filled before tracing.
    """
    cells = np.asarray(getattr(cells, "cells", cells))
    region = ndimage.binary_fill_holes(_largest_region(cells != VOID), structure=FOUR_CONNECTED)
    loops = _trace_loops(_boundary_edges(region))
    best = max(loops, key=lambda lp: polygon_area(np.array(lp)))
    verts = _merge_collinear(best)
    i0 = min(range(len(verts)), key=lambda i: (verts[i][1], verts[i][0]))
    verts = verts[i0:] + verts[:i0]
    return np.array(verts, dtype=np.float64) * float(scale)


def point_in_polygon(points, poly: np.ndarray, tol: float = 1e-6) -> np.ndarray:
    """True for points inside or within ``tol`` of the boundary."""
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    poly = np.asarray(poly, dtype=np.float64)
    if len(poly) < 3 or abs(polygon_area(poly)) <= TOL:
        raise GeometryError("degenerate floor polygon")
    a = poly
    b = np.roll(poly, -1, axis=0)
    px, pz = pts[:, 0:1], pts[:, 1:2]
    ax, az, bx, bz = a[:, 0], a[:, 1], b[:, 0], b[:, 1]
    crosses = (az > pz) != (bz > pz)
    with np.errstate(divide="ignore", invalid="ignore"):
        xint = ax + (pz - az) * (bx - ax) / (bz - az)
    inside = (crosses & (px < xint)).sum(axis=1) % 2 == 1
    # distance to boundary segments
    ab = b - a
    L2 = (ab ** 2).sum(axis=1)
    t = np.clip(((px - ax) * ab[:, 0] + (pz - az) * ab[:, 1]) / np.where(L2 > 0, L2, 1), 0, 1)
    dx = px - (ax + t * ab[:, 0])
    dz = pz - (az + t * ab[:, 1])
    near = (np.sqrt(dx ** 2 + dz ** 2) <= tol).any(axis=1)
    return inside | near


@dataclass(frozen=True)
class Opening:
    kind: str  # "door" or "window"
    edge: int  # polygon edge index, edge i runs from vertex i to vertex i+1
    start: float  # meters along the edge from its first vertex
    end: float

    @property
    def width(self) -> float:
        return self.end - self.start


@dataclass
class RoomMesh:
    vertices: np.ndarray  # (n, 3) x, y, z meters
    triangles: np.ndarray  # (m, 3) vertex indices
    tags: np.ndarray  # (m,) 0 floor, 1 wall
    polygon: np.ndarray
    wall_height: float
    openings: list[Opening]
    door_height: float = DOOR_HEIGHT
    window_span: tuple[float, float] = WINDOW_SPAN

    def _areas(self) -> np.ndarray:
        v = self.vertices[self.triangles]
        return 0.5 * np.linalg.norm(np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]), axis=1)

    def floor_area(self) -> float:
        return float(self._areas()[self.tags == 0].sum())

    def wall_area(self) -> float:
        return float(self._areas()[self.tags == 1].sum())


class _VertexPool:
    def __init__(self):
        self.index: dict[tuple[float, float, float], int] = {}
        self.coords: list[tuple[float, float, float]] = []

    def __call__(self, x, y, z) -> int:
        key = (float(x), float(y), float(z))
        if key not in self.index:
            self.index[key] = len(self.coords)
            self.coords.append(key)
        return self.index[key]


def _edge_lengths(poly: np.ndarray) -> np.ndarray:
    return np.linalg.norm(np.roll(poly, -1, axis=0) - poly, axis=1)


def check_openings(poly: np.ndarray, openings) -> None:
    lengths = _edge_lengths(poly)
    by_edge: dict[int, list[Opening]] = {}
    for op in openings:
        if op.kind not in ("door", "window"):
            raise GeometryError(f"unknown opening kind {op.kind!r}")
        if not 0 <= op.edge < len(poly):
            raise GeometryError(f"opening on edge {op.edge} of a {len(poly)}-edge polygon")
        if op.start < -TOL or op.end > lengths[op.edge] + TOL or op.end - op.start <= TOL:
            raise GeometryError(f"opening span [{op.start}, {op.end}] is off edge {op.edge}")
        by_edge.setdefault(op.edge, []).append(op)
    for ops in by_edge.values():
        ops.sort(key=lambda o: o.start)
        for a, b in zip(ops, ops[1:]):
            if b.start < a.end - TOL:
                raise GeometryError(f"openings overlap on edge {a.edge}")


def build_room_mesh(polygon, doors=(), windows=(), wall_height: float = WALL_HEIGHT,
                    door_height: float = DOOR_HEIGHT, window_span: tuple[float, float] = WINDOW_SPAN) -> RoomMesh:
    """Triangulated floor plus one wall panel per polygon edge with rectangular cutouts.

    ``doors`` and ``windows`` are :class:`Opening` records (their ``kind`` is
    overridden by the list they come in).
    """
    poly = np.asarray(polygon, dtype=np.float64)
    if len(poly) < 3 or polygon_area(poly) <= TOL:
        raise GeometryError("floor polygon must be counter-clockwise with positive area")
    openings = [Opening("door", o.edge, o.start, o.end) for o in doors]
    openings += [Opening("window", o.edge, o.start, o.end) for o in windows]
    check_openings(poly, openings)
    lo, hi = window_span
    if not 0 <= lo < hi <= wall_height or not 0 < door_height <= wall_height:
        raise GeometryError("opening heights must lie within the wall")

    vp = _VertexPool()
    tris: list[tuple[int, int, int]] = []
    tags: list[int] = []

    def quad(p0, p1, p2, p3, tag):
        i = [vp(*p) for p in (p0, p1, p2, p3)]
        tris.extend([(i[0], i[1], i[2]), (i[0], i[2], i[3])])
        tags.extend([tag, tag])

    # floor: grid cells between the distinct vertex coordinates that lie inside
    xs = np.unique(poly[:, 0])
    zs = np.unique(poly[:, 1])
    cx = (xs[:-1] + xs[1:]) / 2
    cz = (zs[:-1] + zs[1:]) / 2
    gx, gz = np.meshgrid(np.arange(len(cx)), np.arange(len(cz)))
    centers = np.stack([cx[gx.ravel()], cz[gz.ravel()]], axis=1)
    inside = point_in_polygon(centers, poly, tol=0.0)
    for i, j in zip(gx.ravel()[inside], gz.ravel()[inside]):
        x0, x1, z0, z1 = xs[i], xs[i + 1], zs[j], zs[j + 1]
        quad((x0, 0, z0), (x0, 0, z1), (x1, 0, z1), (x1, 0, z0), 0)

    # walls
    lengths = _edge_lengths(poly)
    for e in range(len(poly)):
        a, b = poly[e], poly[(e + 1) % len(poly)]
        u = (b - a) / lengths[e]
        ops = sorted((o for o in openings if o.edge == e), key=lambda o: o.start)
        cuts = sorted({0.0, float(lengths[e])} | {o.start for o in ops} | {o.end for o in ops})
        for t0, t1 in zip(cuts, cuts[1:]):
            if t1 - t0 <= TOL:
                continue
            mid = (t0 + t1) / 2
            op = next((o for o in ops if o.start - TOL <= mid <= o.end + TOL), None)
            if op is None:
                bands = [(0.0, wall_height)]
            elif op.kind == "door":
                bands = [(door_height, wall_height)]
            else:
                bands = [(0.0, lo), (hi, wall_height)]
            p0 = a + u * t0
            p1 = a + u * t1
            for y0, y1 in bands:
                if y1 - y0 > TOL:
                    quad((p0[0], y0, p0[1]), (p1[0], y0, p1[1]), (p1[0], y1, p1[1]), (p0[0], y1, p0[1]), 1)

    return RoomMesh(
        vertices=np.array(vp.coords, dtype=np.float64).reshape(-1, 3),
        triangles=np.array(tris, dtype=np.int64).reshape(-1, 3),
        tags=np.array(tags, dtype=np.int64),
        polygon=poly,
        wall_height=wall_height,
        openings=sorted(openings, key=lambda o: (o.edge, o.start)),
        door_height=door_height,
        window_span=(lo, hi),
    )


def openings_from_mask(cells, scale: float, polygon: np.ndarray) -> tuple[list[Opening], list[Opening]]:
    """Door and window spans from the mask's door/window pixel runs.

    Each 4-connected run is projected onto the nearest polygon edge and
    clipped to it; runs that clip to nothing or would overlap an earlier
    opening are dropped.
    """
    cells = np.asarray(getattr(cells, "cells", cells))
    poly = np.asarray(polygon, dtype=np.float64)
    lengths = _edge_lengths(poly)
    nxt = np.roll(poly, -1, axis=0)
    found: list[Opening] = []
    for kind, value in (("door", DOOR), ("window", WINDOW)):
        labels, n = ndimage.label(cells == value, structure=FOUR_CONNECTED)
        for k in range(1, n + 1):
            rows, cols = np.nonzero(labels == k)
            x0, x1 = cols.min() * scale, (cols.max() + 1) * scale
            z0, z1 = rows.min() * scale, (rows.max() + 1) * scale
            centre = np.array([(x0 + x1) / 2, (z0 + z1) / 2])
            ab = nxt - poly
            t = np.clip(((centre - poly) * ab).sum(axis=1) / (ab ** 2).sum(axis=1), 0, 1)
            dist = np.linalg.norm(poly + t[:, None] * ab - centre, axis=1)
            e = int(np.argmin(dist))
            u = ab[e] / lengths[e]
            # project the run's bounding box onto the edge direction
            proj = [float(np.dot(np.array(p) - poly[e], u)) for p in ((x0, z0), (x1, z1))]
            s, t_end = max(min(proj), 0.0), min(max(proj), float(lengths[e]))
            if t_end - s <= TOL:
                continue
            cand = Opening(kind, e, s, t_end)
            if any(o.edge == e and cand.start < o.end - TOL and o.start < cand.end - TOL for o in found):
                continue
            found.append(cand)
    doors = [o for o in found if o.kind == "door"]
    windows = [o for o in found if o.kind == "window"]
    return doors, windows
