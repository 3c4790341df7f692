"""Construction and geometric analysis of spin-down domains (bubbles).

A bubble is a set of occupied sites (spin-down, true vacuum) inside the
spin-up background.  Two perimeter notions control its fate under quench
dynamics: the bond perimeter ``P_b`` (broken lattice bonds, i.e. the domain
wall energy) and the site perimeter ``P_s`` (occupied sites touching the
exterior).  Corner flips, single-site flips that leave ``P_b`` unchanged,
generate the effective dynamics at weak transverse field; their closure is
confined to the bubble's minimal bounding patch.
"""

from dataclasses import dataclass, field

import numpy as np

from .lattice import LatticeGeometry, neighbors


@dataclass(frozen=True)
class ShapeMask:
    """Boolean occupancy grid over a lattice; True marks spin-down sites.

    ``grid[x, y]`` indexes by grid coordinates, shape ``(width, height)``.
    """

    geometry: LatticeGeometry
    grid: np.ndarray = field(repr=False)

    def __post_init__(self):
        expected = (self.geometry.width, self.geometry.height)
        if self.grid.shape != expected:
            raise ValueError(f"mask shape {self.grid.shape} != lattice {expected}")
        if self.grid.dtype != np.bool_:
            object.__setattr__(self, "grid", self.grid.astype(bool))

    @property
    def area(self) -> int:
        return int(self.grid.sum())

    def occupied_sites(self):
        xs, ys = np.nonzero(self.grid)
        return [(int(x), int(y)) for x, y in zip(xs, ys)]

    def touches_boundary(self) -> bool:
        g = self.grid
        return bool(g[0, :].any() or g[-1, :].any() or g[:, 0].any() or g[:, -1].any())

    def complement(self) -> "ShapeMask":
        return ShapeMask(self.geometry, ~self.grid)

    def key(self) -> bytes:
        """Hashable fingerprint of the occupancy pattern."""
        return np.packbits(self.grid).tobytes()


@dataclass(frozen=True)
class ShapeStats:
    """Derived geometry of a mask: area, both perimeters, bounding patch."""

    area: int
    bond_perimeter: int
    site_perimeter: int
    patch: tuple  # (x0, y0, x1, y1), inclusive

    def to_dict(self) -> dict:
        x0, y0, x1, y1 = self.patch
        return {
            "area": self.area,
            "P_b": self.bond_perimeter,
            "P_s": self.site_perimeter,
            "patch": {
                "x0": x0,
                "y0": y0,
                "width": x1 - x0 + 1,
                "height": y1 - y0 + 1,
            },
        }


def empty_mask(geometry: LatticeGeometry) -> ShapeMask:
    """The pure false vacuum: no occupied sites."""
    return ShapeMask(geometry, np.zeros((geometry.width, geometry.height), dtype=bool))


def make_shape(kind: str, geometry: LatticeGeometry, center=None, *,
               L: int | None = None, W: int | None = None, r: int | None = None,
               mask_file: str | None = None) -> ShapeMask:
    """Build a standard bubble shape centered on the lattice.

    Kinds and their size parameters:

    - ``square``: side ``L`` (an ``L x L`` block)
    - ``rectangle``: ``L`` along x, ``W`` along y
    - ``diamond``: radius ``r``, sites with ``|x-cx| + |y-cy| <= r``
    - ``cross``: union of an ``L x W`` and a ``W x L`` centered rectangle
    - ``custom``: read from an ASCII ``mask_file`` ('#' occupied, '.' empty)

    The default center is ``((width-1)//2, (height-1)//2)``; blocks of even
    side extend one site further in +x/+y than in -x/-y.
    """
    if kind == "custom":
        if mask_file is None:
            raise ValueError("custom shape requires mask_file")
        return read_mask_file(mask_file, geometry)
    if center is None:
        center = ((geometry.width - 1) // 2, (geometry.height - 1) // 2)
    cx, cy = center
    grid = np.zeros((geometry.width, geometry.height), dtype=bool)

    def fill_block(lx: int, ly: int):
        x0 = cx - (lx - 1) // 2
        y0 = cy - (ly - 1) // 2
        if x0 < 0 or y0 < 0 or x0 + lx > geometry.width or y0 + ly > geometry.height:
            raise ValueError(
                f"{kind} of size {lx}x{ly} at center ({cx}, {cy}) exceeds the lattice"
            )
        grid[x0:x0 + lx, y0:y0 + ly] = True

    if kind == "square":
        if L is None or L < 1:
            raise ValueError("square requires L >= 1")
        fill_block(L, L)
    elif kind == "rectangle":
        if L is None or W is None or L < 1 or W < 1:
            raise ValueError("rectangle requires L >= 1 and W >= 1")
        fill_block(L, W)
    elif kind == "diamond":
        if r is None or r < 0:
            raise ValueError("diamond requires r >= 0")
        if cx - r < 0 or cy - r < 0 or cx + r >= geometry.width or cy + r >= geometry.height:
            raise ValueError(f"diamond of radius {r} at ({cx}, {cy}) exceeds the lattice")
        for x in range(cx - r, cx + r + 1):
            for y in range(cy - r, cy + r + 1):
                if abs(x - cx) + abs(y - cy) <= r:
                    grid[x, y] = True
    elif kind == "cross":
        if L is None or W is None or L < 1 or W < 1 or W > L:
            raise ValueError("cross requires L >= W >= 1")
        fill_block(L, W)
        fill_block(W, L)
    else:
        raise ValueError(f"unknown shape kind {kind!r}")
    return ShapeMask(geometry, grid)


def read_mask_file(path: str, geometry: LatticeGeometry) -> ShapeMask:
    """Read an ASCII mask: one grid row (fixed y) per line, '#' = occupied."""
    with open(path) as fh:
        lines = [line.rstrip("\n") for line in fh if line.strip() != ""]
    if len(lines) != geometry.height:
        raise ValueError(f"mask file has {len(lines)} rows, lattice height is {geometry.height}")
    grid = np.zeros((geometry.width, geometry.height), dtype=bool)
    for y, line in enumerate(lines):
        if len(line) != geometry.width:
            raise ValueError(f"mask row {y} has {len(line)} columns, lattice width is {geometry.width}")
        for x, ch in enumerate(line):
            if ch == "#":
                grid[x, y] = True
            elif ch != ".":
                raise ValueError(f"invalid mask character {ch!r} at row {y}, column {x}")
    return ShapeMask(geometry, grid)


def write_mask_file(mask: ShapeMask, path: str):
    with open(path, "w") as fh:
        for y in range(mask.geometry.height):
            fh.write("".join("#" if mask.grid[x, y] else "." for x in range(mask.geometry.width)))
            fh.write("\n")


def bond_perimeter(mask: ShapeMask) -> int:
    """Number of lattice bonds with exactly one occupied endpoint."""
    count = 0
    for (a, b) in mask.geometry.bonds:
        if mask.grid[a] != mask.grid[b]:
            count += 1
    return count


def site_perimeter(mask: ShapeMask) -> int:
    """Occupied sites with at least one unoccupied lattice neighbor."""
    count = 0
    for x, y in mask.occupied_sites():
        if any(not mask.grid[n] for n in neighbors(mask.geometry, (x, y))):
            count += 1
    return count


def bounding_patch(mask: ShapeMask) -> tuple:
    """Smallest axis-aligned rectangle (x0, y0, x1, y1) containing the mask."""
    if mask.area == 0:
        raise ValueError("bounding patch of an empty mask is undefined")
    xs, ys = np.nonzero(mask.grid)
    return int(xs.min()), int(ys.min()), int(xs.max()), int(ys.max())


def shape_stats(mask: ShapeMask) -> ShapeStats:
    return ShapeStats(
        area=mask.area,
        bond_perimeter=bond_perimeter(mask),
        site_perimeter=site_perimeter(mask),
        patch=bounding_patch(mask),
    )


def corner_moves(mask: ShapeMask) -> list:
    """All single-site flips that leave the bond perimeter unchanged.

    Flipping site s changes P_b by (occupied neighbors - unoccupied
    neighbors), independent of s's own state, so the conserving flips are
    exactly the sites with equally many occupied and unoccupied neighbors.
    In the lattice interior that means exactly two occupied neighbors.
    """
    moves = []
    geo = mask.geometry
    for x in range(geo.width):
        for y in range(geo.height):
            nbrs = neighbors(geo, (x, y))
            occ = sum(1 for n in nbrs if mask.grid[n])
            if occ * 2 != len(nbrs):
                continue
            flipped = mask.grid.copy()
            flipped[x, y] = ~flipped[x, y]
            if not flipped.any():
                continue  # unflipping the last site is not a bubble move
            moves.append(ShapeMask(geo, flipped))
    return moves


def corner_reachable_set(mask: ShapeMask, max_states: int):
    """Breadth-first closure of a mask under corner flips.

    Returns ``(masks, truncated)`` where ``masks`` maps fingerprints to
    ShapeMask objects and ``truncated`` flags that ``max_states`` was hit
    before the closure was exhausted.
    """
    if mask.area == 0:
        raise ValueError("corner closure of an empty mask is undefined")
    seen = {mask.key(): mask}
    frontier = [mask]
    truncated = False
    while frontier:
        nxt = []
        for m in frontier:
            for move in corner_moves(m):
                k = move.key()
                if k in seen:
                    continue
                if len(seen) >= max_states:
                    truncated = True
                    return seen, truncated
                seen[k] = move
                nxt.append(move)
        frontier = nxt
    return seen, truncated


def catalog_shapes(geometry: LatticeGeometry, *, max_square: int = 8, max_diamond: int = 4):
    """Parameterized shape catalog with derived geometry, as JSON-able records.

    Shapes that would not fit (or would touch the boundary on small lattices)
    are skipped.
    """
    records = []

    def try_add(kind, params):
        try:
            mask = make_shape(kind, geometry, **params)
        except ValueError:
            return
        stats = shape_stats(mask)
        rec = {"kind": kind, "params": params}
        rec.update(stats.to_dict())
        rec["touches_boundary"] = mask.touches_boundary()
        records.append(rec)

    for L in range(1, max_square + 1):
        try_add("square", {"L": L})
    for r in range(1, max_diamond + 1):
        try_add("diamond", {"r": r})
    for L in range(2, max_square + 1):
        for W in range(1, L):
            try_add("rectangle", {"L": L, "W": W})
    for L in range(3, max_square + 1, 2):
        for W in range(1, L - 1, 2):
            try_add("cross", {"L": L, "W": W})
    return records
