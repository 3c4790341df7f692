"""Square-lattice geometry and the 2D-to-1D Hilbert-curve site ordering.

Sites live on an open-boundary square lattice and are addressed by grid
coordinates ``(x, y)`` with ``0 <= x < width`` and ``0 <= y < height``.
The canonical linear index is row-major, ``y * width + x``.  Tensor-network
leaves instead use a Hilbert-curve order, which keeps lattice neighbors close
on the one-dimensional leaf line.
"""

from dataclasses import dataclass, field

import numpy as np


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class LatticeGeometry:
    """Open-boundary square lattice with its nearest-neighbor bond list.

    ``bonds`` holds each unordered nearest-neighbor pair exactly once, as
    ``((x1, y1), (x2, y2))`` sorted lexicographically.
    """

    width: int
    height: int
    bonds: tuple = field(repr=False)

    @property
    def n_sites(self) -> int:
        return self.width * self.height

    @property
    def n_bonds(self) -> int:
        return len(self.bonds)

    def site_index(self, x: int, y: int) -> int:
        """Canonical (row-major) linear index of grid site (x, y)."""
        if not self.in_grid(x, y):
            raise ValueError(f"site ({x}, {y}) outside {self.width}x{self.height} grid")
        return y * self.width + x

    def site_coords(self, index: int):
        """Inverse of :meth:`site_index`."""
        if not 0 <= index < self.n_sites:
            raise ValueError(f"site index {index} out of range")
        return index % self.width, index // self.width

    def in_grid(self, x: int, y: int) -> bool:
        return 0 <= x < self.width and 0 <= y < self.height

    def bond_indices(self):
        """Bond list as pairs of canonical site indices."""
        return [
            (self.site_index(*a), self.site_index(*b))
            for a, b in self.bonds
        ]


def build_lattice(width: int, height: int) -> LatticeGeometry:
    """Build an open-boundary square lattice.

    Sides must be powers of two and at least 2, so that the sites of a square
    lattice fill a perfect binary tree without padding.
    """
    for name, n in (("width", width), ("height", height)):
        if n < 2 or not _is_power_of_two(n):
            raise ValueError(f"{name} must be a power of two >= 2, got {n}")
    bonds = []
    for y in range(height):
        for x in range(width):
            if x + 1 < width:
                bonds.append(((x, y), (x + 1, y)))
            if y + 1 < height:
                bonds.append(((x, y), (x, y + 1)))
    bonds.sort()
    return LatticeGeometry(width=width, height=height, bonds=tuple(bonds))


def neighbors(geometry: LatticeGeometry, site) -> list:
    """Nearest neighbors of a grid site, open boundaries (2 to 4 sites)."""
    x, y = site
    if not geometry.in_grid(x, y):
        raise ValueError(f"site ({x}, {y}) outside grid")
    out = []
    for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        if geometry.in_grid(x + dx, y + dy):
            out.append((x + dx, y + dy))
    return out


@dataclass(frozen=True)
class SiteOrdering:
    """Bijection between grid coordinates and leaf indices in [0, N).

    ``to_linear[x, y]`` is the leaf index of grid site (x, y);
    ``to_grid[k]`` is the (x, y) pair visited at step k.
    """

    geometry: LatticeGeometry
    to_linear: np.ndarray = field(repr=False)
    to_grid: np.ndarray = field(repr=False)

    @property
    def n_sites(self) -> int:
        return self.geometry.n_sites

    def leaf_of_site(self, x: int, y: int) -> int:
        return int(self.to_linear[x, y])

    def site_of_leaf(self, k: int):
        x, y = self.to_grid[k]
        return int(x), int(y)

    def leaf_to_canonical(self) -> np.ndarray:
        """Array ``p`` with ``p[leaf] = canonical index`` of that leaf's site."""
        return np.array(
            [self.geometry.site_index(*self.site_of_leaf(k)) for k in range(self.n_sites)]
        )


def _hilbert_d2xy(side: int, d: int):
    # Standard reflected Gray-code construction; orientation fixed so that a
    # 2x2 block is visited (0,0), (0,1), (1,1), (1,0).
    x = y = 0
    t = d
    s = 1
    while s < side:
        rx = 1 & (t // 2)
        ry = 1 & (t ^ rx)
        if ry == 0:
            if rx == 1:
                x = s - 1 - x
                y = s - 1 - y
            x, y = y, x
        x += s * rx
        y += s * ry
        t //= 4
        s *= 2
    return x, y


def hilbert_ordering(geometry: LatticeGeometry) -> SiteOrdering:
    """Hilbert-curve ordering of a square power-of-two lattice.

    Consecutive leaf indices always map to lattice nearest neighbors, so
    short-range interactions stay short-range along the leaf line.
    """
    if geometry.width != geometry.height:
        raise ValueError(
            f"Hilbert ordering requires a square lattice, got "
            f"{geometry.width}x{geometry.height}"
        )
    side = geometry.width
    n = geometry.n_sites
    to_linear = np.empty((side, side), dtype=np.int64)
    to_grid = np.empty((n, 2), dtype=np.int64)
    for d in range(n):
        x, y = _hilbert_d2xy(side, d)
        to_linear[x, y] = d
        to_grid[d] = (x, y)
    return SiteOrdering(geometry=geometry, to_linear=to_linear, to_grid=to_grid)
