"""Poisson bipolar topologies on a wrap-around square and fixed-radius neighbor queries."""
from __future__ import annotations

import dataclasses

import numpy as np

__all__ = [
    "Region",
    "Topology",
    "CellList",
    "sample_topology",
    "topology_from_points",
    "torus_delta",
    "torus_distance",
    "neighbors_within",
    "save_topology",
    "load_topology",
]


@dataclasses.dataclass(frozen=True)
class Region:
    """Square region of side ``side_length`` with wrap-around (torus) boundaries.

    The torus is the only supported geometry: it removes edge effects and
    matches the stationarity assumed by the analytical engine.
    """

    side_length: float

    def __post_init__(self):
        if not self.side_length > 0:
            raise ValueError(f"side_length must be positive, got {self.side_length}")


def torus_delta(a, b, side_length):
    """Per-axis wrapped displacement |a-b| folded onto [0, L/2]."""
    d = np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))
    return np.minimum(d, side_length - d)


def torus_distance(a, b, region: Region):
    """Shortest distance between points of [0, L)^2 on the torus.

    Accepts single points or arrays of points; broadcasts like numpy.
    """
    d = torus_delta(a, b, region.side_length)
    return np.sqrt((d * d).sum(axis=-1))


class CellList:
    """Uniform-grid cell list over a static 2-D point set on the torus.

    Points are bucketed once; ``query`` returns the indices of all points at
    torus distance <= radius from a center. Cell size is chosen from the
    typical query scale; any radius below L/2 is answered correctly because
    the query scans every cell overlapping the disk.
    """

    def __init__(self, points: np.ndarray, region: Region, target_cell: float | None = None):
        self.points = np.ascontiguousarray(points, dtype=float)
        self.region = region
        L = region.side_length
        if target_cell is None:
            target_cell = L / 64.0
        self.n_cells = max(1, min(256, int(L / max(target_cell, 1e-12))))
        self.cell_size = L / self.n_cells
        if len(self.points):
            ix = np.minimum((self.points[:, 0] / self.cell_size).astype(np.int64), self.n_cells - 1)
            iy = np.minimum((self.points[:, 1] / self.cell_size).astype(np.int64), self.n_cells - 1)
            flat = ix * self.n_cells + iy
            self.order = np.argsort(flat, kind="stable").astype(np.int64)
            sorted_flat = flat[self.order]
            self.starts = np.searchsorted(sorted_flat, np.arange(self.n_cells * self.n_cells + 1))
        else:
            self.order = np.zeros(0, dtype=np.int64)
            self.starts = np.zeros(self.n_cells * self.n_cells + 1, dtype=np.int64)

    def _candidate_indices(self, center, radius):
        if len(self.points) == 0:
            return np.zeros(0, dtype=np.int64)
        reach = int(np.floor(radius / self.cell_size)) + 1
        cx = int(center[0] / self.cell_size)
        cy = int(center[1] / self.cell_size)
        if 2 * reach + 1 >= self.n_cells:
            return np.arange(len(self.points), dtype=np.int64)
        offs = np.arange(-reach, reach + 1)
        xs = (cx + offs) % self.n_cells
        ys = (cy + offs) % self.n_cells
        cells = (xs[:, None] * self.n_cells + ys[None, :]).ravel()
        chunks = [self.order[self.starts[c]:self.starts[c + 1]] for c in cells]
        return np.concatenate(chunks) if chunks else np.zeros(0, dtype=np.int64)

    def query(self, center, radius) -> np.ndarray:
        """Indices of points within torus distance ``radius`` of ``center`` (sorted)."""
        cand = self._candidate_indices(center, radius)
        if cand.size == 0:
            return cand
        d = torus_distance(self.points[cand], np.asarray(center, dtype=float), self.region)
        out = cand[d <= radius]
        out.sort()
        return out


@dataclasses.dataclass
class Topology:
    """A realized static dipole pattern: sources, their receivers, and a spatial index.

    Immutable after construction; safe for concurrent reads.
    """

    sources: np.ndarray
    receivers: np.ndarray
    link_distance: float
    region: Region
    seed: int | None
    spatial_index: CellList = dataclasses.field(repr=False, default=None)

    def __post_init__(self):
        if self.sources.shape != self.receivers.shape:
            raise ValueError("sources and receivers must have identical shape")
        if self.spatial_index is None:
            L = self.region.side_length
            target = max(2.0 * self.link_distance, L / 64.0)
            self.spatial_index = CellList(self.sources, self.region, target_cell=target)

    @property
    def n_links(self) -> int:
        return len(self.sources)


def _validate_link_distance(r: float, region: Region):
    if r >= region.side_length / 2:
        raise ValueError(
            f"link_distance {r} must be below half the region side "
            f"{region.side_length / 2} (torus distance would be ambiguous)"
        )


def sample_topology(params, region: Region, seed: int) -> Topology:
    """Draw a Poisson bipolar topology: PPP sources, each with a receiver at distance r.

    The dipole count is Poisson with mean density * L^2, source positions are
    i.i.d. uniform on the square, and each receiver sits at the link distance
    from its source in an i.i.d. uniform direction, wrapped mod L.
    """
    if not params.density > 0:
        raise ValueError(f"density must be positive, got {params.density}")
    _validate_link_distance(params.link_distance, region)
    L = region.side_length
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    n = int(rng.poisson(params.density * L * L))
    sources = rng.random((n, 2)) * L
    angles = rng.random(n) * 2.0 * np.pi
    disp = params.link_distance * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    receivers = np.mod(sources + disp, L)
    return Topology(sources, receivers, params.link_distance, region, seed)


def topology_from_points(sources, receivers, link_distance: float, region: Region,
                         seed: int | None = None) -> Topology:
    """Build a topology from explicit coordinates (e.g. a loaded dump or a test fixture)."""
    _validate_link_distance(link_distance, region)
    sources = np.atleast_2d(np.asarray(sources, dtype=float))
    receivers = np.atleast_2d(np.asarray(receivers, dtype=float))
    return Topology(sources.copy(), receivers.copy(), link_distance, region, seed)


def neighbors_within(topology: Topology, center, radius) -> np.ndarray:
    """Source indices at torus distance <= radius from ``center``."""
    if radius >= topology.region.side_length / 2:
        raise ValueError(
            f"radius {radius} must be below half the region side "
            f"{topology.region.side_length / 2}"
        )
    return topology.spatial_index.query(center, radius)


def save_topology(topology: Topology, path):
    """Write the dipole table as flat text: ``index sx sy rx ry`` per line."""
    with open(path, "w", newline="\n") as fh:
        fh.write(f"# side_length={topology.region.side_length!r}\n")
        fh.write(f"# link_distance={topology.link_distance!r}\n")
        fh.write(f"# seed={topology.seed!r}\n")
        fh.write("# index sx sy rx ry\n")
        for i in range(topology.n_links):
            sx, sy = topology.sources[i]
            rx, ry = topology.receivers[i]
            fh.write(f"{i} {sx!r} {sy!r} {rx!r} {ry!r}\n")


def load_topology(path) -> Topology:
    """Read a topology written by :func:`save_topology`."""
    meta = {}
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if "=" in body:
                    key, _, value = body.partition("=")
                    meta[key.strip()] = value.strip()
                continue
            parts = line.split()
            rows.append([float(x) for x in parts[1:5]])
    region = Region(float(meta["side_length"]))
    seed = None if meta.get("seed", "None") == "None" else int(meta["seed"])
    data = np.asarray(rows, dtype=float).reshape(-1, 4)
    return topology_from_points(data[:, :2], data[:, 2:], float(meta["link_distance"]),
                                region, seed=seed)
