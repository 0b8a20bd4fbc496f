"""Degree-space distances and a uniform-grid radius index."""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .datamodel import GeoCoord

EARTH_RADIUS_M = 6_371_008.8


def degree_distance(a: GeoCoord, b: GeoCoord) -> float:
    """Euclidean distance between two coordinates in raw degrees."""
    return math.hypot(a.lat - b.lat, a.lon - b.lon)


def haversine_distance(a: GeoCoord, b: GeoCoord) -> float:
    """Great-circle distance in meters. Not used by default."""
    p1, p2 = math.radians(a.lat), math.radians(b.lat)
    dp = p2 - p1
    dl = math.radians(b.lon - a.lon)
    h = math.sin(dp / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2) ** 2
    return 2 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(h)))


def _as_array(coords) -> np.ndarray:
    if isinstance(coords, np.ndarray):
        arr = np.asarray(coords, dtype=np.float64)
    else:
        coords = list(coords)
        if coords and isinstance(coords[0], GeoCoord):
            arr = np.array([(c.lat, c.lon) for c in coords], dtype=np.float64)
        else:
            arr = np.array(coords, dtype=np.float64)
    arr = arr.reshape(-1, 2)
    if not np.all(np.isfinite(arr)):
        raise ValueError("coordinates must be finite")
    return arr


@dataclass(frozen=True)
class SpatialIndex:
    cell_size: float
    buckets: dict[tuple[int, int], list[int]]
    coords: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return self.coords.shape[0]

    def cell_of(self, lat: float, lon: float) -> tuple[int, int]:
        return (math.floor(lat / self.cell_size), math.floor(lon / self.cell_size))


def build_index(coords, cell_size: float) -> SpatialIndex:
    """Bucket every point by ``floor(coord / cell_size)`` on each axis.

    ``coords`` may be a sequence of GeoCoord or an (n, 2) array of (lat, lon).
    """
    if not cell_size > 0:
        raise ValueError("cell_size must be > 0")
    arr = _as_array(coords).copy()
    arr.setflags(write=False)
    keys = np.floor(arr / cell_size).astype(np.int64)
    buckets: dict[tuple[int, int], list[int]] = defaultdict(list)
    for i, (a, b) in enumerate(keys.tolist()):
        buckets[(a, b)].append(i)
    return SpatialIndex(float(cell_size), dict(buckets), arr)


def radius_query(idx: SpatialIndex, i: int, radius: float, coords=None) -> list[int]:
    """Indices j != i strictly closer than ``radius`` to point i, ascending.

    If ``coords`` is given it must be the coordinate list the index was built
    from; a mismatch raises ``ValueError``.
    """
    if coords is not None:
        arr = _as_array(coords)
        if arr.shape != idx.coords.shape or not np.array_equal(arr, idx.coords):
            raise ValueError("coordinate list does not match the index")
    n = len(idx)
    if not 0 <= i < n:
        raise IndexError(f"point index {i} out of range for index of {n} points")
    if not radius > 0:
        raise ValueError("radius must be > 0")
    lat, lon = idx.coords[i]
    ca, cb = idx.cell_of(lat, lon)
    reach = math.ceil(radius / idx.cell_size)
    cand: list[int] = []
    for da in range(-reach, reach + 1):
        for db in range(-reach, reach + 1):
            cand.extend(idx.buckets.get((ca + da, cb + db), ()))
    if not cand:
        return []
    cand_arr = np.array(cand, dtype=np.int64)
    diff = idx.coords[cand_arr] - idx.coords[i]
    d = np.hypot(diff[:, 0], diff[:, 1])
    keep = cand_arr[(d < radius) & (cand_arr != i)]
    return sorted(keep.tolist())


def neighbor_lists(idx: SpatialIndex, radius: float) -> list[list[int]]:
    return [radius_query(idx, i, radius) for i in range(len(idx))]


def brute_force_neighbors(coords, i: int, radius: float) -> list[int]:
    """O(n) scan used as an oracle for ``radius_query``."""
    arr = _as_array(coords)
    diff = arr - arr[i]
    d = np.hypot(diff[:, 0], diff[:, 1])
    return [j for j in range(arr.shape[0]) if j != i and d[j] < radius]
