"""Spatially-aware feature enhancement: one pass of IDW neighbor averaging.

Each row is replaced by a normalized weighted mean of itself and every point
strictly inside ``radius``. The self weight is the IDW weight at distance 0,
i.e. ``1 / epsilon`` with the default power of 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spatial import SpatialIndex, _as_array, build_index, radius_query


@dataclass(frozen=True)
class SafeConfig:
    radius: float = 0.01
    epsilon: float = 1e-4
    power: float = 1.0

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("radius must be > 0")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be > 0")
        if not self.power > 0:
            raise ValueError("power must be > 0")


def idw_weight(distance, cfg: SafeConfig = SafeConfig()):
    """``1 / (distance**power + epsilon)``; works on scalars and arrays."""
    d = np.asarray(distance, dtype=np.float64)
    if np.any(d < 0):
        raise ValueError("distance must be nonnegative")
    w = 1.0 / (d**cfg.power + cfg.epsilon)
    return float(w) if w.ndim == 0 else w


def _check_features(features, n: int) -> np.ndarray:
    f = np.asarray(features, dtype=np.float64)
    if f.ndim != 2:
        raise ValueError("features must be a 2-D matrix")
    if f.shape[0] != n:
        raise ValueError(f"features have {f.shape[0]} rows but {n} points are indexed")
    if not np.all(np.isfinite(f)):
        raise ValueError("features must be finite")
    return f


def safe_aggregate(features, index: SpatialIndex, cfg: SafeConfig = SafeConfig()) -> np.ndarray:
    n = len(index)
    f = _check_features(features, n)
    out = np.empty_like(f)
    w_self = idw_weight(0.0, cfg)
    coords = index.coords
    for i in range(n):
        nb = radius_query(index, i, cfg.radius)
        if not nb:
            out[i] = f[i]
            continue
        diff = coords[nb] - coords[i]
        w = idw_weight(np.hypot(diff[:, 0], diff[:, 1]), cfg)
        z = w.sum() + w_self
        out[i] = (w_self * f[i] + w @ f[nb]) / z
    return out


def safe_aggregate_bruteforce(features, coords, cfg: SafeConfig = SafeConfig()) -> np.ndarray:
    """Direct O(n^2) evaluation, kept independent of the grid index."""
    xy = _as_array(coords)
    n = xy.shape[0]
    f = _check_features(features, n)
    out = np.empty_like(f)
    w_self = 1.0 / (0.0**cfg.power + cfg.epsilon)
    for i in range(n):
        num = w_self * f[i]
        z = w_self
        for j in range(n):
            if j == i:
                continue
            d = np.sqrt((xy[i, 0] - xy[j, 0]) ** 2 + (xy[i, 1] - xy[j, 1]) ** 2)
            if d < cfg.radius:
                w = 1.0 / (d**cfg.power + cfg.epsilon)
                num = num + w * f[j]
                z += w
        out[i] = num / z
    return out


def safe_transform(features, coords, cfg: SafeConfig = SafeConfig(), rows=None) -> np.ndarray:
    """Aggregate over all given points, returning only ``rows`` (default all).

    Used to enhance held-out points while letting them see every point that
    is available at transform time.
    """
    index = build_index(coords, cfg.radius)
    out = safe_aggregate(features, index, cfg)
    return out if rows is None else out[np.asarray(rows, dtype=np.int64)]
