"""R2, RMSE, and sliced Wasserstein distance over geolocated predictions."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .datamodel import GeoCoord

DEFAULT_PROJECTIONS = 128


@dataclass(frozen=True)
class GeoPrediction:
    coord: GeoCoord
    predicted: float
    target: float

    def __post_init__(self):
        if not (math.isfinite(self.predicted) and math.isfinite(self.target)):
            raise ValueError("prediction and target must be finite")


@dataclass(frozen=True)
class EvalReport:
    r2: float | None
    rmse: float
    swd: float
    n: int
    seed: int
    swd_projections: int
    r2_error: str | None = None

    def to_text(self) -> str:
        out = []
        for key, value in asdict(self).items():
            if value is None:
                value = ""
            out.append(f"{key}={value!r}" if isinstance(value, float) else f"{key}={value}")
        return "\n".join(out) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "EvalReport":
        kv = dict(line.split("=", 1) for line in text.splitlines() if "=" in line)
        return cls(
            float(kv["r2"]) if kv["r2"] else None,
            float(kv["rmse"]),
            float(kv["swd"]),
            int(kv["n"]),
            int(kv["seed"]),
            int(kv["swd_projections"]),
            kv.get("r2_error") or None,
        )


def _pair(preds, targets) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(preds, dtype=np.float64).reshape(-1)
    t = np.asarray(targets, dtype=np.float64).reshape(-1)
    if p.shape != t.shape:
        raise ValueError(f"length mismatch: {p.size} vs {t.size}")
    return p, t


def r_squared(preds, targets) -> float:
    p, t = _pair(preds, targets)
    if p.size < 2:
        raise ValueError("r_squared needs at least two samples")
    ss_tot = float(np.sum((t - t.mean()) ** 2))
    if ss_tot == 0.0:
        raise ValueError("r_squared is undefined for constant targets")
    return 1.0 - float(np.sum((t - p) ** 2)) / ss_tot


def rmse(preds, targets) -> float:
    p, t = _pair(preds, targets)
    if p.size == 0:
        raise ValueError("rmse needs at least one sample")
    return math.sqrt(float(np.mean((t - p) ** 2)))


def wasserstein_1d(a, b) -> float:
    """Order-1 transport cost between two equal-size empirical samples."""
    a = np.sort(np.asarray(a, dtype=np.float64).reshape(-1))
    b = np.sort(np.asarray(b, dtype=np.float64).reshape(-1))
    if a.size != b.size:
        raise ValueError(f"sample sizes differ: {a.size} vs {b.size}")
    if a.size == 0:
        raise ValueError("samples must be nonempty")
    return float(np.mean(np.abs(a - b)))


def random_directions(n_proj: int, dim: int = 3, seed: int = 0) -> np.ndarray:
    """(n_proj, dim) unit vectors, uniform on the sphere."""
    if n_proj < 1:
        raise ValueError("n_proj must be >= 1")
    g = np.random.default_rng(seed).standard_normal((n_proj, dim))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def sliced_wasserstein(cloud_a, cloud_b, n_proj: int = DEFAULT_PROJECTIONS, seed: int = 0, directions=None) -> float:
    """Mean 1-D Wasserstein distance over random projection directions.

    ``directions`` overrides the seeded draw (rows are used as given).
    """
    a = np.atleast_2d(np.asarray(cloud_a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(cloud_b, dtype=np.float64))
    if a.shape != b.shape:
        raise ValueError(f"cloud shapes differ: {a.shape} vs {b.shape}")
    if directions is None:
        directions = random_directions(n_proj, a.shape[1], seed)
    directions = np.atleast_2d(np.asarray(directions, dtype=np.float64))
    pa = np.sort(a @ directions.T, axis=0)
    pb = np.sort(b @ directions.T, axis=0)
    return float(np.mean(np.abs(pa - pb)))


def geo_clouds(geo_preds: Sequence[GeoPrediction]) -> tuple[np.ndarray, np.ndarray]:
    """(z-lat, z-lon, predicted) and (z-lat, z-lon, target) point clouds.

    Both clouds share the same coordinates, so z-scoring over the union is
    z-scoring over the coordinate list itself.
    """
    xy = np.array([(g.coord.lat, g.coord.lon) for g in geo_preds], dtype=np.float64)
    sd = xy.std(axis=0)
    z = (xy - xy.mean(axis=0)) / np.where(sd > 0, sd, 1.0)
    pred = np.array([g.predicted for g in geo_preds])
    tgt = np.array([g.target for g in geo_preds])
    return np.column_stack([z, pred]), np.column_stack([z, tgt])


def evaluate(geo_preds: Sequence[GeoPrediction], n_proj: int = DEFAULT_PROJECTIONS, seed: int = 0) -> EvalReport:
    if len(geo_preds) < 2:
        raise ValueError("evaluate needs at least two predictions")
    pred = np.array([g.predicted for g in geo_preds])
    tgt = np.array([g.target for g in geo_preds])
    try:
        r2, err = r_squared(pred, tgt), None
    except ValueError as exc:
        r2, err = None, str(exc)
    a, b = geo_clouds(geo_preds)
    return EvalReport(r2, rmse(pred, tgt), sliced_wasserstein(a, b, n_proj, seed), len(geo_preds), seed, n_proj, err)
