"""Dataset schema, line-delimited file format, and the seeded synthetic city.

File layout::

    dims=<d_sat>,<d_street>,<d_pdfm>
    record_id|group_id|lat|lon|sat_emb|street_emb|pdfm_emb|walk_score

Embedding fields are comma separated. Reals are written with ``repr`` so a
write/parse cycle reproduces every float bit-for-bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

DEFAULT_DIMS = (64, 64, 128)


class DatasetError(ValueError):
    """Raised for malformed or invariant-violating dataset content."""

    def __init__(self, diagnostics: Sequence["Diagnostic"]):
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(str(d) for d in self.diagnostics))


@dataclass(frozen=True)
class Diagnostic:
    line: int | None
    message: str
    record_id: str | None = None
    group_id: str | None = None

    def __str__(self) -> str:
        where = f"line {self.line}: " if self.line is not None else ""
        return where + self.message


@dataclass(frozen=True)
class GeoCoord:
    lat: float
    lon: float

    def __post_init__(self):
        if not (math.isfinite(self.lat) and math.isfinite(self.lon)):
            raise ValueError(f"non-finite coordinate ({self.lat}, {self.lon})")
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"latitude {self.lat} outside [-90, 90]")
        if not -180.0 <= self.lon <= 180.0:
            raise ValueError(f"longitude {self.lon} outside [-180, 180]")


def _frozen_vector(values, name: str) -> np.ndarray:
    arr = np.array(values, dtype=np.float64).reshape(-1)
    if arr.size == 0:
        raise ValueError(f"{name} is empty")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class LocationRecord:
    record_id: str
    group_id: str
    coord: GeoCoord
    sat_emb: np.ndarray
    street_emb: np.ndarray
    pdfm_emb: np.ndarray
    walk_score: float

    def __post_init__(self):
        for name in ("sat_emb", "street_emb", "pdfm_emb"):
            object.__setattr__(self, name, _frozen_vector(getattr(self, name), name))
        score = float(self.walk_score)
        if not (math.isfinite(score) and 0.0 <= score <= 100.0):
            raise ValueError(
                f"walk_score {score} of record {self.record_id!r} outside [0, 100]"
            )
        object.__setattr__(self, "walk_score", score)
        for name in ("record_id", "group_id"):
            value = getattr(self, name)
            if not value or any(c in value for c in "|\n\r"):
                raise ValueError(f"invalid {name} {value!r}")

    @property
    def dims(self) -> tuple[int, int, int]:
        return (self.sat_emb.size, self.street_emb.size, self.pdfm_emb.size)

    def __eq__(self, other):
        if not isinstance(other, LocationRecord):
            return NotImplemented
        return (
            self.record_id == other.record_id
            and self.group_id == other.group_id
            and self.coord == other.coord
            and self.walk_score == other.walk_score
            and np.array_equal(self.sat_emb, other.sat_emb)
            and np.array_equal(self.street_emb, other.street_emb)
            and np.array_equal(self.pdfm_emb, other.pdfm_emb)
        )

    def replace(self, **changes) -> "LocationRecord":
        kw = dict(
            record_id=self.record_id,
            group_id=self.group_id,
            coord=self.coord,
            sat_emb=self.sat_emb,
            street_emb=self.street_emb,
            pdfm_emb=self.pdfm_emb,
            walk_score=self.walk_score,
        )
        kw.update(changes)
        return LocationRecord(**kw)


def check_records(
    records: Sequence[LocationRecord], dims: tuple[int, int, int] | None
) -> list[Diagnostic]:
    """Dataset-level invariants: dims, unique ids, group coherence."""
    out: list[Diagnostic] = []
    seen: set[str] = set()
    groups: dict[str, LocationRecord] = {}
    for rec in records:
        if dims is not None and rec.dims != tuple(dims):
            out.append(Diagnostic(None, f"record {rec.record_id!r} has dims {rec.dims}, expected {tuple(dims)}", rec.record_id))
        if rec.record_id in seen:
            out.append(Diagnostic(None, f"duplicate record_id {rec.record_id!r}", rec.record_id))
        seen.add(rec.record_id)
        first = groups.setdefault(rec.group_id, rec)
        if first is not rec and (first.coord != rec.coord or first.walk_score != rec.walk_score):
            out.append(
                Diagnostic(
                    None,
                    f"group {rec.group_id!r} has inconsistent coord/score "
                    f"(records {first.record_id!r} and {rec.record_id!r}); leakage risk",
                    rec.record_id,
                    rec.group_id,
                )
            )
    return out


@dataclass(frozen=True)
class Dataset:
    records: tuple[LocationRecord, ...]
    dims: tuple[int, int, int] = DEFAULT_DIMS

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        if len(self.dims) != 3 or min(self.dims) < 1:
            raise ValueError(f"invalid dims {self.dims}")
        problems = check_records(self.records, self.dims)
        if problems:
            raise DatasetError(problems)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def subset(self, indices: Iterable[int]) -> "Dataset":
        return Dataset(tuple(self.records[i] for i in indices), self.dims)

    def coords(self) -> np.ndarray:
        """(n, 2) array of (lat, lon)."""
        return np.array([(r.coord.lat, r.coord.lon) for r in self.records], dtype=np.float64).reshape(-1, 2)

    def matrix(self, modality: str) -> np.ndarray:
        d = self.dims[("sat", "street", "pdfm").index(modality)]
        rows = [getattr(r, f"{modality}_emb") for r in self.records]
        return np.array(rows, dtype=np.float64).reshape(len(rows), d)

    def targets(self) -> np.ndarray:
        return np.array([r.walk_score for r in self.records], dtype=np.float64)

    def group_ids(self) -> list[str]:
        return [r.group_id for r in self.records]

    def with_embeddings(self, **matrices: np.ndarray) -> "Dataset":
        """Copy with whole embedding matrices replaced, e.g. ``sat=...``."""
        recs = []
        for i, rec in enumerate(self.records):
            recs.append(rec.replace(**{f"{k}_emb": m[i] for k, m in matrices.items()}))
        dims = list(self.dims)
        for k, m in matrices.items():
            dims[("sat", "street", "pdfm").index(k)] = m.shape[1]
        return Dataset(tuple(recs), tuple(dims))


# ---------------------------------------------------------------------------
# serialization


def _fmt(x: float) -> str:
    return repr(float(x))


def format_record(rec: LocationRecord) -> str:
    return "|".join(
        [
            rec.record_id,
            rec.group_id,
            _fmt(rec.coord.lat),
            _fmt(rec.coord.lon),
            ",".join(map(_fmt, rec.sat_emb)),
            ",".join(map(_fmt, rec.street_emb)),
            ",".join(map(_fmt, rec.pdfm_emb)),
            _fmt(rec.walk_score),
        ]
    )


def write_dataset(ds: Dataset, path) -> None:
    lines = ["dims=" + ",".join(str(d) for d in ds.dims)]
    lines.extend(format_record(r) for r in ds.records)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _parse_floats(text: str, what: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",")]
    except ValueError:
        raise ValueError(f"{what} is not a comma-separated list of reals") from None


def parse_dims(line: str) -> tuple[int, int, int]:
    key, sep, value = line.strip().partition("=")
    if key != "dims" or not sep:
        raise ValueError("first line must be 'dims=<d_sat>,<d_street>,<d_pdfm>'")
    dims = tuple(int(v) for v in value.split(","))
    if len(dims) != 3 or min(dims) < 1:
        raise ValueError(f"invalid dims {value!r}")
    return dims  # type: ignore[return-value]


def parse_record(line: str) -> LocationRecord:
    fields = line.split("|")
    if len(fields) != 8:
        raise ValueError(f"expected 8 '|'-separated fields, got {len(fields)}")
    rid, gid, lat, lon, sat, street, pdfm, score = fields
    try:
        coord = GeoCoord(float(lat), float(lon))
    except ValueError as exc:
        raise ValueError(f"record {rid!r}: {exc}") from None
    try:
        score_value = float(score)
    except ValueError:
        raise ValueError(f"record {rid!r}: walk_score {score!r} is not a real") from None
    return LocationRecord(
        rid,
        gid,
        coord,
        _parse_floats(sat, "sat_emb"),
        _parse_floats(street, "street_emb"),
        _parse_floats(pdfm, "pdfm_emb"),
        score_value,
    )


def diagnose_file(path) -> tuple[list[LocationRecord], tuple[int, int, int] | None, list[Diagnostic]]:
    """Parse everything parseable and collect every problem found."""
    text = Path(path).read_text(encoding="utf-8")
    lines = text.splitlines()
    diags: list[Diagnostic] = []
    if not lines:
        return [], None, [Diagnostic(1, "empty file: missing dims metadata line")]
    try:
        dims = parse_dims(lines[0])
    except ValueError as exc:
        return [], None, [Diagnostic(1, str(exc))]
    records: list[LocationRecord] = []
    line_of: dict[str, int] = {}
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            rec = parse_record(line)
        except ValueError as exc:
            diags.append(Diagnostic(lineno, str(exc), line.split("|", 1)[0] or None))
            continue
        if rec.dims != dims:
            diags.append(Diagnostic(lineno, f"record {rec.record_id!r} has dims {rec.dims}, header says {dims}", rec.record_id))
            continue
        line_of.setdefault(rec.record_id, lineno)
        records.append(rec)
    for d in check_records(records, dims):
        diags.append(Diagnostic(line_of.get(d.record_id), d.message, d.record_id, d.group_id))
    return records, dims, diags


def parse_dataset(path) -> Dataset:
    records, dims, diags = diagnose_file(path)
    if diags:
        raise DatasetError(diags)
    return Dataset(tuple(records), dims)


# ---------------------------------------------------------------------------
# synthetic city


@dataclass(frozen=True)
class SynthConfig:
    """Desk-scale surrogate city.

    ``noise_std`` scales the per-location noise on the vision embeddings;
    PDFM vectors are zone averages of the latent field and carry their own,
    smaller noise (``pdfm_noise_std``).
    """

    n_locations: int = 2000
    dims: tuple[int, int, int] = DEFAULT_DIMS
    spatial_extent: float = 0.12
    autocorrelation_length: float = 0.02
    noise_std: float = 4.0
    augment_copies: int = 0
    seed: int = 0
    n_latent: int = 4
    zone_size: float = 0.03
    pdfm_noise_std: float = 0.1
    nuisance_dim: int = 4
    center: tuple[float, float] = (44.96, -93.20)

    def __post_init__(self):
        if self.n_locations < 1:
            raise ValueError("n_locations must be positive")
        if len(self.dims) != 3 or min(self.dims) < 1:
            raise ValueError(f"invalid dims {self.dims}")
        if not self.spatial_extent > 0:
            raise ValueError("spatial_extent must be > 0")
        if not self.autocorrelation_length > 0:
            raise ValueError("autocorrelation_length must be > 0")
        if self.noise_std < 0 or self.pdfm_noise_std < 0:
            raise ValueError("noise levels must be nonnegative")
        if self.augment_copies < 0:
            raise ValueError("augment_copies must be nonnegative")
        if self.n_latent < 1 or self.zone_size <= 0:
            raise ValueError("n_latent must be >= 1 and zone_size > 0")


def _bump_fields(rng: np.random.Generator, xy: np.ndarray, cfg: SynthConfig) -> np.ndarray:
    """(n, n_latent) smooth fields, each a sum of Gaussian bumps."""
    ell = cfg.autocorrelation_length
    side = cfg.spatial_extent + 4 * ell
    n_bumps = max(4, int(math.ceil(2.0 * (side / ell) ** 2)))
    fields = np.empty((xy.shape[0], cfg.n_latent))
    for k in range(cfg.n_latent):
        centers = rng.uniform(-2 * ell, cfg.spatial_extent + 2 * ell, size=(n_bumps, 2))
        amps = rng.standard_normal(n_bumps)
        d2 = ((xy[:, None, :] - centers[None, :, :]) ** 2).sum(-1)
        fields[:, k] = np.exp(-d2 / (2 * ell**2)) @ amps
    fields -= fields.mean(0)
    sd = fields.std(0)
    return fields / np.where(sd > 0, sd, 1.0)


def synthesize_dataset(cfg: SynthConfig) -> Dataset:
    rng = np.random.default_rng(cfg.seed)
    n, (d_sat, d_street, d_pdfm) = cfg.n_locations, cfg.dims
    xy = rng.uniform(0.0, cfg.spatial_extent, size=(n, 2))
    lat = cfg.center[0] - cfg.spatial_extent / 2 + xy[:, 0]
    lon = cfg.center[1] - cfg.spatial_extent / 2 + xy[:, 1]

    latent = _bump_fields(rng, xy, cfg)
    beta = rng.standard_normal(cfg.n_latent)
    raw = latent @ beta
    raw = (raw - raw.mean()) / (raw.std() or 1.0)
    scores = np.clip(50.0 + 20.0 * raw, 0.0, 100.0)

    # zone-level context: the latent field averaged over square zones
    zone = np.floor(xy / cfg.zone_size).astype(np.int64)
    _, zone_idx = np.unique(zone, axis=0, return_inverse=True)
    zone_idx = zone_idx.reshape(-1)
    n_zones = zone_idx.max() + 1
    sums = np.zeros((n_zones, cfg.n_latent))
    np.add.at(sums, zone_idx, latent)
    zone_mean = sums / np.bincount(zone_idx, minlength=n_zones)[:, None]
    k = cfg.n_latent
    a_pdfm = rng.standard_normal((k, d_pdfm)) / math.sqrt(k)
    zone_noise = cfg.pdfm_noise_std * rng.standard_normal((n_zones, d_pdfm))
    pdfm = (zone_mean @ a_pdfm + zone_noise)[zone_idx]

    a_sat = rng.standard_normal((k, d_sat)) / math.sqrt(k)
    a_street = rng.standard_normal((k, d_street)) / math.sqrt(k)
    b_sat = rng.standard_normal((cfg.nuisance_dim, d_sat)) / math.sqrt(max(cfg.nuisance_dim, 1))
    b_street = rng.standard_normal((cfg.nuisance_dim, d_street)) / math.sqrt(max(cfg.nuisance_dim, 1))

    def vision(a, b, d):
        nuisance = rng.standard_normal((n, cfg.nuisance_dim)) @ b
        return latent @ a + nuisance + cfg.noise_std * rng.standard_normal((n, d))

    sat = vision(a_sat, b_sat, d_sat)
    street = vision(a_street, b_street, d_street)

    records = []
    width = len(str(n - 1))
    for i in range(n):
        gid = f"g{i:0{width}d}"
        coord = GeoCoord(float(lat[i]), float(lon[i]))
        records.append(LocationRecord(f"{gid}-0", gid, coord, sat[i], street[i], pdfm[i], float(scores[i])))
    # augmented views: same location, fresh per-view noise on the images
    for c in range(1, cfg.augment_copies + 1):
        sat_c = sat + cfg.noise_std * 0.5 * rng.standard_normal(sat.shape)
        street_c = street + cfg.noise_std * 0.5 * rng.standard_normal(street.shape)
        for i in range(n):
            base = records[i]
            records.append(base.replace(record_id=f"{base.group_id}-{c}", sat_emb=sat_c[i], street_emb=street_c[i]))
    return Dataset(tuple(records), cfg.dims)
