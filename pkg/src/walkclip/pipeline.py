"""End-to-end experiment: split, enhance, fuse, tune, retrain, evaluate.

One hold-out partition is drawn per run and shared by every ablation row.
"""

from __future__ import annotations

import csv
import hashlib
import json
import time
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Any

import numpy as np

from .datamodel import Dataset, GeoCoord, parse_dataset
from .evaluation import DEFAULT_PROJECTIONS, GeoPrediction, evaluate
from .regressor import HyperGrid, TrainConfig, fuse, grid_search, train_regressor, write_checkpoint
from .safe import SafeConfig, safe_transform
from .splits import SplitPlan, make_split_plan, plan_indices, write_split_plan

SAFE_SCOPES = ("inductive", "partition", "transductive")


class PipelineError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}' failed: {cause}")


@dataclass(frozen=True)
class AblationRow:
    name: str
    use_sat: bool = True
    use_street: bool = True
    use_pdfm: bool = True
    use_safe: bool = False

    def __post_init__(self):
        if not (self.use_sat or self.use_street or self.use_pdfm):
            raise ValueError(f"row {self.name!r} enables no modality")


# the six rows of the ablation ladder, in order
LADDER = (
    AblationRow("street", use_sat=False, use_street=True, use_pdfm=False),
    AblationRow("sat", use_sat=True, use_street=False, use_pdfm=False),
    AblationRow("pdfm", use_sat=False, use_street=False, use_pdfm=True),
    AblationRow("vision", use_sat=True, use_street=True, use_pdfm=False),
    AblationRow("vision_pdfm", use_sat=True, use_street=True, use_pdfm=True),
    AblationRow("walkclip", use_sat=True, use_street=True, use_pdfm=True, use_safe=True),
)
ROWS_BY_NAME = {r.name: r for r in LADDER}


@dataclass(frozen=True)
class RunConfig:
    dataset: str
    output_dir: str
    seed: int = 0
    safe: SafeConfig = SafeConfig()
    train: TrainConfig = TrainConfig()
    grid: HyperGrid | None = HyperGrid()
    test_fraction: float = 0.15
    k: int = 5
    rows: tuple[AblationRow, ...] = LADDER
    swd_projections: int = DEFAULT_PROJECTIONS
    safe_scope: str = "inductive"

    def __post_init__(self):
        object.__setattr__(self, "rows", tuple(self.rows))
        if not self.rows:
            raise ValueError("at least one ablation row is required")
        if len({r.name for r in self.rows}) != len(self.rows):
            raise ValueError("ablation row names must be unique")
        if self.safe_scope not in SAFE_SCOPES:
            raise ValueError(f"safe_scope must be one of {SAFE_SCOPES}")
        if not 0 < self.test_fraction < 1:
            raise ValueError("test_fraction must lie in (0, 1)")
        if self.k < 2:
            raise ValueError("k must be >= 2")
        if self.swd_projections < 1:
            raise ValueError("swd_projections must be >= 1")

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["rows"] = [asdict(r) for r in self.rows]
        d["train"]["hidden"] = list(self.train.hidden)
        if self.grid is not None:
            d["grid"] = {k: list(v) for k, v in d["grid"].items()}
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "RunConfig":
        d = dict(d)
        known = {"dataset", "output_dir", "seed", "safe", "train", "grid", "test_fraction", "k",
                 "rows", "swd_projections", "safe_scope", "use_sat", "use_street", "use_pdfm", "use_safe"}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        if "safe" in d:
            d["safe"] = SafeConfig(**d["safe"])
        if "train" in d:
            t = dict(d["train"])
            if "hidden" in t:
                t["hidden"] = tuple(t["hidden"])
            d["train"] = TrainConfig(**t)
        if "grid" in d and d["grid"] is not None:
            d["grid"] = HyperGrid(**{k: tuple(v) for k, v in d["grid"].items()})
        switches = {k: d.pop(k) for k in ("use_sat", "use_street", "use_pdfm", "use_safe") if k in d}
        if "rows" in d:
            if switches:
                raise ValueError("give either 'rows' or top-level modality switches, not both")
            d["rows"] = tuple(ROWS_BY_NAME[r] if isinstance(r, str) else AblationRow(**r) for r in d["rows"])
        elif switches:
            d["rows"] = (AblationRow("custom", **switches),)
        return cls(**d)


def _scoped_safe(m: np.ndarray, xy: np.ndarray, train: np.ndarray, test: np.ndarray, cfg: SafeConfig, scope: str) -> np.ndarray:
    out = np.empty_like(m)
    if scope == "transductive":
        idx = np.concatenate([train, test])
        out[idx] = safe_transform(m[idx], xy[idx], cfg)
        return out
    out[train] = safe_transform(m[train], xy[train], cfg)
    if scope == "partition":
        out[test] = safe_transform(m[test], xy[test], cfg)
    else:
        # held-out rows see every point available at transform time
        idx = np.concatenate([train, test])
        out[test] = safe_transform(m[idx], xy[idx], cfg, rows=np.arange(train.size, idx.size))
    return out


def _row_features(row: AblationRow, mats: dict[str, np.ndarray], n: int) -> tuple[np.ndarray, tuple[int, int, int]]:
    empty = np.zeros((n, 0))
    parts = []
    for name, used in (("sat", row.use_sat), ("street", row.use_street), ("pdfm", row.use_pdfm)):
        key = f"{name}_safe" if row.use_safe and name != "pdfm" else name
        parts.append(mats[key] if used else empty)
    return fuse(*parts), tuple(p.shape[1] for p in parts)  # type: ignore[return-value]


def split_summary(ds: Dataset, plan: SplitPlan, test: np.ndarray, folds: list[np.ndarray]) -> dict[str, Any]:
    return {
        "seed": plan.seed,
        "bin_edges": list(plan.bin_edges),
        "n_records": len(ds),
        "n_groups": len(set(ds.group_ids())),
        "n_test_records": int(test.size),
        "n_test_groups": len(plan.test_group_ids),
        "requested_test_fraction": plan.test_fraction,
        "realized_test_fraction": test.size / len(ds),
        "fold_records": [int(f.size) for f in folds],
        "fold_groups": [len(f) for f in plan.folds],
    }


def _write_predictions(path: Path, ds: Dataset, rows: np.ndarray, pred: np.ndarray) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["record_id", "group_id", "lat", "lon", "predicted", "target"])
        for i, p in zip(rows, pred):
            r = ds.records[i]
            w.writerow([r.record_id, r.group_id, repr(r.coord.lat), repr(r.coord.lon), repr(float(p)), repr(r.walk_score)])


def read_predictions(path) -> list[GeoPrediction]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        return [
            GeoPrediction(GeoCoord(float(r["lat"]), float(r["lon"])), float(r["predicted"]), float(r["target"]))
            for r in csv.DictReader(fh)
        ]


def write_manifest(out: Path, extra: dict[str, Any] | None = None) -> None:
    files = {}
    for p in sorted(out.rglob("*")):
        if p.is_file() and p.name != "manifest.json":
            files[str(p.relative_to(out))] = {
                "bytes": p.stat().st_size,
                "sha256": hashlib.sha256(p.read_bytes()).hexdigest(),
            }
    doc = {"files": files, **(extra or {})}
    (out / "manifest.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def run_pipeline(cfg: RunConfig, ds: Dataset | None = None, write: bool = True) -> dict[str, Any]:
    """Execute every ablation row and return the run report.

    The report holds everything needed to rerun bit-for-bit; wall-clock
    timings live under ``"timings"`` and are the only nondeterministic part.
    """
    timings: dict[str, float] = {}
    out = Path(cfg.output_dir)

    def stage(name, fn, *args, **kw):
        t0 = time.perf_counter()
        try:
            return fn(*args, **kw)
        except PipelineError:
            raise
        except Exception as exc:
            raise PipelineError(name, exc) from exc
        finally:
            timings[name] = timings.get(name, 0.0) + time.perf_counter() - t0

    if ds is None:
        ds = stage("load", parse_dataset, cfg.dataset)
    if write:
        out.mkdir(parents=True, exist_ok=True)
    plan = stage("split", make_split_plan, ds, cfg.test_fraction, cfg.k, cfg.seed)
    test, folds = plan_indices(ds, plan)
    train = np.concatenate(folds)
    # fold indices relative to the training matrix
    pos = np.empty(len(ds), dtype=np.int64)
    pos[train] = np.arange(train.size)
    rel_folds = [pos[f] for f in folds]

    xy = ds.coords()
    y = ds.targets()
    mats = {m: ds.matrix(m) for m in ("sat", "street", "pdfm")}
    if any(r.use_safe for r in cfg.rows):
        for m in ("sat", "street"):
            mats[f"{m}_safe"] = stage("safe", _scoped_safe, mats[m], xy, train, test, cfg.safe, cfg.safe_scope)

    report: dict[str, Any] = {
        "config": cfg.to_dict(),
        "safe_scope": cfg.safe_scope,
        "split": split_summary(ds, plan, test, folds),
        "rows": [],
    }
    if write:
        write_split_plan(plan, out / "split_plan.txt")

    for row in cfg.rows:
        x, dims = _row_features(row, mats, len(ds))
        entry: dict[str, Any] = {"name": row.name, "switches": asdict(row), "fusion_dims": list(dims)}
        train_cfg = replace(cfg.train, seed=cfg.seed)
        if cfg.grid is not None:
            gr = stage(f"grid:{row.name}", grid_search, x[train], y[train], rel_folds, cfg.grid, train_cfg, cfg.seed)
            train_cfg = gr.best
            entry["grid"] = {"cells": [c.as_dict() for c in gr.cells], "best_index": gr.best_index, "n_fits": gr.n_fits}
        entry["train_config"] = {**asdict(train_cfg), "hidden": list(train_cfg.hidden)}
        model, trace = stage(f"train:{row.name}", train_regressor, x[train], y[train], train_cfg, dims)
        pred = model.predict(x[test])
        geo = [GeoPrediction(ds.records[i].coord, float(p), ds.records[i].walk_score) for i, p in zip(test, pred)]
        ev = stage(f"eval:{row.name}", evaluate, geo, cfg.swd_projections, cfg.seed)
        entry["final_train_loss"] = trace[-1]
        entry["eval"] = asdict(ev)
        report["rows"].append(entry)
        if write:
            _write_predictions(out / f"predictions_{row.name}.csv", ds, test, pred)
            write_checkpoint(model, out / f"model_{row.name}.txt")
            (out / f"eval_{row.name}.txt").write_text(ev.to_text(), encoding="utf-8")

    report["timings"] = timings
    if write:
        (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        write_manifest(out, {"seed": cfg.seed})
    return report


def strip_timings(report: dict[str, Any]) -> dict[str, Any]:
    return {k: v for k, v in report.items() if k != "timings"}
