"""CLIP-style contrastive alignment of precomputed embedding pairs.

Two linear heads project image and text vectors into a shared space; the
InfoNCE loss compares cosine similarities scaled by a learnable temperature
``tau = exp(log_tau)``. The default loss is one-directional (each image
against all texts); ``symmetric=True`` averages in the text-to-image term.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .optim import AdamState, adamw_update

INITIAL_TAU = 0.07


class ZeroNormError(ValueError):
    pass


@dataclass(frozen=True)
class EmbeddingPairBatch:
    image_embs: np.ndarray
    text_embs: np.ndarray
    pair_ids: tuple[str, ...] | None = None

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.image_embs, dtype=np.float64))
        t = np.atleast_2d(np.asarray(self.text_embs, dtype=np.float64))
        if x.shape[0] != t.shape[0] or x.shape[0] < 1:
            raise ValueError("image and text matrices need the same, nonzero row count")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(t))):
            raise ValueError("embeddings must be finite")
        object.__setattr__(self, "image_embs", x)
        object.__setattr__(self, "text_embs", t)
        if self.pair_ids is not None:
            ids = tuple(self.pair_ids)
            if len(ids) != x.shape[0]:
                raise ValueError("pair_ids length does not match the batch")
            object.__setattr__(self, "pair_ids", ids)

    def __len__(self) -> int:
        return self.image_embs.shape[0]

    def take(self, rows) -> "EmbeddingPairBatch":
        rows = np.asarray(rows)
        ids = None if self.pair_ids is None else tuple(self.pair_ids[i] for i in rows)
        return EmbeddingPairBatch(self.image_embs[rows], self.text_embs[rows], ids)


@dataclass(frozen=True)
class ProjectionHead:
    image_proj: np.ndarray
    text_proj: np.ndarray
    log_tau: float = math.log(INITIAL_TAU)
    symmetric: bool = False

    @property
    def tau(self) -> float:
        return math.exp(self.log_tau)

    @classmethod
    def init(cls, p: int, q: int, k: int, seed: int = 0, symmetric: bool = False) -> "ProjectionHead":
        if min(p, q, k) < 1:
            raise ValueError("dimensions must be positive")
        rng = np.random.default_rng(seed)
        return cls(
            rng.standard_normal((p, k)) / math.sqrt(p),
            rng.standard_normal((q, k)) / math.sqrt(q),
            math.log(INITIAL_TAU),
            symmetric,
        )

    def project_images(self, x) -> np.ndarray:
        return np.asarray(x, dtype=np.float64) @ self.image_proj

    def project_texts(self, t) -> np.ndarray:
        return np.asarray(t, dtype=np.float64) @ self.text_proj


@dataclass(frozen=True)
class ContrastiveTrainConfig:
    epochs: int = 10
    learning_rate: float = 1e-2
    batch_size: int = 32
    seed: int = 0
    symmetric: bool = False
    proj_dim: int = 32

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2")
        if self.proj_dim < 1:
            raise ValueError("proj_dim must be >= 1")


@dataclass(frozen=True)
class HeadGrads:
    image_proj: np.ndarray
    text_proj: np.ndarray
    log_tau: float


def cosine_similarity(u, v) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise ZeroNormError("cosine similarity is undefined for a zero vector")
    return float(np.clip(u @ v / (nu * nv), -1.0, 1.0))


def _normalize(z: np.ndarray, what: str) -> tuple[np.ndarray, np.ndarray]:
    norms = np.linalg.norm(z, axis=1)
    if np.any(norms == 0):
        raise ZeroNormError(f"zero-norm projected {what} row")
    return z / norms[:, None], norms


def _log_softmax(a: np.ndarray, axis: int) -> np.ndarray:
    m = a.max(axis=axis, keepdims=True)
    return a - m - np.log(np.exp(a - m).sum(axis=axis, keepdims=True))


def _forward(head: ProjectionHead, batch: EmbeddingPairBatch):
    u = batch.image_embs @ head.image_proj
    v = batch.text_embs @ head.text_proj
    uh, un = _normalize(u, "image")
    vh, vn = _normalize(v, "text")
    sim = uh @ vh.T
    logits = sim / head.tau
    return uh, un, vh, vn, sim, logits


def info_nce_loss(head: ProjectionHead, batch: EmbeddingPairBatch) -> float:
    *_, logits = _forward(head, batch)
    i2t = -np.mean(np.diag(_log_softmax(logits, axis=1)))
    if not head.symmetric:
        return float(max(i2t, 0.0))
    t2i = -np.mean(np.diag(_log_softmax(logits, axis=0)))
    return float(max(0.5 * (i2t + t2i), 0.0))


def info_nce_grad(head: ProjectionHead, batch: EmbeddingPairBatch) -> HeadGrads:
    uh, un, vh, vn, sim, logits = _forward(head, batch)
    n = logits.shape[0]
    eye = np.eye(n)
    # dL/dlogits
    g = (np.exp(_log_softmax(logits, axis=1)) - eye) / n
    if head.symmetric:
        g = 0.5 * (g + (np.exp(_log_softmax(logits, axis=0)) - eye) / n)
    d_log_tau = -float(np.sum(g * logits))
    d_sim = g / head.tau
    d_uh = d_sim @ vh
    d_vh = d_sim.T @ uh
    # back through row normalization z / |z|
    d_u = (d_uh - uh * np.sum(d_uh * uh, axis=1, keepdims=True)) / un[:, None]
    d_v = (d_vh - vh * np.sum(d_vh * vh, axis=1, keepdims=True)) / vn[:, None]
    return HeadGrads(batch.image_embs.T @ d_u, batch.text_embs.T @ d_v, d_log_tau)


def train_projection_head(
    pairs: EmbeddingPairBatch, cfg: ContrastiveTrainConfig, head: ProjectionHead | None = None
) -> tuple[ProjectionHead, list[float]]:
    """Minibatch Adam on the InfoNCE loss.

    Returns the trained head and a loss trace: element 0 is the full-data
    loss before training, element e the full-data loss after epoch e.
    """
    n = len(pairs)
    if n < cfg.batch_size:
        raise ValueError(f"need at least batch_size={cfg.batch_size} pairs, got {n}")
    rng = np.random.default_rng(cfg.seed)
    if head is None:
        head = ProjectionHead.init(
            pairs.image_embs.shape[1], pairs.text_embs.shape[1], cfg.proj_dim,
            seed=int(rng.integers(2**63)), symmetric=cfg.symmetric,
        )
    else:
        head = replace(head, symmetric=cfg.symmetric)
    params = [head.image_proj, head.text_proj, np.array(head.log_tau)]
    state = AdamState.zeros_like(params)
    trace = [info_nce_loss(head, pairs)]
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        # drop a trailing batch smaller than 2: its loss is identically zero
        for start in range(0, n, cfg.batch_size):
            rows = order[start:start + cfg.batch_size]
            if rows.size < 2:
                continue
            g = info_nce_grad(head, pairs.take(rows))
            params, state = adamw_update(
                params, [g.image_proj, g.text_proj, np.array(g.log_tau)], state, cfg.learning_rate
            )
            head = ProjectionHead(params[0], params[1], float(params[2]), cfg.symmetric)
        trace.append(info_nce_loss(head, pairs))
    return head, trace


# ---------------------------------------------------------------------------
# fixtures and files


def rotation_pairs(n: int, p: int, seed: int = 0, noise_std: float = 0.0) -> EmbeddingPairBatch:
    """Pairs whose text vector is a fixed random rotation of the image vector."""
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.standard_normal((p, p)))
    x = rng.standard_normal((n, p))
    t = x @ q + noise_std * rng.standard_normal((n, p))
    return EmbeddingPairBatch(x, t, tuple(f"p{i}" for i in range(n)))


def write_pairs(batch: EmbeddingPairBatch, path) -> None:
    ids = batch.pair_ids or tuple(f"p{i}" for i in range(len(batch)))
    lines = [
        "|".join([pid, ",".join(map(repr, map(float, x))), ",".join(map(repr, map(float, t)))])
        for pid, x, t in zip(ids, batch.image_embs, batch.text_embs)
    ]
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def parse_pairs(path) -> EmbeddingPairBatch:
    ids, xs, ts = [], [], []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split("|")
        if len(parts) != 3:
            raise ValueError(f"line {lineno}: expected pair_id|image_emb|text_emb")
        try:
            x = [float(a) for a in parts[1].split(",")]
            t = [float(a) for a in parts[2].split(",")]
        except ValueError:
            raise ValueError(f"line {lineno}: embeddings must be comma-separated reals") from None
        if xs and (len(x) != len(xs[0]) or len(t) != len(ts[0])):
            raise ValueError(f"line {lineno}: embedding dimension mismatch")
        ids.append(parts[0])
        xs.append(x)
        ts.append(t)
    if not ids:
        raise ValueError("pair file is empty")
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate pair_id")
    return EmbeddingPairBatch(np.array(xs), np.array(ts), tuple(ids))


def write_head(head: ProjectionHead, path, trace=None) -> None:
    p, k = head.image_proj.shape
    q = head.text_proj.shape[0]
    lines = [
        f"shape={p},{q},{k}",
        f"log_tau={head.log_tau!r}",
        f"symmetric={int(head.symmetric)}",
        "image_proj=" + ",".join(map(repr, head.image_proj.ravel().tolist())),
        "text_proj=" + ",".join(map(repr, head.text_proj.ravel().tolist())),
    ]
    if trace is not None:
        lines.append("loss_trace=" + ",".join(map(repr, map(float, trace))))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_head(path) -> ProjectionHead:
    kv = dict(line.split("=", 1) for line in Path(path).read_text(encoding="utf-8").splitlines() if "=" in line)
    p, q, k = (int(a) for a in kv["shape"].split(","))
    image = np.array([float(a) for a in kv["image_proj"].split(",")]).reshape(p, k)
    text = np.array([float(a) for a in kv["text_proj"].split(",")]).reshape(q, k)
    return ProjectionHead(image, text, float(kv["log_tau"]), bool(int(kv["symmetric"])))
