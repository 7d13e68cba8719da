"""Supervised style-source selection: ranking, top-N pools, pairing.

The supervised strategy restricts style sources to the N training images
on which a detector's predictions were most accurate (lowest NME). Each
content image then draws one style source uniformly (with replacement)
from that pool; with the pool widened to the whole training set this
degenerates to the unsupervised random-style regime.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .dataset import DatasetManifest, stable_seed
from .errors import SelectionError
from .metrics import Normalizer, PredictionSet, score_predictions

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RankedImage:
    id: str
    nme: float
    rank: int  # 1 = lowest NME


@dataclass(frozen=True)
class StylePool:
    """Top-n style sources in rank order."""

    n: int
    members: tuple[str, ...]


@dataclass(frozen=True)
class Pairing:
    """One style source per content id, plus the seed that produced it."""

    pairs: tuple[tuple[str, str], ...]
    seed: int
    pool_tag: str = ""

    def content_ids(self) -> list[str]:
        return [c for c, _ in self.pairs]

    def style_ids(self) -> list[str]:
        return [s for _, s in self.pairs]

    def save(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        header = {"kind": "pairing", "seed": int(self.seed), "pool": self.pool_tag}
        lines = [json.dumps(header, separators=(",", ":"))]
        for content_id, style_id in self.pairs:
            lines.append(json.dumps(
                {"content_id": content_id, "style_id": style_id},
                separators=(",", ":"),
            ))
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Pairing":
        lines = [ln for ln in Path(path).read_text(encoding="utf-8").splitlines()
                 if ln.strip()]
        if not lines:
            raise SelectionError(f"{path}: empty pairing file")
        header = json.loads(lines[0])
        if header.get("kind") != "pairing":
            raise SelectionError(f"{path}: not a pairing file")
        pairs = []
        for line in lines[1:]:
            d = json.loads(line)
            pairs.append((str(d["content_id"]), str(d["style_id"])))
        return cls(pairs=tuple(pairs), seed=int(header["seed"]),
                   pool_tag=header.get("pool", ""))


def rank_by_nme(predictions: PredictionSet, gt: DatasetManifest,
                norm: Normalizer = Normalizer()) -> list[RankedImage]:
    """Rank records by ascending prediction NME; ties break by id."""
    scores = score_predictions(predictions, gt, norm)
    order = sorted(scores.items(), key=lambda kv: (kv[1], kv[0]))
    return [RankedImage(id=rid, nme=val, rank=k + 1)
            for k, (rid, val) in enumerate(order)]


def sst_select(ranked: Sequence[RankedImage], n: int) -> StylePool:
    """Top-n pool: the first min(n, available) entries of the ranking."""
    if n < 1:
        raise SelectionError(f"pool size must be >= 1, got {n}")
    if not ranked:
        raise SelectionError("cannot select from an empty ranking")
    members = tuple(r.id for r in ranked[:n])
    return StylePool(n=n, members=members)


def assign_styles(train: DatasetManifest, pool: StylePool, seed: int,
                  forbid_self: bool = True) -> Pairing:
    """Pair every train image with one seeded-uniform draw from the pool.

    Draws use a per-content derived seed, so the pairing is independent of
    record order. When forbid_self is set and the first draw is the content
    itself, one redraw happens among the remaining members; a single-member
    pool that is the content itself is allowed with a logged note, since no
    alternative exists.
    """
    if not train.records:
        raise SelectionError("empty train manifest")
    if not pool.members:
        raise SelectionError("empty style pool")
    members = list(pool.members)
    pairs = []
    for rec in train.records:
        rng = np.random.default_rng(stable_seed(seed, "assign", rec.id))
        choice = members[int(rng.integers(len(members)))]
        if forbid_self and choice == rec.id:
            alternatives = [m for m in members if m != rec.id]
            if alternatives:
                choice = alternatives[int(rng.integers(len(alternatives)))]
            else:
                log.info("pool is only %r; allowing self-style for it", rec.id)
        pairs.append((rec.id, choice))
    return Pairing(pairs=tuple(pairs), seed=seed, pool_tag=f"top{pool.n}")


def make_test_st(test: DatasetManifest, train: DatasetManifest, seed: int) -> Pairing:
    """Pair every test image with a seeded-uniform random training image."""
    if not test.records:
        raise SelectionError("empty test manifest")
    if not train.records:
        raise SelectionError("empty train manifest")
    train_ids = train.ids()
    pairs = []
    for rec in test.records:
        rng = np.random.default_rng(stable_seed(seed, "test-st", rec.id))
        pairs.append((rec.id, train_ids[int(rng.integers(len(train_ids)))]))
    return Pairing(pairs=tuple(pairs), seed=seed, pool_tag="train")


def rank_from_files(predictions_path: str | Path, gt: DatasetManifest,
                    norm: Optional[Normalizer] = None) -> list[RankedImage]:
    predictions = PredictionSet.load(predictions_path)
    return rank_by_nme(predictions, gt, norm or Normalizer())


def save_ranking(ranked: Sequence[RankedImage], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [json.dumps({"kind": "ranking"}, separators=(",", ":"))]
    for r in ranked:
        lines.append(json.dumps(
            {"id": r.id, "nme": r.nme, "rank": r.rank}, separators=(",", ":")
        ))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_ranking(path: str | Path) -> list[RankedImage]:
    lines = [ln for ln in Path(path).read_text(encoding="utf-8").splitlines()
             if ln.strip()]
    if not lines or json.loads(lines[0]).get("kind") != "ranking":
        raise SelectionError(f"{path}: not a ranking file")
    out = []
    for line in lines[1:]:
        d = json.loads(line)
        out.append(RankedImage(id=str(d["id"]), nme=float(d["nme"]), rank=int(d["rank"])))
    return out
