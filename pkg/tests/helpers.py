"""Shared randomized-fixture builders used by unit and acceptance tests."""

from __future__ import annotations

import numpy as np

from finnet.catalog import BoundingBox, ImageRecord, ImageWithBoxes, Localization
from finnet.taxonomy import BIOLOGICAL_RANKS, ConceptTree, Rank, build_tree


def random_tree(rng: np.random.Generator, n_nodes: int = 12) -> ConceptTree:
    """Random valid tree: every ranked node is strictly finer than its
    nearest ranked ancestor; some nodes are unranked."""
    parents = [None]
    ranks: list[Rank] = []
    root_unranked = bool(rng.integers(0, 4) == 0)
    ranks.append(Rank.UNRANKED if root_unranked
                 else BIOLOGICAL_RANKS[rng.integers(0, 3)])
    for i in range(1, n_nodes):
        parent = int(rng.integers(0, i))
        parents.append(parent)
        anc = parent
        anc_depth = -1
        while anc is not None:
            if ranks[anc].is_biological:
                anc_depth = ranks[anc].depth
                break
            anc = parents[anc]
        finer = [r for r in BIOLOGICAL_RANKS if r.depth > anc_depth]
        if not finer or rng.random() < 0.15:
            ranks.append(Rank.UNRANKED)
        else:
            ranks.append(finer[rng.integers(0, len(finer))])
    rows = []
    for i in range(n_nodes):
        parent_name = f"taxon{parents[i]}" if parents[i] is not None else None
        rows.append((f"taxon{i}", ranks[i], parent_name, []))
    return build_tree(rows)


def random_snapshot(rng: np.random.Generator, tree: ConceptTree,
                    max_images: int = 20) -> list[ImageWithBoxes]:
    """Random images with boxes labeled by random tree concepts."""
    names = sorted(n.name for n in tree)
    n_images = int(rng.integers(1, max_images + 1))
    snapshot = []
    for i in range(n_images):
        w, h = int(rng.integers(100, 2000)), int(rng.integers(100, 2000))
        rec = ImageRecord(
            image_url=f"https://img.example.org/r{i}.png",
            uuid=f"img-{i:04d}",
            width_px=w, height_px=h,
        )
        locs = []
        for _ in range(int(rng.integers(0, 6))):
            bw = float(rng.integers(1, w + 1))
            bh = float(rng.integers(1, h + 1))
            bx = float(rng.integers(0, w - int(bw) + 1))
            by = float(rng.integers(0, h - int(bh) + 1))
            concept = names[rng.integers(0, len(names))]
            locs.append(Localization(concept=concept,
                                     bbox=BoundingBox(bx, by, bw, bh)))
        snapshot.append(ImageWithBoxes(rec, locs))
    return snapshot


def oracle_rank_label(tree: ConceptTree, name: str, rank: Rank):
    """Independent reimplementation of rank back-propagation: a plain
    ancestor walk, kept deliberately separate from the library's version."""
    node = tree.resolve(name)
    chain = []
    cur = node
    while cur is not None:
        chain.append(cur)
        cur = cur.parent
    for n in chain:
        if n.rank is rank:
            return n.name
    for n in chain:
        if n.rank.is_biological and n.rank.depth <= rank.depth:
            return n.name
    ranked = [n for n in chain if n.rank.is_biological]
    return ranked[-1].name if ranked else None


def random_boxes(rng: np.random.Generator, n: int,
                 frame: float = 1000.0) -> np.ndarray:
    """(n, 4) array of x, y, w, h boxes inside a square frame."""
    w = rng.uniform(1.0, frame / 2, size=n)
    h = rng.uniform(1.0, frame / 2, size=n)
    x = rng.uniform(0.0, frame - w)
    y = rng.uniform(0.0, frame - h)
    return np.stack([x, y, w, h], axis=1)
