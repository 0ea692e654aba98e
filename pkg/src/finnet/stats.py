"""Dataset-characterization statistics over catalog snapshots.

A snapshot is any sequence of ``ImageWithBoxes``; every operation here is a
pure function of it (plus the concept tree), so callers may parallelize per
image. Sampling uses numpy's seedable PCG64 generator so reports reproduce
across platforms.
"""

from __future__ import annotations

import hashlib
import logging
from collections import Counter
from dataclasses import dataclass
from io import BytesIO
from pathlib import Path
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from .catalog import ImageWithBoxes
from .taxonomy import ConceptTree, NoRankedAncestor, Rank

log = logging.getLogger(__name__)

# Fixed log-spaced binning for relative instance size; fractions below the
# first edge are clamped into the first bin so every localization is counted.
SIZE_BIN_COUNT = 20
SIZE_BIN_LOW = 1e-5
SIZE_BIN_EDGES = np.logspace(np.log10(SIZE_BIN_LOW), 0.0, SIZE_BIN_COUNT + 1)

AVERAGE_IMAGE_SIZE = (128, 128)


class StatsError(Exception):
    pass


class CoverageInconsistency(StatsError):
    """The expert-complete set does not contain an existing annotation."""


@dataclass
class Histogram:
    """Inclusive-exclusive bins (last bin right-closed), integer counts."""

    edges: list[float]
    counts: list[int]
    total: int

    def __post_init__(self):
        if len(self.edges) != len(self.counts) + 1:
            raise StatsError("edges must be one longer than counts")
        if any(b <= a for a, b in zip(self.edges, self.edges[1:])):
            raise StatsError("bin edges must be strictly increasing")
        if sum(self.counts) != self.total:
            raise StatsError("counts must sum to total")

    @property
    def percent(self) -> list[float]:
        if self.total == 0:
            return [0.0 for _ in self.counts]
        return [100.0 * c / self.total for c in self.counts]

    def to_dict(self) -> dict:
        return {
            "edges": [float(e) for e in self.edges],
            "counts": list(self.counts),
            "total": self.total,
            "percent": self.percent,
        }


def _count_histogram(values: Sequence[int]) -> Histogram:
    """Unit-width integer bins 0..max (bin k holds the images with count k)."""
    top = max(values) if values else 0
    counts = [0] * (top + 1)
    for v in values:
        counts[v] += 1
    return Histogram(edges=[float(k) for k in range(top + 2)],
                     counts=counts, total=len(values))


def instances_per_image(snapshot: Sequence[ImageWithBoxes]) -> Histogram:
    """Distribution of localizations per image; images with no boxes land in
    bin 0."""
    if not snapshot:
        raise StatsError("empty snapshot")
    return _count_histogram([len(img.localizations) for img in snapshot])


def _labels_at_rank(img: ImageWithBoxes, tree: ConceptTree, rank: Rank) -> set[str]:
    labels = set()
    for loc in img.localizations:
        node = tree.resolve(loc.concept)  # unresolvable concepts raise
        try:
            labels.add(tree.rank_label(node, rank))
        except NoRankedAncestor:
            # non-biological concepts (equipment, debris) have no label at
            # any taxonomic rank and do not contribute
            continue
    return labels


def concepts_per_image(snapshot: Sequence[ImageWithBoxes], tree: ConceptTree,
                       rank: Rank) -> Histogram:
    """Distribution of distinct concepts per image after back-propagating
    every label to ``rank``."""
    if not snapshot:
        raise StatsError("empty snapshot")
    return _count_histogram(
        [len(_labels_at_rank(img, tree, rank)) for img in snapshot]
    )


def mean_instances_and_concepts(
    snapshot: Sequence[ImageWithBoxes], tree: ConceptTree, rank: Rank
) -> tuple[float, float]:
    if not snapshot:
        raise StatsError("empty snapshot")
    inst = [len(img.localizations) for img in snapshot]
    conc = [len(_labels_at_rank(img, tree, rank)) for img in snapshot]
    return float(np.mean(inst)), float(np.mean(conc))


@dataclass
class SizeDistribution:
    histogram: Histogram
    excluded: int  # localizations on images with unknown dimensions


def relative_size_distribution(snapshot: Sequence[ImageWithBoxes]) -> SizeDistribution:
    """Per localization, bbox area over image area, binned log-spaced.

    Localizations on images without known pixel dimensions cannot be sized;
    they are excluded and counted in the result.
    """
    if not snapshot:
        raise StatsError("empty snapshot")
    fractions = []
    excluded = 0
    for img in snapshot:
        rec = img.record
        if rec.width_px is None or rec.height_px is None:
            excluded += len(img.localizations)
            continue
        frame_area = rec.width_px * rec.height_px
        for loc in img.localizations:
            frac = loc.bbox.area() / frame_area
            fractions.append(min(max(frac, SIZE_BIN_LOW), 1.0))
    counts, _ = np.histogram(fractions, bins=SIZE_BIN_EDGES)
    hist = Histogram(edges=SIZE_BIN_EDGES.tolist(),
                     counts=[int(c) for c in counts],
                     total=len(fractions))
    return SizeDistribution(histogram=hist, excluded=excluded)


def coverage_sample(
    snapshot: Sequence[ImageWithBoxes],
    tree: ConceptTree,
    concept: str,
    rank: Optional[Rank] = None,
    n: int = 50,
    seed: int = 0,
) -> list[ImageWithBoxes]:
    """Uniform sample (without replacement) of images carrying at least one
    annotation of the concept at the given taxonomic level, descendants
    included. Deterministic under ``seed``; n is capped at the candidate
    count."""
    if n <= 0:
        raise StatsError(f"sample size must be > 0, got {n}")
    node = tree.resolve(concept)
    if rank is not None:
        node = tree.resolve(tree.rank_label(node, rank))
    names = tree.descendant_names(node)
    candidates = [img for img in snapshot
                  if any(loc.concept in names for loc in img.localizations)]
    candidates.sort(key=lambda img: (img.record.uuid, img.record.image_url))
    if not candidates:
        raise StatsError(f"no candidate images for {concept!r}"
                         + (f" at rank {rank.value}" if rank else ""))
    k = min(n, len(candidates))
    rng = np.random.default_rng(seed)
    picked = sorted(rng.choice(len(candidates), size=k, replace=False).tolist())
    return [candidates[i] for i in picked]


@dataclass
class ImageCoverage:
    image_id: str
    existing_target: int
    complete_target: int
    existing_other: int
    complete_other: int

    @staticmethod
    def _ratio(existing: int, complete: int) -> float:
        # 0/0 is defined as 1: an image with nothing to annotate is
        # vacuously fully covered
        return existing / complete if complete else 1.0

    @property
    def recall_target(self) -> float:
        return self._ratio(self.existing_target, self.complete_target)

    @property
    def recall_other(self) -> float:
        return self._ratio(self.existing_other, self.complete_other)


@dataclass
class CoverageReport:
    concept: str
    rank: Optional[Rank]
    n: int
    per_image: list[ImageCoverage]
    recall_target: float
    recall_other: float
    seed: Optional[int] = None


def coverage_recall(
    existing: Mapping[str, Sequence[str]],
    complete: Mapping[str, Sequence[str]],
    target: set[str],
    *,
    concept: str = "",
    rank: Optional[Rank] = None,
    seed: Optional[int] = None,
) -> CoverageReport:
    """Average recall of the existing annotations against the
    expert-completed set.

    ``existing``/``complete`` map image id to its list of concept labels;
    experts only add, so the complete multiset must contain the existing one
    per image. Recall is computed per image for the target concept set and
    for everything else, then averaged.
    """
    per_image: list[ImageCoverage] = []
    for image_id in complete:
        have = Counter(existing.get(image_id, ()))
        full = Counter(complete[image_id])
        overshoot = have - full
        if overshoot:
            label = next(iter(overshoot))
            raise CoverageInconsistency(
                f"image {image_id}: existing annotation {label!r} missing "
                f"from the expert-complete set"
            )
        per_image.append(ImageCoverage(
            image_id=image_id,
            existing_target=sum(c for lab, c in have.items() if lab in target),
            complete_target=sum(c for lab, c in full.items() if lab in target),
            existing_other=sum(c for lab, c in have.items() if lab not in target),
            complete_other=sum(c for lab, c in full.items() if lab not in target),
        ))
    missing = set(existing) - set(complete)
    if missing:
        raise CoverageInconsistency(
            f"image {sorted(missing)[0]} has existing annotations but no "
            f"expert-complete set"
        )
    if not per_image:
        raise StatsError("no images in coverage input")
    return CoverageReport(
        concept=concept,
        rank=rank,
        n=len(per_image),
        per_image=per_image,
        recall_target=float(np.mean([c.recall_target for c in per_image])),
        recall_other=float(np.mean([c.recall_other for c in per_image])),
        seed=seed,
    )


@dataclass
class AverageImage:
    width: int
    height: int
    mean: np.ndarray  # (height, width, 3) float64 in [0, 1]
    n: int

    def to_png_bytes(self) -> bytes:
        from PIL import Image

        arr = np.clip(self.mean * 255.0, 0, 255).astype(np.uint8)
        buf = BytesIO()
        Image.fromarray(arr, mode="RGB").save(buf, format="PNG")
        return buf.getvalue()


PixelSource = Union[str, Path, bytes, np.ndarray]


def _decode_to_array(source: PixelSource, size: tuple[int, int]) -> np.ndarray:
    from PIL import Image

    if isinstance(source, np.ndarray):
        arr = source.astype(np.float64)
        if arr.ndim == 2:
            arr = np.stack([arr] * 3, axis=-1)
        if arr.max() > 1.0:
            arr = arr / 255.0
        arr = np.clip(arr, 0.0, 1.0)
        width, height = size
        if arr.shape == (height, width, 3):
            return arr  # already normalized at target size; no resampling
        img = Image.fromarray((arr * 255).astype(np.uint8), mode="RGB")
    elif isinstance(source, bytes):
        img = Image.open(BytesIO(source))
    else:
        img = Image.open(source)
    img = img.convert("RGB").resize(size, Image.BILINEAR)
    return np.asarray(img, dtype=np.float64) / 255.0


def average_image(
    sources: Sequence[PixelSource],
    size: tuple[int, int] = AVERAGE_IMAGE_SIZE,
) -> AverageImage:
    """Pixel-wise arithmetic mean of the inputs after bilinear resize to
    ``size`` and normalization to [0, 1]. Undecodable inputs are skipped with
    a warning; an all-skipped input set is an error."""
    width, height = size
    total = np.zeros((height, width, 3), dtype=np.float64)
    n = 0
    for idx, source in enumerate(sources):
        try:
            total += _decode_to_array(source, size)
            n += 1
        except Exception as exc:  # undecodable image: skip, keep going
            log.warning("skipping undecodable image #%d: %s", idx, exc)
    if n == 0:
        raise StatsError("no decodable images in input")
    return AverageImage(width=width, height=height, mean=total / n, n=n)


# --- pixel fetching ------------------------------------------------------


def fetch_image_bytes(url: str, cache_dir: Union[str, Path]) -> bytes:
    """Fetch one image by URL through a local content cache."""
    import requests

    cache_dir = Path(cache_dir)
    cache_dir.mkdir(parents=True, exist_ok=True)
    key = hashlib.sha1(url.encode("utf-8")).hexdigest()
    cached = cache_dir / key
    if cached.exists():
        return cached.read_bytes()
    resp = requests.get(url, timeout=30)
    resp.raise_for_status()
    cached.write_bytes(resp.content)
    return resp.content


def gather_pixels(urls: Sequence[str], cache_dir: Union[str, Path],
                  max_workers: int = 8) -> list[bytes]:
    """Fetch many URLs with bounded concurrency; failures are skipped with a
    warning (average_image will complain if nothing decodes)."""
    from concurrent.futures import ThreadPoolExecutor

    def fetch(url: str) -> Optional[bytes]:
        try:
            return fetch_image_bytes(url, cache_dir)
        except Exception as exc:
            log.warning("fetch failed for %s: %s", url, exc)
            return None

    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        results = list(pool.map(fetch, urls))
    return [r for r in results if r is not None]
