from __future__ import annotations

import uuid as uuidlib
from pathlib import Path

import pytest

from finnet.catalog import (
    BoundingBox,
    CatalogStore,
    Collection,
    ImageRecord,
    ImageWithBoxes,
    Localization,
)
from finnet.taxonomy import load_taxonomy

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def tree():
    return load_taxonomy(FIXTURES / "taxonomy.txt")


@pytest.fixture
def store(tree):
    s = CatalogStore(":memory:", tree=tree)
    yield s
    s.close()


def make_collection(**overrides) -> Collection:
    fields = dict(
        uuid=str(uuidlib.uuid4()),
        owner_institution="Deep Sea Survey Lab",
        rights_holder="Deep Sea Survey Lab",
        contributor_email="data@dssl.example.org",
        url="https://dssl.example.org/uploads/1",
        data_format="CSV",
    )
    fields.update(overrides)
    return Collection(**fields)


def make_image(url="https://img.example.org/a.png", boxes=(), **overrides) -> ImageWithBoxes:
    rec = ImageRecord(image_url=url, **overrides)
    locs = [
        Localization(concept=concept, bbox=BoundingBox(*bbox))
        for concept, bbox in boxes
    ]
    return ImageWithBoxes(rec, locs)


@pytest.fixture
def seeded_store(store):
    """Store with one collection and a small, known image set."""
    collection = make_collection()
    store.upsert_collection(collection)
    images = [
        make_image(
            "https://img.example.org/mcnutti.png",
            boxes=[("Bathochordaeus mcnutti", (10, 10, 50, 40))],
            depth_m=250.0, latitude=36.7, longitude=-122.0,
            timestamp="2021-05-01T10:00:00+00:00",
            imaging_type="ROV", width_px=1920, height_px=1080,
        ),
        make_image(
            "https://img.example.org/genus.png",
            boxes=[("Bathochordaeus", (5, 5, 30, 30)),
                   ("Aegina", (100, 100, 60, 60))],
            depth_m=400.0, latitude=36.8, longitude=-122.1,
            timestamp="2021-05-02T10:00:00+00:00",
            imaging_type="ROV", width_px=1920, height_px=1080,
        ),
        make_image(
            "https://img.example.org/shallow.png",
            boxes=[("Strongylocentrotus fragilis", (0, 0, 200, 200))],
            depth_m=50.0, latitude=35.0, longitude=-121.0,
            timestamp="2021-05-03T10:00:00+00:00",
            imaging_type="drop camera", width_px=1000, height_px=1000,
        ),
    ]
    store.add_images(collection.uuid, images)
    return store, collection
