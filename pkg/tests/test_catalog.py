from __future__ import annotations

import pytest

from finnet.catalog import (
    CatalogStore,
    IllegalTransition,
    QueryFilter,
    UnknownEntity,
    ValidationError,
    VerificationState,
)
from finnet.taxonomy import ConceptNotFound

from .conftest import make_collection, make_image


class TestCollections:
    def test_minimal_valid_collection_roundtrips(self, store):
        c = make_collection(extra={"bibliographic_citation": "Doe et al. 2021"})
        uuid = store.upsert_collection(c)
        got = store.get_collection(uuid)
        assert got.owner_institution == c.owner_institution
        assert got.extra == {"bibliographic_citation": "Doe et al. 2021"}
        assert got.modified  # stamped with upload time

    @pytest.mark.parametrize("field,display", [
        ("uuid", "uuid"),
        ("owner_institution", "owner's institution"),
        ("rights_holder", "rights holder"),
        ("contributor_email", "contributor's email"),
        ("url", "url"),
        ("data_format", "data format"),
    ])
    def test_missing_required_field_is_named(self, store, field, display):
        c = make_collection(**{field: "  "})
        with pytest.raises(ValidationError) as exc:
            store.upsert_collection(c)
        assert exc.value.field == display

    def test_record_type_must_be_images(self, store):
        with pytest.raises(ValidationError) as exc:
            store.upsert_collection(make_collection(record_type="videos"))
        assert exc.value.field == "record type"

    def test_upsert_is_idempotent_on_uuid(self, store):
        c = make_collection()
        store.upsert_collection(c)
        c.extra = {"bibliographic_citation": "New citation 2022"}
        store.upsert_collection(c)
        assert len(store.list_collections()) == 1
        got = store.get_collection(c.uuid)
        assert got.extra["bibliographic_citation"] == "New citation 2022"

    def test_unknown_extra_field_rejected(self, store):
        with pytest.raises(ValidationError):
            store.upsert_collection(make_collection(extra={"not_a_field": "x"}))


class TestAddImages:
    def test_counts(self, store):
        c = make_collection()
        store.upsert_collection(c)
        counts = store.add_images(c.uuid, [
            make_image("https://i/1.png", boxes=[("Aegina", (0, 0, 10, 10))]),
            make_image("https://i/2.png", boxes=[("Aegina", (0, 0, 10, 10)),
                                                 ("Medusae", (5, 5, 10, 10))]),
        ])
        assert counts == (2, 3)
        store.check_referential_integrity()

    def test_zero_width_box_rejects_whole_batch(self, store):
        c = make_collection()
        store.upsert_collection(c)
        before = store.digest()
        with pytest.raises(ValidationError, match="bounding box"):
            store.add_images(c.uuid, [
                make_image("https://i/ok.png", boxes=[("Aegina", (0, 0, 10, 10))]),
                make_image("https://i/bad.png", boxes=[("Aegina", (0, 0, 0, 10))]),
            ])
        assert store.digest() == before
        assert store.counts()["images"] == 0

    def test_unresolvable_concept_rejects_whole_batch(self, store):
        c = make_collection()
        store.upsert_collection(c)
        before = store.digest()
        with pytest.raises(ConceptNotFound) as exc:
            store.add_images(c.uuid, [
                make_image("https://i/1.png", boxes=[("Nonexistus", (0, 0, 5, 5))]),
            ])
        assert "Nonexistus" in str(exc.value)
        assert store.digest() == before

    def test_unknown_collection(self, store):
        with pytest.raises(UnknownEntity):
            store.add_images("no-such-uuid", [make_image()])

    def test_box_must_fit_in_known_frame(self, store):
        c = make_collection()
        store.upsert_collection(c)
        with pytest.raises(ValidationError, match="frame"):
            store.add_images(c.uuid, [
                make_image("https://i/1.png",
                           boxes=[("Aegina", (90, 0, 20, 10))],
                           width_px=100, height_px=100),
            ])

    def test_concepts_are_canonicalized(self, store):
        c = make_collection()
        store.upsert_collection(c)
        store.add_images(c.uuid, [
            make_image("https://i/1.png", boxes=[("jelly", (0, 0, 5, 5))]),
        ])
        [img] = store.snapshot()
        assert img.localizations[0].concept == "Medusae"

    def test_bad_latitude_rejected(self, store):
        c = make_collection()
        store.upsert_collection(c)
        with pytest.raises(ValidationError) as exc:
            store.add_images(c.uuid, [make_image("https://i/1.png", latitude=123.0)])
        assert exc.value.field == "latitude"


class TestQuery:
    def test_genus_filter_with_descendants_reaches_species(self, seeded_store):
        store, _ = seeded_store
        page = store.query(QueryFilter(concept="Bathochordaeus",
                                       include_descendants=True))
        urls = {i.record.image_url for i in page.items}
        assert "https://img.example.org/mcnutti.png" in urls
        assert "https://img.example.org/genus.png" in urls
        assert page.total == 2

    def test_descendants_false_is_exact_match_only(self, seeded_store):
        store, _ = seeded_store
        page = store.query(QueryFilter(concept="Bathochordaeus"))
        urls = {i.record.image_url for i in page.items}
        assert urls == {"https://img.example.org/genus.png"}

    def test_descendant_query_is_a_superset(self, seeded_store):
        store, _ = seeded_store
        for concept in ("Bathochordaeus", "Animalia", "Aegina"):
            narrow = store.query(QueryFilter(concept=concept))
            wide = store.query(QueryFilter(concept=concept,
                                           include_descendants=True))
            narrow_ids = {i.record.uuid for i in narrow.items}
            wide_ids = {i.record.uuid for i in wide.items}
            assert narrow_ids <= wide_ids

    def test_empty_filter_returns_everything_paginated(self, seeded_store):
        store, _ = seeded_store
        page = store.query(QueryFilter(page_size=2))
        assert page.total == 3
        assert len(page.items) == 2
        page2 = store.query(QueryFilter(page=2, page_size=2))
        assert len(page2.items) == 1

    def test_depth_range_excludes_shallow_image(self, seeded_store):
        store, _ = seeded_store
        page = store.query(QueryFilter(min_depth=200, max_depth=1000))
        urls = {i.record.image_url for i in page.items}
        assert "https://img.example.org/shallow.png" not in urls
        assert page.total == 2

    def test_geo_box(self, seeded_store):
        store, _ = seeded_store
        page = store.query(QueryFilter(min_lat=36.0, max_lat=37.0,
                                       min_lon=-123.0, max_lon=-121.5))
        assert page.total == 2

    def test_imaging_type(self, seeded_store):
        store, _ = seeded_store
        page = store.query(QueryFilter(imaging_type="drop camera"))
        assert page.total == 1

    def test_state_filter(self, seeded_store):
        store, _ = seeded_store
        [img] = store.query(QueryFilter(concept="Aegina")).items
        loc = next(l for l in img.localizations if l.concept == "Aegina")
        store.set_verification(loc.uuid, VerificationState.VERIFIED, "alice")
        assert store.query(QueryFilter(state=VerificationState.VERIFIED)).total == 1
        assert store.query(QueryFilter(state=VerificationState.UNVERIFIED)).total == 3

    def test_concept_and_state_must_hit_same_localization(self, seeded_store):
        store, _ = seeded_store
        [img] = store.query(QueryFilter(concept="Aegina")).items
        loc = next(l for l in img.localizations if l.concept == "Aegina")
        store.set_verification(loc.uuid, VerificationState.VERIFIED, "alice")
        assert store.query(QueryFilter(concept="Aegina",
                                       state=VerificationState.VERIFIED)).total == 1
        # the other box on the same image is a different localization
        assert store.query(QueryFilter(concept="Bathochordaeus",
                                       state=VerificationState.VERIFIED)).total == 0

    def test_unresolvable_concept_filter(self, seeded_store):
        store, _ = seeded_store
        with pytest.raises(ConceptNotFound):
            store.query(QueryFilter(concept="Nonexistus"))

    def test_page_size_bounds(self, store):
        with pytest.raises(ValidationError):
            store.query(QueryFilter(page_size=0))
        with pytest.raises(ValidationError):
            store.query(QueryFilter(page_size=1001))
        with pytest.raises(ValidationError):
            store.query(QueryFilter(page=0))

    def test_pagination_partitions_the_result_set(self, store, tree):
        c = make_collection()
        store.upsert_collection(c)
        images = [
            make_image(f"https://i/{k}.png",
                       boxes=[("Aegina", (0, 0, 5, 5))],
                       timestamp=f"2021-06-{(k % 27) + 1:02d}T00:00:00+00:00")
            for k in range(23)
        ]
        store.add_images(c.uuid, images)
        everything = [i.record.uuid for i in store.query(QueryFilter(page_size=1000)).items]
        paged: list[str] = []
        for page_num in range(1, 7):
            page = store.query(QueryFilter(page=page_num, page_size=5))
            paged.extend(i.record.uuid for i in page.items)
        assert paged == everything
        assert len(set(paged)) == len(paged) == 23
        again = [i.record.uuid for i in store.query(QueryFilter(page_size=1000)).items]
        assert again == everything


class TestVerification:
    @pytest.fixture
    def one_loc(self, seeded_store):
        store, _ = seeded_store
        [img] = store.query(QueryFilter(concept="Bathochordaeus mcnutti")).items
        return store, img.localizations[0]

    def test_verify(self, one_loc):
        store, loc = one_loc
        updated = store.set_verification(loc.uuid, VerificationState.VERIFIED, "alice")
        assert updated.verification is VerificationState.VERIFIED
        assert updated.verifier == "alice"

    def test_rejected_cannot_return_to_unverified(self, one_loc):
        store, loc = one_loc
        store.set_verification(loc.uuid, VerificationState.REJECTED, "alice")
        with pytest.raises(IllegalTransition):
            store.set_verification(loc.uuid, VerificationState.UNVERIFIED, "bob")

    def test_self_transition_is_illegal(self, one_loc):
        store, loc = one_loc
        store.set_verification(loc.uuid, VerificationState.VERIFIED, "alice")
        with pytest.raises(IllegalTransition):
            store.set_verification(loc.uuid, VerificationState.VERIFIED, "bob")

    def test_second_reviewer_overturn_keeps_full_audit(self, one_loc):
        store, loc = one_loc
        store.set_verification(loc.uuid, VerificationState.VERIFIED, "alice")
        updated = store.set_verification(loc.uuid, VerificationState.REJECTED, "bob")
        assert updated.verification is VerificationState.REJECTED
        log = store.audit_log(loc.uuid)
        assert [(e.from_state, e.to_state, e.verifier) for e in log] == [
            (VerificationState.UNVERIFIED, VerificationState.VERIFIED, "alice"),
            (VerificationState.VERIFIED, VerificationState.REJECTED, "bob"),
        ]

    def test_audit_length_counts_every_transition(self, one_loc):
        store, loc = one_loc
        store.set_verification(loc.uuid, VerificationState.VERIFIED, "a")
        store.set_verification(loc.uuid, VerificationState.REJECTED, "b")
        store.set_verification(loc.uuid, VerificationState.VERIFIED, "c")
        assert len(store.audit_log(loc.uuid)) == 3

    def test_unknown_localization(self, store):
        with pytest.raises(UnknownEntity):
            store.set_verification("ghost", VerificationState.VERIFIED, "alice")

    def test_verifier_identity_required(self, one_loc):
        store, loc = one_loc
        with pytest.raises(ValidationError):
            store.set_verification(loc.uuid, VerificationState.VERIFIED, " ")

    def test_failed_transition_leaves_no_audit_entry(self, one_loc):
        store, loc = one_loc
        store.set_verification(loc.uuid, VerificationState.VERIFIED, "alice")
        with pytest.raises(IllegalTransition):
            store.set_verification(loc.uuid, VerificationState.UNVERIFIED, "mallory")
        assert len(store.audit_log(loc.uuid)) == 1


class TestDurability:
    def test_file_store_survives_reopen(self, tmp_path, tree):
        path = tmp_path / "cat.db"
        store = CatalogStore(path, tree=tree)
        c = make_collection()
        store.upsert_collection(c)
        store.add_images(c.uuid, [
            make_image("https://i/1.png", boxes=[("Aegina", (0, 0, 5, 5))]),
        ])
        store.close()
        reopened = CatalogStore(path, tree=tree)
        assert reopened.counts() == {"collections": 1, "images": 1,
                                     "localizations": 1}
        reopened.close()
