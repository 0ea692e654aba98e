"""Acceptance suite: one test per criterion, each printing a pass line and
enforcing its stated tolerance and runtime budget."""

from __future__ import annotations

import socket
import threading
import time

import numpy as np
import pytest

from finnet.catalog import BoundingBox, CatalogStore
from finnet.cli import run as cli_run
from finnet.costmodel import estimate_cost, estimate_hours
from finnet.evaluation import (
    ActivitySignal,
    Detection,
    Segment,
    close_gaps,
    confusion_matrix,
    effort_reduction,
    iou_box,
    match_detections,
    smooth_and_segment,
    temporal_iou,
)
from finnet.ingest import (
    IngestError,
    collection_from_meta,
    export_collection_csv,
    export_collection_meta,
    ingest_upload,
    parse_meta,
)
from finnet.stats import (
    SIZE_BIN_EDGES,
    SIZE_BIN_LOW,
    concepts_per_image,
    coverage_recall,
    coverage_sample,
    instances_per_image,
    mean_instances_and_concepts,
    relative_size_distribution,
)
from finnet.taxonomy import (
    Rank,
    SupercategoryConfigError,
    load_taxonomy,
    parse_supercategory_text,
    supercategory_of,
)

from .conftest import FIXTURES
from .helpers import oracle_rank_label, random_snapshot, random_tree
from .test_evaluation import (
    five_pred_four_truth,
    grid_iou_oracle,
    ms_grid_iou_oracle,
    random_segments,
)
from .test_ingest import META, csv_with_rows, row, semantic


def announce(name: str) -> None:
    print(f"\n[ACCEPTANCE] {name}: PASS")


class Budget:
    def __init__(self, seconds: float):
        self.limit = seconds

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        if exc[0] is None:
            elapsed = time.perf_counter() - self.t0
            assert elapsed < self.limit, \
                f"runtime {elapsed:.2f}s exceeds budget {self.limit}s"
        return False


def test_cost_arithmetic(capsys):
    with Budget(1.0):
        assert estimate_cost(17_751 + 8_417, 3.25) == 85_046
        assert abs(estimate_cost(75_755, 3.25) - 246_203) <= 1
        assert estimate_cost(75_755, 80) == 6_060_400  # ~$6.06M
        assert abs(estimate_hours(1_400_000, 92.4) - 15_151) <= 2
        assert cli_run(["cost", "--hours", "26168", "--rate", "3.25"],
                       env={}) == 0
        assert capsys.readouterr().out.strip() == "85046"
    announce("cost arithmetic reproduces the published totals in <1s")


def test_effort_reduction_exact():
    total = 3600.0
    flagged = [Segment(100.0, 100.0 + 0.19 * total)]
    assert effort_reduction(flagged, total) == 0.81
    announce("19% flagged footage gives effort_reduction 0.81 exactly")


def test_temporal_suite():
    rng = np.random.default_rng(2026)
    with Budget(30.0):
        for _ in range(1000):
            a = random_segments(rng)
            b = random_segments(rng)
            got = temporal_iou(a, b)
            oracle, union_cells = ms_grid_iou_oracle(a, b)
            tol = 2.0 / union_cells if union_cells else 1e-12
            assert abs(got - oracle) <= tol, (a, b, got, oracle)

        for _ in range(300):
            n = int(rng.integers(2, 60))
            times = tuple(np.round(np.cumsum(rng.uniform(0.2, 3.0, n)), 3))
            active = tuple(bool(v) for v in rng.random(n) < 0.35)
            signal = ActivitySignal(times, active)
            window = float(rng.uniform(0.5, 12.0))

            closed = close_gaps(signal, window)
            assert close_gaps(closed, window) == closed  # idempotent

            expected = list(active)
            on = [i for i, a in enumerate(active) if a]
            for i, j in zip(on, on[1:]):
                if times[j] - times[i] < window:
                    for k in range(i + 1, j):
                        expected[k] = True
            assert list(closed.active) == expected  # fills exactly gaps < window

            segments = smooth_and_segment(signal, window)
            resegmented = smooth_and_segment(closed, window)
            assert segments == resegmented  # smoothing is idempotent
    announce("temporal suite: 1000-pair ms-grid oracle + exact gap closing in <30s")


def test_detection_suite():
    rng = np.random.default_rng(424242)
    labels = ["anemone", "crab", "sea fan", "urchin"]

    for _ in range(1000):
        n_p, n_t = int(rng.integers(0, 8)), int(rng.integers(0, 8))
        preds = [
            Detection(
                BoundingBox(float(rng.integers(0, 80)), float(rng.integers(0, 80)),
                            float(rng.integers(1, 40)), float(rng.integers(1, 40))),
                labels[rng.integers(0, len(labels))],
                float(rng.integers(0, 101)) / 100,
            )
            for _ in range(n_p)
        ]
        truths = [
            (BoundingBox(float(rng.integers(0, 80)), float(rng.integers(0, 80)),
                         float(rng.integers(1, 40)), float(rng.integers(1, 40))),
             labels[rng.integers(0, len(labels))])
            for _ in range(n_t)
        ]
        result = match_detections(preds, truths, 0.5)
        m = confusion_matrix(preds, truths, result, labels)
        assert m["background", "background"] == 0
        assert m.total_predictions == n_p
        assert m.total_truths == n_t
        # matched pairs occupy one cell for a pred and a truth together
        assert m.counts.sum() == n_p + n_t - len(result.matches)

    preds, truths = five_pred_four_truth()
    m = confusion_matrix(preds, truths, match_detections(preds, truths, 0.5),
                         ["crab", "fish", "urchin"])
    expected = {
        ("fish", "fish"): 1, ("fish", "crab"): 1, ("crab", "fish"): 1,
        ("urchin", "background"): 1, ("background", "urchin"): 1,
        ("background", "fish"): 1,
    }
    for t_lab in ("crab", "fish", "urchin", "background"):
        for p_lab in ("crab", "fish", "urchin", "background"):
            assert m[t_lab, p_lab] == expected.get((t_lab, p_lab), 0)

    for _ in range(1000):
        a = BoundingBox(float(rng.integers(0, 50)), float(rng.integers(0, 50)),
                        float(rng.integers(1, 60)), float(rng.integers(1, 60)))
        b = BoundingBox(float(rng.integers(0, 50)), float(rng.integers(0, 50)),
                        float(rng.integers(1, 60)), float(rng.integers(1, 60)))
        assert abs(iou_box(a, b) - grid_iou_oracle(a, b)) <= 1e-9
    announce("detection suite: marginals on 1000 random sets, exact hand fixture, "
             "grid-oracle IoU within 1e-9")


def test_stats_oracle_suite():
    rng = np.random.default_rng(77)
    rank_ladder = list(Rank)[:-1]  # biological, coarse to fine

    for trial in range(100):
        tree = random_tree(rng, n_nodes=int(rng.integers(3, 25)))
        snapshot = random_snapshot(rng, tree, max_images=20)

        hist = instances_per_image(snapshot)
        expected = {}
        for img in snapshot:
            k = len(img.localizations)
            expected[k] = expected.get(k, 0) + 1
        got = {int(hist.edges[i]): c for i, c in enumerate(hist.counts) if c}
        assert got == expected
        assert sum(hist.counts) == hist.total == len(snapshot)
        assert sum(hist.percent) == pytest.approx(100.0, abs=1e-9)

        rank = rank_ladder[int(rng.integers(0, len(rank_ladder)))]
        hist2 = concepts_per_image(snapshot, tree, rank)
        expected2 = {}
        per_image_counts = []
        for img in snapshot:
            labels = set()
            for loc in img.localizations:
                label = oracle_rank_label(tree, loc.concept, rank)
                if label is not None:
                    labels.add(label)
            per_image_counts.append(len(labels))
            expected2[len(labels)] = expected2.get(len(labels), 0) + 1
        got2 = {int(hist2.edges[i]): c for i, c in enumerate(hist2.counts) if c}
        assert got2 == expected2

        inst, conc = mean_instances_and_concepts(snapshot, tree, rank)
        assert inst == pytest.approx(np.mean([len(i.localizations)
                                              for i in snapshot]))
        assert conc == pytest.approx(np.mean(per_image_counts))

        dist = relative_size_distribution(snapshot)
        edges = SIZE_BIN_EDGES
        bins = [0] * (len(edges) - 1)
        for img in snapshot:
            area = img.record.width_px * img.record.height_px
            for loc in img.localizations:
                frac = min(max(loc.bbox.area() / area, SIZE_BIN_LOW), 1.0)
                for k in range(len(bins)):
                    if edges[k] <= frac < edges[k + 1] or (
                            k == len(bins) - 1 and frac == edges[-1]):
                        bins[k] += 1
                        break
        assert dist.histogram.counts == bins

        # coarsening merges labels, never splits, image by image
        prev = None
        for rank_step in rank_ladder:
            counts = []
            for img in snapshot:
                labels = {oracle_rank_label(tree, loc.concept, rank_step)
                          for loc in img.localizations}
                labels.discard(None)
                counts.append(len(labels))
            hist_step = concepts_per_image(snapshot, tree, rank_step)
            got_step = {int(hist_step.edges[i]): c
                        for i, c in enumerate(hist_step.counts) if c}
            exp_step = {}
            for c in counts:
                exp_step[c] = exp_step.get(c, 0) + 1
            assert got_step == exp_step
            if prev is not None:
                for coarse, fine in zip(prev, counts):
                    assert coarse <= fine
            prev = counts

        names = sorted(n.name for n in tree)
        target_concept = names[int(rng.integers(0, len(names)))]
        try:
            sample_a = coverage_sample(snapshot, tree, target_concept,
                                       n=8, seed=trial)
            sample_b = coverage_sample(snapshot, tree, target_concept,
                                       n=8, seed=trial)
            assert [i.record.uuid for i in sample_a] == \
                [i.record.uuid for i in sample_b]
        except Exception:
            pass  # no candidate images for this concept: fine

    report = coverage_recall(existing={"img": ["urchin"] * 7},
                             complete={"img": ["urchin"] * 10},
                             target={"urchin"})
    assert report.recall_target == pytest.approx(0.7)
    announce("stats oracle: 100 randomized snapshots match brute force; "
             "7-of-10 coverage = 0.7; coarsening monotone")


def _fixture_csvs() -> list[str]:
    """20 deterministic CSVs spanning the full column surface."""
    cases = [
        csv_with_rows(row()),
        csv_with_rows(row(), row(x="50", y="60", w="5", h="5", concept="Medusae")),
        csv_with_rows(row(x="", y="", w="", h="", concept="")),
        csv_with_rows(row(
            image_url="https://i/full.png", x="1.5", y="2", w="3", h="4.25",
            concept="Bathochordaeus mcnutti", altconcept="head",
            latitude="36.5", longitude="-122.25", depth_m="250",
            timestamp="2021-05-01T10:00:00+00:00", imaging_type="ROV",
            observer="lonny", altitude_m="12.5", group_of="false",
            occluded="true", truncated="false",
        )),
        csv_with_rows(row(observer='"Nname, With Comma"')),
        csv_with_rows(row(concept="jelly")),  # alias canonicalization
        csv_with_rows(*(row(image_url=f"https://i/{k}.png") for k in range(9))),
        csv_with_rows(row(timestamp="2021-05-01T10:00:00Z")),
        csv_with_rows(row(latitude="-90", longitude="180")),
        csv_with_rows(row(depth_m="0")),
    ]
    rng = np.random.default_rng(99)
    concepts = ["Aegina", "Medusae", "Bathochordaeus mcnutti",
                "Strongylocentrotus fragilis", "Chionoecetes tanneri"]
    while len(cases) < 20:
        rows = []
        for k in range(int(rng.integers(1, 6))):
            rows.append(row(
                image_url=f"https://i/r{len(cases)}-{k}.png",
                x=str(rng.integers(0, 100)), y=str(rng.integers(0, 100)),
                w=str(rng.integers(1, 50)), h=str(rng.integers(1, 50)),
                concept=concepts[rng.integers(0, len(concepts))],
                depth_m=str(rng.integers(0, 4000)),
                latitude=f"{rng.uniform(-90, 90):.4f}",
                longitude=f"{rng.uniform(-180, 180):.4f}",
                group_of=["true", "false", ""][rng.integers(0, 3)],
            ))
        cases.append(csv_with_rows(*rows))
    return cases


def test_ingest_round_trip_suite(tree):
    for i, data in enumerate(_fixture_csvs()):
        store1 = CatalogStore(":memory:", tree=tree)
        report, uuid1, _ = ingest_upload(store1, tree, data, META)
        assert not report.errors, (i, report.errors)
        exported_csv = export_collection_csv(store1, uuid1)
        exported_meta = export_collection_meta(store1, uuid1)

        store2 = CatalogStore(":memory:", tree=tree)
        report2, uuid2, _ = ingest_upload(store2, tree, exported_csv,
                                          exported_meta)
        assert not report2.errors, (i, report2.errors)
        assert semantic(store1.snapshot()) == semantic(store2.snapshot()), i

        # fixed point: exporting the re-ingested store changes nothing
        third = CatalogStore(":memory:", tree=tree)
        ingest_upload(third, tree, export_collection_csv(store2, uuid2),
                      export_collection_meta(store2, uuid2))
        assert semantic(third.snapshot()) == semantic(store2.snapshot()), i
        for s in (store1, store2, third):
            s.close()

    displays = {
        "uuid": "uuid",
        "owner_institution": "owner's institution",
        "rights_holder": "rights holder",
        "contributor_email": "contributor's email",
        "record_type": "record type",
        "modified": "modified",
        "url": "url",
        "data_format": "data format",
    }
    for key, display in displays.items():
        meta = {k: v for k, v in parse_meta(META).items() if k != key}
        with pytest.raises(IngestError) as exc:
            collection_from_meta(meta)
        assert exc.value.field == display
    announce("ingest round-trip fixed point on 20 CSVs; all 8 required-field "
             "omissions rejected by name")


@pytest.fixture
def live_server(tree):
    import uvicorn

    from finnet.api import create_app
    from finnet.events import CollectingSink

    store = CatalogStore(":memory:", tree=tree)
    sink = CollectingSink()
    app = create_app(store, sink=sink, token="accept-token")
    with socket.socket() as probe:
        probe.bind(("127.0.0.1", 0))
        port = probe.getsockname()[1]
    config = uvicorn.Config(app, host="127.0.0.1", port=port, log_level="error")
    server = uvicorn.Server(config)
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    deadline = time.time() + 5
    while not server.started:
        if time.time() > deadline:
            raise RuntimeError("server did not start")
        time.sleep(0.01)
    yield f"http://127.0.0.1:{port}", sink, store
    server.should_exit = True
    thread.join(timeout=5)


def test_end_to_end_service(live_server, tree):
    import httpx

    base, sink, _store = live_server
    headers = {"Authorization": "Bearer accept-token"}
    with Budget(10.0):
        with httpx.Client(base_url=base, timeout=10) as client:
            assert client.get("/health").json()["status"] == "ok"

            data = csv_with_rows(
                row(image_url="https://i/species.png",
                    concept="Bathochordaeus mcnutti",
                    timestamp="2021-05-01T00:00:00+00:00"),
                row(image_url="https://i/other.png", concept="Aegina",
                    timestamp="2021-05-02T00:00:00+00:00"),
            )
            resp = client.post(
                "/collections",
                files={"csv": ("up.csv", data.encode(), "text/csv"),
                       "meta": ("up.meta", META.encode(), "text/plain")},
                headers=headers,
            )
            assert resp.status_code == 201, resp.text

            resp = client.get("/images", params={"concept": "Bathochordaeus",
                                                 "descendants": "true"})
            items = resp.json()["items"]
            assert [i["image_url"] for i in items] == ["https://i/species.png"]

            loc_id = items[0]["localizations"][0]["uuid"]
            resp = client.patch(f"/localizations/{loc_id}",
                                json={"state": "verified", "verifier": "expert"},
                                headers=headers)
            assert resp.status_code == 200
            assert resp.json()["verification"] == "verified"

            exported = client.get("/export").text
            fresh = CatalogStore(":memory:", tree=tree)
            report, _, counts = ingest_upload(fresh, tree, exported, META)
            assert not report.errors
            assert counts == (2, 2)
            assert {i.record.image_url for i in fresh.snapshot()} == \
                {"https://i/species.png", "https://i/other.png"}
            fresh.close()

            assert [e.event_type for e in sink.events] == [
                "collection.created", "localization.verified"]
    announce("end-to-end: upload, descendant query, verification, lossless "
             "export, one event per mutation in <10s")


def test_taxonomy_suite():
    tree = load_taxonomy(FIXTURES / "taxonomy.txt")

    table = [
        ("Bathochordaeus mcnutti", Rank.GENUS, "Bathochordaeus"),
        ("Bathochordaeus", Rank.SPECIES, "Bathochordaeus"),
        ("Animalia", Rank.SPECIES, "Animalia"),
        ("Animalia", Rank.KINGDOM, "Animalia"),
        ("Strongylocentrotus fragilis", Rank.FAMILY, "Echinoidea"),
    ]
    for name, target, expected in table:
        assert tree.rank_label(tree.resolve(name), target) == expected, name

    rng = np.random.default_rng(808)
    for _ in range(100):
        t = random_tree(rng, n_nodes=int(rng.integers(2, 40)))
        assert len(t.descendants(t.root)) == len(t)
        nodes = list(t)
        for node in nodes:
            for child in node.children:
                assert t.descendants(child) < t.descendants(node)

        if len(nodes) >= 2:
            a, b = (nodes[int(i)] for i in rng.choice(len(nodes), 2, replace=False))
            overlap = bool(t.descendants(a) & t.descendants(b))
            mapping = parse_supercategory_text(f"one\t{a.name}\ntwo\t{b.name}\n")
            if overlap:
                with pytest.raises(SupercategoryConfigError):
                    mapping.validate(t)
            else:
                mapping.validate(t)
                for node in nodes:
                    label = supercategory_of(t, mapping, node)
                    in_a = node in t.descendants(a)
                    in_b = node in t.descendants(b)
                    assert label == ("one" if in_a else "two" if in_b else None)
    announce("taxonomy: rank_label fixture table; closure + supercategory "
             "uniqueness on 100 random trees")
