from __future__ import annotations

import json

import pytest

from finnet.catalog import CatalogStore
from finnet.cli import run

from .conftest import FIXTURES
from .test_ingest import META, csv_with_rows, row

TAXONOMY = str(FIXTURES / "taxonomy.txt")


@pytest.fixture
def workdir(tmp_path):
    csv_path = tmp_path / "upload.csv"
    csv_path.write_text(csv_with_rows(
        row(),
        row(image_url="https://i/b.png", concept="Bathochordaeus mcnutti"),
    ))
    meta_path = tmp_path / "upload.meta"
    meta_path.write_text(META)
    return tmp_path


def fn(*argv, env=None) -> int:
    return run(list(argv), env=env or {})


class TestCost:
    def test_crowd_total(self, capsys):
        assert fn("cost", "--hours", "26168", "--rate", "3.25") == 0
        assert capsys.readouterr().out.strip() == "85046"

    def test_images_route(self, capsys):
        assert fn("cost", "--images", "1400000", "--iph", "92.4",
                  "--redundancy", "5", "--rate", "3.25") == 0
        out = int(capsys.readouterr().out.strip())
        assert abs(out - 246_203) <= 10

    def test_expert(self, capsys):
        assert fn("cost", "expert", "--mid", "33019.5", "--benthic", "33019.5") == 0
        assert capsys.readouterr().out.strip() == "132078"

    def test_missing_rate_is_validation_error(self, capsys):
        assert fn("cost", "--hours", "10") == 1
        err = json.loads(capsys.readouterr().err)
        assert "rate" in err["message"]

    def test_nonpositive_is_validation_error(self):
        assert fn("cost", "--hours", "-5", "--rate", "3.25") == 1


class TestIngestCommand:
    def test_dry_run_reports_and_never_writes(self, workdir, capsys):
        store_path = workdir / "cat.db"
        assert fn("ingest", str(workdir / "upload.csv"), "--dry-run",
                  "--store", str(store_path), "--taxonomy", TAXONOMY) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["rows_read"] == 2
        assert report["dry_run"] is True
        store = CatalogStore(store_path)
        assert store.counts()["images"] == 0
        store.close()

    def test_ingest_writes(self, workdir, capsys):
        store_path = workdir / "cat.db"
        assert fn("ingest", str(workdir / "upload.csv"),
                  "--meta", str(workdir / "upload.meta"),
                  "--store", str(store_path), "--taxonomy", TAXONOMY) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["images"] == 2
        store = CatalogStore(store_path)
        assert store.counts() == {"collections": 1, "images": 2,
                                  "localizations": 2}
        store.close()

    def test_row_errors_exit_one_and_do_not_write(self, workdir, capsys):
        bad = workdir / "bad.csv"
        bad.write_text(csv_with_rows(row(x="oops")))
        store_path = workdir / "cat.db"
        assert fn("ingest", str(bad), "--meta", str(workdir / "upload.meta"),
                  "--store", str(store_path), "--taxonomy", TAXONOMY) == 1
        store = CatalogStore(store_path)
        assert store.counts()["images"] == 0
        store.close()

    def test_missing_file_is_io_error(self, workdir):
        assert fn("ingest", str(workdir / "nope.csv"),
                  "--store", str(workdir / "cat.db"),
                  "--taxonomy", TAXONOMY) == 2

    def test_taxonomy_required(self, workdir):
        assert fn("ingest", str(workdir / "upload.csv"),
                  "--store", str(workdir / "cat.db")) == 1


class TestStatsCommand:
    def test_sizes_on_empty_store_is_validation_error(self, tmp_path, capsys):
        code = fn("stats", "sizes", "--store", str(tmp_path / "empty.db"),
                  "--taxonomy", TAXONOMY)
        assert code == 1
        err = json.loads(capsys.readouterr().err)
        assert err["error"] == "StatsError"

    def test_instances_csv(self, workdir, capsys):
        store_path = workdir / "cat.db"
        fn("ingest", str(workdir / "upload.csv"),
           "--meta", str(workdir / "upload.meta"),
           "--store", str(store_path), "--taxonomy", TAXONOMY)
        capsys.readouterr()
        assert fn("stats", "instances", "--store", str(store_path),
                  "--taxonomy", TAXONOMY) == 0
        out = capsys.readouterr().out.splitlines()
        assert out[0] == "bin_start,bin_end,count,percent"
        assert any(line.startswith("1,2,2,") for line in out)

    def test_concepts_requires_rank(self, workdir, capsys):
        store_path = workdir / "cat.db"
        fn("ingest", str(workdir / "upload.csv"),
           "--meta", str(workdir / "upload.meta"),
           "--store", str(store_path), "--taxonomy", TAXONOMY)
        capsys.readouterr()
        assert fn("stats", "concepts", "--rank", "genus",
                  "--store", str(store_path), "--taxonomy", TAXONOMY) == 0

    def test_avgimage(self, tmp_path, capsys):
        from PIL import Image

        for k, color in enumerate([(0, 0, 0), (255, 255, 255)]):
            Image.new("RGB", (32, 32), color).save(tmp_path / f"{k}.png")
        out = tmp_path / "avg.png"
        assert fn("stats", "avgimage", str(tmp_path / "0.png"),
                  str(tmp_path / "1.png"), "--out", str(out),
                  "--size", "16", "--taxonomy", TAXONOMY,
                  "--store", str(tmp_path / "s.db")) == 0
        import numpy as np

        arr = np.asarray(Image.open(out))
        assert abs(int(arr.mean()) - 127) <= 1


class TestTaxonomyCommand:
    def test_validate(self, capsys):
        assert fn("taxonomy", "validate", "--taxonomy", TAXONOMY) == 0
        body = json.loads(capsys.readouterr().out)
        assert body["root"] == "Animalia"

    def test_resolve(self, capsys):
        assert fn("taxonomy", "resolve", "jelly", "--taxonomy", TAXONOMY) == 0
        assert json.loads(capsys.readouterr().out)["name"] == "Medusae"

    def test_resolve_missing_is_exit_one(self, capsys):
        assert fn("taxonomy", "resolve", "Nonexistus", "--taxonomy", TAXONOMY) == 1

    def test_descendants(self, capsys):
        assert fn("taxonomy", "descendants", "Bathochordaeus",
                  "--taxonomy", TAXONOMY) == 0
        names = capsys.readouterr().out.split()
        assert len(names) == 5  # three concepts, two with two-word names

    def test_label(self, capsys):
        assert fn("taxonomy", "label", "Bathochordaeus mcnutti",
                  "--rank", "genus", "--taxonomy", TAXONOMY) == 0
        assert capsys.readouterr().out.strip() == "Bathochordaeus"


class TestEvalCommand:
    def test_boxes_matrix(self, tmp_path, capsys):
        pred = tmp_path / "pred.csv"
        truth = tmp_path / "truth.csv"
        pred.write_text(
            "frame_time_s,x,y,width,height,label,score\n"
            "0,0,0,10,10,fish,0.9\n"
            "0,50,50,10,10,crab,0.8\n"
        )
        truth.write_text(
            "frame_time_s,x,y,width,height,label,score\n"
            "0,0,0,10,10,fish,\n"
        )
        assert fn("eval", "boxes", "--pred", str(pred), "--truth", str(truth)) == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert lines[0] == "truth\\prediction,crab,fish,background"
        matrix = {l.split(",")[0]: l.split(",")[1:] for l in lines[1:]}
        assert matrix["fish"] == ["0", "1", "0"]
        assert matrix["background"] == ["1", "0", "0"]

    def test_activity_report(self, tmp_path, capsys):
        pred = tmp_path / "pred.csv"
        truth = tmp_path / "truth.csv"
        rows = ["frame_time_s,x,y,width,height,label,score"]
        for t in range(0, 60):
            score = "0.9" if 10 <= t <= 20 else "0.1"
            rows.append(f"{t},0,0,5,5,animal,{score}")
        pred.write_text("\n".join(rows) + "\n")
        truth.write_text("start_s,end_s\n9,21\n")
        assert fn("eval", "activity", "--pred", str(pred), "--truth", str(truth),
                  "--window", "10", "--duration", "59") == 0
        report = json.loads(capsys.readouterr().out)
        assert report["event_recall"] == 1.0
        assert report["temporal_iou_pooled"] == pytest.approx(10 / 12)
        assert report["effort_reduction"] == pytest.approx(1 - 10 / 59)

    def test_activity_accepts_segment_predictions(self, tmp_path, capsys):
        pred = tmp_path / "pred.csv"
        truth = tmp_path / "truth.csv"
        pred.write_text("start_s,end_s\n0,10\n")
        truth.write_text("start_s,end_s\n5,15\n")
        assert fn("eval", "activity", "--pred", str(pred),
                  "--truth", str(truth)) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["temporal_iou_pooled"] == pytest.approx(1 / 3)

    def test_unpaired_videos_rejected(self, tmp_path):
        p = tmp_path / "p.csv"
        p.write_text("start_s,end_s\n0,1\n")
        assert fn("eval", "activity", "--pred", str(p), "--pred", str(p),
                  "--truth", str(p)) == 1


class TestConfigPrecedence:
    def test_flag_beats_env_beats_file(self, tmp_path, capsys):
        config = tmp_path / "fn.conf"
        config.write_text("taxonomy=/nonexistent/from-file\n")
        # env overrides file
        code = fn("taxonomy", "validate", "--config", str(config),
                  env={"FN_TAXONOMY": TAXONOMY})
        assert code == 0
        # flag overrides env
        code = fn("taxonomy", "validate", "--taxonomy", TAXONOMY,
                  env={"FN_TAXONOMY": "/nonexistent/from-env"})
        assert code == 0
        # file alone is used (and fails: path does not exist)
        assert fn("taxonomy", "validate", "--config", str(config)) == 1

    def test_defaults_apply(self, capsys):
        assert fn("taxonomy", "validate") == 1  # no taxonomy configured


class TestUsage:
    def test_no_subcommand_prints_help(self, capsys):
        assert fn() == 1
        assert "usage" in capsys.readouterr().out.lower()

    def test_unknown_subcommand(self, capsys):
        assert fn("frobnicate") == 1

    def test_help_exists_for_every_subcommand(self, capsys):
        for sub in ("ingest", "serve", "taxonomy", "stats", "eval", "cost"):
            assert fn(sub, "--help") == 0
            assert "usage" in capsys.readouterr().out.lower()
