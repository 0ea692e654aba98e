"""Darwin Core style CSV ingestion and export.

Column names are fixed (bit-exact) so exports re-ingest losslessly:

    image_url,x,y,width,height,concept,altconcept,latitude,longitude,
    depth_m,timestamp,imaging_type,observer,altitude_m,group_of,occluded,
    truncated

Collection-level fields travel in a sidecar ``.meta`` file of ``key=value``
lines rather than repeated per row. Multiple rows sharing an image_url merge
into one image with several localizations; a row whose bbox and concept cells
are all empty declares a bare image with no localizations (this is how empty
images survive a round trip).

Ingestion is all-or-nothing: a file with any error leaves the store unchanged.
Round trips are semantically lossless up to generated uuids and the
``modified`` stamp, which the store sets to the upload time.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence, Union

from .catalog import (
    OPTIONAL_COLLECTION_FIELDS,
    REQUIRED_COLLECTION_FIELDS,
    BoundingBox,
    CatalogStore,
    Collection,
    ImageRecord,
    ImageWithBoxes,
    Localization,
    QueryFilter,
    UnknownEntity,
    parse_iso8601,
)
from .taxonomy import ConceptNotFound, ConceptTree

CSV_COLUMNS = (
    "image_url", "x", "y", "width", "height", "concept", "altconcept",
    "latitude", "longitude", "depth_m", "timestamp", "imaging_type",
    "observer", "altitude_m", "group_of", "occluded", "truncated",
)

REQUIRED_CSV_COLUMNS = ("image_url", "x", "y", "width", "height", "concept")

# Missing recommended columns produce warnings; suggested ones do not.
RECOMMENDED_CSV_COLUMNS = (
    "latitude", "longitude", "depth_m", "timestamp", "imaging_type",
    "observer", "altitude_m",
)

_BBOX_FIELDS = ("x", "y", "width", "height")

_META_KEYS = tuple(REQUIRED_COLLECTION_FIELDS) + OPTIONAL_COLLECTION_FIELDS


class IngestError(Exception):
    """File-level ingest failure; the store is guaranteed unchanged."""

    def __init__(self, message: str, field_name: str = ""):
        super().__init__(message)
        self.field = field_name


@dataclass(frozen=True)
class IngestIssue:
    row: int  # 1-based data row number (header excluded)
    field: str
    message: str


@dataclass
class IngestReport:
    rows_read: int = 0
    rows_accepted: int = 0
    errors: list[IngestIssue] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def error_rows(self) -> int:
        return len({e.row for e in self.errors})

    def check_consistency(self) -> None:
        assert self.rows_accepted + self.error_rows == self.rows_read

    def to_dict(self) -> dict:
        return {
            "rows_read": self.rows_read,
            "rows_accepted": self.rows_accepted,
            "errors": [
                {"row": e.row, "field": e.field, "message": e.message}
                for e in self.errors
            ],
            "warnings": list(self.warnings),
        }


@dataclass
class ParsedUpload:
    collection: Optional[Collection]
    images: list[ImageWithBoxes]
    report: IngestReport


def parse_meta(data: Union[bytes, str]) -> dict[str, str]:
    """Parse the ``key=value`` sidecar; blank lines and # comments skipped."""
    text = data.decode("utf-8") if isinstance(data, bytes) else data
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise IngestError(f"meta line {lineno}: expected key=value, got {raw!r}")
        key, _, value = line.partition("=")
        out[key.strip()] = value.strip()
    return out


def collection_from_meta(meta: Mapping[str, str]) -> Collection:
    """Build a Collection; every missing Table-style required field is
    rejected by name."""
    for key, display in REQUIRED_COLLECTION_FIELDS.items():
        if not meta.get(key, "").strip():
            raise IngestError(f"missing required collection field: {display}",
                              field_name=display)
    unknown = [k for k in meta if k not in _META_KEYS]
    extra = {k: v for k, v in meta.items()
             if k in OPTIONAL_COLLECTION_FIELDS and v.strip()}
    collection = Collection(
        uuid=meta["uuid"].strip(),
        owner_institution=meta["owner_institution"].strip(),
        rights_holder=meta["rights_holder"].strip(),
        contributor_email=meta["contributor_email"].strip(),
        record_type=meta["record_type"].strip(),
        modified=meta["modified"].strip(),
        url=meta["url"].strip(),
        data_format=meta["data_format"].strip(),
        extra=extra,
    )
    if unknown:
        raise IngestError(f"unknown collection field(s): {', '.join(sorted(unknown))}")
    return collection


def _parse_float(value: str, field_name: str, row: int,
                 report: IngestReport) -> Optional[float]:
    try:
        return float(value)
    except ValueError:
        report.errors.append(IngestIssue(row, field_name, f"unparseable number: {value!r}"))
        return None


def _parse_bool(value: str, field_name: str, row: int,
                report: IngestReport) -> Optional[bool]:
    lowered = value.strip().lower()
    if lowered in ("true", "1"):
        return True
    if lowered in ("false", "0"):
        return False
    report.errors.append(IngestIssue(row, field_name, f"not a boolean (true/false/1/0): {value!r}"))
    return None


def parse_collection_csv(
    data: Union[bytes, str],
    meta: Union[bytes, str, Mapping[str, str], None] = None,
    tree: Optional[ConceptTree] = None,
) -> ParsedUpload:
    """Parse a localization CSV (and optional collection sidecar) without
    touching any store.

    File-level problems (bad encoding, missing required column, invalid
    collection metadata) raise ``IngestError``; row-level problems accumulate
    in the report. ``rows_accepted + error rows == rows_read`` always holds.
    """
    if isinstance(data, bytes):
        try:
            text = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise IngestError(f"input is not UTF-8: {exc}") from None
    else:
        text = data

    collection: Optional[Collection] = None
    if meta is not None:
        mapping = meta if isinstance(meta, Mapping) else parse_meta(meta)
        collection = collection_from_meta(mapping)

    report = IngestReport()
    reader = csv.DictReader(io.StringIO(text))
    header = reader.fieldnames
    if header is None:
        raise IngestError("empty file: no header row")
    header = [h.strip() for h in header]
    missing = [c for c in REQUIRED_CSV_COLUMNS if c not in header]
    if missing:
        raise IngestError(f"missing required column(s): {', '.join(missing)}",
                          field_name=missing[0])
    for col in RECOMMENDED_CSV_COLUMNS:
        if col not in header:
            report.warnings.append(f"recommended column missing: {col}")
    for col in header:
        if col and col not in CSV_COLUMNS:
            report.warnings.append(f"unknown column ignored: {col}")

    images: dict[str, ImageWithBoxes] = {}
    order: list[str] = []

    for row_num, row in enumerate(reader, start=1):
        report.rows_read += 1
        errors_before = len(report.errors)
        get = lambda col: (row.get(col) or "").strip()

        url = get("image_url")
        if not url:
            report.errors.append(IngestIssue(row_num, "image_url", "required value is empty"))
            continue

        bare = all(not get(c) for c in (*_BBOX_FIELDS, "concept"))
        loc: Optional[Localization] = None
        if not bare:
            coords = {}
            for col in _BBOX_FIELDS:
                raw = get(col)
                if not raw:
                    report.errors.append(IngestIssue(row_num, col, "required value is empty"))
                    continue
                val = _parse_float(raw, col, row_num, report)
                if val is not None:
                    coords[col] = val
            concept = get("concept")
            if not concept:
                report.errors.append(IngestIssue(row_num, "concept", "required value is empty"))
            if len(coords) == 4 and concept:
                bbox = BoundingBox(**coords)
                if coords["x"] < 0 or coords["y"] < 0:
                    report.errors.append(IngestIssue(
                        row_num, "x" if coords["x"] < 0 else "y",
                        "bounding box origin must be >= 0"))
                elif coords["width"] <= 0 or coords["height"] <= 0:
                    report.errors.append(IngestIssue(
                        row_num, "width" if coords["width"] <= 0 else "height",
                        "bounding box sides must be > 0"))
                else:
                    if tree is not None:
                        try:
                            concept = tree.resolve(concept).name
                        except ConceptNotFound:
                            report.errors.append(IngestIssue(
                                row_num, "concept", f"unresolvable concept: {concept!r}"))
                            concept = ""
                    if concept:
                        flags = {}
                        for col in ("group_of", "occluded", "truncated"):
                            raw = get(col)
                            flags[col] = (_parse_bool(raw, col, row_num, report)
                                          if raw else None)
                        loc = Localization(
                            concept=concept,
                            bbox=bbox,
                            alt_concept=get("altconcept") or None,
                            observer=get("observer") or None,
                            group_of=flags["group_of"],
                            occluded=flags["occluded"],
                            truncated=flags["truncated"],
                        )

        rec_fields: dict = {}
        lat_raw, lon_raw = get("latitude"), get("longitude")
        if lat_raw:
            lat = _parse_float(lat_raw, "latitude", row_num, report)
            if lat is not None and not -90 <= lat <= 90:
                report.errors.append(IngestIssue(row_num, "latitude",
                                                 f"out of range [-90, 90]: {lat}"))
            elif lat is not None:
                rec_fields["latitude"] = lat
        if lon_raw:
            lon = _parse_float(lon_raw, "longitude", row_num, report)
            if lon is not None and not -180 <= lon <= 180:
                report.errors.append(IngestIssue(row_num, "longitude",
                                                 f"out of range [-180, 180]: {lon}"))
            elif lon is not None:
                rec_fields["longitude"] = lon
        depth_raw = get("depth_m")
        if depth_raw:
            depth = _parse_float(depth_raw, "depth_m", row_num, report)
            if depth is not None and depth < 0:
                report.errors.append(IngestIssue(row_num, "depth_m",
                                                 f"must be >= 0: {depth}"))
            elif depth is not None:
                rec_fields["depth_m"] = depth
        alt_raw = get("altitude_m")
        if alt_raw:
            alt = _parse_float(alt_raw, "altitude_m", row_num, report)
            if alt is not None:
                rec_fields["altitude_m"] = alt
        ts_raw = get("timestamp")
        if ts_raw:
            try:
                rec_fields["timestamp"] = parse_iso8601(ts_raw).isoformat()
            except ValueError:
                report.errors.append(IngestIssue(row_num, "timestamp",
                                                 f"not ISO8601: {ts_raw!r}"))
        if get("imaging_type"):
            rec_fields["imaging_type"] = get("imaging_type")
        if get("observer"):
            rec_fields["observer"] = get("observer")

        if len(report.errors) > errors_before:
            continue
        report.rows_accepted += 1

        if url not in images:
            images[url] = ImageWithBoxes(ImageRecord(image_url=url, **rec_fields))
            order.append(url)
        else:
            existing = images[url].record
            for name, value in rec_fields.items():
                prev = getattr(existing, name)
                if prev is None:
                    setattr(existing, name, value)
                elif prev != value:
                    report.warnings.append(
                        f"row {row_num}: conflicting {name} for {url} "
                        f"({value!r} vs {prev!r}); first value kept"
                    )
        if loc is not None:
            images[url].localizations.append(loc)

    report.check_consistency()
    return ParsedUpload(collection=collection,
                        images=[images[u] for u in order],
                        report=report)


def ingest_upload(
    store: CatalogStore,
    tree: ConceptTree,
    data: Union[bytes, str],
    meta: Union[bytes, str, Mapping[str, str], None] = None,
    dry_run: bool = False,
) -> tuple[IngestReport, Optional[str], tuple[int, int]]:
    """Parse and, when clean and not a dry run, write the upload in one
    transaction. Returns (report, collection uuid or None, (images, boxes)).

    Any row error rejects the whole file; the store is never partially
    written.
    """
    parsed = parse_collection_csv(data, meta, tree)
    report = parsed.report
    if dry_run or report.errors:
        return report, None, (0, 0)
    if parsed.collection is None:
        raise IngestError(
            "collection metadata required to write (pass the .meta sidecar)"
        )
    counts = store.ingest_batch(parsed.collection, parsed.images)
    return report, parsed.collection.uuid, counts


# --- export ------------------------------------------------------------


def _fmt_number(value: Optional[float]) -> str:
    if value is None:
        return ""
    if float(value).is_integer():
        return str(int(value))
    return repr(float(value))


def _fmt_bool(value: Optional[bool]) -> str:
    if value is None:
        return ""
    return "true" if value else "false"


def _row_for(rec: ImageRecord, loc: Optional[Localization]) -> list[str]:
    return [
        rec.image_url,
        _fmt_number(loc.bbox.x) if loc else "",
        _fmt_number(loc.bbox.y) if loc else "",
        _fmt_number(loc.bbox.width) if loc else "",
        _fmt_number(loc.bbox.height) if loc else "",
        loc.concept if loc else "",
        (loc.alt_concept or "") if loc else "",
        _fmt_number(rec.latitude),
        _fmt_number(rec.longitude),
        _fmt_number(rec.depth_m),
        rec.timestamp or "",
        rec.imaging_type or "",
        (loc.observer if loc and loc.observer else rec.observer) or "",
        _fmt_number(rec.altitude_m),
        _fmt_bool(loc.group_of) if loc else "",
        _fmt_bool(loc.occluded) if loc else "",
        _fmt_bool(loc.truncated) if loc else "",
    ]


def export_rows(images: Sequence[ImageWithBoxes]):
    """Yield CSV lines (strings with trailing newline) in the pinned column
    order; deterministic for a given snapshot."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")

    def take() -> str:
        value = buf.getvalue()
        buf.seek(0)
        buf.truncate()
        return value

    writer.writerow(CSV_COLUMNS)
    yield take()
    for item in images:
        if not item.localizations:
            writer.writerow(_row_for(item.record, None))
            yield take()
        for loc in item.localizations:
            writer.writerow(_row_for(item.record, loc))
            yield take()


def export_collection_csv(store: CatalogStore, collection_uuid: str) -> bytes:
    """Export one collection's images; re-ingests to a semantically identical
    collection."""
    if not store.has_collection(collection_uuid):
        raise UnknownEntity("collection", collection_uuid)
    images = store.snapshot(QueryFilter(collection=collection_uuid))
    return "".join(export_rows(images)).encode("utf-8")


def export_collection_meta(store: CatalogStore, collection_uuid: str) -> bytes:
    collection = store.get_collection(collection_uuid)
    if collection is None:
        raise UnknownEntity("collection", collection_uuid)
    lines = []
    for key in REQUIRED_COLLECTION_FIELDS:
        lines.append(f"{key}={getattr(collection, key)}")
    for key in OPTIONAL_COLLECTION_FIELDS:
        if key in collection.extra:
            lines.append(f"{key}={collection.extra[key]}")
    return ("\n".join(lines) + "\n").encode("utf-8")
