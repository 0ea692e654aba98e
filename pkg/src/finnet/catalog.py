"""Durable store and query engine for collections, images, and localizations,
including the verification workflow state machine.

Persistence sits behind ``CatalogStore``; the reference implementation is an
embedded sqlite database in WAL mode (write-ahead semantics). Pixels are never
stored: images travel by URL only and contributors keep their copyright.
"""

from __future__ import annotations

import json
import sqlite3
import threading
import uuid as uuidlib
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from enum import Enum
from hashlib import sha256
from pathlib import Path
from typing import Optional, Sequence, Union

from .taxonomy import ConceptTree


class CatalogError(Exception):
    pass


class ValidationError(CatalogError):
    """Invalid input; always names the offending field."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name
        self.message = message


class UnknownEntity(CatalogError):
    def __init__(self, kind: str, key: str):
        super().__init__(f"unknown {kind}: {key}")
        self.kind = kind
        self.key = key


class IllegalTransition(CatalogError):
    def __init__(self, current: "VerificationState", target: "VerificationState"):
        super().__init__(
            f"illegal verification transition: {current.value} -> {target.value}"
        )
        self.current = current
        self.target = target


class VerificationState(Enum):
    UNVERIFIED = "unverified"
    VERIFIED = "verified"
    REJECTED = "rejected"

    @classmethod
    def parse(cls, text: str) -> "VerificationState":
        try:
            return cls(text.strip().lower())
        except ValueError:
            raise ValidationError("state", f"unknown verification state: {text!r}") from None


# unverified is terminal-origin only: once reviewed, an item can flip between
# verified and rejected (re-review) but never return to unverified.
ALLOWED_TRANSITIONS = {
    (VerificationState.UNVERIFIED, VerificationState.VERIFIED),
    (VerificationState.UNVERIFIED, VerificationState.REJECTED),
    (VerificationState.VERIFIED, VerificationState.REJECTED),
    (VerificationState.REJECTED, VerificationState.VERIFIED),
}


# Table-1 style display names, used verbatim in validation errors.
REQUIRED_COLLECTION_FIELDS = {
    "uuid": "uuid",
    "owner_institution": "owner's institution",
    "rights_holder": "rights holder",
    "contributor_email": "contributor's email",
    "record_type": "record type",
    "modified": "modified",
    "url": "url",
    "data_format": "data format",
}

OPTIONAL_COLLECTION_FIELDS = (
    "bibliographic_citation",
    "access_rights",
    "basis_of_record",
    "dataset_language",
    "collection_code",
    "collection_id",
    "dataset_generalizations",
    "dataset_name",
    "dynamic_properties",
    "information_withheld",
    "institution_code",
    "institution_id",
    "references",
)


def now_iso() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def parse_iso8601(text: str) -> datetime:
    """Accepts ISO8601 including a trailing Z (not handled by 3.10's
    fromisoformat)."""
    cleaned = text.strip()
    if cleaned.endswith(("Z", "z")):
        cleaned = cleaned[:-1] + "+00:00"
    return datetime.fromisoformat(cleaned)


@dataclass
class Collection:
    """Darwin Core style upload unit (one CSV upload)."""

    uuid: str
    owner_institution: str
    rights_holder: str
    contributor_email: str
    url: str
    data_format: str
    record_type: str = "images"
    modified: str = ""
    extra: dict[str, str] = field(default_factory=dict)

    def validate(self) -> None:
        for name, display in REQUIRED_COLLECTION_FIELDS.items():
            value = getattr(self, name)
            if not isinstance(value, str) or not value.strip():
                raise ValidationError(display, "required field is missing or empty")
        if self.record_type != "images":
            raise ValidationError("record type", f'must be "images", got {self.record_type!r}')
        for key in self.extra:
            if key not in OPTIONAL_COLLECTION_FIELDS:
                raise ValidationError(key, "unknown collection field")


@dataclass(frozen=True)
class BoundingBox:
    x: float
    y: float
    width: float
    height: float

    def validate(self) -> None:
        if self.x < 0 or self.y < 0:
            raise ValidationError("bounding box", f"x and y must be >= 0, got ({self.x}, {self.y})")
        if self.width <= 0 or self.height <= 0:
            raise ValidationError(
                "bounding box",
                f"width and height must be > 0, got ({self.width}, {self.height})",
            )

    def area(self) -> float:
        return self.width * self.height

    def fits_within(self, width_px: float, height_px: float) -> bool:
        return self.x + self.width <= width_px and self.y + self.height <= height_px


@dataclass
class ImageRecord:
    image_url: str
    uuid: str = ""
    collection_uuid: str = ""
    width_px: Optional[int] = None
    height_px: Optional[int] = None
    latitude: Optional[float] = None
    longitude: Optional[float] = None
    depth_m: Optional[float] = None
    altitude_m: Optional[float] = None
    timestamp: Optional[str] = None
    imaging_type: Optional[str] = None
    observer: Optional[str] = None

    def validate(self) -> None:
        if not self.image_url.strip():
            raise ValidationError("image URL", "required field is missing or empty")
        for name in ("width_px", "height_px"):
            value = getattr(self, name)
            if value is not None and (int(value) != value or value <= 0):
                raise ValidationError(name, f"must be a positive integer, got {value}")
        if self.latitude is not None and not -90 <= self.latitude <= 90:
            raise ValidationError("latitude", f"out of range [-90, 90]: {self.latitude}")
        if self.longitude is not None and not -180 <= self.longitude <= 180:
            raise ValidationError("longitude", f"out of range [-180, 180]: {self.longitude}")
        if self.depth_m is not None and self.depth_m < 0:
            raise ValidationError("depth_m", f"must be >= 0, got {self.depth_m}")
        if self.timestamp is not None:
            try:
                parse_iso8601(self.timestamp)
            except ValueError:
                raise ValidationError("timestamp", f"not ISO8601: {self.timestamp!r}") from None


@dataclass
class Localization:
    """A bounding box tying one concept label to a region of one image."""

    concept: str
    bbox: BoundingBox
    uuid: str = ""
    image_uuid: str = ""
    alt_concept: Optional[str] = None
    group_of: Optional[bool] = None
    occluded: Optional[bool] = None
    truncated: Optional[bool] = None
    observer: Optional[str] = None
    verification: VerificationState = VerificationState.UNVERIFIED
    verifier: Optional[str] = None


@dataclass
class ImageWithBoxes:
    record: ImageRecord
    localizations: list[Localization] = field(default_factory=list)


@dataclass
class QueryFilter:
    concept: Optional[str] = None
    include_descendants: bool = False
    min_lat: Optional[float] = None
    max_lat: Optional[float] = None
    min_lon: Optional[float] = None
    max_lon: Optional[float] = None
    min_depth: Optional[float] = None
    max_depth: Optional[float] = None
    imaging_type: Optional[str] = None
    collection: Optional[str] = None
    contributor: Optional[str] = None
    state: Optional[VerificationState] = None
    page: int = 1
    page_size: int = 100

    def validate(self) -> None:
        if self.page < 1:
            raise ValidationError("page", f"must be >= 1, got {self.page}")
        if not 1 <= self.page_size <= 1000:
            raise ValidationError("page_size", f"must be in [1, 1000], got {self.page_size}")


@dataclass
class QueryPage:
    items: list[ImageWithBoxes]
    total: int
    page: int
    page_size: int


@dataclass(frozen=True)
class AuditEntry:
    localization_uuid: str
    from_state: VerificationState
    to_state: VerificationState
    verifier: str
    at: str


_SCHEMA = """
CREATE TABLE IF NOT EXISTS collections (
    uuid TEXT PRIMARY KEY,
    owner_institution TEXT NOT NULL,
    rights_holder TEXT NOT NULL,
    contributor_email TEXT NOT NULL,
    record_type TEXT NOT NULL,
    modified TEXT NOT NULL,
    url TEXT NOT NULL,
    data_format TEXT NOT NULL,
    extra TEXT NOT NULL DEFAULT '{}'
);
CREATE TABLE IF NOT EXISTS images (
    uuid TEXT PRIMARY KEY,
    collection_uuid TEXT NOT NULL REFERENCES collections(uuid),
    image_url TEXT NOT NULL,
    width_px INTEGER,
    height_px INTEGER,
    latitude REAL,
    longitude REAL,
    depth_m REAL,
    altitude_m REAL,
    timestamp TEXT,
    imaging_type TEXT,
    observer TEXT
);
CREATE INDEX IF NOT EXISTS idx_images_collection ON images(collection_uuid);
CREATE INDEX IF NOT EXISTS idx_images_order ON images(timestamp, uuid);
CREATE TABLE IF NOT EXISTS localizations (
    uuid TEXT PRIMARY KEY,
    image_uuid TEXT NOT NULL REFERENCES images(uuid),
    concept TEXT NOT NULL,
    alt_concept TEXT,
    x REAL NOT NULL,
    y REAL NOT NULL,
    width REAL NOT NULL,
    height REAL NOT NULL,
    group_of INTEGER,
    occluded INTEGER,
    truncated INTEGER,
    observer TEXT,
    verification TEXT NOT NULL DEFAULT 'unverified',
    verifier TEXT
);
CREATE INDEX IF NOT EXISTS idx_locs_image ON localizations(image_uuid);
CREATE INDEX IF NOT EXISTS idx_locs_concept ON localizations(concept);
CREATE TABLE IF NOT EXISTS verification_audit (
    seq INTEGER PRIMARY KEY AUTOINCREMENT,
    localization_uuid TEXT NOT NULL,
    from_state TEXT NOT NULL,
    to_state TEXT NOT NULL,
    verifier TEXT NOT NULL,
    at TEXT NOT NULL
);
"""


class CatalogStore:
    """Embedded catalog store.

    File-backed stores run sqlite in WAL mode with one connection per thread,
    so readers proceed while a write batch is in flight; writes funnel through
    a process-wide lock (serialized, which trivially satisfies per-collection
    serialization). ``:memory:`` stores share a single locked connection and
    are meant for tests.
    """

    def __init__(self, path: Union[str, Path] = ":memory:",
                 tree: Optional[ConceptTree] = None):
        self.path = str(path)
        self._tree = tree
        self._write_lock = threading.Lock()
        self._memory = self.path == ":memory:"
        if self._memory:
            self._shared_conn = self._connect()
            self._conn_lock = threading.RLock()
        else:
            self._local = threading.local()
        with self._write() as conn:
            conn.executescript(_SCHEMA)

    # -- connection plumbing --

    def _connect(self) -> sqlite3.Connection:
        # isolation_level=None: transactions are controlled explicitly by _Txn
        conn = sqlite3.connect(self.path, check_same_thread=False,
                               isolation_level=None)
        conn.row_factory = sqlite3.Row
        conn.execute("PRAGMA foreign_keys = ON")
        if not self._memory:
            conn.execute("PRAGMA journal_mode = WAL")
        return conn

    def _thread_conn(self) -> sqlite3.Connection:
        if self._memory:
            return self._shared_conn
        conn = getattr(self._local, "conn", None)
        if conn is None:
            conn = self._connect()
            self._local.conn = conn
        return conn

    class _Txn:
        def __init__(self, store: "CatalogStore", write: bool):
            self.store = store
            self.write = write

        def __enter__(self) -> sqlite3.Connection:
            if self.write:
                self.store._write_lock.acquire()
            if self.store._memory:
                self.store._conn_lock.acquire()
            self.conn = self.store._thread_conn()
            self.conn.execute("BEGIN")
            return self.conn

        def __exit__(self, exc_type, exc, tb):
            try:
                if exc_type is None:
                    self.conn.commit()
                else:
                    self.conn.rollback()
            finally:
                if self.store._memory:
                    self.store._conn_lock.release()
                if self.write:
                    self.store._write_lock.release()
            return False

    def _write(self) -> "_Txn":
        return CatalogStore._Txn(self, write=True)

    def _read(self) -> "_Txn":
        return CatalogStore._Txn(self, write=False)

    def set_taxonomy(self, tree: ConceptTree) -> None:
        """Swap the concept tree atomically (reference assignment)."""
        self._tree = tree

    @property
    def taxonomy(self) -> Optional[ConceptTree]:
        return self._tree

    def _require_tree(self) -> ConceptTree:
        if self._tree is None:
            raise CatalogError("no taxonomy attached to the store")
        return self._tree

    def close(self) -> None:
        if self._memory:
            self._shared_conn.close()
        else:
            conn = getattr(self._local, "conn", None)
            if conn is not None:
                conn.close()
                self._local.conn = None

    # -- collections --

    def upsert_collection(self, collection: Collection) -> str:
        """Persist a collection; idempotent on uuid. ``modified`` is stamped
        with the upload time."""
        stamped = replace(collection, modified=now_iso())
        stamped.validate()
        with self._write() as conn:
            self._upsert_collection_row(conn, stamped)
        return stamped.uuid

    @staticmethod
    def _upsert_collection_row(conn: sqlite3.Connection, c: Collection) -> None:
        conn.execute(
            """INSERT INTO collections
               (uuid, owner_institution, rights_holder, contributor_email,
                record_type, modified, url, data_format, extra)
               VALUES (?,?,?,?,?,?,?,?,?)
               ON CONFLICT(uuid) DO UPDATE SET
                 owner_institution=excluded.owner_institution,
                 rights_holder=excluded.rights_holder,
                 contributor_email=excluded.contributor_email,
                 record_type=excluded.record_type,
                 modified=excluded.modified,
                 url=excluded.url,
                 data_format=excluded.data_format,
                 extra=excluded.extra""",
            (
                c.uuid, c.owner_institution, c.rights_holder,
                c.contributor_email, c.record_type, c.modified,
                c.url, c.data_format, json.dumps(c.extra, sort_keys=True),
            ),
        )

    def get_collection(self, uuid: str) -> Optional[Collection]:
        with self._read() as conn:
            row = conn.execute(
                "SELECT * FROM collections WHERE uuid = ?", (uuid,)
            ).fetchone()
        return _collection_from_row(row) if row else None

    def has_collection(self, uuid: str) -> bool:
        return self.get_collection(uuid) is not None

    def list_collections(self) -> list[Collection]:
        with self._read() as conn:
            rows = conn.execute("SELECT * FROM collections ORDER BY uuid").fetchall()
        return [_collection_from_row(r) for r in rows]

    # -- images + localizations --

    def _validate_batch(self, collection_uuid: str,
                        records: Sequence[ImageWithBoxes]) -> list[ImageWithBoxes]:
        tree = self._require_tree()
        prepared: list[ImageWithBoxes] = []
        for item in records:
            rec = replace(item.record)
            rec.collection_uuid = collection_uuid
            if not rec.uuid:
                rec.uuid = str(uuidlib.uuid4())
            rec.validate()
            locs = []
            for loc in item.localizations:
                loc = replace(loc)
                if not loc.uuid:
                    loc.uuid = str(uuidlib.uuid4())
                loc.image_uuid = rec.uuid
                loc.bbox.validate()
                node = tree.resolve(loc.concept)  # raises ConceptNotFound
                loc.concept = node.name
                if rec.width_px is not None and rec.height_px is not None:
                    if not loc.bbox.fits_within(rec.width_px, rec.height_px):
                        raise ValidationError(
                            "bounding box",
                            f"box {loc.bbox} exceeds image frame "
                            f"{rec.width_px}x{rec.height_px}",
                        )
                locs.append(loc)
            prepared.append(ImageWithBoxes(rec, locs))
        return prepared

    def add_images(self, collection_uuid: str,
                   records: Sequence[ImageWithBoxes]) -> tuple[int, int]:
        """All-or-nothing batch insert. Returns (images added, localizations
        added). Concepts are canonicalized against the attached taxonomy."""
        if not self.has_collection(collection_uuid):
            raise UnknownEntity("collection", collection_uuid)
        prepared = self._validate_batch(collection_uuid, records)
        with self._write() as conn:
            self._insert_batch(conn, prepared)
        return (len(prepared), sum(len(p.localizations) for p in prepared))

    def ingest_batch(self, collection: Collection,
                     records: Sequence[ImageWithBoxes]) -> tuple[int, int]:
        """Upsert the collection and add its images in one transaction."""
        stamped = replace(collection, modified=now_iso())
        stamped.validate()
        prepared = self._validate_batch(stamped.uuid, records)
        with self._write() as conn:
            self._upsert_collection_row(conn, stamped)
            self._insert_batch(conn, prepared)
        return (len(prepared), sum(len(p.localizations) for p in prepared))

    @staticmethod
    def _insert_batch(conn: sqlite3.Connection,
                      prepared: Sequence[ImageWithBoxes]) -> None:
        for item in prepared:
            rec = item.record
            conn.execute(
                """INSERT INTO images
                   (uuid, collection_uuid, image_url, width_px, height_px,
                    latitude, longitude, depth_m, altitude_m, timestamp,
                    imaging_type, observer)
                   VALUES (?,?,?,?,?,?,?,?,?,?,?,?)""",
                (
                    rec.uuid, rec.collection_uuid, rec.image_url, rec.width_px,
                    rec.height_px, rec.latitude, rec.longitude, rec.depth_m,
                    rec.altitude_m, rec.timestamp, rec.imaging_type, rec.observer,
                ),
            )
            for loc in item.localizations:
                conn.execute(
                    """INSERT INTO localizations
                       (uuid, image_uuid, concept, alt_concept, x, y, width,
                        height, group_of, occluded, truncated, observer,
                        verification, verifier)
                       VALUES (?,?,?,?,?,?,?,?,?,?,?,?,?,?)""",
                    (
                        loc.uuid, loc.image_uuid, loc.concept, loc.alt_concept,
                        loc.bbox.x, loc.bbox.y, loc.bbox.width, loc.bbox.height,
                        _to_int(loc.group_of), _to_int(loc.occluded),
                        _to_int(loc.truncated), loc.observer,
                        loc.verification.value, loc.verifier,
                    ),
                )

    # -- queries --

    def query(self, filt: QueryFilter) -> QueryPage:
        """Filtered page of images with their localizations.

        Ordered by (timestamp, uuid) for stable pagination; images without a
        timestamp sort first. When both a concept and a verification-state
        filter are present, a single localization must satisfy both.
        """
        filt.validate()
        where, params = self._filter_sql(filt)
        with self._read() as conn:
            total = conn.execute(
                f"SELECT COUNT(*) FROM images i {where}", params
            ).fetchone()[0]
            rows = conn.execute(
                f"""SELECT i.* FROM images i {where}
                    ORDER BY (i.timestamp IS NULL) DESC, i.timestamp, i.uuid
                    LIMIT ? OFFSET ?""",
                params + [filt.page_size, (filt.page - 1) * filt.page_size],
            ).fetchall()
            items = [self._attach_locs(conn, _image_from_row(r)) for r in rows]
        return QueryPage(items=items, total=total, page=filt.page,
                         page_size=filt.page_size)

    def _filter_sql(self, filt: QueryFilter) -> tuple[str, list]:
        clauses: list[str] = []
        params: list = []
        if filt.min_lat is not None:
            clauses.append("i.latitude >= ?")
            params.append(filt.min_lat)
        if filt.max_lat is not None:
            clauses.append("i.latitude <= ?")
            params.append(filt.max_lat)
        if filt.min_lon is not None:
            clauses.append("i.longitude >= ?")
            params.append(filt.min_lon)
        if filt.max_lon is not None:
            clauses.append("i.longitude <= ?")
            params.append(filt.max_lon)
        if filt.min_depth is not None:
            clauses.append("i.depth_m >= ?")
            params.append(filt.min_depth)
        if filt.max_depth is not None:
            clauses.append("i.depth_m <= ?")
            params.append(filt.max_depth)
        if filt.imaging_type is not None:
            clauses.append("i.imaging_type = ?")
            params.append(filt.imaging_type)
        if filt.collection is not None:
            clauses.append("i.collection_uuid = ?")
            params.append(filt.collection)
        if filt.contributor is not None:
            clauses.append(
                "i.collection_uuid IN (SELECT uuid FROM collections WHERE contributor_email = ?)"
            )
            params.append(filt.contributor)

        loc_clauses: list[str] = []
        loc_params: list = []
        if filt.concept is not None:
            tree = self._require_tree()
            node = tree.resolve(filt.concept)
            names = (sorted(tree.descendant_names(node))
                     if filt.include_descendants else [node.name])
            loc_clauses.append(
                f"l.concept IN ({','.join('?' * len(names))})"
            )
            loc_params.extend(names)
        if filt.state is not None:
            loc_clauses.append("l.verification = ?")
            loc_params.append(filt.state.value)
        if loc_clauses:
            clauses.append(
                "EXISTS (SELECT 1 FROM localizations l WHERE l.image_uuid = i.uuid AND "
                + " AND ".join(loc_clauses) + ")"
            )
            params.extend(loc_params)

        where = f"WHERE {' AND '.join(clauses)}" if clauses else ""
        return where, params

    @staticmethod
    def _attach_locs(conn: sqlite3.Connection, rec: ImageRecord) -> ImageWithBoxes:
        rows = conn.execute(
            "SELECT * FROM localizations WHERE image_uuid = ? ORDER BY uuid",
            (rec.uuid,),
        ).fetchall()
        return ImageWithBoxes(rec, [_loc_from_row(r) for r in rows])

    def snapshot(self, filt: Optional[QueryFilter] = None) -> list[ImageWithBoxes]:
        """Full, ordered materialization for the statistics engine."""
        if filt is None:
            with self._read() as conn:
                rows = conn.execute(
                    """SELECT * FROM images i
                       ORDER BY (i.timestamp IS NULL) DESC, i.timestamp, i.uuid"""
                ).fetchall()
                return [self._attach_locs(conn, _image_from_row(r)) for r in rows]
        filt = replace(filt, page=1, page_size=1000)
        items: list[ImageWithBoxes] = []
        while True:
            page = self.query(filt)
            items.extend(page.items)
            if filt.page * filt.page_size >= page.total:
                return items
            filt = replace(filt, page=filt.page + 1)

    def get_localization(self, uuid: str) -> Localization:
        with self._read() as conn:
            row = conn.execute(
                "SELECT * FROM localizations WHERE uuid = ?", (uuid,)
            ).fetchone()
        if row is None:
            raise UnknownEntity("localization", uuid)
        return _loc_from_row(row)

    def get_image(self, uuid: str) -> ImageRecord:
        with self._read() as conn:
            row = conn.execute(
                "SELECT * FROM images WHERE uuid = ?", (uuid,)
            ).fetchone()
        if row is None:
            raise UnknownEntity("image", uuid)
        return _image_from_row(row)

    # -- verification workflow --

    def set_verification(self, loc_uuid: str, state: VerificationState,
                         verifier: str) -> Localization:
        """Apply a verification transition and append to the audit log."""
        if not verifier or not verifier.strip():
            raise ValidationError("verifier", "verifier identity is required")
        with self._write() as conn:
            row = conn.execute(
                "SELECT * FROM localizations WHERE uuid = ?", (loc_uuid,)
            ).fetchone()
            if row is None:
                raise UnknownEntity("localization", loc_uuid)
            current = VerificationState(row["verification"])
            if (current, state) not in ALLOWED_TRANSITIONS:
                raise IllegalTransition(current, state)
            conn.execute(
                "UPDATE localizations SET verification = ?, verifier = ? WHERE uuid = ?",
                (state.value, verifier, loc_uuid),
            )
            conn.execute(
                """INSERT INTO verification_audit
                   (localization_uuid, from_state, to_state, verifier, at)
                   VALUES (?,?,?,?,?)""",
                (loc_uuid, current.value, state.value, verifier, now_iso()),
            )
        return self.get_localization(loc_uuid)

    def audit_log(self, loc_uuid: Optional[str] = None) -> list[AuditEntry]:
        with self._read() as conn:
            if loc_uuid is None:
                rows = conn.execute(
                    "SELECT * FROM verification_audit ORDER BY seq"
                ).fetchall()
            else:
                rows = conn.execute(
                    "SELECT * FROM verification_audit WHERE localization_uuid = ? ORDER BY seq",
                    (loc_uuid,),
                ).fetchall()
        return [
            AuditEntry(
                localization_uuid=r["localization_uuid"],
                from_state=VerificationState(r["from_state"]),
                to_state=VerificationState(r["to_state"]),
                verifier=r["verifier"],
                at=r["at"],
            )
            for r in rows
        ]

    # -- integrity + bookkeeping --

    def counts(self) -> dict[str, int]:
        with self._read() as conn:
            return {
                "collections": conn.execute("SELECT COUNT(*) FROM collections").fetchone()[0],
                "images": conn.execute("SELECT COUNT(*) FROM images").fetchone()[0],
                "localizations": conn.execute("SELECT COUNT(*) FROM localizations").fetchone()[0],
            }

    def check_referential_integrity(self) -> None:
        with self._read() as conn:
            orphan_img = conn.execute(
                """SELECT i.uuid FROM images i
                   LEFT JOIN collections c ON c.uuid = i.collection_uuid
                   WHERE c.uuid IS NULL LIMIT 1"""
            ).fetchone()
            orphan_loc = conn.execute(
                """SELECT l.uuid FROM localizations l
                   LEFT JOIN images i ON i.uuid = l.image_uuid
                   WHERE i.uuid IS NULL LIMIT 1"""
            ).fetchone()
        if orphan_img:
            raise CatalogError(f"image {orphan_img[0]} references a missing collection")
        if orphan_loc:
            raise CatalogError(f"localization {orphan_loc[0]} references a missing image")

    def digest(self) -> str:
        """Content hash over every row; used to prove --dry-run never writes."""
        h = sha256()
        with self._read() as conn:
            for table, order in (("collections", "uuid"), ("images", "uuid"),
                                 ("localizations", "uuid"),
                                 ("verification_audit", "seq")):
                for row in conn.execute(f"SELECT * FROM {table} ORDER BY {order}"):
                    h.update(repr(tuple(row)).encode())
        return h.hexdigest()


def _to_int(value: Optional[bool]) -> Optional[int]:
    return None if value is None else int(value)


def _to_bool(value) -> Optional[bool]:
    return None if value is None else bool(value)


def _collection_from_row(row: sqlite3.Row) -> Collection:
    return Collection(
        uuid=row["uuid"],
        owner_institution=row["owner_institution"],
        rights_holder=row["rights_holder"],
        contributor_email=row["contributor_email"],
        record_type=row["record_type"],
        modified=row["modified"],
        url=row["url"],
        data_format=row["data_format"],
        extra=json.loads(row["extra"]),
    )


def _image_from_row(row: sqlite3.Row) -> ImageRecord:
    return ImageRecord(
        uuid=row["uuid"],
        collection_uuid=row["collection_uuid"],
        image_url=row["image_url"],
        width_px=row["width_px"],
        height_px=row["height_px"],
        latitude=row["latitude"],
        longitude=row["longitude"],
        depth_m=row["depth_m"],
        altitude_m=row["altitude_m"],
        timestamp=row["timestamp"],
        imaging_type=row["imaging_type"],
        observer=row["observer"],
    )


def _loc_from_row(row: sqlite3.Row) -> Localization:
    return Localization(
        uuid=row["uuid"],
        image_uuid=row["image_uuid"],
        concept=row["concept"],
        alt_concept=row["alt_concept"],
        bbox=BoundingBox(row["x"], row["y"], row["width"], row["height"]),
        group_of=_to_bool(row["group_of"]),
        occluded=_to_bool(row["occluded"]),
        truncated=_to_bool(row["truncated"]),
        observer=row["observer"],
        verification=VerificationState(row["verification"]),
        verifier=row["verifier"],
    )
