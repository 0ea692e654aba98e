"""REST surface over the catalog, taxonomy, statistics, and export, plus
event publication for every mutation.

Wire format is UTF-8 JSON; pagination uses ``page``/``page_size`` query
params and an ``X-Total-Count`` response header. Reads are anonymous; writes
require the single bearer token when one is configured. Query responses are
pure views: repeating a GET against an unchanged store yields byte-identical
bodies. Validation failures always map to 4xx with machine-readable field
errors, never 5xx.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

from fastapi import Depends, FastAPI, File, Request, Response, UploadFile
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, StreamingResponse
from pydantic import BaseModel

from . import ingest as ingest_mod
from .catalog import (
    CatalogStore,
    IllegalTransition,
    ImageWithBoxes,
    Localization,
    QueryFilter,
    UnknownEntity,
    ValidationError,
    VerificationState,
)
from .events import EventEnvelope, EventSink, NullSink, safe_publish
from .stats import (
    StatsError,
    concepts_per_image,
    instances_per_image,
    relative_size_distribution,
)
from .taxonomy import (
    ConceptNotFound,
    ConceptTree,
    Rank,
    TaxonomyError,
    load_taxonomy,
)

log = logging.getLogger(__name__)


def _field_errors(status: int, errors: list[dict]) -> JSONResponse:
    return JSONResponse(status_code=status, content={"errors": errors})


def _image_json(item: ImageWithBoxes) -> dict:
    rec = item.record
    return {
        "uuid": rec.uuid,
        "collection": rec.collection_uuid,
        "image_url": rec.image_url,
        "width_px": rec.width_px,
        "height_px": rec.height_px,
        "latitude": rec.latitude,
        "longitude": rec.longitude,
        "depth_m": rec.depth_m,
        "altitude_m": rec.altitude_m,
        "timestamp": rec.timestamp,
        "imaging_type": rec.imaging_type,
        "observer": rec.observer,
        "localizations": [_loc_json(loc) for loc in item.localizations],
    }


def _loc_json(loc: Localization) -> dict:
    return {
        "uuid": loc.uuid,
        "image": loc.image_uuid,
        "concept": loc.concept,
        "alt_concept": loc.alt_concept,
        "bbox": {"x": loc.bbox.x, "y": loc.bbox.y,
                 "width": loc.bbox.width, "height": loc.bbox.height},
        "group_of": loc.group_of,
        "occluded": loc.occluded,
        "truncated": loc.truncated,
        "observer": loc.observer,
        "verification": loc.verification.value,
        "verifier": loc.verifier,
    }


class VerificationPatch(BaseModel):
    state: str
    verifier: str


def create_app(store: CatalogStore, sink: Optional[EventSink] = None,
               token: Optional[str] = None) -> FastAPI:
    """Build the service over an opened store (with its taxonomy attached)."""
    sink = sink if sink is not None else NullSink()
    app = FastAPI(title="finnet", docs_url=None, redoc_url=None)
    # browser clients may be served from a different origin than the API
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
        expose_headers=["X-Total-Count"],
    )

    def tree() -> ConceptTree:
        t = store.taxonomy
        if t is None:
            raise TaxonomyError("no taxonomy attached to the store")
        return t

    # -- error mapping: invalid input is 4xx, always with field errors --

    @app.exception_handler(ValidationError)
    async def _validation(request: Request, exc: ValidationError):
        return _field_errors(422, [{"field": exc.field, "message": exc.message}])

    @app.exception_handler(ingest_mod.IngestError)
    async def _ingest_err(request: Request, exc: ingest_mod.IngestError):
        return _field_errors(422, [{"field": exc.field or "file", "message": str(exc)}])

    @app.exception_handler(ConceptNotFound)
    async def _concept_404(request: Request, exc: ConceptNotFound):
        return _field_errors(404, [{"field": "concept", "message": str(exc)}])

    @app.exception_handler(UnknownEntity)
    async def _unknown(request: Request, exc: UnknownEntity):
        return _field_errors(404, [{"field": exc.kind, "message": str(exc)}])

    @app.exception_handler(IllegalTransition)
    async def _illegal(request: Request, exc: IllegalTransition):
        return _field_errors(409, [{"field": "state", "message": str(exc)}])

    @app.exception_handler(TaxonomyError)
    async def _taxonomy_err(request: Request, exc: TaxonomyError):
        return _field_errors(422, [{"field": "taxonomy", "message": str(exc)}])

    @app.exception_handler(StatsError)
    async def _stats_err(request: Request, exc: StatsError):
        return _field_errors(422, [{"field": "snapshot", "message": str(exc)}])

    # -- auth (writes only) --

    async def require_write(request: Request) -> None:
        if token is None:
            return
        header = request.headers.get("authorization", "")
        if header != f"Bearer {token}":
            raise _Unauthorized()

    class _Unauthorized(Exception):
        pass

    @app.exception_handler(_Unauthorized)
    async def _unauthorized(request: Request, exc: _Unauthorized):
        return _field_errors(401, [{"field": "authorization",
                                    "message": "missing or invalid bearer token"}])

    # -- endpoints --

    @app.get("/health")
    def health():
        t = tree()
        return {
            "status": "ok",
            "store": store.counts(),
            "taxonomy": {"nodes": len(t), "root": t.root.name},
        }

    @app.get("/concepts/{name}")
    def get_concept(name: str):
        node = tree().resolve(name)
        return {
            "name": node.name,
            "rank": node.rank.value,
            "parent": node.parent.name if node.parent else None,
            "aliases": sorted(node.aliases),
            "children": sorted(c.name for c in node.children),
        }

    @app.get("/concepts/{name}/descendants")
    def get_descendants(name: str):
        t = tree()
        node = t.resolve(name)
        return {"name": node.name,
                "descendants": sorted(t.descendant_names(node))}

    def _filter_from_params(
        concept: Optional[str], descendants: bool,
        minlat: Optional[float], maxlat: Optional[float],
        minlon: Optional[float], maxlon: Optional[float],
        mindepth: Optional[float], maxdepth: Optional[float],
        imaging_type: Optional[str], state: Optional[str],
        page: int, page_size: int,
    ) -> QueryFilter:
        return QueryFilter(
            concept=concept,
            include_descendants=descendants,
            min_lat=minlat, max_lat=maxlat,
            min_lon=minlon, max_lon=maxlon,
            min_depth=mindepth, max_depth=maxdepth,
            imaging_type=imaging_type,
            state=VerificationState.parse(state) if state else None,
            page=page, page_size=page_size,
        )

    @app.get("/images")
    def get_images(
        response: Response,
        concept: Optional[str] = None, descendants: bool = False,
        minlat: Optional[float] = None, maxlat: Optional[float] = None,
        minlon: Optional[float] = None, maxlon: Optional[float] = None,
        mindepth: Optional[float] = None, maxdepth: Optional[float] = None,
        imaging_type: Optional[str] = None, state: Optional[str] = None,
        page: int = 1, page_size: int = 100,
    ):
        filt = _filter_from_params(concept, descendants, minlat, maxlat,
                                   minlon, maxlon, mindepth, maxdepth,
                                   imaging_type, state, page, page_size)
        result = store.query(filt)
        response.headers["X-Total-Count"] = str(result.total)
        return {
            "items": [_image_json(i) for i in result.items],
            "total": result.total,
            "page": result.page,
            "page_size": result.page_size,
        }

    @app.get("/export")
    def export(
        concept: Optional[str] = None, descendants: bool = False,
        minlat: Optional[float] = None, maxlat: Optional[float] = None,
        minlon: Optional[float] = None, maxlon: Optional[float] = None,
        mindepth: Optional[float] = None, maxdepth: Optional[float] = None,
        imaging_type: Optional[str] = None, state: Optional[str] = None,
    ):
        filt = _filter_from_params(concept, descendants, minlat, maxlat,
                                   minlon, maxlon, mindepth, maxdepth,
                                   imaging_type, state, 1, 1000)
        images = store.snapshot(filt)
        return StreamingResponse(ingest_mod.export_rows(images),
                                 media_type="text/csv; charset=utf-8")

    @app.post("/collections", status_code=201)
    def post_collection(
        csv: UploadFile = File(...),
        meta: UploadFile = File(...),
        _auth: None = Depends(require_write),
    ):
        csv_bytes = csv.file.read()
        meta_bytes = meta.file.read()
        parsed_meta = ingest_mod.parse_meta(meta_bytes)
        collection = ingest_mod.collection_from_meta(parsed_meta)
        existed = store.has_collection(collection.uuid)
        report, uuid, counts = ingest_mod.ingest_upload(
            store, tree(), csv_bytes, parsed_meta)
        if report.errors or uuid is None:
            return _field_errors(422, [
                {"field": f"row {e.row}: {e.field}", "message": e.message}
                for e in report.errors
            ])
        event_type = "images.added" if existed else "collection.created"
        safe_publish(sink, EventEnvelope.now(
            event_type, uuid, actor=collection.contributor_email))
        return {
            "collection": uuid,
            "images": counts[0],
            "localizations": counts[1],
            "warnings": report.warnings,
        }

    @app.patch("/localizations/{loc_id}")
    def patch_localization(
        loc_id: str,
        patch: VerificationPatch,
        _auth: None = Depends(require_write),
    ):
        state = VerificationState.parse(patch.state)
        updated = store.set_verification(loc_id, state, patch.verifier)
        event_type = ("localization.verified"
                      if state is VerificationState.VERIFIED
                      else "localization.rejected")
        safe_publish(sink, EventEnvelope.now(event_type, loc_id,
                                             actor=patch.verifier))
        return _loc_json(updated)

    @app.get("/stats/instances")
    def stats_instances():
        return instances_per_image(store.snapshot()).to_dict()

    @app.get("/stats/concepts")
    def stats_concepts(rank: str):
        try:
            parsed = Rank.parse(rank)
        except TaxonomyError:
            return _field_errors(422, [{"field": "rank",
                                        "message": f"unknown rank: {rank!r}"}])
        if not parsed.is_biological:
            return _field_errors(422, [{"field": "rank",
                                        "message": "rank must be biological"}])
        return concepts_per_image(store.snapshot(), tree(), parsed).to_dict()

    @app.get("/stats/sizes")
    def stats_sizes():
        dist = relative_size_distribution(store.snapshot())
        return {"histogram": dist.histogram.to_dict(), "excluded": dist.excluded}

    return app


@dataclass
class ServeConfig:
    bind: str = "127.0.0.1:8423"
    store_path: str = "finnet.db"
    taxonomy_path: str = ""
    token: Optional[str] = None
    event_sink: str = "stdout"

    @property
    def host_port(self) -> tuple[str, int]:
        host, _, port = self.bind.rpartition(":")
        if not host or not port.isdigit():
            raise ValidationError("bind", f"expected host:port, got {self.bind!r}")
        return host, int(port)


def build_app_from_config(config: ServeConfig) -> FastAPI:
    from .events import sink_from_spec

    if not config.taxonomy_path:
        raise ValidationError("taxonomy", "a taxonomy source is required to serve")
    tree = load_taxonomy(config.taxonomy_path)
    store = CatalogStore(config.store_path, tree=tree)
    return create_app(store, sink=sink_from_spec(config.event_sink),
                      token=config.token)


def serve(config: ServeConfig) -> None:
    """Run the service until interrupted. Startup problems (bad taxonomy,
    unopenable store, busy port) are fatal."""
    import uvicorn

    app = build_app_from_config(config)
    host, port = config.host_port
    uvicorn.run(app, host=host, port=port, log_level="info")
