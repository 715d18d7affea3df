"""HTTP recommendation service.

Loads one checkpoint plus vocabulary and serves ranked concept suggestions
for partial metamodels. The API is three endpoints: POST /v1/recommend,
GET /v1/health, GET /v1/model/info. A request names its slot either as an
existing element (rename) or as a pending element being created, in which
case an empty-named element is appended and masked, mirroring how the
incremental scenario builds its contexts.

The loaded model is immutable and inference runs with dropout off, so
identical requests yield identical responses.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from .bpe import Vocabulary
from .fill import fill_mask_topk
from .metamodel import AssociationDef, AttributeDef, ClassDef, Metamodel, MetamodelError, parse_canonical
from .model import PRESETS
from .sampling import local_context
from .surface import ElementRef, mask_element
from .training import Checkpoint

MAX_K = 50
_PENDING_NAME = "_"
_DEFAULT_ATTR_TYPE = "EString"


class RequestError(Exception):
    def __init__(self, status: int, code: str, detail: str):
        super().__init__(detail)
        self.status = status
        self.code = code
        self.detail = detail


def _bad(detail: str) -> RequestError:
    return RequestError(400, "bad-request", detail)


def _unresolvable(detail: str) -> RequestError:
    return RequestError(422, "unresolvable-target", detail)


@dataclass
class LoadedModel:
    model: object
    vocab: Vocabulary
    checkpoint_hash: str
    preset: str
    max_subwords: int
    beam_width: int


class ServiceState:
    def __init__(self, max_subwords: int = 6, beam_width: int = 10):
        self.loaded: LoadedModel | None = None
        self.max_subwords = max_subwords
        self.beam_width = beam_width

    def load(self, checkpoint_path, vocab_path) -> None:
        ckpt = Checkpoint.load(checkpoint_path)
        vocab = Vocabulary.load(vocab_path)
        with open(checkpoint_path, "rb") as f:
            digest = hashlib.sha256(f.read()).hexdigest()
        self.loaded = LoadedModel(
            model=ckpt.build_model(),
            vocab=vocab,
            checkpoint_hash=digest,
            preset=_preset_name(ckpt.config),
            max_subwords=self.max_subwords,
            beam_width=self.beam_width,
        )


def _preset_name(config) -> str:
    for name, preset in PRESETS.items():
        fields = preset.to_dict()
        actual = config.to_dict()
        if all(actual[k] == v for k, v in fields.items() if k not in ("vocab_size", "seed")):
            return name
    return "custom"


def _parse_target(body: dict, metamodel: Metamodel) -> tuple[Metamodel, ElementRef]:
    """Resolve the request's slot; pending slots append a masked placeholder."""
    target = body.get("target")
    pending = body.get("pending")
    if (target is None) == (pending is None):
        raise _bad("exactly one of 'target' or 'pending' is required")

    if target is not None:
        if not isinstance(target, dict):
            raise _bad("'target' must be an object")
        kind = target.get("kind")
        if kind not in ("class", "attribute", "association"):
            raise _bad(f"unknown target kind {kind!r}")
        try:
            ref = ElementRef(
                kind=kind,
                class_index=int(target.get("class_index", -1)),
                member_index=int(target.get("member_index", 0)),
            )
        except (TypeError, ValueError) as exc:
            raise _bad(f"malformed target: {exc}")
        try:
            mask_element(metamodel, ref)
        except (IndexError, ValueError) as exc:
            raise _unresolvable(str(exc))
        return metamodel, ref

    if not isinstance(pending, dict):
        raise _bad("'pending' must be an object")
    kind = pending.get("kind")
    names = [c.name for c in metamodel.classes]

    if kind == "class":
        cls = ClassDef(name=_pending_class_name(names))
        grown = Metamodel(id=metamodel.id, classes=metamodel.classes + (cls,))
        return grown, ElementRef("class", len(grown.classes) - 1)

    owner = pending.get("owner")
    if owner not in names:
        raise _unresolvable(f"pending slot owner {owner!r} is not a declared class")
    oi = names.index(owner)
    owner_cls = metamodel.classes[oi]

    if kind == "attribute":
        attr_type = pending.get("type", _DEFAULT_ATTR_TYPE)
        if not isinstance(attr_type, str) or not attr_type or any(c.isspace() for c in attr_type):
            raise _bad(f"invalid pending attribute type {attr_type!r}")
        grown_cls = ClassDef(
            name=owner_cls.name,
            attributes=owner_cls.attributes + (AttributeDef(_PENDING_NAME, attr_type),),
            associations=owner_cls.associations,
        )
        classes = metamodel.classes[:oi] + (grown_cls,) + metamodel.classes[oi + 1 :]
        return (
            Metamodel(id=metamodel.id, classes=classes),
            ElementRef("attribute", oi, len(grown_cls.attributes) - 1),
        )

    if kind == "association":
        target_name = pending.get("target")
        if target_name not in names:
            raise _unresolvable(f"pending association target {target_name!r} is not declared")
        grown_cls = ClassDef(
            name=owner_cls.name,
            attributes=owner_cls.attributes,
            associations=owner_cls.associations
            + (AssociationDef(_PENDING_NAME, target_name),),
        )
        classes = metamodel.classes[:oi] + (grown_cls,) + metamodel.classes[oi + 1 :]
        return (
            Metamodel(id=metamodel.id, classes=classes),
            ElementRef("association", oi, len(grown_cls.associations) - 1),
        )

    raise _bad(f"unknown pending slot kind {kind!r}")


def _pending_class_name(existing: list[str]) -> str:
    name = _PENDING_NAME
    while name in existing:
        name += "_"
    return name


def create_app(state: ServiceState | None = None, checkpoint_path=None,
               vocab_path=None, cors_origins=("*",)) -> FastAPI:
    state = state or ServiceState()
    app = FastAPI(title="metamodel concept recommender")
    app.state.service = state
    app.add_middleware(
        CORSMiddleware,
        allow_origins=list(cors_origins),
        allow_methods=["*"],
        allow_headers=["*"],
    )
    if checkpoint_path is not None:
        state.load(checkpoint_path, vocab_path)

    @app.get("/v1/health")
    def health():
        return {"status": "ready" if state.loaded else "loading"}

    @app.get("/v1/model/info")
    def model_info():
        if state.loaded is None:
            return JSONResponse(
                status_code=503, content={"error": "model-not-loaded", "detail": "still loading"}
            )
        loaded = state.loaded
        return {
            "checkpoint": loaded.checkpoint_hash,
            "preset": loaded.preset,
            "vocab_size": len(loaded.vocab),
            "config": loaded.model.config.to_dict(),
        }

    @app.post("/v1/recommend")
    async def recommend(request: Request):
        try:
            return _handle_recommend(state, await _json_body(request))
        except RequestError as exc:
            return JSONResponse(
                status_code=exc.status, content={"error": exc.code, "detail": exc.detail}
            )

    return app


async def _json_body(request: Request) -> dict:
    try:
        body = await request.json()
    except Exception as exc:
        raise _bad(f"invalid JSON body: {exc}")
    if not isinstance(body, dict):
        raise _bad("request body must be a JSON object")
    return body


def _handle_recommend(state: ServiceState, body: dict) -> dict:
    if state.loaded is None:
        raise RequestError(503, "model-not-loaded", "no checkpoint loaded")
    loaded = state.loaded

    raw_mm = body.get("metamodel")
    if not isinstance(raw_mm, dict):
        raise _bad("'metamodel' must be a canonical-format object")
    try:
        metamodel = parse_canonical(json.dumps(raw_mm))
    except MetamodelError as exc:
        raise _bad(f"malformed metamodel: {exc}")

    k = body.get("k", 5)
    if not isinstance(k, int) or isinstance(k, bool) or not 0 <= k <= MAX_K:
        raise _bad(f"'k' must be an integer in [0, {MAX_K}]")
    strategy = body.get("strategy", "global")
    if strategy not in ("global", "local"):
        raise _bad(f"unknown strategy hint {strategy!r}")

    snapshot, ref = _parse_target(body, metamodel)
    if strategy == "local":
        snapshot, ref = local_context(snapshot, ref)
    context, _ = mask_element(snapshot, ref)

    candidates = fill_mask_topk(
        loaded.model, loaded.vocab, context, k,
        loaded.max_subwords, loaded.beam_width,
    )
    return {
        "candidates": [{"text": c.text, "score": c.score} for c in candidates],
        "context_size": snapshot.element_count() - 1,
        "model_info": {"checkpoint": loaded.checkpoint_hash, "preset": loaded.preset},
    }
