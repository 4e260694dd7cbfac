"""HTTP facade over the domain registry.

Conventions, applied uniformly:

* every error body is ``{"error": {"code": ..., "message": ...}}`` with
  a machine-readable upper-snake code; malformed JSON or missing fields
  come back as 400 MALFORMED_BODY, never a bare framework 422
* every float in a response is rounded to 6 decimal places
* training runs on a background thread; clients poll the domain until
  its status flips to "trained"
* answers carry the domain snapshot id they were computed from, and a
  request id that /feedback accepts exactly once
"""

from __future__ import annotations

import dataclasses
import threading
import time
import uuid
from collections import OrderedDict
from dataclasses import dataclass, field

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from . import qa
from .nn import HyperParams
from .text import TextPipelineError

MAX_TRACKED_EXCHANGES = 10_000
DEFAULT_MAX_REQUEST_BYTES = 10 * 1024 * 1024


@dataclass
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8000
    data_dir: str | None = None  # persist domains here when set
    max_request_bytes: int = DEFAULT_MAX_REQUEST_BYTES
    cors_origins: list[str] = field(default_factory=lambda: ["*"])


class ApiError(Exception):
    """Carries an HTTP status and a stable error code to the envelope."""

    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


def _error_json(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse(
        status_code=status,
        content={"error": {"code": code, "message": message}},
    )


def r6(x) -> float:
    return round(float(x), 6)


# -- request bodies -------------------------------------------------------


class CreateDomainBody(BaseModel):
    domain_id: str


class DocumentItem(BaseModel):
    text: str
    category: str


class DocumentsBody(BaseModel):
    documents: list[DocumentItem]


class TrainBody(BaseModel):
    hyperparams: dict | None = None


class AskBody(BaseModel):
    question: str
    domain_id: str | None = None
    request_id: str | None = None


class FeedbackBody(BaseModel):
    request_id: str
    accepted: bool


@dataclass
class Exchange:
    domain_id: str
    question: str
    answer: qa.Answer
    feedback_recorded: bool = False
    learned: bool = False


class ExchangeLog:
    """Recent question/answer pairs by request id, bounded FIFO."""

    def __init__(self, capacity: int = MAX_TRACKED_EXCHANGES):
        self._items: OrderedDict[str, Exchange] = OrderedDict()
        self._capacity = capacity
        self._lock = threading.Lock()

    def add(self, request_id: str, exchange: Exchange) -> None:
        with self._lock:
            if request_id in self._items:
                raise ApiError(409, "REQUEST_ID_IN_USE",
                               f"request_id {request_id!r} was already used")
            self._items[request_id] = exchange
            while len(self._items) > self._capacity:
                self._items.popitem(last=False)

    def get(self, request_id: str) -> Exchange:
        with self._lock:
            try:
                return self._items[request_id]
            except KeyError:
                raise ApiError(404, "UNKNOWN_REQUEST_ID",
                               f"no exchange with request_id {request_id!r}") from None

    def claim_feedback(self, request_id: str) -> Exchange:
        """Atomically mark the exchange as having received feedback;
        raises 409 if it already had."""
        with self._lock:
            try:
                exchange = self._items[request_id]
            except KeyError:
                raise ApiError(404, "UNKNOWN_REQUEST_ID",
                               f"no exchange with request_id {request_id!r}") from None
            if exchange.feedback_recorded:
                raise ApiError(
                    409, "FEEDBACK_ALREADY_RECORDED",
                    f"feedback for {request_id!r} was already recorded",
                )
            exchange.feedback_recorded = True
            return exchange

    def release_feedback(self, request_id: str) -> None:
        with self._lock:
            if request_id in self._items:
                self._items[request_id].feedback_recorded = False


class _ProgressHook:
    """Duck-typed progress sink for the trainer: each appended
    (step, total) pair becomes the domain's visible training progress."""

    def __init__(self, domain: qa.Domain):
        self._domain = domain

    def append(self, item: tuple[int, int]) -> None:
        self._domain.training_progress = item


def _domain_status(domain: qa.Domain) -> str:
    if domain.is_training:
        return "training"
    return domain.snapshot.status


def _domain_summary(domain: qa.Domain) -> dict:
    snap = domain.snapshot
    return {
        "domain_id": domain.domain_id,
        "status": _domain_status(domain),
        "kb_size": snap.kb.size() if snap.kb is not None else 0,
        "num_categories": snap.labels.num_classes if snap.labels is not None else 0,
        "snapshot_id": snap.snapshot_id,
    }


def _domain_detail(domain: qa.Domain) -> dict:
    snap = domain.snapshot
    detail = _domain_summary(domain)
    progress = domain.training_progress
    detail.update(
        {
            "categories": snap.labels.names if snap.labels is not None else [],
            "pad_length": snap.pad_length,
            "vocab_size": snap.vocab.size if snap.vocab is not None else 0,
            "training_progress": (
                {"steps_done": progress[0], "total_steps": progress[1]}
                if progress is not None
                else None
            ),
            "last_train_seconds": (
                r6(domain.last_train_seconds)
                if domain.last_train_seconds is not None
                else None
            ),
            "last_error": domain.last_error,
        }
    )
    return detail


def _hyperparams_from_dict(overrides: dict, n_examples: int) -> HyperParams:
    base = qa.default_domain_hyperparams(n_examples)
    allowed = {f.name for f in dataclasses.fields(HyperParams)}
    unknown = sorted(set(overrides) - allowed)
    if unknown:
        raise ApiError(400, "INVALID_HYPERPARAMETERS",
                       f"unknown hyperparameter(s): {', '.join(unknown)}")
    clean = dict(overrides)
    if "widths" in clean:
        try:
            clean["widths"] = tuple(int(w) for w in clean["widths"])
        except (TypeError, ValueError):
            raise ApiError(400, "INVALID_HYPERPARAMETERS",
                           "widths must be a list of integers") from None
    try:
        return dataclasses.replace(base, **clean)
    except (TypeError, ValueError) as exc:
        raise ApiError(400, "INVALID_HYPERPARAMETERS", str(exc)) from None


def create_app(config: ServiceConfig | None = None) -> FastAPI:
    config = config or ServiceConfig()
    app = FastAPI(title="convqa", docs_url=None, redoc_url=None)
    app.state.config = config
    app.state.registry = qa.DomainRegistry(base_dir=config.data_dir)
    app.state.exchanges = ExchangeLog()

    if config.cors_origins:
        app.add_middleware(
            CORSMiddleware,
            allow_origins=config.cors_origins,
            allow_methods=["*"],
            allow_headers=["*"],
        )

    @app.middleware("http")
    async def limit_request_size(request: Request, call_next):
        length = request.headers.get("content-length")
        if length is not None and length.isdigit():
            if int(length) > config.max_request_bytes:
                return _error_json(
                    413,
                    "REQUEST_TOO_LARGE",
                    f"request body exceeds {config.max_request_bytes} bytes",
                )
        return await call_next(request)

    @app.exception_handler(ApiError)
    async def handle_api_error(request: Request, exc: ApiError):
        return _error_json(exc.status, exc.code, exc.message)

    @app.exception_handler(RequestValidationError)
    async def handle_validation_error(request: Request, exc: RequestValidationError):
        first = exc.errors()[0] if exc.errors() else {}
        loc = ".".join(str(p) for p in first.get("loc", ()) if p != "body")
        msg = first.get("msg", "invalid request body")
        detail = f"{loc}: {msg}" if loc else msg
        return _error_json(400, "MALFORMED_BODY", detail)

    registry: qa.DomainRegistry = app.state.registry
    exchanges: ExchangeLog = app.state.exchanges

    def get_domain(domain_id: str) -> qa.Domain:
        try:
            return registry.get(domain_id)
        except qa.QAError:
            raise ApiError(404, "UNKNOWN_DOMAIN",
                           f"unknown domain {domain_id!r}") from None

    # -- endpoints --------------------------------------------------------

    @app.get("/healthz")
    async def healthz():
        return {"status": "ok"}

    @app.post("/domains", status_code=201)
    async def create_domain(body: CreateDomainBody):
        if body.domain_id in registry:
            raise ApiError(409, "DOMAIN_EXISTS",
                           f"domain {body.domain_id!r} already exists")
        try:
            domain = registry.register_domain(body.domain_id)
        except qa.QAError as exc:
            raise ApiError(400, "INVALID_DOMAIN_ID", str(exc)) from None
        return _domain_summary(domain)

    @app.get("/domains")
    async def list_domains():
        return {
            "domains": [
                _domain_summary(registry.get(did)) for did in registry.domain_ids()
            ]
        }

    @app.get("/domains/{domain_id}")
    async def domain_detail(domain_id: str):
        return _domain_detail(get_domain(domain_id))

    @app.post("/domains/{domain_id}/documents")
    async def ingest(domain_id: str, body: DocumentsBody):
        domain = get_domain(domain_id)
        if domain.is_training:
            raise ApiError(409, "TRAINING_IN_PROGRESS",
                           f"domain {domain_id!r} is training; retry later")
        if not body.documents:
            raise ApiError(400, "EMPTY_CORPUS", "documents list is empty")
        try:
            registry.ingest_documents(
                domain_id, [(d.text, d.category) for d in body.documents]
            )
        except (qa.QAError, TextPipelineError) as exc:
            raise ApiError(400, "INVALID_CORPUS", str(exc)) from None
        return _domain_summary(domain)

    @app.post("/domains/{domain_id}/train", status_code=202)
    async def train(domain_id: str, body: TrainBody | None = None):
        domain = get_domain(domain_id)
        snap = domain.snapshot
        if snap.status == "created":
            raise ApiError(409, "DOMAIN_NOT_INGESTED",
                           f"domain {domain_id!r} has no documents yet")
        hp = None
        if body is not None and body.hyperparams:
            hp = _hyperparams_from_dict(body.hyperparams, snap.kb.size())
            if max(hp.widths) > snap.pad_length:
                raise ApiError(
                    400, "INVALID_HYPERPARAMETERS",
                    f"filter width {max(hp.widths)} exceeds pad length {snap.pad_length}",
                )
        if not domain.try_begin_training():
            raise ApiError(409, "TRAINING_IN_PROGRESS",
                           f"domain {domain_id!r} is already training")

        def run() -> None:
            try:
                domain.last_error = None
                registry.train_domain(domain_id, hp, progress=_ProgressHook(domain))
            except Exception as exc:  # keep the service alive; report via GET
                domain.last_error = str(exc)
            finally:
                domain.end_training()

        threading.Thread(target=run, name=f"train-{domain_id}", daemon=True).start()
        return {"domain_id": domain_id, "status": "training"}

    @app.post("/ask")
    async def ask(body: AskBody):
        started = time.perf_counter()
        if not body.question.strip():
            raise ApiError(400, "EMPTY_QUESTION", "question is empty")
        try:
            if body.domain_id is not None:
                domain = get_domain(body.domain_id)
                if domain.snapshot.status != "trained":
                    raise ApiError(409, "DOMAIN_NOT_TRAINED",
                                   f"domain {body.domain_id!r} is not trained")
                answer = domain.retrieve_answer(body.question)
            else:
                trained = [
                    did for did in registry.domain_ids()
                    if registry.get(did).snapshot.status == "trained"
                ]
                if not trained:
                    raise ApiError(409, "NO_TRAINED_DOMAIN",
                                   "no trained domain available")
                answer = registry.answer_general(body.question)
        except qa.QAError as exc:
            msg = str(exc)
            if "no tokens" in msg:
                raise ApiError(400, "EMPTY_QUESTION", msg) from None
            raise ApiError(400, "INVALID_QUESTION", msg) from None

        request_id = body.request_id or uuid.uuid4().hex
        exchanges.add(
            request_id,
            Exchange(domain_id=answer.domain_id, question=body.question, answer=answer),
        )
        return {
            "request_id": request_id,
            "domain_id": answer.domain_id,
            "question": body.question,
            "answer": answer.text,
            "category": answer.category,
            "confidence": r6(answer.classifier_confidence),
            "similarity": r6(answer.similarity),
            "fallback": answer.fallback,
            "snapshot_id": answer.snapshot_id,
            "latency_ms": r6((time.perf_counter() - started) * 1000.0),
        }

    @app.post("/feedback")
    async def feedback(body: FeedbackBody):
        exchange = exchanges.claim_feedback(body.request_id)
        learned = False
        if body.accepted:
            try:
                learned = registry.kb_learn(
                    exchange.domain_id, exchange.question, exchange.answer, True
                )
            except qa.QAError as exc:
                exchanges.release_feedback(body.request_id)
                raise ApiError(409, "DOMAIN_NOT_TRAINED", str(exc)) from None
        exchange.learned = learned
        domain = registry.get(exchange.domain_id)
        kb = domain.snapshot.kb
        return {
            "request_id": body.request_id,
            "accepted": body.accepted,
            "learned": learned,
            "kb_size": kb.size() if kb is not None else 0,
        }

    return app


def run_service(config: ServiceConfig | None = None) -> None:
    """Blocking uvicorn runner used by the command line."""
    import uvicorn

    config = config or ServiceConfig()
    uvicorn.run(create_app(config), host=config.host, port=config.port,
                log_level="warning")
