"""Session store, on-disk persistence, and the HTTP API.

State model: datasets are immutable once uploaded; a session binds one
dataset to a current pipeline plus an append-only edit history; compiled
documents are stored under a content hash. Pipeline edits inside a
session are serialized through an optimistic version token: a PATCH must
quote the version it saw, and loses with 409 when someone else moved it.
"""

from __future__ import annotations

import hashlib
import json
import threading
import time
import uuid
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional

from fastapi import FastAPI, Request, Response
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from .dataset import Table, linearize_query, load_table
from .decomposer import FeedbackStore, decompose, record_feedback
from .document import build_document, canonical_json
from .compiler import compile_pipeline
from .errors import (
    DatamatorError,
    ExecutionError,
    InvalidCorrectionError,
    NoContinuousOrderError,
    QdmrScriptError,
    UnrecognizedQueryError,
)
from .qdmr import (
    Pipeline,
    QdmrOp,
    StepRef,
    op_refs,
    parse_pipeline,
    parse_statement,
    print_pipeline,
)


class InvalidEditError(DatamatorError):
    pass


class VersionConflictError(DatamatorError):
    def __init__(self, current: int):
        super().__init__(f"version token mismatch; current version is {current}")
        self.current = current


# --- pipeline edits -------------------------------------------------------------


def _shift_refs(op: QdmrOp, pivot: int, delta: int) -> QdmrOp:
    updates = {}
    for name, value in vars(op).items():
        if isinstance(value, StepRef) and value.index >= pivot:
            updates[name] = StepRef(value.index + delta)
    return replace(op, **updates) if updates else op


def _remap_refs(op: QdmrOp, mapping: dict[int, int]) -> QdmrOp:
    updates = {}
    for name, value in vars(op).items():
        if isinstance(value, StepRef):
            updates[name] = StepRef(mapping[value.index])
    return replace(op, **updates) if updates else op


def apply_edit(pipeline: Pipeline, edit: str, payload: dict) -> Pipeline:
    """Apply one editor operation; the result may need reordering (drags
    keep semantic links, so forward references can appear)."""
    steps = list(pipeline.steps)
    n = len(steps)

    if edit == "reorder":
        order = payload.get("order")
        if not isinstance(order, list) or sorted(order) != list(range(1, n + 1)):
            raise InvalidEditError(f"order must be a permutation of 1..{n}")
        mapping = {old: new for new, old in enumerate(order, start=1)}
        rearranged = tuple(_remap_refs(steps[old - 1], mapping) for old in order)
        return Pipeline(rearranged, provenance="user_edited")

    if edit == "modify_op":
        index = payload.get("index")
        text = payload.get("op", "")
        if not isinstance(index, int) or not 1 <= index <= n:
            raise InvalidEditError(f"index must be in 1..{n}")
        try:
            steps[index - 1] = parse_statement(text, index, line=1)
        except QdmrScriptError as exc:
            raise InvalidEditError(str(exc)) from exc
        return Pipeline(tuple(steps), provenance="user_edited")

    if edit == "insert_op":
        index = payload.get("index")
        text = payload.get("op", "")
        if not isinstance(index, int) or not 1 <= index <= n + 1:
            raise InvalidEditError(f"index must be in 1..{n + 1}")
        shifted = [
            _shift_refs(op, index, +1) if pos + 1 >= index else op
            for pos, op in enumerate(steps)
        ]
        try:
            new_op = parse_statement(text, index, line=1)
        except QdmrScriptError as exc:
            raise InvalidEditError(str(exc)) from exc
        shifted.insert(index - 1, new_op)
        return Pipeline(tuple(shifted), provenance="user_edited")

    if edit == "delete_op":
        index = payload.get("index")
        if not isinstance(index, int) or not 1 <= index <= n:
            raise InvalidEditError(f"index must be in 1..{n}")
        for pos, op in enumerate(steps, start=1):
            if pos != index and index in op_refs(op):
                raise InvalidEditError(
                    f"cannot delete step {index}: step {pos} references it"
                )
        remaining = [op for pos, op in enumerate(steps, start=1) if pos != index]
        remaining = [_shift_refs(op, index, -1) for op in remaining]
        if not remaining:
            raise InvalidEditError("cannot delete the last remaining step")
        return Pipeline(tuple(remaining), provenance="user_edited")

    raise InvalidEditError(f"unknown edit kind {edit!r}")


# --- state ----------------------------------------------------------------------


@dataclass
class DatasetEntry:
    id: str
    table: Table
    csv_text: str


@dataclass
class Session:
    id: str
    dataset_id: str
    version: int = 1
    query: str | None = None
    script: str | None = None
    decomposed_script: str | None = None  # grammar/ledger output, pre-edits
    decomposed_provenance: str = "decomposed"
    history: list[dict] = field(default_factory=list)


def _dataset_id(name: str, csv_text: str) -> str:
    digest = hashlib.sha256(f"{name}\n{csv_text}".encode("utf-8")).hexdigest()
    return f"ds-{digest[:12]}"


def _document_id(canonical: str) -> str:
    return f"dm-{hashlib.sha256(canonical.encode('utf-8')).hexdigest()[:16]}"


class ServiceState:
    """All mutable state behind the API, optionally mirrored to disk."""

    def __init__(
        self,
        data_dir: str | Path | None = None,
        *,
        now_ms: Callable[[], int] | None = None,
        id_factory: Callable[[], str] | None = None,
    ):
        self.data_dir = Path(data_dir) if data_dir else None
        self.now_ms = now_ms or (lambda: int(time.time() * 1000))
        self.id_factory = id_factory or (lambda: uuid.uuid4().hex[:12])
        self.datasets: dict[str, DatasetEntry] = {}
        self.sessions: dict[str, Session] = {}
        self.documents: dict[str, str] = {}
        self.lock = threading.Lock()
        ledger_path = self.data_dir / "ledger.jsonl" if self.data_dir else None
        self.ledger = FeedbackStore(ledger_path)
        if self.data_dir:
            self._load()

    # --- persistence ---

    def _load(self) -> None:
        datasets_dir = self.data_dir / "datasets"
        if datasets_dir.is_dir():
            for meta_path in sorted(datasets_dir.glob("*.json")):
                meta = json.loads(meta_path.read_text(encoding="utf-8"))
                csv_path = datasets_dir / f"{meta['id']}.csv"
                csv_text = csv_path.read_text(encoding="utf-8")
                table = load_table(csv_text, meta["name"])
                self.datasets[meta["id"]] = DatasetEntry(meta["id"], table, csv_text)
        docs_dir = self.data_dir / "documents"
        if docs_dir.is_dir():
            for path in sorted(docs_dir.glob("*.json")):
                self.documents[path.stem] = path.read_text(encoding="utf-8")
        sessions_dir = self.data_dir / "sessions"
        if sessions_dir.is_dir():
            for path in sorted(sessions_dir.glob("*.jsonl")):
                session = self._replay_session(path)
                if session is not None:
                    self.sessions[session.id] = session

    def _replay_session(self, path: Path) -> Session | None:
        events = [
            json.loads(line)
            for line in path.read_text(encoding="utf-8").splitlines()
            if line.strip()
        ]
        if not events:
            return None
        session: Session | None = None
        for event in events:
            session = self._apply_event(session, event)
        return session

    @staticmethod
    def _apply_event(session: Session | None, event: dict) -> Session:
        kind = event["event"]
        if kind == "created":
            return Session(
                id=event["session_id"],
                dataset_id=event["dataset_id"],
                history=[event],
            )
        assert session is not None, "session log must start with `created`"
        session.history.append(event)
        session.version = event["version"]
        if kind == "decompose":
            session.query = event["query"]
            session.script = event["script"]
            session.decomposed_script = event["script"]
            session.decomposed_provenance = event.get("provenance", "decomposed")
        elif kind in ("compile", "edit"):
            session.script = event["script"]
        return session

    def _persist_event(self, session: Session, event: dict) -> None:
        if not self.data_dir:
            return
        path = self.data_dir / "sessions" / f"{session.id}.jsonl"
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(event, sort_keys=True) + "\n")

    def _persist_dataset(self, entry: DatasetEntry) -> None:
        if not self.data_dir:
            return
        directory = self.data_dir / "datasets"
        directory.mkdir(parents=True, exist_ok=True)
        (directory / f"{entry.id}.csv").write_text(entry.csv_text, encoding="utf-8")
        meta = {"id": entry.id, "name": entry.table.name}
        (directory / f"{entry.id}.json").write_text(
            json.dumps(meta, sort_keys=True), encoding="utf-8"
        )

    def _persist_document(self, doc_id: str, canonical: str) -> None:
        if not self.data_dir:
            return
        directory = self.data_dir / "documents"
        directory.mkdir(parents=True, exist_ok=True)
        (directory / f"{doc_id}.json").write_text(canonical, encoding="utf-8")

    # --- operations ---

    def add_dataset(self, name: str, csv_text: str) -> DatasetEntry:
        table = load_table(csv_text, name)
        entry = DatasetEntry(_dataset_id(name, csv_text), table, csv_text)
        with self.lock:
            self.datasets[entry.id] = entry
            self._persist_dataset(entry)
        return entry

    def create_session(self, dataset_id: str) -> Session:
        if dataset_id not in self.datasets:
            raise KeyError(dataset_id)
        session = Session(id=f"s-{self.id_factory()}", dataset_id=dataset_id)
        event = {
            "event": "created",
            "session_id": session.id,
            "dataset_id": dataset_id,
            "version": 1,
        }
        session.history.append(event)
        with self.lock:
            self.sessions[session.id] = session
            self._persist_event(session, event)
        return session

    def table_for(self, session: Session) -> Table:
        return self.datasets[session.dataset_id].table

    def decompose_query(self, session: Session, query: str) -> str:
        table = self.table_for(session)
        pipeline = decompose(linearize_query(query, table), table, self.ledger)
        script = print_pipeline(pipeline)
        with self.lock:
            session.version += 1
            session.query = query
            session.script = script
            session.decomposed_script = script
            session.decomposed_provenance = pipeline.provenance
            event = {
                "event": "decompose",
                "query": query,
                "script": script,
                "provenance": pipeline.provenance,
                "version": session.version,
            }
            session.history.append(event)
            self._persist_event(session, event)
        return script

    def compile_script(self, session: Session, script: str) -> tuple[str, dict]:
        # scripts that are byte-for-byte what decomposition produced keep
        # its provenance; anything else arrived by hand
        if script == session.decomposed_script:
            provenance = session.decomposed_provenance
        else:
            provenance = "script"
        pipeline = parse_pipeline(script, provenance=provenance)
        return self._compile_pipeline(session, pipeline, event="compile")

    def _compile_pipeline(
        self, session: Session, pipeline: Pipeline, *, event: str, payload: dict | None = None
    ) -> tuple[str, dict]:
        table = self.table_for(session)
        compilation = compile_pipeline(pipeline, table)
        doc = build_document(
            compilation, table, query=session.query, now_ms=self.now_ms
        )
        canonical = canonical_json(doc)
        doc = json.loads(canonical)  # responses mirror the stored canonical form
        doc_id = _document_id(canonical)
        with self.lock:
            self.documents[doc_id] = canonical
            self._persist_document(doc_id, canonical)
            session.version += 1
            session.script = doc["pipeline"]
            entry = {
                "event": event,
                "script": doc["pipeline"],
                "version": session.version,
            }
            if payload is not None:
                entry["payload"] = payload
            session.history.append(entry)
            self._persist_event(session, entry)
        return doc_id, doc

    def edit_pipeline(
        self, session: Session, edit: str, payload: dict, version: int
    ) -> tuple[str, dict]:
        if version != session.version:
            raise VersionConflictError(session.version)
        if not session.script:
            raise InvalidEditError("session has no pipeline yet")
        pipeline = parse_pipeline(session.script, provenance="user_edited")
        edited = apply_edit(pipeline, edit, payload)
        return self._compile_pipeline(
            session, edited, event="edit", payload={"edit": edit, **payload}
        )

    def submit_feedback(
        self, session: Session, original_script: str | None, corrected_script: str
    ) -> None:
        if not session.query:
            raise InvalidCorrectionError(
                "session has no decomposed query to correct"
            )
        table = self.table_for(session)
        original = (
            parse_pipeline(original_script) if original_script else None
        )
        corrected = parse_pipeline(corrected_script)
        record_feedback(
            self.ledger,
            session.query,
            table,
            original,
            corrected,
            now_ms=self.now_ms,
        )


# --- HTTP API --------------------------------------------------------------------


def create_app(
    data_dir: str | Path | None = None,
    *,
    now_ms: Callable[[], int] | None = None,
    id_factory: Callable[[], str] | None = None,
    state: ServiceState | None = None,
) -> FastAPI:
    app = FastAPI(title="datamator", version="0.1.0")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    st = state or ServiceState(data_dir, now_ms=now_ms, id_factory=id_factory)
    app.state.engine = st

    def error_response(status: int, code: str, message: str, **extra):
        return JSONResponse(
            status_code=status,
            content={"error": {"code": code, "message": message, **extra}},
        )

    def get_session_or_none(session_id: str) -> Optional[Session]:
        return st.sessions.get(session_id)

    @app.post("/datasets")
    async def upload_dataset(request: Request, name: str = "dataset"):
        body = await request.body()
        try:
            text = body.decode("utf-8")
            entry = st.add_dataset(name, text)
        except (UnicodeDecodeError, DatamatorError) as exc:
            return error_response(400, "malformed_csv", str(exc))
        table = entry.table
        return {
            "dataset_id": entry.id,
            "schema": {
                "name": table.name,
                "columns": [
                    {"name": c.name, "kind": c.kind} for c in table.columns
                ],
                "row_count": len(table.rows),
            },
        }

    @app.get("/datasets/{dataset_id}")
    async def get_dataset(dataset_id: str):
        entry = st.datasets.get(dataset_id)
        if entry is None:
            return error_response(404, "not_found", f"no dataset {dataset_id}")
        table = entry.table
        return {
            "dataset_id": entry.id,
            "schema": {
                "name": table.name,
                "columns": [{"name": c.name, "kind": c.kind} for c in table.columns],
                "row_count": len(table.rows),
            },
            "rows": [list(row) for row in table.rows],
        }

    @app.post("/sessions")
    async def create_session(body: dict):
        dataset_id = body.get("dataset_id", "")
        try:
            session = st.create_session(dataset_id)
        except KeyError:
            return error_response(404, "not_found", f"no dataset {dataset_id}")
        return {"session_id": session.id, "version": session.version}

    @app.get("/sessions/{session_id}")
    async def get_session(session_id: str):
        session = get_session_or_none(session_id)
        if session is None:
            return error_response(404, "not_found", f"no session {session_id}")
        return {
            "session_id": session.id,
            "dataset_id": session.dataset_id,
            "version": session.version,
            "query": session.query,
            "script": session.script,
        }

    @app.post("/sessions/{session_id}/decompose")
    async def decompose_endpoint(session_id: str, body: dict):
        session = get_session_or_none(session_id)
        if session is None:
            return error_response(404, "not_found", f"no session {session_id}")
        query = body.get("query", "")
        if not query.strip():
            return error_response(422, "empty_query", "query must be non-empty")
        try:
            script = st.decompose_query(session, query)
        except UnrecognizedQueryError as exc:
            return error_response(422, "unrecognized_query", str(exc))
        return {"script": script, "version": session.version}

    @app.post("/sessions/{session_id}/compile")
    async def compile_endpoint(session_id: str, body: dict):
        session = get_session_or_none(session_id)
        if session is None:
            return error_response(404, "not_found", f"no session {session_id}")
        script = body.get("script") or session.script
        if not script:
            return error_response(422, "no_pipeline", "no script provided or stored")
        try:
            doc_id, doc = st.compile_script(session, script)
        except DatamatorError as exc:
            return _compile_error(exc)
        return {"id": doc_id, "version": session.version, "document": doc}

    def _compile_error(exc: DatamatorError):
        if isinstance(exc, QdmrScriptError):
            return error_response(
                422, "syntax_error", exc.reason, line=exc.line
            )
        if isinstance(exc, NoContinuousOrderError):
            return error_response(
                422,
                "no_continuous_order",
                str(exc),
                dependencies={
                    str(k): sorted(v) for k, v in exc.dependencies.items()
                },
            )
        if isinstance(exc, ExecutionError):
            return error_response(422, "execution_error", str(exc), step=exc.step)
        return error_response(422, "invalid_pipeline", str(exc))

    @app.patch("/sessions/{session_id}/pipeline")
    async def patch_pipeline(session_id: str, body: dict):
        session = get_session_or_none(session_id)
        if session is None:
            return error_response(404, "not_found", f"no session {session_id}")
        if "version" not in body:
            return error_response(409, "version_required", "send the version token")
        edit = body.get("edit", "")
        payload = body.get("payload", {})
        try:
            doc_id, doc = st.edit_pipeline(session, edit, payload, body["version"])
        except VersionConflictError as exc:
            return error_response(
                409, "version_conflict", str(exc), current_version=exc.current
            )
        except InvalidEditError as exc:
            return error_response(422, "invalid_edit", str(exc))
        except DatamatorError as exc:
            return _compile_error(exc)
        return {"id": doc_id, "version": session.version, "document": doc}

    @app.post("/sessions/{session_id}/feedback")
    async def feedback_endpoint(session_id: str, body: dict):
        session = get_session_or_none(session_id)
        if session is None:
            return error_response(404, "not_found", f"no session {session_id}")
        corrected = body.get("corrected", "")
        if not corrected.strip():
            return error_response(422, "invalid_correction", "corrected script required")
        try:
            st.submit_feedback(session, body.get("original"), corrected)
        except (InvalidCorrectionError, QdmrScriptError) as exc:
            return error_response(422, "invalid_correction", str(exc))
        return Response(status_code=204)

    @app.get("/datamations/{doc_id}")
    async def get_document(doc_id: str):
        canonical = st.documents.get(doc_id)
        if canonical is None:
            return error_response(404, "not_found", f"no datamation {doc_id}")
        return Response(content=canonical, media_type="application/json")

    return app
