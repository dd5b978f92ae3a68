"""HTTP application: login, user management, KB editing, consultations, cases.

The app is built by :func:`create_app` with all state captured per instance,
so tests can run several independent services against separate data
directories in one process. Live (not yet finished) sessions are held in
memory only; archived cases and every committed KB/user write survive a
process restart.
"""

from __future__ import annotations

import secrets
import threading
import uuid
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

from fastapi import Body, Depends, FastAPI, HTTPException, Query, Request
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from .. import engine
from ..dsl import ParseFailure, parse_kb, serialize_kb
from ..explain import NoFactError, how, render_explanation, why
from ..interchange import DecodeError, decode_interchange, encode_interchange, encode_value
from ..kb import KnowledgeBase, Severity, validate_kb
from . import codec
from .auth import ROLES, TokenRegistry, hash_password, verify_password
from .storage import Store, StorageError, UnknownKb, VersionConflict, check_id

_WRITER_ROLES = ("admin", "knowledge_engineer")


class _LiveSession:
    def __init__(
        self,
        session_id: str,
        session: engine.InferenceSession,
        kb_id: str,
        created_by: str,
        initial_facts: list[list[Any]],
    ):
        self.id = session_id
        self.session = session
        self.kb_id = kb_id
        self.created_by = created_by
        self.initial_facts = initial_facts
        self.answers: list[dict[str, Any]] = []
        self.lock = threading.Lock()
        self.archived_case: str | None = None


def _parse_error_diagnostics(exc: ParseFailure) -> list[dict[str, Any]]:
    return [
        {
            "severity": "error",
            "code": "parse-error",
            "message": e.message,
            "location": {
                "rulebase": None,
                "rule": None,
                "line": e.span.line,
                "column": e.span.column,
                "length": e.span.length,
            },
        }
        for e in exc.errors
    ]


def _diagnostics_response(status_code: int, diagnostics: list[dict[str, Any]], detail: str):
    return JSONResponse(
        status_code=status_code, content={"detail": detail, "diagnostics": diagnostics}
    )


def create_app(
    data_dir: str | Path,
    admin_password: str | None = None,
    static_dir: str | Path | None = None,
    token_ttl_seconds: float = 24 * 3600.0,
) -> FastAPI:
    """Build the service over a data directory, bootstrapping the first admin."""
    store = Store(data_dir)
    tokens = TokenRegistry(token_ttl_seconds)
    sessions: dict[str, _LiveSession] = {}
    sessions_lock = threading.Lock()

    users = store.load_users()
    if not users:
        password = admin_password
        generated = False
        if not password:
            password = secrets.token_urlsafe(12)
            generated = True
        salt, digest = hash_password(password)
        users = [
            {
                "id": uuid.uuid4().hex,
                "username": "admin",
                "salt": salt,
                "password_hash": digest,
                "role": "admin",
            }
        ]
        store.save_users(users)
        if generated:
            # printed once; unusable installs are worse than a visible bootstrap secret
            print(f"chainshell: generated initial admin password: {password}", flush=True)

    app = FastAPI(title="chainshell", version="0.1.0")

    # -- auth -----------------------------------------------------------------

    def _find_user(username: str) -> dict[str, Any] | None:
        for u in store.load_users():
            if u["username"] == username:
                return u
        return None

    def current_user(request: Request) -> dict[str, Any]:
        header = request.headers.get("authorization", "")
        if not header.lower().startswith("bearer "):
            raise HTTPException(status_code=401, detail="missing bearer token")
        username = tokens.lookup(header[7:].strip())
        if username is None:
            raise HTTPException(status_code=401, detail="invalid or expired token")
        user = _find_user(username)
        if user is None:
            raise HTTPException(status_code=401, detail="invalid or expired token")
        return user

    def require_role(*roles: str):
        def guard(user: dict[str, Any] = Depends(current_user)) -> dict[str, Any]:
            if user["role"] not in roles:
                raise HTTPException(status_code=403, detail="insufficient role")
            return user

        return guard

    any_role = require_role(*ROLES)
    writers = require_role(*_WRITER_ROLES)
    admin_only = require_role("admin")

    # -- login ------------------------------------------------------------------

    @app.post("/api/login")
    def login(payload: dict[str, Any] = Body(...)):
        username = payload.get("username")
        password = payload.get("password")
        if not isinstance(username, str) or not isinstance(password, str):
            raise HTTPException(status_code=422, detail="username and password are required")
        user = _find_user(username)
        # identical response for unknown user and wrong password
        if user is None or not verify_password(password, user["salt"], user["password_hash"]):
            raise HTTPException(status_code=401, detail="invalid credentials")
        info = tokens.issue(username)
        return {"token": info.token, "expires_at": info.expires_at, "role": user["role"]}

    # -- users --------------------------------------------------------------------

    @app.get("/api/users")
    def list_users(user: dict[str, Any] = Depends(admin_only)):
        return [
            {"id": u["id"], "username": u["username"], "role": u["role"]}
            for u in store.load_users()
        ]

    @app.post("/api/users", status_code=201)
    def create_user(payload: dict[str, Any] = Body(...), user: dict[str, Any] = Depends(admin_only)):
        username = payload.get("username")
        password = payload.get("password")
        role = payload.get("role")
        if not isinstance(username, str) or not isinstance(password, str):
            raise HTTPException(status_code=422, detail="username and password are required")
        if role not in ROLES:
            raise HTTPException(status_code=422, detail=f"role must be one of {', '.join(ROLES)}")
        try:
            check_id(username, "username")
        except StorageError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from None
        users = store.load_users()
        if any(u["username"] == username for u in users):
            raise HTTPException(status_code=409, detail="username already exists")
        salt, digest = hash_password(password)
        users.append(
            {
                "id": uuid.uuid4().hex,
                "username": username,
                "salt": salt,
                "password_hash": digest,
                "role": role,
            }
        )
        store.save_users(users)
        return {"username": username, "role": role}

    @app.delete("/api/users/{username}", status_code=204)
    def delete_user(username: str, user: dict[str, Any] = Depends(admin_only)):
        users = store.load_users()
        target = next((u for u in users if u["username"] == username), None)
        if target is None:
            raise HTTPException(status_code=404, detail="unknown user")
        admins = [u for u in users if u["role"] == "admin"]
        if target["role"] == "admin" and len(admins) <= 1:
            raise HTTPException(status_code=409, detail="cannot delete the last admin")
        store.save_users([u for u in users if u["username"] != username])
        tokens.revoke_user(username)

    # -- knowledge bases --------------------------------------------------------

    def _validated(kb: KnowledgeBase):
        diagnostics = validate_kb(kb)
        encoded = [codec.encode_diagnostic(d) for d in diagnostics]
        errors = [d for d in diagnostics if d.severity is Severity.ERROR]
        return encoded, errors

    def _store_new_version(
        kb_id: str,
        kb: KnowledgeBase,
        editor: str,
        expected_version: int | None,
    ):
        encoded, errors = _validated(kb)
        if errors:
            return None, _diagnostics_response(422, encoded, "knowledge base failed validation")
        try:
            version = store.store_kb_version(
                kb_id,
                kb,
                editor,
                datetime.now(timezone.utc).isoformat(),
                expected_version=expected_version,
            )
        except VersionConflict as exc:
            return None, JSONResponse(status_code=409, content={"detail": str(exc)})
        return {"id": kb_id, "version": version, "diagnostics": encoded}, None

    @app.get("/api/kbs")
    def list_kbs(user: dict[str, Any] = Depends(any_role)):
        return [
            {"id": info.id, "latest_version": info.latest_version, "versions": list(info.versions)}
            for info in store.list_kbs()
        ]

    @app.post("/api/kbs", status_code=201)
    def upload_kb(payload: dict[str, Any] = Body(...), user: dict[str, Any] = Depends(writers)):
        dsl = payload.get("dsl")
        doc = payload.get("kb")
        validate_only = payload.get("validate_only") is True
        if (dsl is None) == (doc is None):
            raise HTTPException(status_code=422, detail="provide exactly one of 'dsl' or 'kb'")
        if dsl is not None:
            if not isinstance(dsl, str):
                raise HTTPException(status_code=422, detail="'dsl' must be a string")
            try:
                kb = parse_kb(dsl)
            except ParseFailure as exc:
                if validate_only:
                    return JSONResponse(
                        status_code=200,
                        content={"valid": False, "diagnostics": _parse_error_diagnostics(exc)},
                    )
                return _diagnostics_response(
                    422, _parse_error_diagnostics(exc), "knowledge base failed to parse"
                )
        else:
            try:
                kb = decode_interchange(doc)
            except DecodeError as exc:
                return _diagnostics_response(
                    422,
                    [
                        {
                            "severity": "error",
                            "code": "decode-error",
                            "message": exc.message,
                            "location": {"path": exc.path},
                        }
                    ],
                    "knowledge base failed to decode",
                )
        if validate_only:
            encoded, errors = _validated(kb)
            return JSONResponse(
                status_code=200, content={"valid": not errors, "diagnostics": encoded}
            )
        kb_id = payload.get("id") or (kb.id if kb.id != "kb" else None)
        if kb_id is None:
            kb_id = kb.rulebases[0].id if kb.rulebases else "kb"
        if not isinstance(kb_id, str):
            raise HTTPException(status_code=422, detail="'id' must be a string")
        try:
            check_id(kb_id, "knowledge base id")
        except StorageError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from None
        body, error = _store_new_version(kb_id, kb, user["username"], payload.get("if_version"))
        if error is not None:
            return error
        return body

    @app.get("/api/kbs/{kb_id}")
    def get_kb(
        kb_id: str,
        version: int | None = Query(default=None),
        user: dict[str, Any] = Depends(any_role),
    ):
        try:
            info = store.kb_info(kb_id)
            kb = store.load_kb(kb_id, version)
        except (UnknownKb, StorageError):
            raise HTTPException(status_code=404, detail="unknown knowledge base") from None
        encoded, _ = _validated(kb)
        return {
            "id": kb_id,
            "version": kb.version,
            "latest_version": info.latest_version,
            "versions": list(info.versions),
            "dsl": serialize_kb(kb),
            "kb": encode_interchange(kb),
            "diagnostics": encoded,
        }

    @app.delete("/api/kbs/{kb_id}", status_code=204)
    def delete_kb(kb_id: str, user: dict[str, Any] = Depends(writers)):
        try:
            store.delete_kb(kb_id)
        except (UnknownKb, StorageError):
            raise HTTPException(status_code=404, detail="unknown knowledge base") from None

    # -- rule-level edits ----------------------------------------------------------

    def _load_latest(kb_id: str) -> KnowledgeBase:
        try:
            return store.load_kb(kb_id)
        except (UnknownKb, StorageError):
            raise HTTPException(status_code=404, detail="unknown knowledge base") from None

    def _parse_rule_snippet(dsl: str):
        try:
            wrapped = parse_kb(f"rulebase editbuf {{\n{dsl}\n}}")
        except ParseFailure as exc:
            # spans are offset by the one-line wrapper
            shifted = [
                replace(e, span=replace(e.span, line=max(1, e.span.line - 1))) for e in exc.errors
            ]
            raise ParseFailure(shifted) from None
        rb = wrapped.rulebases[0]
        if len(rb.rules) != 1 or rb.declarations:
            raise HTTPException(
                status_code=422, detail="the snippet must contain exactly one rule"
            )
        return rb.rules[0]

    def _with_rulebase_rules(kb: KnowledgeBase, rulebase_id: str, rules) -> KnowledgeBase:
        reindexed = tuple(replace(r, order_index=i) for i, r in enumerate(rules))
        rulebases = tuple(
            replace(rb, rules=reindexed) if rb.id == rulebase_id else rb for rb in kb.rulebases
        )
        return replace(kb, rulebases=rulebases)

    def _pick_rulebase(kb: KnowledgeBase, requested: str | None) -> str:
        if requested is None:
            if len(kb.rulebases) == 1:
                return kb.rulebases[0].id
            raise HTTPException(status_code=422, detail="'rulebase' is required for this KB")
        if not any(rb.id == requested for rb in kb.rulebases):
            raise HTTPException(status_code=404, detail=f"unknown rule base '{requested}'")
        return requested

    @app.post("/api/kbs/{kb_id}/rules", status_code=201)
    def add_rule(
        kb_id: str,
        payload: dict[str, Any] = Body(...),
        user: dict[str, Any] = Depends(writers),
    ):
        kb = _load_latest(kb_id)
        rb_id = _pick_rulebase(kb, payload.get("rulebase"))
        dsl = payload.get("dsl")
        if not isinstance(dsl, str):
            raise HTTPException(status_code=422, detail="'dsl' with one rule is required")
        try:
            rule = _parse_rule_snippet(dsl)
        except ParseFailure as exc:
            return _diagnostics_response(422, _parse_error_diagnostics(exc), "rule failed to parse")
        rb = kb.rulebase(rb_id)
        updated = _with_rulebase_rules(kb, rb_id, list(rb.rules) + [rule])
        body, error = _store_new_version(kb_id, updated, user["username"], payload.get("if_version"))
        if error is not None:
            return error
        return body

    @app.put("/api/kbs/{kb_id}/rules")
    def replace_rule(
        kb_id: str,
        payload: dict[str, Any] = Body(...),
        user: dict[str, Any] = Depends(writers),
    ):
        kb = _load_latest(kb_id)
        rb_id = _pick_rulebase(kb, payload.get("rulebase"))
        rule_id = payload.get("rule")
        dsl = payload.get("dsl")
        if not isinstance(rule_id, str) or not isinstance(dsl, str):
            raise HTTPException(status_code=422, detail="'rule' and 'dsl' are required")
        rb = kb.rulebase(rb_id)
        if not any(r.id == rule_id for r in rb.rules):
            raise HTTPException(status_code=404, detail=f"unknown rule '{rule_id}'")
        try:
            new_rule = _parse_rule_snippet(dsl)
        except ParseFailure as exc:
            return _diagnostics_response(422, _parse_error_diagnostics(exc), "rule failed to parse")
        rules = [new_rule if r.id == rule_id else r for r in rb.rules]
        updated = _with_rulebase_rules(kb, rb_id, rules)
        body, error = _store_new_version(kb_id, updated, user["username"], payload.get("if_version"))
        if error is not None:
            return error
        return body

    @app.delete("/api/kbs/{kb_id}/rules")
    def remove_rule(
        kb_id: str,
        rule: str,
        rulebase: str | None = Query(default=None),
        if_version: int | None = Query(default=None),
        user: dict[str, Any] = Depends(writers),
    ):
        kb = _load_latest(kb_id)
        rb_id = _pick_rulebase(kb, rulebase)
        rb = kb.rulebase(rb_id)
        if not any(r.id == rule for r in rb.rules):
            raise HTTPException(status_code=404, detail=f"unknown rule '{rule}'")
        rules = [r for r in rb.rules if r.id != rule]
        updated = _with_rulebase_rules(kb, rb_id, rules)
        body, error = _store_new_version(kb_id, updated, user["username"], if_version)
        if error is not None:
            return error
        return body

    # -- consultations ------------------------------------------------------------

    def _session_view(live: _LiveSession) -> dict[str, Any]:
        s = live.session
        outcome = codec.encode_outcome(s.outcome) if s.outcome is not None else None
        return {
            "id": live.id,
            "kb_id": live.kb_id,
            "kb_version": s.kb.version,
            "mode": s.mode.value,
            "goal": s.goal,
            "active_rulebase": s.active_rulebase,
            "status": s.status.value,
            "question": codec.encode_question(s),
            "answers": live.answers,
            "outcome": outcome,
            "archived_case": live.archived_case,
        }

    def _get_live(session_id: str) -> _LiveSession:
        live = sessions.get(session_id)
        if live is None:
            raise HTTPException(status_code=404, detail="unknown session")
        return live

    @app.post("/api/sessions", status_code=201)
    def create_session(payload: dict[str, Any] = Body(...), user: dict[str, Any] = Depends(any_role)):
        kb_id = payload.get("kb_id")
        if not isinstance(kb_id, str):
            raise HTTPException(status_code=422, detail="'kb_id' is required")
        version = payload.get("version")
        try:
            kb = store.load_kb(kb_id, version)
        except (UnknownKb, StorageError):
            raise HTTPException(status_code=404, detail="unknown knowledge base") from None
        mode_name = payload.get("mode")
        try:
            mode = engine.Mode(mode_name)
        except ValueError:
            raise HTTPException(
                status_code=422, detail="'mode' must be forward, backward or hybrid"
            ) from None
        goal = payload.get("goal")
        if goal is not None and not isinstance(goal, str):
            raise HTTPException(status_code=422, detail="'goal' must be a string")
        raw_facts = payload.get("initial_facts") or {}
        if not isinstance(raw_facts, dict):
            raise HTTPException(status_code=422, detail="'initial_facts' must be an object")
        try:
            initial = [(name, codec.decode_answer_value(doc)) for name, doc in raw_facts.items()]
        except DecodeError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from None
        try:
            session = engine.start_session(kb, mode, initial, goal)
        except (engine.InvalidFacts, engine.InvalidGoal) as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from None
        except engine.InvalidKnowledgeBase as exc:
            return _diagnostics_response(
                422,
                [codec.encode_diagnostic(d) for d in exc.diagnostics],
                "knowledge base failed validation",
            )
        live = _LiveSession(
            uuid.uuid4().hex,
            session,
            kb_id,
            user["username"],
            [[name, encode_value(value)] for name, value in initial],
        )
        with sessions_lock:
            sessions[live.id] = live
        return _session_view(live)

    @app.get("/api/sessions/{session_id}")
    def get_session(session_id: str, user: dict[str, Any] = Depends(any_role)):
        return _session_view(_get_live(session_id))

    @app.post("/api/sessions/{session_id}/answers")
    def post_answer(
        session_id: str,
        payload: dict[str, Any] = Body(...),
        user: dict[str, Any] = Depends(any_role),
    ):
        live = _get_live(session_id)
        if not live.lock.acquire(blocking=False):
            raise HTTPException(status_code=409, detail="another answer is being processed")
        try:
            if live.session.status is not engine.StatusKind.NEEDS_ANSWER:
                raise HTTPException(status_code=409, detail="session is not waiting for an answer")
            question = live.session.question
            assert question is not None
            if payload.get("unknown") is True:
                answer: engine.Answer = engine.UNKNOWN
                recorded: dict[str, Any] = {"variable": question.variable, "value": None}
            else:
                doc = payload.get("value")
                if doc is None:
                    raise HTTPException(
                        status_code=422, detail="provide 'value' or '\"unknown\": true'"
                    )
                try:
                    answer = codec.decode_answer_value(doc)
                except DecodeError as exc:
                    raise HTTPException(status_code=422, detail=str(exc)) from None
                recorded = {"variable": question.variable, "value": doc}
            try:
                live.session = engine.resume(live.session, answer)
            except engine.InvalidAnswer as exc:
                raise HTTPException(status_code=422, detail=str(exc)) from None
            live.answers.append(recorded)
            return _session_view(live)
        finally:
            live.lock.release()

    @app.get("/api/sessions/{session_id}/why")
    def get_why(session_id: str, user: dict[str, Any] = Depends(any_role)):
        live = _get_live(session_id)
        try:
            chain = why(live.session)
        except engine.InvalidState as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from None
        return {
            "question": chain.question,
            "entries": [
                {
                    "rule_id": e.rule_id,
                    "antecedent_index": e.antecedent_index,
                    "establishes": e.establishes,
                }
                for e in chain.entries
            ],
            "goal": chain.goal,
            "mode": chain.mode.value,
            "text": render_explanation(chain, live.session),
        }

    def _encode_proof(node) -> dict[str, Any]:
        return {
            "variable": node.fact.variable,
            "value": encode_value(node.fact.value),
            "justification": node.fact.provenance.kind.value,
            "rule_id": node.fact.provenance.rule_id,
            "children": [_encode_proof(c) for c in node.children],
        }

    @app.get("/api/sessions/{session_id}/how/{variable}")
    def get_how(session_id: str, variable: str, user: dict[str, Any] = Depends(any_role)):
        live = _get_live(session_id)
        try:
            tree = how(live.session, variable)
        except engine.InvalidState as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from None
        except NoFactError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from None
        return {
            "variable": variable,
            "tree": _encode_proof(tree),
            "text": render_explanation(tree),
        }

    @app.post("/api/sessions/{session_id}/archive", status_code=201)
    def archive_session(session_id: str, user: dict[str, Any] = Depends(any_role)):
        live = _get_live(session_id)
        with live.lock:
            s = live.session
            if s.status is not engine.StatusKind.DONE:
                raise HTTPException(status_code=409, detail="session is not finished")
            if live.archived_case is not None:
                raise HTTPException(status_code=409, detail="session is already archived")
            assert s.outcome is not None
            record = {
                "id": "case" + uuid.uuid4().hex,
                "kb_id": live.kb_id,
                "kb_version": s.kb.version,
                "mode": s.mode.value,
                "goal": s.goal,
                "initial_facts": live.initial_facts,
                "answers": live.answers,
                "outcome": codec.encode_outcome(s.outcome),
                "trace": [codec.encode_trace_event(e) for e in s.trace],
                "created_by": live.created_by,
                "timestamp": datetime.now(timezone.utc).isoformat(),
            }
            store.store_case(record)
            live.archived_case = record["id"]
            return record

    @app.get("/api/cases")
    def list_cases(user: dict[str, Any] = Depends(any_role)):
        return store.list_cases()

    if static_dir is not None and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")

    return app
