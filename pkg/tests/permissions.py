"""The documented (role x endpoint) permission table, shared by test modules.

The same table appears in the README; the exhaustive tests assert the service
matches it with zero deviations.
"""

from __future__ import annotations

ALL_ROLES = {"admin", "knowledge_engineer", "practitioner"}
WRITERS = {"admin", "knowledge_engineer"}
ADMIN_ONLY = {"admin"}

# (method, path, body marker, allowed roles); body markers are expanded by
# build_body; None means the request carries no JSON body.
MATRIX = [
    ("GET", "/api/users", None, ADMIN_ONLY),
    ("POST", "/api/users", {"username": "nxx", "password": "p", "role": "practitioner"}, ADMIN_ONLY),
    ("DELETE", "/api/users/takenname", None, ADMIN_ONLY),
    ("GET", "/api/kbs", None, ALL_ROLES),
    ("POST", "/api/kbs", "UPLOAD", WRITERS),
    ("GET", "/api/kbs/chest", None, ALL_ROLES),
    ("DELETE", "/api/kbs/chest", None, WRITERS),
    ("POST", "/api/kbs/chest/rules", "RULEADD", WRITERS),
    ("PUT", "/api/kbs/chest/rules", "RULEPUT", WRITERS),
    ("DELETE", "/api/kbs/chest/rules?rule=R9", None, WRITERS),
    ("POST", "/api/sessions", "SESSION", ALL_ROLES),
    ("GET", "/api/sessions/missing", None, ALL_ROLES),
    ("POST", "/api/sessions/missing/answers", {"unknown": True}, ALL_ROLES),
    ("GET", "/api/sessions/missing/why", None, ALL_ROLES),
    ("GET", "/api/sessions/missing/how/x", None, ALL_ROLES),
    ("POST", "/api/sessions/missing/archive", None, ALL_ROLES),
    ("GET", "/api/cases", None, ALL_ROLES),
]


def build_body(marker, demo_text: str):
    if marker == "UPLOAD":
        return {"id": "permkb", "dsl": demo_text}
    if marker == "RULEADD":
        return {"dsl": "rule R8: if sputum = clear then diagnosis := asthma_flare"}
    if marker == "RULEPUT":
        return {
            "rule": "R1",
            "dsl": "rule R1: if fever = true and cough = true then suspicion := respiratory_infection",
        }
    if marker == "SESSION":
        return {"kb_id": "chest", "mode": "backward", "goal": "diagnosis"}
    return marker


def check_matrix(client, tokens: dict, demo_text: str) -> tuple[int, list]:
    """Probe every (endpoint, role) pair; returns (probes, deviations)."""
    checked = 0
    deviations = []
    for method, path, body, allowed in MATRIX:
        for role, headers in tokens.items():
            json_body = build_body(body, demo_text) if body is not None else None
            r = client.request(method, path, json=json_body, headers=headers)
            if role is None:
                ok = r.status_code == 401
            elif role in allowed:
                ok = r.status_code not in (401, 403)
            else:
                ok = r.status_code == 403
            if not ok:
                deviations.append((method, path, role, r.status_code))
            checked += 1
    return checked, deviations
