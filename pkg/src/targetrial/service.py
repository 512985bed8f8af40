"""HTTP interface for conducting live trials (thin wrapper over sessions).

Versioned under ``/v1``.  All statistics are computed by the session engine;
the service only translates between JSON bodies and session calls, so a
scripted sequence of outcomes posted here finalises to exactly the same
(best, second, pi) as the library path.  Sessions persist through the event
log and survive restarts.

Set ``TARGETRIAL_TOKEN`` to require ``Authorization: Bearer <token>`` on every
request; unset means open access (development default).
"""

from __future__ import annotations

import os

from fastapi import Depends, FastAPI, HTTPException, Request
from pydantic import BaseModel, Field

from .policies import PolicySpec
from .sessions import (LiveSession, NotReadyError, SessionConfig, SessionError,
                       SessionStore, UnknownArmError)


class PolicyBody(BaseModel):
    kind: str = "we_sym"
    p: float = 2.0
    kappa: float = 1.0
    a: float = 1.0
    b: float = 1.0
    draws: int = 1000
    mode: str = "argmax"


class CreateSessionBody(BaseModel):
    n_arms: int = Field(ge=2)
    n_patients: int = Field(ge=2)
    burn_in: int = Field(default=1, ge=1)
    targets: list[float]
    sigmas: list[float] | None = None
    policy: PolicyBody = PolicyBody()
    seed: int = 0
    free_entry: bool = False


class OutcomeBody(BaseModel):
    arm: int
    value: float
    patient_index: int | None = Field(
        default=None, description="1-based index; rejects duplicates when given")


class FinalizeBody(BaseModel):
    eta: float = Field(gt=0.0, lt=1.0)
    force: bool = False


def _policy_from_body(body: PolicyBody, burn_in: int) -> PolicySpec:
    kind = body.kind
    if kind in ("sgi", "tgi"):
        raise HTTPException(status_code=422,
                            detail="Gittins-index policies are not available over the service")
    try:
        return PolicySpec(kind=kind, burn_in=burn_in, p=body.p, kappa=body.kappa,
                          a=body.a, b=body.b, draws=body.draws, mode=body.mode)
    except ValueError as exc:
        raise HTTPException(status_code=422, detail=str(exc))


def _session_resource(session: LiveSession) -> dict:
    phase = session.phase
    if phase == "full":
        phase = "adaptive"
    gains = None
    if session.final is None and session.phase != "full":
        try:
            _, gains = session.recommendation()
        except SessionError:
            gains = None
    arms = []
    for j, a in enumerate(session.arm_states()):
        arms.append({
            "arm": j, "n": a.count,
            "mean": a.mean if a.count else None,
            "gain": None if gains is None else gains[j],
        })
    return {
        "id": session.session_id,
        "created_at": session.created_ts,
        "config": session.config.to_json(),
        "phase": phase,
        "patients_recorded": len(session.outcomes),
        "timeline": [{"patient": i + 1, "arm": arm, "value": value}
                     for i, (arm, value) in enumerate(session.outcomes)],
        "arms": arms,
        "final": None if session.final is None else {
            "best": session.final.best, "second": session.final.second,
            "pi": session.final.pi, "reject": session.final.reject,
            "eta": session.final.eta,
        },
    }


def create_app(log_path: str = "sessions.jsonl") -> FastAPI:
    store = SessionStore(log_path)
    app = FastAPI(title="targetrial conduct service", version="1.0",
                  description="Live conduct of response-adaptive target trials: "
                              "create a session, follow per-patient arm "
                              "recommendations, post outcomes, finalise with the "
                              "best-vs-second-best superiority test.")
    token = os.environ.get("TARGETRIAL_TOKEN")

    async def authorized(request: Request):
        if token and request.headers.get("authorization") != f"Bearer {token}":
            raise HTTPException(status_code=401, detail="missing or invalid token")

    def get_session(session_id: str) -> LiveSession:
        try:
            return store.get(session_id)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown session {session_id}")

    @app.post("/v1/sessions", status_code=201, dependencies=[Depends(authorized)])
    def create_session(body: CreateSessionBody):
        policy = _policy_from_body(body.policy, body.burn_in)
        try:
            config = SessionConfig(
                n_arms=body.n_arms, n_patients=body.n_patients, policy=policy,
                targets=tuple(body.targets),
                sigmas=None if body.sigmas is None else tuple(body.sigmas),
                seed=body.seed, free_entry=body.free_entry)
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        session = store.create(config)
        return {"id": session.session_id}

    @app.get("/v1/sessions/{session_id}", dependencies=[Depends(authorized)])
    def get_state(session_id: str):
        return _session_resource(get_session(session_id))

    @app.get("/v1/sessions/{session_id}/recommendation", dependencies=[Depends(authorized)])
    def get_recommendation(session_id: str):
        session = get_session(session_id)
        try:
            arm, gains = session.recommendation()
        except SessionError as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        return {"patient": session.next_patient, "arm": arm, "gains": gains,
                "phase": "burn_in" if session.phase == "burn_in" else "adaptive"}

    @app.post("/v1/sessions/{session_id}/outcomes", dependencies=[Depends(authorized)])
    def post_outcome(session_id: str, body: OutcomeBody):
        session = get_session(session_id)
        if body.patient_index is not None and body.patient_index != session.next_patient:
            raise HTTPException(
                status_code=409,
                detail=f"patient index {body.patient_index} already recorded or out of "
                       f"order; next expected is {session.next_patient}")
        try:
            store.record(session_id, body.arm, body.value)
        except UnknownArmError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        except SessionError as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        return _session_resource(session)

    @app.post("/v1/sessions/{session_id}/finalize", dependencies=[Depends(authorized)])
    def finalize(session_id: str, body: FinalizeBody):
        session = get_session(session_id)
        try:
            result = store.finalize(session_id, body.eta, force=body.force)
        except NotReadyError as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        except SessionError as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        return {"best": result.best, "second": result.second,
                "pi": result.pi, "reject": result.reject, "eta": result.eta}

    return app
