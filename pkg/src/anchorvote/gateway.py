"""Voter- and auditor-facing HTTP service.

A thin mapping from the election service onto fixed endpoint paths; all
bodies are the same canonical text used for persistence. The gateway is
stateless above the underlying stores: restarting it never changes a
verification outcome. Responses never pair voter_id with ballot data -
check-in answers carry only the blind signature.
"""

from anchorvote.canonical import canon_dumps
from anchorvote.crypto import InsufficientShares
from anchorvote.election import ElectionClosed, ElectionService, UnknownBallot
from anchorvote.ledger import (
    DoubleVote,
    HashMismatch,
    InvalidToken,
    MalformedCiphertext,
    RangeOutOfBounds,
    WrongElection,
)
from anchorvote.pubchain import UnknownTxid
from anchorvote.registrar import (
    AlreadyIssued,
    BadCredential,
    RegistrarDown,
    UnknownVoter,
)
from anchorvote.tally import (
    AlreadyClosed,
    DuplicateSubmission,
    ElectionOpen,
    InsufficientTrustees,
    MissingPartials,
    UnknownTrustee,
)

STATUS_FOR = {
    UnknownVoter: 404,
    BadCredential: 403,
    AlreadyIssued: 409,
    RegistrarDown: 503,
    DoubleVote: 409,
    InvalidToken: 400,
    MalformedCiphertext: 400,
    HashMismatch: 400,
    WrongElection: 400,
    ElectionClosed: 410,
    UnknownBallot: 404,
    RangeOutOfBounds: 416,
    UnknownTxid: 404,
    ElectionOpen: 409,
    AlreadyClosed: 409,
    UnknownTrustee: 404,
    DuplicateSubmission: 409,
    InsufficientTrustees: 409,
    MissingPartials: 409,
}


def error_body(exc: Exception) -> dict:
    return {"error": getattr(exc, "code", "error"), "detail": str(exc)}


def make_gateway_app(service: ElectionService, static_dir=None):
    from fastapi import FastAPI, Request
    from fastapi.responses import Response

    app = FastAPI(title="anchorvote gateway")

    def canon_response(data, status_code: int = 200) -> Response:
        return Response(
            content=canon_dumps(data) + "\n",
            status_code=status_code,
            media_type="application/json",
        )

    def run(fn, *args):
        try:
            return canon_response(fn(*args))
        except tuple(STATUS_FOR) as exc:
            return canon_response(error_body(exc), STATUS_FOR[type(exc)])
        except (KeyError, TypeError, ValueError) as exc:
            return canon_response(
                {"error": "bad_request", "detail": str(exc)}, 400
            )

    @app.post("/api/checkin")
    async def checkin(request: Request):
        body = await request.json()
        return run(
            service.checkin,
            body["voter_id"],
            body["credential"],
            body["blinded_value"],
        )

    @app.post("/api/vote")
    async def vote(request: Request):
        body = await request.json()
        return run(service.cast, body)

    @app.get("/api/receipt/{ballot_hash}")
    async def receipt(ballot_hash: str):
        return run(service.receipt, ballot_hash)

    @app.get("/api/results")
    async def results():
        return run(service.results)

    @app.get("/api/chain")
    async def chain(start: int = 0, end: int | None = None):
        last = end if end is not None else service.chain.height
        return run(service.chain_rows, start, last)

    @app.get("/api/anchors")
    async def anchors():
        return run(service.anchor_records)

    @app.post("/api/verify")
    async def verify(request: Request):
        body = await request.json()
        return run(
            service.verify,
            body["ballot_hash"],
            body["merkle_proof"],
            body["anchor_txid"],
        )

    @app.post("/api/tally/partial")
    async def tally_partial(request: Request):
        body = await request.json()
        return run(service.submit_partials, body["trustee_id"], body["partials"])

    @app.get("/api/config")
    async def config():
        return run(service.config.to_dict)

    @app.get("/api/ballots")
    async def ballots():
        return run(service.frozen_ballots)

    @app.post("/api/close")
    async def close():
        return run(service.close)

    @app.post("/api/tally/combine")
    async def combine():
        return run(lambda: service.combine().to_dict())

    if static_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=static_dir, html=True), name="webui")

    return app
