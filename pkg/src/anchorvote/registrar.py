"""Eligibility gate: one blind-signed token per voter, issuance journaled.

The registrar signs only blinded values, so the issuance log carries
nothing linkable to a ballot - no token serial, no ballot hash. Check,
mark, and sign happen under one lock; the journal makes restarts safe.
"""

import threading
import time
from dataclasses import dataclass

from anchorvote.canonical import append_journal, read_journal
from anchorvote.crypto import RsaKey, digest_from_hex, digest_hex, sha256
from anchorvote.crypto.rsa_blind import rsa_sign_blinded


class RegistrarError(Exception):
    code = "registrar"


class ParseError(RegistrarError):
    code = "parse_error"


class DuplicateVoterId(RegistrarError):
    code = "duplicate_voter_id"


class UnknownVoter(RegistrarError):
    code = "unknown_voter"


class BadCredential(RegistrarError):
    code = "bad_credential"


class AlreadyIssued(RegistrarError):
    code = "already_issued"


class RegistrarDown(RegistrarError):
    code = "registrar_down"


@dataclass
class VoterRecord:
    voter_id: str
    credential_hash: bytes
    token_issued: bool = False


@dataclass(frozen=True)
class IssuanceRecord:
    voter_id: str
    blinded_value: int
    issued_at: int

    def to_dict(self) -> dict:
        return {
            "voter_id": self.voter_id,
            "blinded_value": self.blinded_value,
            "issued_at": self.issued_at,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "IssuanceRecord":
        return cls(
            voter_id=data["voter_id"],
            blinded_value=data["blinded_value"],
            issued_at=data["issued_at"],
        )


def load_roster(path) -> dict:
    """Parse `voter_id,credential_hash_hex` lines into fresh voter records."""
    roster = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise ParseError(f"line {lineno}: expected voter_id,credential_hash")
            voter_id, cred_hex = parts[0].strip(), parts[1].strip()
            if not voter_id:
                raise ParseError(f"line {lineno}: empty voter_id")
            try:
                cred_hash = digest_from_hex(cred_hex)
            except ValueError as exc:
                raise ParseError(f"line {lineno}: {exc}") from exc
            if voter_id in roster:
                raise DuplicateVoterId(voter_id)
            roster[voter_id] = VoterRecord(voter_id, cred_hash)
    return roster


def save_roster(path, roster: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in roster.values():
            fh.write(f"{rec.voter_id},{digest_hex(rec.credential_hash)}\n")


class Registrar:
    """Serialized issuance over the roster; reads never block the writer."""

    def __init__(self, roster: dict, key: RsaKey, journal_path=None, clock=None):
        if key.d is None:
            raise ValueError("registrar needs the private signing key")
        self._roster = roster
        self._key = key
        self._journal_path = journal_path
        self._clock = clock or (lambda: int(time.time()))
        self._log: list[IssuanceRecord] = []
        self._lock = threading.Lock()

    @classmethod
    def open(cls, roster_path, key: RsaKey, journal_path, clock=None) -> "Registrar":
        """Load roster and replay the journal so a restart cannot re-issue."""
        reg = cls(load_roster(roster_path), key, journal_path, clock)
        try:
            records = read_journal(journal_path)
        except FileNotFoundError:
            records = []
        for data in records:
            rec = IssuanceRecord.from_dict(data)
            reg._log.append(rec)
            if rec.voter_id in reg._roster:
                reg._roster[rec.voter_id].token_issued = True
        return reg

    @property
    def public_key(self) -> RsaKey:
        return self._key.public()

    def roster_size(self) -> int:
        return len(self._roster)

    def issue_token(self, voter_id: str, credential: bytes, blinded_value: int) -> int:
        """Atomically check eligibility, mark the voter, sign the blinded
        value, and journal the event."""
        with self._lock:
            record = self._roster.get(voter_id)
            if record is None:
                raise UnknownVoter(voter_id)
            if sha256(credential) != record.credential_hash:
                raise BadCredential(voter_id)
            if record.token_issued:
                raise AlreadyIssued(voter_id)
            signature = rsa_sign_blinded(blinded_value % self._key.n, self._key)
            record.token_issued = True
            issuance = IssuanceRecord(
                voter_id=voter_id,
                blinded_value=blinded_value,
                issued_at=self._clock(),
            )
            self._log.append(issuance)
            if self._journal_path is not None:
                append_journal(self._journal_path, issuance.to_dict())
            return signature

    def export_issuance_log(self) -> list[IssuanceRecord]:
        return list(self._log)


def make_registrar_app(registrar: Registrar):
    """HTTP face for a standalone registrar process."""
    from fastapi import FastAPI, Request
    from fastapi.responses import JSONResponse

    app = FastAPI(title="anchorvote registrar")
    codes = {UnknownVoter: 404, BadCredential: 403, AlreadyIssued: 409}

    @app.post("/issue")
    async def issue(request: Request):
        body = await request.json()
        try:
            signature = registrar.issue_token(
                body["voter_id"],
                body["credential"].encode("utf-8"),
                body["blinded_value"],
            )
        except (UnknownVoter, BadCredential, AlreadyIssued) as exc:
            return JSONResponse(
                {"error": exc.code, "detail": str(exc)},
                status_code=codes[type(exc)],
            )
        except (KeyError, TypeError) as exc:
            return JSONResponse(
                {"error": "bad_request", "detail": str(exc)}, status_code=400
            )
        return {"blind_signature": signature}

    @app.get("/log")
    async def log():
        return [rec.to_dict() for rec in registrar.export_issuance_log()]

    return app


class RegistrarProxy:
    """Gateway-side client with the Registrar issue_token interface."""

    _codes = {404: UnknownVoter, 403: BadCredential, 409: AlreadyIssued}

    def __init__(self, base_url: str, timeout: float = 5.0):
        import httpx

        self._client = httpx.Client(base_url=base_url, timeout=timeout)

    def issue_token(self, voter_id: str, credential: bytes, blinded_value: int) -> int:
        import httpx

        try:
            resp = self._client.post(
                "/issue",
                json={
                    "voter_id": voter_id,
                    "credential": credential.decode("utf-8"),
                    "blinded_value": blinded_value,
                },
            )
        except httpx.HTTPError as exc:
            raise RegistrarDown(str(exc)) from exc
        if resp.status_code in self._codes:
            raise self._codes[resp.status_code](resp.json().get("detail", ""))
        if resp.status_code != 200:
            raise RegistrarDown(f"status {resp.status_code}")
        return resp.json()["blind_signature"]
