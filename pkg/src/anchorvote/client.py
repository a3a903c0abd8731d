"""Scriptable voter client: the full blind / cast / receipt / verify flow.

The client generates the token serial and blinding factor locally,
encrypts the choice with the election public key, and never transmits
voter identity together with anything ballot-linkable: check-in carries
(voter_id, credential, blinded value); casting carries the ballot alone.
"""

import random
import time
from dataclasses import dataclass

from anchorvote.config import ElectionConfig
from anchorvote.crypto import (
    MerkleProof,
    digest_from_hex,
    merkle_verify,
    random_blinding_factor,
    rsa_blind,
    rsa_unblind,
    rsa_verify,
)
from anchorvote.crypto.elgamal import eg_encrypt
from anchorvote.ledger import make_ballot_tx, token_message


class VerificationFailed(Exception):
    pass


class LocalGateway:
    """Directly drives an in-process ElectionService (tests, demo)."""

    def __init__(self, service):
        self.service = service

    def checkin(self, voter_id, credential, blinded_value):
        return self.service.checkin(voter_id, credential, blinded_value)

    def cast(self, tx_data):
        return self.service.cast(tx_data)

    def receipt(self, ballot_hash_hex):
        return self.service.receipt(ballot_hash_hex)

    def verify(self, ballot_hash_hex, proof, txid):
        return self.service.verify(ballot_hash_hex, proof, txid)

    def results(self):
        return self.service.results()

    def config(self):
        return self.service.config.to_dict()


class HttpGateway:
    """Talks to a running gateway over HTTP."""

    def __init__(self, base_url: str, timeout: float = 10.0):
        import httpx

        self._client = httpx.Client(base_url=base_url, timeout=timeout)

    def _check(self, resp):
        data = resp.json()
        if resp.status_code >= 400:
            raise RuntimeError(f"{resp.status_code}: {data}")
        return data

    def checkin(self, voter_id, credential, blinded_value):
        return self._check(
            self._client.post(
                "/api/checkin",
                json={
                    "voter_id": voter_id,
                    "credential": credential,
                    "blinded_value": blinded_value,
                },
            )
        )

    def cast(self, tx_data):
        return self._check(self._client.post("/api/vote", json=tx_data))

    def receipt(self, ballot_hash_hex):
        return self._check(self._client.get(f"/api/receipt/{ballot_hash_hex}"))

    def verify(self, ballot_hash_hex, proof, txid):
        return self._check(
            self._client.post(
                "/api/verify",
                json={
                    "ballot_hash": ballot_hash_hex,
                    "merkle_proof": proof,
                    "anchor_txid": txid,
                },
            )
        )

    def results(self):
        return self._check(self._client.get("/api/results"))

    def config(self):
        return self._check(self._client.get("/api/config"))


@dataclass
class VoteOutcome:
    ballot_hash: str
    token_serial: str
    receipt: dict | None = None
    verified: bool = False


class VoterClient:
    def __init__(self, gateway, config: ElectionConfig | None = None, rng=None):
        self.gateway = gateway
        self.config = config or ElectionConfig.from_dict(gateway.config())
        self.rng = rng or random.SystemRandom()

    def obtain_token(self, voter_id: str, credential: str) -> tuple:
        """Blind-signed token: (serial bytes, signature int). The registrar
        sees only the blinded value."""
        serial = self.rng.randbytes(32)
        key = self.config.registrar_key
        msg = token_message(self.config.election_id, serial)
        r = random_blinding_factor(key, self.rng)
        blinded = rsa_blind(msg, key, r)
        resp = self.gateway.checkin(voter_id, credential, blinded)
        signature = rsa_unblind(resp["blind_signature"], r, key)
        if not rsa_verify(msg, signature, key):
            raise VerificationFailed("unblinded token signature invalid")
        return serial, signature

    def build_ballot(self, candidate: str, serial: bytes, signature: int) -> dict:
        index = self.config.candidates.index(candidate)
        k = self.rng.randrange(1, self.config.group.q)
        ct = eg_encrypt(
            self.config.group,
            self.config.election_pubkey,
            index,
            k,
            candidate_count=self.config.candidate_count,
        )
        tx = make_ballot_tx(
            election_id=self.config.election_id,
            ciphertext=ct,
            token_serial=serial,
            token_sig=signature,
            candidate=candidate if self.config.mode == "demo" else None,
        )
        return tx.to_dict()

    def cast_ballot(self, tx_data: dict) -> str:
        resp = self.gateway.cast(tx_data)
        if resp["ballot_hash"] != tx_data["ballot_hash"]:
            raise VerificationFailed(
                "server recomputed a different ballot hash"
            )
        return resp["ballot_hash"]

    def fetch_receipt(self, ballot_hash: str) -> dict:
        return self.gateway.receipt(ballot_hash)

    def verify_receipt(self, receipt: dict) -> bool:
        """Client-side Merkle verification plus the gateway's verdict;
        both must agree."""
        if receipt["status"] != "anchored":
            return False
        leaf = digest_from_hex(receipt["ballot_hash"])
        proof = MerkleProof.from_dict(receipt["merkle_proof"])
        root = digest_from_hex(receipt["anchor_root"])
        local = merkle_verify(leaf, proof, root)
        remote = self.gateway.verify(
            receipt["ballot_hash"], receipt["merkle_proof"], receipt["anchor_txid"]
        )["valid"]
        if local != remote:
            raise VerificationFailed("client and server verdicts disagree")
        return local

    def vote(
        self,
        voter_id: str,
        credential: str,
        candidate: str,
        wait_receipt: bool = False,
        poll_seconds: float = 0.5,
        attempts: int = 60,
    ) -> VoteOutcome:
        serial, signature = self.obtain_token(voter_id, credential)
        tx_data = self.build_ballot(candidate, serial, signature)
        ballot_hash = self.cast_ballot(tx_data)
        outcome = VoteOutcome(ballot_hash=ballot_hash, token_serial=serial.hex())
        if wait_receipt:
            for _ in range(attempts):
                receipt = self.fetch_receipt(ballot_hash)
                if receipt["status"] == "anchored":
                    outcome.receipt = receipt
                    outcome.verified = self.verify_receipt(receipt)
                    break
                time.sleep(poll_seconds)
        return outcome
