"""HTTP surface: endpoint codes, bodies, and privacy discipline."""

import json
import random

import pytest
from fastapi.testclient import TestClient

import helpers
from anchorvote.client import VoterClient
from anchorvote.crypto import digest_hex
from anchorvote.gateway import make_gateway_app


class HttpTestGateway:
    """VoterClient transport over the FastAPI test client, recording every
    response body for the privacy scan."""

    def __init__(self, http):
        self.http = http
        self.bodies = []

    def _check(self, resp):
        self.bodies.append(resp.text)
        if resp.status_code >= 400:
            raise RuntimeError(f"{resp.status_code}: {resp.text}")
        return json.loads(resp.text)

    def checkin(self, voter_id, credential, blinded_value):
        return self._check(
            self.http.post(
                "/api/checkin",
                json={
                    "voter_id": voter_id,
                    "credential": credential,
                    "blinded_value": blinded_value,
                },
            )
        )

    def cast(self, tx_data):
        return self._check(self.http.post("/api/vote", json=tx_data))

    def receipt(self, ballot_hash):
        return self._check(self.http.get(f"/api/receipt/{ballot_hash}"))

    def verify(self, ballot_hash, proof, txid):
        return self._check(
            self.http.post(
                "/api/verify",
                json={
                    "ballot_hash": ballot_hash,
                    "merkle_proof": proof,
                    "anchor_txid": txid,
                },
            )
        )

    def results(self):
        return self._check(self.http.get("/api/results"))

    def config(self):
        return self._check(self.http.get("/api/config"))


@pytest.fixture
def stack():
    clock = helpers.FakeClock()
    service, creds, shares, _ = helpers.make_service(
        n_voters=10, anchor_blocks=2, max_txs_per_block=2, clock=clock
    )
    http = TestClient(make_gateway_app(service))
    gw = HttpTestGateway(http)
    client = VoterClient(gw, rng=random.Random(17))
    return service, creds, shares, http, gw, client


class TestCheckin:
    def test_valid_then_repeat(self, stack):
        _, creds, _, http, _, _ = stack
        body = {"voter_id": "voter-000", "credential": creds["voter-000"], "blinded_value": 1234}
        first = http.post("/api/checkin", json=body)
        assert first.status_code == 200
        assert set(json.loads(first.text)) == {"blind_signature"}
        again = http.post("/api/checkin", json=body)
        assert again.status_code == 409
        assert json.loads(again.text)["error"] == "already_issued"

    def test_unknown_voter(self, stack):
        _, _, _, http, _, _ = stack
        resp = http.post(
            "/api/checkin",
            json={"voter_id": "nobody", "credential": "x", "blinded_value": 1},
        )
        assert resp.status_code == 404

    def test_bad_credential(self, stack):
        _, _, _, http, _, _ = stack
        resp = http.post(
            "/api/checkin",
            json={"voter_id": "voter-001", "credential": "wrong", "blinded_value": 1},
        )
        assert resp.status_code == 403


class TestCasting:
    def test_happy_path_and_replay(self, stack):
        service, creds, _, http, _, client = stack
        serial, sig = client.obtain_token("voter-002", creds["voter-002"])
        tx = client.build_ballot("alice", serial, sig)
        resp = http.post("/api/vote", json=tx)
        assert resp.status_code == 200
        assert json.loads(resp.text)["ballot_hash"] == tx["ballot_hash"]
        replay = client.build_ballot("bob", serial, sig)
        resp = http.post("/api/vote", json=replay)
        assert resp.status_code == 409
        assert json.loads(resp.text)["error"] == "double_vote"

    def test_mutated_token(self, stack):
        _, creds, _, http, _, client = stack
        serial, sig = client.obtain_token("voter-003", creds["voter-003"])
        tx = client.build_ballot("alice", serial, sig + 1)
        resp = http.post("/api/vote", json=tx)
        assert resp.status_code == 400
        assert json.loads(resp.text)["error"] == "invalid_token"

    def test_malformed_body(self, stack):
        _, _, _, http, _, _ = stack
        resp = http.post("/api/vote", json={"election_id": "x"})
        assert resp.status_code == 400

    def test_cast_after_close(self, stack):
        service, creds, _, http, _, client = stack
        serial, sig = client.obtain_token("voter-004", creds["voter-004"])
        tx = client.build_ballot("carol", serial, sig)
        assert http.post("/api/close").status_code == 200
        resp = http.post("/api/vote", json=tx)
        assert resp.status_code == 410


class TestReceiptsAndVerify:
    def test_end_to_end_receipt(self, stack):
        service, creds, _, http, _, client = stack
        outcome = client.vote("voter-005", creds["voter-005"], "bob")
        http.post("/api/close")
        receipt = json.loads(http.get(f"/api/receipt/{outcome.ballot_hash}").text)
        assert receipt["status"] == "anchored"
        verdict = json.loads(
            http.post(
                "/api/verify",
                json={
                    "ballot_hash": receipt["ballot_hash"],
                    "merkle_proof": receipt["merkle_proof"],
                    "anchor_txid": receipt["anchor_txid"],
                },
            ).text
        )
        assert verdict == {"valid": True, "detail": "ok"}

    def test_receipt_unknown(self, stack):
        _, _, _, http, _, _ = stack
        assert http.get(f"/api/receipt/{'ab' * 32}").status_code == 404

    def test_verify_mutated_proof(self, stack):
        service, creds, _, http, _, client = stack
        outcome = client.vote("voter-006", creds["voter-006"], "alice")
        http.post("/api/close")
        receipt = json.loads(http.get(f"/api/receipt/{outcome.ballot_hash}").text)
        proof = receipt["merkle_proof"]
        if proof["path"]:
            sib, side = proof["path"][0]
            flipped = ("0" if sib[0] != "0" else "1") + sib[1:]
            proof["path"][0] = [flipped, side]
            verdict = json.loads(
                http.post(
                    "/api/verify",
                    json={
                        "ballot_hash": receipt["ballot_hash"],
                        "merkle_proof": proof,
                        "anchor_txid": receipt["anchor_txid"],
                    },
                ).text
            )
            assert verdict["valid"] is False
            assert verdict["detail"] == "root mismatch"

    def test_verify_unknown_txid(self, stack):
        _, _, _, http, _, _ = stack
        resp = http.post(
            "/api/verify",
            json={
                "ballot_hash": "ab" * 32,
                "merkle_proof": {"leaf_index": 0, "path": []},
                "anchor_txid": "00" * 32,
            },
        )
        assert resp.status_code == 404

    def test_cross_election_anchor(self, stack):
        service, creds, _, http, _, client = stack
        outcome = client.vote("voter-007", creds["voter-007"], "carol")
        http.post("/api/close")
        receipt = json.loads(http.get(f"/api/receipt/{outcome.ballot_hash}").text)
        # Plant a foreign-election payload on the same public chain.
        foreign = service.adapter.submit(
            b'{"anchor_seq":1,"batch_root":"' + b"ab" * 32 + b'","election_id":"other","first_block":1,"last_block":1}'
        )
        verdict = json.loads(
            http.post(
                "/api/verify",
                json={
                    "ballot_hash": receipt["ballot_hash"],
                    "merkle_proof": receipt["merkle_proof"],
                    "anchor_txid": foreign,
                },
            ).text
        )
        assert verdict["valid"] is False
        assert "election_id" in verdict["detail"]


class TestExplorerAndResults:
    def test_fresh_election_single_genesis_row(self, stack):
        _, _, _, http, _, _ = stack
        rows = json.loads(http.get("/api/chain").text)
        assert len(rows) == 1
        assert rows[0]["index"] == 0
        assert rows[0]["prev_hash"] == "0" * 64

    def test_row_continuity(self, stack):
        service, creds, _, http, _, client = stack
        for i in range(4):
            vid = f"voter-{i:03d}"
            client.vote(vid, creds[vid], "alice")
        rows = json.loads(http.get("/api/chain").text)
        for prev, row in zip(rows, rows[1:]):
            assert row["prev_hash"] == prev["hash"]

    def test_range_out_of_bounds(self, stack):
        _, _, _, http, _, _ = stack
        assert http.get("/api/chain?start=0&end=99").status_code == 416

    def test_results_sealed_then_final(self, stack):
        service, creds, shares, http, _, client = stack
        client.vote("voter-008", creds["voter-008"], "bob")
        res = json.loads(http.get("/api/results").text)
        assert res["status"] == "sealed"
        assert "counts" not in res
        helpers.run_tally(service, shares)
        res = json.loads(http.get("/api/results").text)
        assert res["status"] == "final"
        assert res["counts"]["bob"] == 1

    def test_anchors_listing(self, stack):
        service, creds, _, http, _, client = stack
        client.vote("voter-009", creds["voter-009"], "alice")
        http.post("/api/close")
        anchors = json.loads(http.get("/api/anchors").text)
        assert len(anchors) >= 1
        assert anchors[0]["anchor_seq"] == 1
        assert anchors[0]["first_block"] == 1


class TestTallyEndpoints:
    def test_partial_flow_over_http(self, stack):
        service, creds, shares, http, _, client = stack
        client.vote("voter-000", creds["voter-000"], "carol")
        early = http.post(
            "/api/tally/partial", json={"trustee_id": "t1", "partials": []}
        )
        assert early.status_code == 409  # election still open
        http.post("/api/close")
        for ts in shares[:3]:
            payload = service.trustee_partials_payload(ts.share)
            resp = http.post(
                "/api/tally/partial",
                json={"trustee_id": ts.trustee_id, "partials": payload},
            )
            assert resp.status_code == 200
        dup = http.post(
            "/api/tally/partial",
            json={
                "trustee_id": shares[0].trustee_id,
                "partials": service.trustee_partials_payload(shares[0].share),
            },
        )
        assert dup.status_code == 409
        unknown = http.post(
            "/api/tally/partial", json={"trustee_id": "intruder", "partials": []}
        )
        assert unknown.status_code == 404
        combined = http.post("/api/tally/combine")
        assert combined.status_code == 200
        body = json.loads(combined.text)
        assert body["counts"]["carol"] == 1
        assert body["crosscheck_passed"] is True

    def test_combine_without_quorum(self, stack):
        service, creds, shares, http, _, client = stack
        http.post("/api/close")
        resp = http.post("/api/tally/combine")
        assert resp.status_code == 409


class TestPrivacySurface:
    def test_no_response_pairs_voter_id_with_ballot_data(self, stack):
        service, creds, shares, http, gw, client = stack
        outcomes = []
        for i in range(6):
            vid = f"voter-{i:03d}"
            outcomes.append(client.vote(vid, creds[vid], "alice"))
        http.post("/api/close")
        for o in outcomes:
            gw._check(http.get(f"/api/receipt/{o.ballot_hash}"))
        gw._check(http.get("/api/results"))
        gw._check(http.get("/api/chain"))
        ballot_markers = {o.ballot_hash for o in outcomes} | {
            o.token_serial for o in outcomes
        }
        for body in gw.bodies:
            has_voter = any(vid in body for vid in creds)
            has_ballot = any(marker in body for marker in ballot_markers)
            assert not (has_voter and has_ballot), body[:200]

    def test_checkin_response_only_blind_signature(self, stack):
        _, creds, _, http, _, _ = stack
        resp = http.post(
            "/api/checkin",
            json={
                "voter_id": "voter-001",
                "credential": creds["voter-001"],
                "blinded_value": 777,
            },
        )
        assert set(json.loads(resp.text)) == {"blind_signature"}

    def test_gateway_restart_keeps_verdicts(self, stack):
        service, creds, shares, http, _, client = stack
        outcome = client.vote("voter-002", creds["voter-002"], "bob")
        http.post("/api/close")
        receipt = json.loads(http.get(f"/api/receipt/{outcome.ballot_hash}").text)
        # A fresh app over the same stores answers identically.
        http2 = TestClient(make_gateway_app(service))
        again = json.loads(http2.get(f"/api/receipt/{outcome.ballot_hash}").text)
        assert again == receipt
