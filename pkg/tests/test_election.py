"""Election service: the whole cast-to-tally pipeline in one process."""

import random

import pytest

import helpers
from anchorvote.client import LocalGateway, VoterClient
from anchorvote.election import ElectionClosed, UnknownBallot, init_election, open_election
from anchorvote.ledger import DoubleVote, verify_chain
from anchorvote.tally import AlreadyClosed, ElectionOpen


@pytest.fixture
def clock():
    return helpers.FakeClock()


@pytest.fixture
def setup(clock):
    service, creds, shares, keys = helpers.make_service(
        n_voters=12, anchor_blocks=2, max_txs_per_block=3, clock=clock
    )
    return service, creds, shares


def make_client(service, seed=5):
    return VoterClient(LocalGateway(service), rng=random.Random(seed))


class TestVotingFlow:
    def test_full_vote_and_receipt(self, setup, clock):
        service, creds, shares = setup
        client = make_client(service)
        outcome = client.vote("voter-000", creds["voter-000"], "alice")
        receipt = client.fetch_receipt(outcome.ballot_hash)
        assert receipt["status"] == "pending"
        assert receipt["anchor_txid"] is None
        service.close()
        receipt = client.fetch_receipt(outcome.ballot_hash)
        assert receipt["status"] == "anchored"
        assert client.verify_receipt(receipt)

    def test_server_recomputes_same_hash(self, setup):
        service, creds, _ = setup
        client = make_client(service)
        serial, sig = client.obtain_token("voter-001", creds["voter-001"])
        tx = client.build_ballot("bob", serial, sig)
        resp = service.cast(tx)
        assert resp["ballot_hash"] == tx["ballot_hash"]

    def test_token_replay_rejected(self, setup):
        service, creds, _ = setup
        client = make_client(service)
        serial, sig = client.obtain_token("voter-002", creds["voter-002"])
        first = client.build_ballot("alice", serial, sig)
        service.cast(first)
        second = client.build_ballot("bob", serial, sig)
        with pytest.raises(DoubleVote):
            service.cast(second)

    def test_cast_after_close(self, setup):
        service, creds, _ = setup
        client = make_client(service)
        serial, sig = client.obtain_token("voter-003", creds["voter-003"])
        tx = client.build_ballot("carol", serial, sig)
        service.close()
        with pytest.raises(ElectionClosed):
            service.cast(tx)

    def test_close_at_deadline_enforced(self, clock):
        service, creds, shares, _ = helpers.make_service(
            n_voters=2, clock=clock, close_at=clock() + 100
        )
        client = make_client(service)
        outcome = client.vote("voter-000", creds["voter-000"], "alice")
        assert outcome.ballot_hash
        clock.advance(200)
        serial_sig = client.obtain_token("voter-001", creds["voter-001"])
        tx = client.build_ballot("bob", *serial_sig)
        with pytest.raises(ElectionClosed):
            service.cast(tx)

    def test_unknown_receipt(self, setup):
        service, _, _ = setup
        with pytest.raises(UnknownBallot):
            service.receipt("ab" * 32)
        with pytest.raises(UnknownBallot):
            service.receipt("not-hex")


class TestBlocksAndAnchors:
    def test_blocks_fill_at_cap(self, setup):
        service, creds, _ = setup
        client = make_client(service)
        for i in range(7):
            vid = f"voter-{i:03d}"
            client.vote(vid, creds[vid], "alice")
        # cap is 3: two full blocks committed, one tx pooled
        assert service.chain.height == 2
        assert len(service.pool) == 1
        service.tick()
        assert service.chain.height == 3
        assert len(service.pool) == 0

    def test_anchor_cadence_by_blocks(self, setup):
        service, creds, _ = setup
        client = make_client(service)
        for i in range(12):
            vid = f"voter-{i:03d}"
            client.vote(vid, creds[vid], "bob")
        # 4 blocks of 3; anchor every 2 blocks
        assert service.chain.height == 4
        assert len(service.agent.records) == 2

    def test_anchor_cadence_by_time(self, clock):
        service, creds, shares, _ = helpers.make_service(
            n_voters=4, anchor_blocks=100, anchor_seconds=60, max_txs_per_block=2, clock=clock
        )
        client = make_client(service)
        client.vote("voter-000", creds["voter-000"], "alice")
        client.vote("voter-001", creds["voter-001"], "alice")
        assert service.agent.records == []
        clock.advance(61)
        service.tick()
        assert len(service.agent.records) == 1

    def test_chain_passes_audit(self, setup):
        service, creds, _ = setup
        client = make_client(service)
        for i in range(8):
            vid = f"voter-{i:03d}"
            client.vote(vid, creds[vid], "carol")
        service.close()
        assert verify_chain(service.chain.blocks, service.config) == []
        assert all(ok for _, ok in service.agent.verify_all(service.chain.blocks))


class TestLifecycle:
    def test_close_freezes_and_anchors_everything(self, setup):
        service, creds, shares = setup
        client = make_client(service)
        hashes = []
        for i in range(5):
            vid = f"voter-{i:03d}"
            hashes.append(client.vote(vid, creds[vid], "alice").ballot_hash)
        frozen = service.close()
        assert [fb["ballot_hash"] for fb in frozen] == hashes
        assert service.agent.last_anchored == service.chain.height
        with pytest.raises(AlreadyClosed):
            service.close()

    def test_close_with_zero_ballots(self, setup):
        service, _, shares = setup
        frozen = service.close()
        assert frozen == []
        assert len(service.agent.records) == 1  # final heartbeat anchor

    def test_partials_rejected_before_close(self, setup):
        service, _, shares = setup
        with pytest.raises(ElectionOpen):
            service.submit_partials("t1", [])
        with pytest.raises(ElectionOpen):
            service.combine()

    def test_tally_matches_ground_truth(self, setup):
        service, creds, shares = setup
        client = make_client(service)
        truth = {"alice": 0, "bob": 0, "carol": 0}
        labels = ["alice", "bob", "alice", "carol", "alice", "bob"]
        for i, label in enumerate(labels):
            vid = f"voter-{i:03d}"
            client.vote(vid, creds[vid], label)
            truth[label] += 1
        result = helpers.run_tally(service, shares)
        assert result.counts == truth
        assert result.crosscheck_passed
        assert result.undecryptable == []
        res = service.results()
        assert res["status"] == "final"
        assert res["counts"] == truth

    def test_results_modes(self, clock):
        service, creds, shares, _ = helpers.make_service(
            n_voters=4, mode="demo", clock=clock, max_txs_per_block=1
        )
        client = make_client(service)
        client.vote("voter-000", creds["voter-000"], "alice")
        client.vote("voter-001", creds["voter-001"], "alice")
        client.vote("voter-002", creds["voter-002"], "bob")
        res = service.results()
        assert res["status"] == "live"
        assert res["counts"] == {"alice": 2, "bob": 1, "carol": 0}

        sealed, screds, sshares, _ = helpers.make_service(n_voters=2)
        sclient = make_client(sealed)
        sclient.vote("voter-000", screds["voter-000"], "bob")
        sealed.tick()
        res = sealed.results()
        assert res == {"mode": "sealed", "ballots": 1, "status": "sealed"}

    def test_chain_rows_modes(self, clock):
        service, creds, shares, _ = helpers.make_service(
            n_voters=2, mode="demo", clock=clock, max_txs_per_block=1
        )
        client = make_client(service)
        client.vote("voter-000", creds["voter-000"], "carol")
        rows = service.chain_rows(0, service.chain.height)
        assert rows[0]["prev_hash"] == "0" * 64
        assert rows[1]["candidates"] == ["carol"]
        for prev, row in zip(rows, rows[1:]):
            assert row["prev_hash"] == prev["hash"]


class TestDirectoryLifecycle:
    def test_init_and_reopen(self, tmp_path, clock):
        directory = tmp_path / "election"
        config, keys = init_election(
            directory,
            "dir-election",
            ["x", "y"],
            toy_crypto=True,
            voters=3,
            threshold=2,
            trustee_ids=("ta", "tb", "tc"),
            max_txs_per_block=2,
            clock=clock,
            rng=random.Random(3),
        )
        service = open_election(directory, clock=clock)
        creds = dict(
            line.strip().split(",")
            for line in open(directory / "credentials.csv")
            if line.strip()
        )
        client = make_client(service)
        voter = next(iter(creds))
        outcome = client.vote(voter, creds[voter], "x")
        service.tick()
        assert service.chain.height == 1

        # Restart: state survives; issued token cannot be reissued.
        reopened = open_election(directory, clock=clock)
        assert reopened.chain.height == 1
        assert reopened.chain.ballot_count() == 1
        client2 = VoterClient(LocalGateway(reopened), rng=random.Random(4))
        from anchorvote.registrar import AlreadyIssued

        with pytest.raises(AlreadyIssued):
            client2.obtain_token(voter, creds[voter])
        receipt = reopened.receipt(outcome.ballot_hash)
        assert receipt["ballot_hash"] == outcome.ballot_hash
