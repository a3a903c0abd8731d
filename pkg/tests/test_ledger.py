"""Chain rules: tx validation, block application, and the from-scratch audit."""

import random
from dataclasses import replace

import pytest

import helpers
from anchorvote.canonical import canon_loads, canon_dumps
from anchorvote.crypto import ElgCiphertext, ZERO_DIGEST
from anchorvote.ledger import (
    BadParent,
    BadQuorum,
    BadRoot,
    Block,
    ChainState,
    DoubleVote,
    HashMismatch,
    InvalidToken,
    MalformedCiphertext,
    RangeOutOfBounds,
    TxInvalid,
    WrongElection,
    apply_block,
    block_hash,
    genesis,
    get_blocks,
    load_chain,
    make_ballot_tx,
    replay_chain,
    save_chain,
    signed_genesis,
    validate_tx,
    verify_chain,
)


@pytest.fixture
def setup(toy_keys, toy_config):
    registrar_key, validator_keys = toy_keys
    state = helpers.fresh_chain(toy_config, validator_keys)
    return toy_config, registrar_key, validator_keys, state


class TestGenesis:
    def test_shape(self, toy_config):
        g = genesis(toy_config)
        assert g.index == 0
        assert g.prev_hash == ZERO_DIGEST
        assert g.txs == ()
        assert g.timestamp == toy_config.open_at
        assert g.mode == toy_config.mode

    def test_deterministic(self, toy_config):
        assert genesis(toy_config).hash == genesis(toy_config).hash

    def test_election_id_sensitivity(self, toy_keys):
        registrar_key, validator_keys = toy_keys
        a = helpers.make_config(registrar_key, validator_keys, election_id="e-1")
        b = helpers.make_config(registrar_key, validator_keys, election_id="e-2")
        assert genesis(a).hash != genesis(b).hash

    def test_mode_recorded_and_hash_bound(self, toy_keys):
        registrar_key, validator_keys = toy_keys
        sealed = helpers.make_config(registrar_key, validator_keys, mode="sealed")
        demo = helpers.make_config(registrar_key, validator_keys, mode="demo")
        assert genesis(sealed).hash != genesis(demo).hash


class TestValidateTx:
    def test_fresh_tx_ok(self, setup, rng):
        config, registrar_key, _, state = setup
        validate_tx(state, helpers.make_tx(config, registrar_key, rng))

    def test_double_vote(self, setup, rng):
        config, registrar_key, validator_keys, state = setup
        tx = helpers.make_tx(config, registrar_key, rng)
        block = helpers.make_signed_block(config, validator_keys, state, [tx])
        state = apply_block(state, block)
        with pytest.raises(DoubleVote):
            validate_tx(state, tx)

    def test_pending_serials_count_as_spent(self, setup, rng):
        config, registrar_key, _, state = setup
        tx = helpers.make_tx(config, registrar_key, rng)
        with pytest.raises(DoubleVote):
            validate_tx(state, tx, pending_serials={tx.token_serial})

    def test_mutated_signature(self, setup, rng):
        from anchorvote.ledger import ballot_hash_of

        config, registrar_key, _, state = setup
        tx = helpers.make_tx(config, registrar_key, rng)
        bad = replace(tx, token_sig=tx.token_sig + 1)
        bad = replace(bad, ballot_hash=ballot_hash_of(bad.body_dict()))
        with pytest.raises(InvalidToken):
            validate_tx(state, bad)

    def test_wrong_election(self, setup, rng):
        config, registrar_key, _, state = setup
        tx = helpers.make_tx(config, registrar_key, rng)
        bad = replace(tx, election_id="other")
        with pytest.raises(WrongElection):
            validate_tx(state, bad)

    def test_bad_subgroup(self, setup, rng):
        config, registrar_key, _, state = setup
        tx = helpers.make_tx(config, registrar_key, rng)
        from anchorvote.ledger import ballot_hash_of

        bad = replace(tx, ciphertext=ElgCiphertext(c1=5, c2=tx.ciphertext.c2))
        bad = replace(bad, ballot_hash=ballot_hash_of(bad.body_dict()))
        with pytest.raises(MalformedCiphertext):
            validate_tx(state, bad)

    def test_hash_mismatch(self, setup, rng):
        config, registrar_key, _, state = setup
        tx = helpers.make_tx(config, registrar_key, rng)
        bad = replace(tx, ballot_hash=bytes(32))
        with pytest.raises(HashMismatch):
            validate_tx(state, bad)

    def test_sealed_mode_rejects_labels(self, setup, rng):
        config, registrar_key, _, state = setup
        tx = helpers.make_tx(config, registrar_key, rng, candidate=config.candidates[0])
        with pytest.raises(MalformedCiphertext):
            validate_tx(state, tx)

    def test_demo_mode_requires_known_label(self, toy_keys, rng):
        registrar_key, validator_keys = toy_keys
        config = helpers.make_config(registrar_key, validator_keys, mode="demo")
        state = helpers.fresh_chain(config, validator_keys)
        ok = helpers.make_tx(config, registrar_key, rng, 0, config.candidates[0])
        validate_tx(state, ok)
        with pytest.raises(MalformedCiphertext):
            validate_tx(state, helpers.make_tx(config, registrar_key, rng, 0, None))
        with pytest.raises(MalformedCiphertext):
            validate_tx(state, helpers.make_tx(config, registrar_key, rng, 0, "nobody"))


class TestApplyBlock:
    def test_heartbeat_block(self, setup):
        config, _, validator_keys, state = setup
        block = helpers.make_signed_block(config, validator_keys, state, [])
        new = apply_block(state, block)
        assert new.height == 1
        assert new.nullifiers == set()
        assert state.height == 0  # original untouched

    def test_duplicate_serial_within_block(self, setup, rng):
        config, registrar_key, validator_keys, state = setup
        tx = helpers.make_tx(config, registrar_key, rng)
        block = helpers.make_signed_block(config, validator_keys, state, [tx, tx])
        with pytest.raises(TxInvalid) as err:
            apply_block(state, block)
        assert err.value.reason == "double_vote"

    def test_bad_parent(self, setup, rng):
        config, registrar_key, validator_keys, state = setup
        b1 = helpers.make_signed_block(config, validator_keys, state, [])
        state2 = apply_block(state, b1)
        with pytest.raises(BadParent):
            apply_block(state2, b1)  # stale block re-applied

    def test_bad_root(self, setup, rng):
        config, registrar_key, validator_keys, state = setup
        tx = helpers.make_tx(config, registrar_key, rng)
        block = helpers.make_signed_block(config, validator_keys, state, [tx])
        bad = replace(block, ballot_root=bytes(32))
        with pytest.raises((BadRoot, BadParent)):
            apply_block(state, bad)

    def test_bad_quorum(self, setup):
        config, _, validator_keys, state = setup
        block = helpers.make_signed_block(config, validator_keys, state, [])
        few = replace(block, signatures=block.signatures[:2])  # quorum is 3 of 4
        with pytest.raises(BadQuorum):
            apply_block(state, few)

    def test_repeated_signer_does_not_count_twice(self, setup):
        config, _, validator_keys, state = setup
        block = helpers.make_signed_block(config, validator_keys, state, [])
        sig0 = block.signatures[0]
        padded = replace(block, signatures=(sig0, sig0, sig0, block.signatures[1]))
        with pytest.raises(BadQuorum):
            apply_block(state, padded)

    def test_flipped_tx_byte_detected(self, setup, rng):
        config, registrar_key, validator_keys, state = setup
        for _ in range(25):
            tx = helpers.make_tx(config, registrar_key, rng)
            block = helpers.make_signed_block(config, validator_keys, state, [tx])
            serial = bytearray(tx.token_serial)
            serial[rng.randrange(32)] ^= 1 + rng.randrange(255)
            mutated = replace(tx, token_serial=bytes(serial))
            bad = replace(block, txs=(mutated,))
            with pytest.raises((BadRoot, BadParent, TxInvalid)):
                apply_block(state, bad)


class TestVerifyChain:
    def test_honest_chain_clean(self, setup, rng):
        config, registrar_key, validator_keys, state = setup
        state, _ = helpers.grow_chain(
            config, registrar_key, validator_keys, state, 5, 3, rng
        )
        assert verify_chain(state.blocks, config) == []

    def test_timestamp_edit_flags_block_and_descendants(self, setup, rng):
        config, registrar_key, validator_keys, state = setup
        state, _ = helpers.grow_chain(
            config, registrar_key, validator_keys, state, 6, 2, rng
        )
        blocks = list(state.blocks)
        blocks[3] = replace(blocks[3], timestamp=blocks[3].timestamp + 1)
        findings = verify_chain(blocks, config)
        flagged = {f.block_index for f in findings}
        assert 3 in flagged
        assert {4, 5, 6} <= flagged
        codes = {f.block_index: {x.code for x in findings if x.block_index == f.block_index} for f in findings}
        assert "hash_mismatch" in codes[3]
        assert "parent_mismatch" in codes[4]

    def test_reserialization_stability(self, setup, rng):
        config, registrar_key, validator_keys, state = setup
        state, _ = helpers.grow_chain(
            config, registrar_key, validator_keys, state, 4, 2, rng
        )
        again = [Block.from_dict(canon_loads(canon_dumps(b.to_dict()))) for b in state.blocks]
        assert verify_chain(again, config) == verify_chain(state.blocks, config) == []

    def test_wrong_genesis_flagged(self, setup, toy_keys):
        config, _, validator_keys, state = setup
        other = helpers.make_config(toy_keys[0], validator_keys, election_id="not-this-one")
        findings = verify_chain(state.blocks, other)
        assert any(f.code == "genesis" for f in findings)

    def test_tampered_signatures_flagged(self, setup, rng):
        config, registrar_key, validator_keys, state = setup
        state, _ = helpers.grow_chain(config, registrar_key, validator_keys, state, 2, 2, rng)
        blocks = list(state.blocks)
        sigs = blocks[1].signatures
        # One bad signature of four still leaves a quorum of three.
        one_bad = ((sigs[0][0], sigs[0][1] + 1),) + sigs[1:]
        assert verify_chain(
            blocks[:1] + [replace(blocks[1], signatures=one_bad)] + blocks[2:], config
        ) == []
        two_bad = ((sigs[0][0], sigs[0][1] + 1), (sigs[1][0], sigs[1][1] + 1)) + sigs[2:]
        findings = verify_chain(
            blocks[:1] + [replace(blocks[1], signatures=two_bad)] + blocks[2:], config
        )
        assert any(f.code == "quorum" and f.block_index == 1 for f in findings)


class TestBlockHash:
    def test_recompute_matches_stored(self, setup, rng):
        config, registrar_key, validator_keys, state = setup
        tx = helpers.make_tx(config, registrar_key, rng)
        block = helpers.make_signed_block(config, validator_keys, state, [tx])
        assert block_hash(block, config.election_id) == block.hash

    def test_prev_hash_sensitivity(self, setup):
        config, _, validator_keys, state = setup
        block = helpers.make_signed_block(config, validator_keys, state, [])
        altered = replace(block, prev_hash=bytes(32))
        assert block_hash(altered, config.election_id) != block.hash

    def test_signatures_excluded(self, setup):
        config, _, validator_keys, state = setup
        block = helpers.make_signed_block(config, validator_keys, state, [])
        stripped = replace(block, signatures=())
        assert block_hash(stripped, config.election_id) == block.hash


class TestRangesAndPersistence:
    def test_get_blocks(self, setup, rng):
        config, registrar_key, validator_keys, state = setup
        state, _ = helpers.grow_chain(config, registrar_key, validator_keys, state, 3, 1, rng)
        assert [b.index for b in get_blocks(state, 0, 0)] == [0]
        assert [b.index for b in get_blocks(state, 0, state.height)] == [0, 1, 2, 3]
        with pytest.raises(RangeOutOfBounds):
            get_blocks(state, 0, 99)
        with pytest.raises(RangeOutOfBounds):
            get_blocks(state, 4, 4)
        with pytest.raises(RangeOutOfBounds):
            get_blocks(state, 2, 1)

    def test_save_load_replay(self, setup, rng, tmp_path):
        config, registrar_key, validator_keys, state = setup
        state, _ = helpers.grow_chain(config, registrar_key, validator_keys, state, 4, 2, rng)
        path = tmp_path / "ledger.log"
        save_chain(path, state.blocks)
        loaded = load_chain(path)
        replayed = replay_chain(loaded, config)
        assert replayed.height == state.height
        assert replayed.nullifiers == state.nullifiers
        assert verify_chain(replayed.blocks, config) == []

    def test_ballot_count_equals_nullifier_size(self, setup, rng):
        config, registrar_key, validator_keys, state = setup
        state, txs = helpers.grow_chain(config, registrar_key, validator_keys, state, 5, 4, rng)
        assert state.ballot_count() == len(state.nullifiers) == len(txs)
        serials = [tx.token_serial for _, tx in state.ballots()]
        assert len(serials) == len(set(serials))


def test_ballot_tx_roundtrip(toy_config, toy_keys, rng):
    registrar_key, _ = toy_keys
    from anchorvote.ledger import BallotTx

    tx = helpers.make_tx(toy_config, registrar_key, rng)
    again = BallotTx.from_dict(canon_loads(canon_dumps(tx.to_dict())))
    assert again == tx


def test_chain_state_genesis_rejects_mismatched_config(toy_keys):
    registrar_key, validator_keys = toy_keys
    config_a = helpers.make_config(registrar_key, validator_keys, election_id="a")
    config_b = helpers.make_config(registrar_key, validator_keys, election_id="b")
    g = signed_genesis(config_a, validator_keys)
    with pytest.raises(BadParent):
        ChainState.from_genesis(config_b, g)
