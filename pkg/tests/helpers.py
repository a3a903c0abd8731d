"""Shared builders for toy elections used across the test suite."""

import random

from anchorvote.config import ElectionConfig, TrusteeInfo, ValidatorInfo
from anchorvote.crypto.hashes import sha256 as _sha256
from anchorvote.crypto import TOY_GROUP, RsaKey, eg_encrypt, generate_rsa_key
from anchorvote.ledger import (
    BallotTx,
    ChainState,
    apply_block,
    make_ballot_tx,
    make_block,
    sign_block_hash,
    signed_genesis,
    token_message,
)
from anchorvote.crypto.rsa_blind import encode_digest, rsa_sign_blinded

# Toy ElGamal pair on TOY_GROUP: x=3, h=2^3 mod 23.
TOY_X = 3
TOY_H = 8


def make_keys(n_validators=4, seed=99, bits=512):
    rng = random.Random(seed)
    registrar = generate_rsa_key(bits, rng)
    validators = {f"v{i}": generate_rsa_key(bits, rng) for i in range(n_validators)}
    return registrar, validators


def make_config(
    registrar_key,
    validator_keys,
    mode="sealed",
    candidates=("alice", "bob", "carol"),
    trustees=(),
    threshold=1,
    election_id="toy-election",
    anchor_blocks=8,
    anchor_seconds=60,
    max_txs_per_block=25,
    open_at=1_700_000_000,
    close_at=None,
    election_pubkey=TOY_H,
):
    return ElectionConfig(
        election_id=election_id,
        mode=mode,
        candidates=list(candidates),
        group=TOY_GROUP,
        registrar_key=registrar_key.public(),
        validators=[
            ValidatorInfo(vid, key.public()) for vid, key in validator_keys.items()
        ],
        trustees=[TrusteeInfo(tid, i + 1) for i, tid in enumerate(trustees)],
        threshold=threshold,
        election_pubkey=election_pubkey,
        anchor_blocks=anchor_blocks,
        anchor_seconds=anchor_seconds,
        max_txs_per_block=max_txs_per_block,
        open_at=open_at,
        close_at=close_at,
    )


def sign_token(config, registrar_key, serial):
    msg = token_message(config.election_id, serial)
    return rsa_sign_blinded(encode_digest(msg, registrar_key.n), registrar_key)


def make_tx(config, registrar_key, rng, candidate_index=0, candidate=None) -> BallotTx:
    serial = rng.randbytes(32)
    k = rng.randrange(1, config.group.q)
    ct = eg_encrypt(
        config.group,
        config.election_pubkey,
        candidate_index,
        k,
        candidate_count=config.candidate_count,
    )
    return make_ballot_tx(
        election_id=config.election_id,
        ciphertext=ct,
        token_serial=serial,
        token_sig=sign_token(config, registrar_key, serial),
        candidate=candidate,
    )


def make_signed_block(config, validator_keys, state: ChainState, txs, timestamp=None):
    head = state.head
    block = make_block(
        election_id=config.election_id,
        index=head.index + 1,
        timestamp=timestamp if timestamp is not None else head.timestamp + 10,
        prev_hash=head.hash,
        txs=txs,
    )
    from dataclasses import replace

    sigs = tuple(
        (vid, sign_block_hash(block.hash, key))
        for vid, key in sorted(validator_keys.items())
    )
    return replace(block, signatures=sigs)


def fresh_chain(config, validator_keys) -> ChainState:
    return ChainState.from_genesis(config, signed_genesis(config, validator_keys))


class FakeClock:
    def __init__(self, start=1_700_000_000):
        self.now = start

    def __call__(self):
        return self.now

    def advance(self, seconds):
        self.now += seconds
        return self.now


TRUSTEE_IDS = ("t1", "t2", "t3", "t4", "t5")


def make_service(
    n_voters=10,
    mode="sealed",
    trustees=TRUSTEE_IDS,
    threshold=3,
    anchor_blocks=8,
    anchor_seconds=60,
    max_txs_per_block=25,
    n_validators=4,
    seed=99,
    ceremony_seed=7,
    clock=None,
    close_at=None,
):
    """In-memory toy election wired end to end.

    Returns (service, credentials dict, trustee shares, keys bundle).
    """
    from anchorvote.election import ElectionService
    from anchorvote.pubchain import MockChain
    from anchorvote.registrar import Registrar, VoterRecord
    from anchorvote.tally import ceremony_keygen

    clock = clock or FakeClock()
    registrar_key, validator_keys = make_keys(n_validators=n_validators, seed=seed)
    rng = random.Random(ceremony_seed)
    pubkey, shares = ceremony_keygen(TOY_GROUP, threshold, list(trustees), rng, clock)
    config = make_config(
        registrar_key,
        validator_keys,
        mode=mode,
        trustees=trustees,
        threshold=threshold,
        anchor_blocks=anchor_blocks,
        anchor_seconds=anchor_seconds,
        max_txs_per_block=max_txs_per_block,
        open_at=clock(),
        close_at=close_at,
        election_pubkey=pubkey,
    )
    creds = {f"voter-{i:03d}": f"secret-{i:03d}" for i in range(n_voters)}
    roster = {
        vid: VoterRecord(vid, _sha256(cred.encode())) for vid, cred in creds.items()
    }
    registrar = Registrar(roster, registrar_key, clock=clock)
    service = ElectionService(
        config,
        registrar,
        validator_keys,
        adapter=MockChain(),
        clock=clock,
    )
    keys = {"registrar": registrar_key, "validators": validator_keys}
    return service, creds, shares, keys


def run_tally(service, shares, threshold=None):
    """Close if needed, submit threshold partials, combine."""
    t = threshold or service.config.threshold
    if not service.closed:
        service.close()
    for ts in shares[:t]:
        service.submit_partials(
            ts.trustee_id, service.trustee_partials_payload(ts.share)
        )
    return service.combine()


def grow_chain(config, registrar_key, validator_keys, state, n_blocks, txs_per_block, rng):
    """Append blocks of fresh valid ballots; returns (state, all txs)."""
    all_txs = []
    for _ in range(n_blocks):
        txs = []
        for _ in range(txs_per_block):
            idx = rng.randrange(config.candidate_count)
            label = config.candidates[idx] if config.mode == "demo" else None
            txs.append(make_tx(config, registrar_key, rng, idx, label))
        block = make_signed_block(config, validator_keys, state, txs)
        state = apply_block(state, block)
        all_txs.extend(txs)
    return state, all_txs
