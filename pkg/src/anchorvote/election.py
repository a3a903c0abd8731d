"""Election lifecycle: directory setup, the in-process service that wires
registrar, ledger, block production, anchoring, and tally together.

`init_election` runs the offline ceremony and writes every artifact an
election needs into one directory. `ElectionService` is the single
process engine behind the gateway: casts flow through validate_tx into
a pool, full pools become quorum-signed blocks, commits feed the anchor
agent, and close freezes the ballot list for the trustees.
"""

import os
import threading
import time
from collections import OrderedDict

from anchorvote.canonical import canon_dumps, canon_loads
from anchorvote.config import ElectionConfig, TrusteeInfo, ValidatorInfo
from anchorvote.crypto import (
    TOY_GROUP,
    MerkleProof,
    RsaKey,
    default_group,
    default_rng,
    digest_from_hex,
    digest_hex,
    generate_rsa_key,
    merkle_prove,
    merkle_verify,
    sha256,
)
from anchorvote.anchoring import AnchorAgent, batch_leaves
from anchorvote.ledger import (
    BallotTx,
    ChainState,
    RangeOutOfBounds,
    apply_block,
    append_block_line,
    load_chain,
    make_block,
    replay_chain,
    sign_block_hash,
    signed_genesis,
    validate_tx,
)
from anchorvote.pubchain import MockChain
from anchorvote.registrar import Registrar, save_roster, VoterRecord
from anchorvote.tally import (
    AlreadyClosed,
    ElectionOpen,
    PartialStore,
    TallyResult,
    ceremony_keygen,
    combine_tally,
    compute_partials,
    freeze_ballots,
)


class ElectionClosed(Exception):
    code = "election_closed"


class UnknownBallot(Exception):
    code = "unknown_ballot"


class TallyPending(Exception):
    code = "tally_pending"


FILES = {
    "config": "config.json",
    "registrar_key": "registrar_key.json",
    "validator_keys": "validator_keys.json",
    "roster": "roster.csv",
    "credentials": "credentials.csv",
    "ledger": "ledger.log",
    "issuance": "issuance.log",
    "anchors": "anchors.log",
    "mockchain": "mockchain.log",
    "tally": "tally.json",
    "shares_dir": "trustee_shares",
}


def election_path(directory, name):
    return os.path.join(directory, FILES[name])


def init_election(
    directory,
    election_id: str,
    candidates,
    mode: str = "sealed",
    n_validators: int = 4,
    trustee_ids=("t1", "t2", "t3", "t4", "t5"),
    threshold: int = 3,
    voters: int = 0,
    toy_crypto: bool = False,
    rsa_bits: int = 2048,
    anchor_blocks: int = 8,
    anchor_seconds: int = 60,
    max_txs_per_block: int = 25,
    open_at: int | None = None,
    close_at: int | None = None,
    rng=None,
    clock=None,
):
    """Create the election directory: config, keys, trustee shares via the
    dealer ceremony, genesis ledger, demo roster. Returns (config, keys)."""
    rng = rng or default_rng()
    clock = clock or (lambda: int(time.time()))
    os.makedirs(directory, exist_ok=True)
    os.makedirs(os.path.join(directory, FILES["shares_dir"]), exist_ok=True)

    group = TOY_GROUP if toy_crypto else default_group()
    bits = 512 if toy_crypto else rsa_bits
    registrar_key = generate_rsa_key(bits)
    validator_keys = {f"v{i}": generate_rsa_key(bits) for i in range(n_validators)}

    pubkey, shares = ceremony_keygen(group, threshold, list(trustee_ids), rng, clock)
    config = ElectionConfig(
        election_id=election_id,
        mode=mode,
        candidates=list(candidates),
        group=group,
        registrar_key=registrar_key.public(),
        validators=[
            ValidatorInfo(vid, key.public()) for vid, key in sorted(validator_keys.items())
        ],
        trustees=[TrusteeInfo(tid, i + 1) for i, tid in enumerate(trustee_ids)],
        threshold=threshold,
        election_pubkey=pubkey,
        anchor_blocks=anchor_blocks,
        anchor_seconds=anchor_seconds,
        max_txs_per_block=max_txs_per_block,
        open_at=open_at if open_at is not None else clock(),
        close_at=close_at,
    )
    config.save(election_path(directory, "config"))

    with open(election_path(directory, "registrar_key"), "w", encoding="ascii") as fh:
        fh.write(canon_dumps(registrar_key.to_dict(include_private=True)) + "\n")
    with open(election_path(directory, "validator_keys"), "w", encoding="ascii") as fh:
        fh.write(
            canon_dumps(
                {vid: k.to_dict(include_private=True) for vid, k in validator_keys.items()}
            )
            + "\n"
        )
    for share in shares:
        share.save(
            os.path.join(directory, FILES["shares_dir"], f"{share.trustee_id}.json")
        )

    genesis_block = signed_genesis(config, validator_keys)
    with open(election_path(directory, "ledger"), "w", encoding="ascii") as fh:
        fh.write(canon_dumps(genesis_block.to_dict()) + "\n")

    roster = {}
    cred_lines = []
    for i in range(voters):
        voter_id = f"voter-{i:04d}"
        credential = digest_hex(sha256(rng.randbytes(32).hex().encode()))[:24]
        roster[voter_id] = VoterRecord(voter_id, sha256(credential.encode()))
        cred_lines.append(f"{voter_id},{credential}\n")
    save_roster(election_path(directory, "roster"), roster)
    with open(election_path(directory, "credentials"), "w", encoding="utf-8") as fh:
        fh.writelines(cred_lines)

    keys = {"registrar": registrar_key, "validators": validator_keys}
    return config, keys


def load_election_keys(directory):
    with open(election_path(directory, "registrar_key"), "r", encoding="ascii") as fh:
        registrar_key = RsaKey.from_dict(canon_loads(fh.read()))
    with open(election_path(directory, "validator_keys"), "r", encoding="ascii") as fh:
        validator_keys = {
            vid: RsaKey.from_dict(d) for vid, d in canon_loads(fh.read()).items()
        }
    return {"registrar": registrar_key, "validators": validator_keys}


class ElectionService:
    """Everything one election needs, in one process.

    Block production signs with the full local validator set (an honest
    quorum); the same ledger rules are enforced as in the distributed
    path, since every block still flows through apply_block.
    """

    def __init__(
        self,
        config: ElectionConfig,
        registrar: Registrar,
        validator_keys: dict,
        adapter=None,
        ledger_path=None,
        anchor_journal=None,
        clock=None,
    ):
        self.config = config
        self.registrar = registrar
        self.validator_keys = validator_keys
        self.clock = clock or (lambda: int(time.time()))
        self.ledger_path = ledger_path
        if ledger_path and os.path.exists(ledger_path):
            blocks = load_chain(ledger_path)
            self.chain = replay_chain(blocks, config)
        else:
            genesis_block = signed_genesis(config, validator_keys)
            self.chain = ChainState.from_genesis(config, genesis_block)
            if ledger_path:
                append_block_line(ledger_path, genesis_block)
        self.adapter = adapter if adapter is not None else MockChain()
        self.agent = AnchorAgent(
            self.adapter,
            config.election_id,
            config.anchor_blocks,
            config.anchor_seconds,
            journal_path=anchor_journal,
            clock=self.clock,
        )
        self.pool: OrderedDict[bytes, BallotTx] = OrderedDict()
        self.closed = False
        self.frozen = None
        self.partials = PartialStore(config)
        self.tally_result: TallyResult | None = None
        self._lock = threading.Lock()

    # -- voting surface ----------------------------------------------------

    def checkin(self, voter_id: str, credential: str, blinded_value: int) -> dict:
        signature = self.registrar.issue_token(
            voter_id, credential.encode("utf-8"), blinded_value
        )
        return {"blind_signature": signature}

    def _election_over(self) -> bool:
        if self.closed:
            return True
        return (
            self.config.close_at is not None and self.clock() >= self.config.close_at
        )

    def cast(self, tx_data: dict) -> dict:
        if self._election_over():
            raise ElectionClosed("no casts after close")
        tx = BallotTx.from_dict(tx_data)
        with self._lock:
            pending = {t.token_serial for t in self.pool.values()}
            validate_tx(self.chain, tx, pending_serials=pending)
            self.pool[tx.ballot_hash] = tx
            if len(self.pool) >= self.config.max_txs_per_block:
                self._commit_block()
        return {"ballot_hash": digest_hex(tx.ballot_hash), "status": "accepted"}

    def _commit_block(self) -> None:
        """Drain up to one block of pooled txs into a quorum-signed block."""
        txs = []
        for bh in list(self.pool):
            if len(txs) >= self.config.max_txs_per_block:
                break
            txs.append(self.pool.pop(bh))
        block = make_block(
            election_id=self.config.election_id,
            index=self.chain.height + 1,
            timestamp=self.clock(),
            prev_hash=self.chain.head.hash,
            txs=txs,
        )
        from dataclasses import replace

        sigs = tuple(
            (vid, sign_block_hash(block.hash, key))
            for vid, key in sorted(self.validator_keys.items())
        )
        block = replace(block, signatures=sigs)
        self.chain = apply_block(self.chain, block)
        if self.ledger_path:
            append_block_line(self.ledger_path, block)
        self.agent.poll(self.chain)

    def tick(self) -> None:
        """Periodic drive: drain stragglers and honor the time-based
        anchor cadence. The demo loop calls this once a second."""
        with self._lock:
            if self.pool and not self.closed:
                self._commit_block()
            self.agent.poll(self.chain)
            if self.config.close_at is not None and not self.closed:
                if self.clock() >= self.config.close_at:
                    self._close_locked()

    # -- receipts and verification ------------------------------------------

    def receipt(self, ballot_hash_hex: str) -> dict:
        try:
            bh = digest_from_hex(ballot_hash_hex)
        except ValueError:
            raise UnknownBallot(ballot_hash_hex) from None
        found = self.chain.find_tx(bh)
        if found is None:
            if bh in self.pool:  # accepted, not yet committed
                return {
                    "election_id": self.config.election_id,
                    "ballot_hash": ballot_hash_hex,
                    "block_index": None,
                    "status": "pending",
                    "leaf_index": None,
                    "merkle_proof": None,
                    "anchor_txid": None,
                    "anchor_root": None,
                }
            raise UnknownBallot(ballot_hash_hex)
        block_index, _ = found
        base = {
            "election_id": self.config.election_id,
            "ballot_hash": ballot_hash_hex,
            "block_index": block_index,
        }
        anchor = self.agent.anchor_for_block(block_index)
        if anchor is None:
            base.update(
                {
                    "status": "pending",
                    "leaf_index": None,
                    "merkle_proof": None,
                    "anchor_txid": None,
                    "anchor_root": None,
                }
            )
            return base
        leaves = batch_leaves(
            self.chain.blocks[anchor.first_block : anchor.last_block + 1]
        )
        leaf_index = leaves.index(bh)
        proof = merkle_prove(leaves, leaf_index)
        assert merkle_verify(bh, proof, anchor.batch_root)
        base.update(
            {
                "status": "anchored",
                "leaf_index": leaf_index,
                "merkle_proof": proof.to_dict(),
                "anchor_txid": anchor.txid,
                "anchor_root": digest_hex(anchor.batch_root),
            }
        )
        return base

    def verify(self, ballot_hash_hex: str, proof_data: dict, anchor_txid: str) -> dict:
        payload, _height = self.adapter.fetch(anchor_txid)  # UnknownTxid -> 404
        try:
            data = canon_loads(payload)
            root = digest_from_hex(data["batch_root"])
        except (ValueError, KeyError):
            return {"valid": False, "detail": "anchor payload malformed"}
        if data.get("election_id") != self.config.election_id:
            return {"valid": False, "detail": "election_id mismatch"}
        try:
            bh = digest_from_hex(ballot_hash_hex)
            proof = MerkleProof.from_dict(proof_data)
        except (ValueError, KeyError, TypeError):
            return {"valid": False, "detail": "malformed proof"}
        if not merkle_verify(bh, proof, root):
            return {"valid": False, "detail": "root mismatch"}
        return {"valid": True, "detail": "ok"}

    # -- explorer and results -------------------------------------------------

    def results(self) -> dict:
        ballots = self.chain.ballot_count()
        out = {"mode": self.config.mode, "ballots": ballots}
        if self.tally_result is not None:
            out["status"] = "final"
            out["counts"] = dict(sorted(self.tally_result.counts.items()))
            out["undecryptable"] = list(self.tally_result.undecryptable)
            out["crosscheck_passed"] = self.tally_result.crosscheck_passed
            return out
        if self.config.mode == "demo":
            counts = {label: 0 for label in self.config.candidates}
            for _, tx in self.chain.ballots():
                counts[tx.candidate] += 1
            out["status"] = "live"
            out["counts"] = counts
            return out
        out["status"] = "sealed"
        return out

    def chain_rows(self, start: int, end: int) -> list:
        blocks = self.chain.blocks
        if not 0 <= start <= end <= self.chain.height:
            raise RangeOutOfBounds(f"[{start}, {end}]")
        rows = []
        for block in blocks[start : end + 1]:
            row = {
                "index": block.index,
                "timestamp": block.timestamp,
                "hash": digest_hex(block.hash),
                "prev_hash": digest_hex(block.prev_hash),
                "tx_count": len(block.txs),
            }
            if self.config.mode == "demo":
                row["candidates"] = [tx.candidate for tx in block.txs]
            else:
                row["ballot_hashes"] = [digest_hex(tx.ballot_hash) for tx in block.txs]
            rows.append(row)
        return rows

    def anchor_records(self) -> list:
        return [rec.to_dict() for rec in self.agent.records]

    # -- lifecycle -----------------------------------------------------------

    def close(self) -> list:
        with self._lock:
            return self._close_locked()

    def _close_locked(self) -> list:
        if self.closed:
            raise AlreadyClosed("election already closed")
        self.closed = True
        while self.pool:
            self._commit_block()
        if self.chain.height == self.agent.last_anchored:
            # Nothing new since the last anchor: emit a final heartbeat
            # block so the close itself is sealed by a final anchor.
            self._commit_block()
        self.agent.poll(self.chain, force=True)
        self.frozen = freeze_ballots(self.chain)
        return [fb.to_dict() for fb in self.frozen]

    def frozen_ballots(self) -> list:
        if not self.closed:
            raise ElectionOpen("ballots freeze at close")
        return [fb.to_dict() for fb in self.frozen]

    def submit_partials(self, trustee_id: str, partial_list: list) -> dict:
        if not self.closed:
            raise ElectionOpen("no decryption before close")
        from anchorvote.crypto import PartialDecryption

        mapping = {}
        for entry in partial_list:
            mapping[entry["ballot_hash"]] = PartialDecryption(
                index=entry["index"], value=entry["value"]
            )
        self.partials.accept(trustee_id, mapping)
        return {
            "status": "accepted",
            "trustees_submitted": self.partials.trustee_count(),
            "threshold": self.config.threshold,
        }

    def combine(self) -> TallyResult:
        if not self.closed:
            raise ElectionOpen("no tally before close")
        result = combine_tally(
            self.partials, self.frozen, self.config, self.chain.blocks, self.agent
        )
        self.tally_result = result
        return result

    def trustee_partials_payload(self, share) -> list:
        """What `trustee decrypt` sends: per-ballot partials, frozen order."""
        if not self.closed:
            raise ElectionOpen("no decryption before close")
        parts = compute_partials(self.config.group, share, self.frozen)
        return [
            {
                "ballot_hash": digest_hex(fb.ballot_hash),
                "index": p.index,
                "value": p.value,
            }
            for fb, p in zip(self.frozen, parts)
        ]


def open_election(directory, clock=None, adapter=None) -> ElectionService:
    """Rebuild a service over an existing election directory."""
    config = ElectionConfig.load(election_path(directory, "config"))
    keys = load_election_keys(directory)
    registrar = Registrar.open(
        election_path(directory, "roster"),
        keys["registrar"],
        election_path(directory, "issuance"),
        clock=clock,
    )
    if adapter is None:
        adapter = MockChain(election_path(directory, "mockchain"))
    return ElectionService(
        config,
        registrar,
        keys["validators"],
        adapter=adapter,
        ledger_path=election_path(directory, "ledger"),
        anchor_journal=election_path(directory, "anchors"),
        clock=clock,
    )
