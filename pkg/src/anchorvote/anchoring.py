"""Batch anchoring: the tamper-evident seal.

Newly committed ballots are batched, their Merkle root goes to the
public chain, and auditors later recompute the root from the private
chain and compare it with the anchored payload. Anchor ranges are
contiguous and never overlap; a slipped cadence widens the next range
but never skips blocks. Payloads carry metadata and the root only -
never ciphertexts or serials.
"""

import time
from dataclasses import dataclass, replace

from anchorvote.canonical import (
    append_journal,
    canon_bytes,
    canon_loads,
    read_journal,
)
from anchorvote.crypto import ZERO_DIGEST, digest_from_hex, digest_hex, merkle_root
from anchorvote.ledger import ChainState
from anchorvote.pubchain import AdapterUnavailable, UnknownTxid  # noqa: F401


class NothingToAnchor(Exception):
    pass


@dataclass(frozen=True)
class AnchorRecord:
    anchor_seq: int
    first_block: int
    last_block: int
    batch_root: bytes
    txid: str | None = None
    public_height: int | None = None
    created_at: int = 0

    def payload_dict(self, election_id: str) -> dict:
        return {
            "election_id": election_id,
            "anchor_seq": self.anchor_seq,
            "first_block": self.first_block,
            "last_block": self.last_block,
            "batch_root": digest_hex(self.batch_root),
        }

    def payload_bytes(self, election_id: str) -> bytes:
        return canon_bytes(self.payload_dict(election_id))

    def to_dict(self) -> dict:
        return {
            "anchor_seq": self.anchor_seq,
            "first_block": self.first_block,
            "last_block": self.last_block,
            "batch_root": digest_hex(self.batch_root),
            "txid": self.txid,
            "public_height": self.public_height,
            "created_at": self.created_at,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "AnchorRecord":
        return cls(
            anchor_seq=data["anchor_seq"],
            first_block=data["first_block"],
            last_block=data["last_block"],
            batch_root=digest_from_hex(data["batch_root"]),
            txid=data.get("txid"),
            public_height=data.get("public_height"),
            created_at=data.get("created_at", 0),
        )


def batch_leaves(blocks) -> list:
    """Ballot hashes in commit order; a heartbeat-only range anchors the
    all-zero digest as its single leaf."""
    leaves = [tx.ballot_hash for block in blocks for tx in block.txs]
    return leaves or [ZERO_DIGEST]


def anchor_due(
    anchor_blocks: int,
    anchor_seconds: int,
    state: ChainState,
    last_anchored: int,
    last_anchor_time: int,
    now: int,
) -> bool:
    new_blocks = state.height - last_anchored
    if new_blocks < 1:
        return False
    return new_blocks >= anchor_blocks or now - last_anchor_time >= anchor_seconds


def build_anchor(
    state: ChainState, last_anchored: int, anchor_seq: int, now: int
) -> AnchorRecord:
    if state.height <= last_anchored:
        raise NothingToAnchor(f"nothing above height {last_anchored}")
    first, last = last_anchored + 1, state.height
    leaves = batch_leaves(state.blocks[first : last + 1])
    return AnchorRecord(
        anchor_seq=anchor_seq,
        first_block=first,
        last_block=last,
        batch_root=merkle_root(leaves),
        created_at=now,
    )


def submit_anchor(adapter, record: AnchorRecord, election_id: str) -> AnchorRecord:
    """Publish the payload; fills txid and public height from the chain.

    Raises AdapterUnavailable on transient failure - the caller retries
    the same range later, so cadence slips but no range is skipped.
    """
    if record.txid is not None:
        raise ValueError("anchor already submitted")
    payload = record.payload_bytes(election_id)
    txid = adapter.submit(payload)
    fetched, height = adapter.fetch(txid)
    if fetched != payload:
        raise AdapterUnavailable("adapter returned a different payload")
    return replace(record, txid=txid, public_height=height)


def verify_anchor(blocks, record: AnchorRecord, adapter, election_id: str) -> bool:
    """Recompute the range root locally, fetch the anchored payload, and
    compare everything. Raises UnknownTxid for fabricated references."""
    if record.txid is None:
        return False
    payload, height = adapter.fetch(record.txid)
    try:
        data = canon_loads(payload)
    except ValueError:
        return False
    if data != record.payload_dict(election_id):
        return False
    if record.public_height is not None and height != record.public_height:
        return False
    if not 0 < record.first_block <= record.last_block < len(blocks):
        return False
    local_root = merkle_root(
        batch_leaves(blocks[record.first_block : record.last_block + 1])
    )
    return local_root == record.batch_root


class AnchorAgent:
    """One per election, serialized with the commit stream. Tracks the
    anchored frontier, journals completed anchors, retries failures."""

    def __init__(self, adapter, election_id: str, anchor_blocks: int,
                 anchor_seconds: int, journal_path=None, clock=None):
        self.adapter = adapter
        self.election_id = election_id
        self.anchor_blocks = anchor_blocks
        self.anchor_seconds = anchor_seconds
        self.journal_path = journal_path
        self.clock = clock or (lambda: int(time.time()))
        self.records: list[AnchorRecord] = []
        self.last_anchor_time = self.clock()
        if journal_path is not None:
            try:
                for rec in read_journal(journal_path):
                    self.records.append(AnchorRecord.from_dict(rec))
            except FileNotFoundError:
                pass
        if self.records:
            self.last_anchor_time = self.records[-1].created_at

    @property
    def last_anchored(self) -> int:
        return self.records[-1].last_block if self.records else 0

    def poll(self, state: ChainState, force: bool = False) -> AnchorRecord | None:
        """Anchor the pending range when policy (or force) says so.
        Returns the completed record, or None when idle or the adapter
        is down (the same range is retried on the next poll)."""
        now = self.clock()
        if force:
            if state.height <= self.last_anchored:
                return None
        elif not anchor_due(
            self.anchor_blocks,
            self.anchor_seconds,
            state,
            self.last_anchored,
            self.last_anchor_time,
            now,
        ):
            return None
        record = build_anchor(state, self.last_anchored, len(self.records) + 1, now)
        try:
            record = submit_anchor(self.adapter, record, self.election_id)
        except AdapterUnavailable:
            return None
        self.records.append(record)
        self.last_anchor_time = record.created_at
        if self.journal_path is not None:
            append_journal(self.journal_path, record.to_dict())
        return record

    def anchor_for_block(self, block_index: int) -> AnchorRecord | None:
        for rec in self.records:
            if rec.first_block <= block_index <= rec.last_block:
                return rec
        return None

    def verify_all(self, blocks) -> list:
        """(anchor_seq, ok) per record plus contiguity findings."""
        results = []
        expected_first = 1
        for rec in self.records:
            try:
                ok = verify_anchor(blocks, rec, self.adapter, self.election_id)
            except UnknownTxid:
                ok = False
            if rec.first_block != expected_first:
                ok = False
            expected_first = rec.last_block + 1
            results.append((rec.anchor_seq, ok))
        return results
