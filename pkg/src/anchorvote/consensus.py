"""Quorum consensus among a fixed validator set.

One deterministic message-driven state machine per validator: the leader
for (height, round) proposes a block of pooled transactions, followers
validate and vote, and any node holding a quorum of votes assembles the
signed block (the commit certificate) and broadcasts it. Vote signatures
use the BLOCK-SIG domain, so the certificate's signature set is exactly
the block signature list the ledger requires.

Votes count only within the round they were cast for; leaving a round
discards its votes, and a failed round is retried from scratch (the next
leader re-proposes the same block when it saw it). Commit certificates
are round-free proof and may arrive at any time. Conflicting proposals
from one leader abandon the round via a view change carrying both signed
proposals as evidence.

All nondeterminism (timers, the network) enters as explicit events:
`on_message` and `on_tick` are the only inputs.
"""

from collections import Counter, OrderedDict
from dataclasses import dataclass, field, replace

from anchorvote.canonical import canon_bytes
from anchorvote.config import ElectionConfig
from anchorvote.crypto import digest_from_hex, digest_hex, sha256
from anchorvote.crypto.rsa_blind import RsaKey, rsa_sign_blinded, rsa_verify
from anchorvote.ledger import (
    BallotTx,
    Block,
    ChainState,
    LedgerError,
    TxError,
    apply_block,
    block_hash,
    compute_ballot_root,
    make_block,
    sign_block_hash,
    validate_tx,
    verify_block_sig,
)

BROADCAST = "*"
ENVELOPE_PREFIX = b"CONSENSUS-MSG"

PROPOSE = "propose"
VOTE = "vote"
COMMIT = "commit"
VIEW_CHANGE = "view_change"
# Transport-level envelopes, not consensus semantics: ballot gossip and
# the catch-up probe a lagging node broadcasts on its round timer.
TX_GOSSIP = "tx"
SYNC = "sync"

CATCHUP_BATCH = 8


def quorum(n: int) -> int:
    return (2 * n) // 3 + 1


def leader_for(height: int, round_: int, n: int) -> int:
    """Round-robin leader index; view changes walk past failed leaders."""
    if n < 1:
        raise ValueError("need at least one validator")
    return (height + round_) % n


@dataclass(frozen=True)
class ConsensusMessage:
    kind: str
    election_id: str
    height: int
    round: int
    sender: str
    block: dict | None = None  # propose (unsigned), commit (quorum-signed)
    block_hash: str | None = None  # vote
    signature: int | None = None  # propose: envelope sig; vote: block sig
    evidence: tuple = ()  # view_change: two conflicting propose dicts

    def to_dict(self) -> dict:
        out = {
            "kind": self.kind,
            "election_id": self.election_id,
            "height": self.height,
            "round": self.round,
            "sender": self.sender,
        }
        if self.block is not None:
            out["block"] = self.block
        if self.block_hash is not None:
            out["block_hash"] = self.block_hash
        if self.signature is not None:
            out["signature"] = self.signature
        if self.evidence:
            out["evidence"] = list(self.evidence)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ConsensusMessage":
        return cls(
            kind=data["kind"],
            election_id=data["election_id"],
            height=data["height"],
            round=data["round"],
            sender=data["sender"],
            block=data.get("block"),
            block_hash=data.get("block_hash"),
            signature=data.get("signature"),
            evidence=tuple(data.get("evidence", ())),
        )


def _envelope_digest(msg_dict: dict) -> bytes:
    body = {k: v for k, v in msg_dict.items() if k != "signature"}
    return sha256(ENVELOPE_PREFIX + canon_bytes(body))


def sign_envelope(msg: ConsensusMessage, key: RsaKey) -> ConsensusMessage:
    digest = _envelope_digest(msg.to_dict())
    sig = rsa_sign_blinded(int.from_bytes(digest, "big") % key.n, key)
    return replace(msg, signature=sig)


def verify_envelope(msg_dict: dict, key: RsaKey) -> bool:
    sig = msg_dict.get("signature")
    if sig is None:
        return False
    return rsa_verify(_envelope_digest(msg_dict), sig, key)


@dataclass
class ViewState:
    height: int
    round: int = 0
    phase: str = "idle"  # idle | proposed | voted | committed
    votes: dict = field(default_factory=dict)  # hash hex -> {sender: sig}
    voted_senders: set = field(default_factory=set)
    proposal: Block | None = None
    proposal_msg: dict | None = None
    dead: bool = False


@dataclass(frozen=True)
class Outbound:
    dst: str  # validator id or BROADCAST
    msg: ConsensusMessage


class ValidatorNode:
    """One validator's consensus core plus its FIFO transaction pool."""

    def __init__(
        self,
        validator_id: str,
        config: ElectionConfig,
        key: RsaKey,
        chain: ChainState,
        round_timeout: int = 25,
        now: int = 0,
        heartbeat_every: int | None = None,
    ):
        self.vid = validator_id
        self.config = config
        self.key = key
        self.chain = chain
        self.round_timeout = round_timeout
        self.heartbeat_every = heartbeat_every
        self.pool: OrderedDict[bytes, BallotTx] = OrderedDict()
        self.certs: dict[int, ConsensusMessage] = {}
        self.future_certs: dict[int, ConsensusMessage] = {}
        self.telemetry = Counter()
        self.commit_log: list[tuple[int, str]] = []  # (height, block hash hex)
        self.rounds_used: dict[int, int] = {}  # height -> rounds before commit
        self._ids = [v.validator_id for v in config.validators]
        self._keys = {v.validator_id: v.key for v in config.validators}
        self._sticky: Block | None = None
        self.view = ViewState(height=chain.height + 1)
        self.deadline = now + round_timeout
        self._last_commit_time = now

    # -- identity helpers -------------------------------------------------

    def _leader_id(self, height: int, round_: int) -> str:
        return self._ids[leader_for(height, round_, len(self._ids))]

    def is_leader(self) -> bool:
        return self._leader_id(self.view.height, self.view.round) == self.vid

    # -- transaction intake ------------------------------------------------

    def submit_tx(self, tx: BallotTx, gossip: bool = True) -> list[Outbound]:
        """Validate against chain + pool; pool and gossip when fresh.

        Raises TxError (DoubleVote and friends) for invalid submissions;
        gossip duplicates dedup silently.
        """
        if tx.ballot_hash in self.pool or self.chain.find_tx(tx.ballot_hash):
            if gossip:  # direct resubmission of a spent token
                self.telemetry["rejected_txs"] += 1
                from anchorvote.ledger import DoubleVote

                raise DoubleVote(tx.token_serial.hex())
            return []
        pending = {t.token_serial for t in self.pool.values()}
        try:
            validate_tx(self.chain, tx, pending_serials=pending)
        except TxError:
            self.telemetry["rejected_txs"] += 1
            raise
        self.pool[tx.ballot_hash] = tx
        if not gossip:
            return []
        return [
            Outbound(
                BROADCAST,
                ConsensusMessage(
                    kind=TX_GOSSIP,
                    election_id=self.config.election_id,
                    height=self.view.height,
                    round=self.view.round,
                    sender=self.vid,
                    block={"tx": tx.to_dict()},
                ),
            )
        ]

    def _evict_committed(self) -> None:
        stale = []
        for bh, tx in self.pool.items():
            if self.chain.find_tx(bh) or tx.token_serial in self.chain.nullifiers:
                stale.append(bh)
        for bh in stale:
            del self.pool[bh]

    # -- round lifecycle ---------------------------------------------------

    def _enter_round(self, round_: int, now: int) -> list[Outbound]:
        self.view.round = round_
        self.view.phase = "idle"
        self.view.votes = {}
        self.view.voted_senders = set()
        self.view.proposal = None
        self.view.proposal_msg = None
        self.view.dead = False
        self.deadline = now + self.round_timeout
        if self.is_leader():
            return self._propose(now)
        return []

    def _advance_height(self, now: int) -> list[Outbound]:
        self._sticky = None
        self._evict_committed()
        self._last_commit_time = now
        self.view = ViewState(height=self.chain.height + 1)
        return self._enter_round(0, now)

    def _build_block(self, now: int) -> Block | None:
        txs, pending = [], set()
        for tx in self.pool.values():
            if len(txs) >= self.config.max_txs_per_block:
                break
            try:
                validate_tx(self.chain, tx, pending_serials=pending)
            except TxError:
                continue
            txs.append(tx)
            pending.add(tx.token_serial)
        if not txs:
            heartbeat_due = (
                self.heartbeat_every is not None
                and now - self._last_commit_time >= self.heartbeat_every
            )
            if not heartbeat_due:
                return None
        return make_block(
            election_id=self.config.election_id,
            index=self.view.height,
            timestamp=now,
            prev_hash=self.chain.head.hash,
            txs=txs,
        )

    def _propose(self, now: int) -> list[Outbound]:
        if self._sticky is not None and self._sticky.prev_hash == self.chain.head.hash:
            block = self._sticky
        else:
            block = self._build_block(now)
        if block is None:
            return []
        msg = sign_envelope(
            ConsensusMessage(
                kind=PROPOSE,
                election_id=self.config.election_id,
                height=self.view.height,
                round=self.view.round,
                sender=self.vid,
                block=block.to_dict(),
            ),
            self.key,
        )
        out = [Outbound(BROADCAST, msg)]
        # Process our own proposal so we record it and vote.
        out.extend(self._handle_propose(msg.to_dict(), now))
        return out

    # -- timers -------------------------------------------------------------

    def on_tick(self, now: int) -> list[Outbound]:
        if now < self.deadline:
            return []
        out = []
        # Catch-up probe: whoever is ahead answers with certificates.
        out.append(
            Outbound(
                BROADCAST,
                ConsensusMessage(
                    kind=SYNC,
                    election_id=self.config.election_id,
                    height=self.view.height,
                    round=self.view.round,
                    sender=self.vid,
                ),
            )
        )
        if self.view.phase == "voted" and self.view.proposal is not None:
            out.append(self._vote_msg(self.view.proposal))  # redelivery
        if (
            self.view.proposal is not None
            or self._sticky is not None
            or self.pool
            or self.view.dead
        ):
            self.telemetry["timeouts"] += 1
            out.extend(self._enter_round(self.view.round + 1, now))
        else:
            self.deadline = now + self.round_timeout
            if self.is_leader():
                out.extend(self._propose(now))  # heartbeat cadence
        return out

    # -- message handling ----------------------------------------------------

    def on_message(self, msg_dict: dict, now: int) -> list[Outbound]:
        try:
            msg = ConsensusMessage.from_dict(dict(msg_dict))
        except (KeyError, TypeError, ValueError):
            self.telemetry["invalid_dropped"] += 1
            return []
        if msg.election_id != self.config.election_id:
            self.telemetry["invalid_dropped"] += 1
            return []
        if msg.kind == TX_GOSSIP:
            return self._handle_tx_gossip(msg)
        if msg.kind == SYNC:
            return self._handle_sync(msg)
        if msg.kind == COMMIT:
            return self._handle_commit(msg, now)
        if msg.height < self.view.height:
            self.telemetry["stale_dropped"] += 1
            return []
        if msg.height > self.view.height:
            # We are behind; our own sync probe will pull certificates.
            self.telemetry["future_dropped"] += 1
            return []
        out = []
        if msg.round > self.view.round and msg.kind in (PROPOSE, VOTE, VIEW_CHANGE):
            # Round catch-up: independent timers drift, so peers already in
            # a later round pull us forward; the old round's votes drop.
            out.extend(self._enter_round(msg.round, now))
        if msg.kind == PROPOSE:
            out.extend(self._handle_propose(msg.to_dict(), now))
        elif msg.kind == VOTE:
            out.extend(self._handle_vote(msg, now))
        elif msg.kind == VIEW_CHANGE:
            out.extend(self._handle_view_change(msg, now))
        else:
            self.telemetry["invalid_dropped"] += 1
        return out

    def _handle_tx_gossip(self, msg: ConsensusMessage) -> list[Outbound]:
        try:
            tx = BallotTx.from_dict(msg.block["tx"])
        except (KeyError, TypeError, ValueError):
            self.telemetry["invalid_dropped"] += 1
            return []
        try:
            self.submit_tx(tx, gossip=False)
        except TxError:
            pass
        return []

    def _handle_sync(self, msg: ConsensusMessage) -> list[Outbound]:
        out = []
        height = msg.height
        for h in range(height, min(height + CATCHUP_BATCH, self.chain.height + 1)):
            cert = self.certs.get(h)
            if cert is not None:
                out.append(Outbound(msg.sender, cert))
        return out

    def _validate_proposal_block(self, block: Block) -> str | None:
        """Everything apply_block checks except the quorum; returns an
        offending ballot hash hex for pool eviction, raises on failure."""
        head = self.chain.head
        if block.index != self.view.height or block.prev_hash != head.hash:
            raise LedgerError("proposal does not extend head")
        if block.mode is not None:
            raise LedgerError("unexpected mode marker")
        if block_hash(block, self.config.election_id) != block.hash:
            raise LedgerError("proposal hash does not recompute")
        if compute_ballot_root(block.txs) != block.ballot_root:
            raise LedgerError("proposal root does not recompute")
        pending = set()
        for tx in block.txs:
            try:
                validate_tx(self.chain, tx, pending_serials=pending)
            except TxError as exc:
                exc.offender = digest_hex(tx.ballot_hash)
                raise
            pending.add(tx.token_serial)
        return None

    def _handle_propose(self, msg_dict: dict, now: int) -> list[Outbound]:
        msg = ConsensusMessage.from_dict(msg_dict)
        if msg.round != self.view.round or self.view.dead:
            self.telemetry["stale_dropped"] += 1
            return []
        expected_leader = self._leader_id(msg.height, msg.round)
        key = self._keys.get(msg.sender)
        if msg.sender != expected_leader or key is None:
            self.telemetry["invalid_dropped"] += 1
            return []
        if not verify_envelope(msg_dict, key):
            self.telemetry["invalid_dropped"] += 1
            return []
        if msg.block is None:
            self.telemetry["invalid_dropped"] += 1
            return []
        prior = self.view.proposal_msg
        if prior is not None:
            if prior["block"]["hash"] == msg.block["hash"]:
                return []  # duplicate delivery
            # Same leader, same round, different block: equivocation.
            self.telemetry["equivocations_seen"] += 1
            vc = ConsensusMessage(
                kind=VIEW_CHANGE,
                election_id=self.config.election_id,
                height=self.view.height,
                round=self.view.round,
                sender=self.vid,
                evidence=(prior, msg_dict),
            )
            self.telemetry["view_changes"] += 1
            out = [Outbound(BROADCAST, vc)]
            out.extend(self._enter_round(self.view.round + 1, now))
            return out
        try:
            block = Block.from_dict(msg.block)
            self._validate_proposal_block(block)
        except LedgerError as exc:
            offender = getattr(exc, "offender", None)
            if offender is not None:
                self.pool.pop(digest_from_hex(offender), None)
            self.telemetry["invalid_proposals"] += 1
            return []
        except (KeyError, TypeError, ValueError):
            self.telemetry["invalid_dropped"] += 1
            return []
        self.view.proposal = block
        self.view.proposal_msg = msg_dict
        self._sticky = block
        self.view.phase = "proposed"
        # Proposals re-gossip their transactions into every pool.
        for tx in block.txs:
            try:
                self.submit_tx(tx, gossip=False)
            except TxError:
                pass
        out = []
        if self.vid not in self.view.voted_senders:
            vote = self._vote_msg(block)
            sig = vote.msg.signature
            self.view.voted_senders.add(self.vid)
            self.view.votes.setdefault(digest_hex(block.hash), {})[self.vid] = sig
            self.view.phase = "voted"
            out.append(vote)
        out.extend(self._try_commit(now))
        return out

    def _vote_msg(self, block: Block) -> Outbound:
        return Outbound(
            BROADCAST,
            ConsensusMessage(
                kind=VOTE,
                election_id=self.config.election_id,
                height=self.view.height,
                round=self.view.round,
                sender=self.vid,
                block_hash=digest_hex(block.hash),
                signature=sign_block_hash(block.hash, self.key),
            ),
        )

    def _handle_vote(self, msg: ConsensusMessage, now: int) -> list[Outbound]:
        if msg.round != self.view.round or self.view.dead:
            self.telemetry["stale_dropped"] += 1
            return []
        key = self._keys.get(msg.sender)
        if key is None or msg.block_hash is None or msg.signature is None:
            self.telemetry["invalid_dropped"] += 1
            return []
        if msg.sender in self.view.voted_senders:
            self.telemetry["stale_dropped"] += 1
            return []
        try:
            bhash = digest_from_hex(msg.block_hash)
        except ValueError:
            self.telemetry["invalid_dropped"] += 1
            return []
        if not verify_block_sig(bhash, msg.signature, key):
            self.telemetry["invalid_dropped"] += 1
            return []
        self.view.voted_senders.add(msg.sender)
        self.view.votes.setdefault(msg.block_hash, {})[msg.sender] = msg.signature
        return self._try_commit(now)

    def _try_commit(self, now: int) -> list[Outbound]:
        if self.view.proposal is None:
            return []
        hh = digest_hex(self.view.proposal.hash)
        votes = self.view.votes.get(hh, {})
        if len(votes) < self.config.quorum:
            return []
        signed = replace(
            self.view.proposal,
            signatures=tuple(sorted(votes.items())),
        )
        cert = ConsensusMessage(
            kind=COMMIT,
            election_id=self.config.election_id,
            height=self.view.height,
            round=self.view.round,
            sender=self.vid,
            block=signed.to_dict(),
        )
        out = [Outbound(BROADCAST, cert)]
        out.extend(self._apply_cert(cert, signed, now))
        return out

    def _handle_commit(self, msg: ConsensusMessage, now: int) -> list[Outbound]:
        if msg.block is None:
            self.telemetry["invalid_dropped"] += 1
            return []
        if msg.height <= self.chain.height:
            return []  # already have it
        if msg.height > self.chain.height + 1:
            self.future_certs[msg.height] = msg
            return []
        try:
            block = Block.from_dict(msg.block)
        except (KeyError, TypeError, ValueError):
            self.telemetry["invalid_dropped"] += 1
            return []
        return self._apply_cert(msg, block, now)

    def _apply_cert(
        self, cert: ConsensusMessage, block: Block, now: int
    ) -> list[Outbound]:
        try:
            self.chain = apply_block(self.chain, block)
        except LedgerError:
            self.telemetry["invalid_dropped"] += 1
            return []
        height = block.index
        self.certs[height] = cert
        self.rounds_used[height] = self.view.round + 1
        self.commit_log.append((height, digest_hex(block.hash)))
        self.telemetry["commits"] += 1
        out = self._advance_height(now)
        nxt = self.future_certs.pop(self.chain.height + 1, None)
        if nxt is not None:
            out.extend(self._handle_commit(nxt, now))
        return out

    def _handle_view_change(self, msg: ConsensusMessage, now: int) -> list[Outbound]:
        if msg.round != self.view.round or self.view.dead:
            return []
        if not self._verify_equivocation(msg):
            self.telemetry["invalid_dropped"] += 1
            return []
        self.telemetry["view_changes"] += 1
        return self._enter_round(self.view.round + 1, now)

    def _verify_equivocation(self, msg: ConsensusMessage) -> bool:
        if len(msg.evidence) != 2:
            return False
        try:
            a, b = (dict(e) for e in msg.evidence)
            if a["kind"] != PROPOSE or b["kind"] != PROPOSE:
                return False
            if (a["height"], a["round"]) != (msg.height, msg.round):
                return False
            if (b["height"], b["round"]) != (msg.height, msg.round):
                return False
            if a["sender"] != b["sender"]:
                return False
            if a["sender"] != self._leader_id(msg.height, msg.round):
                return False
            if a["block"]["hash"] == b["block"]["hash"]:
                return False
            key = self._keys.get(a["sender"])
            if key is None:
                return False
            return verify_envelope(a, key) and verify_envelope(b, key)
        except (KeyError, TypeError):
            return False
