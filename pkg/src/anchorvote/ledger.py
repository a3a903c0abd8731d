"""The private permissioned chain: ballot transactions, blocks, the
token nullifier set, and full-chain verification.

Every hash is computed over the canonical text encoding. The block
header hash covers (index, timestamp, prev_hash, ballot_root,
election_id) - signatures and the stored hash never feed back into it.
The genesis header additionally records the election mode.
"""

from dataclasses import dataclass, field, replace

from anchorvote.canonical import append_journal, canon_bytes, canon_loads, read_journal
from anchorvote.config import MODE_DEMO, ElectionConfig
from anchorvote.crypto import (
    ElgCiphertext,
    ZERO_DIGEST,
    digest_from_hex,
    digest_hex,
    in_subgroup,
    merkle_root,
    rsa_verify,
    sha256,
)
from anchorvote.crypto.rsa_blind import RsaKey, rsa_sign_blinded

TOKEN_PREFIX = b"VOTE-TOKEN"
BLOCK_SIG_PREFIX = b"BLOCK-SIG"
SERIAL_LEN = 32


class LedgerError(Exception):
    code = "ledger"


class TxError(LedgerError):
    code = "tx"


class WrongElection(TxError):
    code = "wrong_election"


class InvalidToken(TxError):
    code = "invalid_token"


class DoubleVote(TxError):
    code = "double_vote"


class MalformedCiphertext(TxError):
    code = "malformed_ciphertext"


class HashMismatch(TxError):
    code = "hash_mismatch"


class BadParent(LedgerError):
    code = "bad_parent"


class BadQuorum(LedgerError):
    code = "bad_quorum"


class BadRoot(LedgerError):
    code = "bad_root"


class TxInvalid(LedgerError):
    code = "tx_invalid"

    def __init__(self, index: int, reason: str, message: str = ""):
        super().__init__(f"tx {index}: {reason} {message}".strip())
        self.index = index
        self.reason = reason


class RangeOutOfBounds(LedgerError):
    code = "range_out_of_bounds"


def token_message(election_id: str, serial: bytes) -> bytes:
    """Digest the registrar's blind signature must cover for a token."""
    return sha256(TOKEN_PREFIX + election_id.encode("utf-8") + serial)


def block_sig_message(block_hash: bytes) -> bytes:
    return sha256(BLOCK_SIG_PREFIX + block_hash)


@dataclass(frozen=True)
class BallotTx:
    election_id: str
    ciphertext: ElgCiphertext
    token_serial: bytes
    token_sig: int
    ballot_hash: bytes
    candidate: str | None = None  # demo mode only

    def body_dict(self) -> dict:
        out = {
            "election_id": self.election_id,
            "ciphertext": self.ciphertext.to_dict(),
            "token_serial": self.token_serial.hex(),
            "token_sig": self.token_sig,
        }
        if self.candidate is not None:
            out["candidate"] = self.candidate
        return out

    def to_dict(self) -> dict:
        out = self.body_dict()
        out["ballot_hash"] = digest_hex(self.ballot_hash)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "BallotTx":
        serial = bytes.fromhex(data["token_serial"])
        if len(serial) != SERIAL_LEN:
            raise ValueError(f"token serial must be {SERIAL_LEN} bytes")
        return cls(
            election_id=data["election_id"],
            ciphertext=ElgCiphertext.from_dict(data["ciphertext"]),
            token_serial=serial,
            token_sig=data["token_sig"],
            ballot_hash=digest_from_hex(data["ballot_hash"]),
            candidate=data.get("candidate"),
        )


def ballot_hash_of(body: dict) -> bytes:
    return sha256(canon_bytes(body))


def make_ballot_tx(
    election_id: str,
    ciphertext: ElgCiphertext,
    token_serial: bytes,
    token_sig: int,
    candidate: str | None = None,
) -> BallotTx:
    tx = BallotTx(
        election_id=election_id,
        ciphertext=ciphertext,
        token_serial=token_serial,
        token_sig=token_sig,
        ballot_hash=ZERO_DIGEST,
        candidate=candidate,
    )
    return replace(tx, ballot_hash=ballot_hash_of(tx.body_dict()))


@dataclass(frozen=True)
class Block:
    index: int
    timestamp: int
    prev_hash: bytes
    txs: tuple
    ballot_root: bytes
    hash: bytes
    signatures: tuple = ()  # of (validator_id, signature int)
    mode: str | None = None  # recorded on genesis only

    def to_dict(self) -> dict:
        out = {
            "index": self.index,
            "timestamp": self.timestamp,
            "prev_hash": digest_hex(self.prev_hash),
            "ballot_root": digest_hex(self.ballot_root),
            "hash": digest_hex(self.hash),
            "txs": [tx.to_dict() for tx in self.txs],
            "signatures": [[vid, sig] for vid, sig in self.signatures],
        }
        if self.mode is not None:
            out["mode"] = self.mode
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "Block":
        return cls(
            index=data["index"],
            timestamp=data["timestamp"],
            prev_hash=digest_from_hex(data["prev_hash"]),
            txs=tuple(BallotTx.from_dict(t) for t in data["txs"]),
            ballot_root=digest_from_hex(data["ballot_root"]),
            hash=digest_from_hex(data["hash"]),
            signatures=tuple((vid, sig) for vid, sig in data["signatures"]),
            mode=data.get("mode"),
        )


def header_dict(block: Block, election_id: str, prev_hash: bytes | None = None) -> dict:
    out = {
        "index": block.index,
        "timestamp": block.timestamp,
        "prev_hash": digest_hex(prev_hash if prev_hash is not None else block.prev_hash),
        "ballot_root": digest_hex(block.ballot_root),
        "election_id": election_id,
    }
    if block.mode is not None:
        out["mode"] = block.mode
    return out


def block_hash(block: Block, election_id: str, prev_hash: bytes | None = None) -> bytes:
    return sha256(canon_bytes(header_dict(block, election_id, prev_hash)))


def compute_ballot_root(txs) -> bytes:
    hashes = [tx.ballot_hash for tx in txs]
    return merkle_root(hashes) if hashes else ZERO_DIGEST


def make_block(
    election_id: str,
    index: int,
    timestamp: int,
    prev_hash: bytes,
    txs,
    mode: str | None = None,
) -> Block:
    block = Block(
        index=index,
        timestamp=timestamp,
        prev_hash=prev_hash,
        txs=tuple(txs),
        ballot_root=compute_ballot_root(txs),
        hash=ZERO_DIGEST,
        mode=mode,
    )
    return replace(block, hash=block_hash(block, election_id))


def sign_block_hash(bhash: bytes, key: RsaKey) -> int:
    return rsa_sign_blinded(
        int.from_bytes(block_sig_message(bhash), "big") % key.n, key
    )


def verify_block_sig(bhash: bytes, sig: int, key: RsaKey) -> bool:
    return rsa_verify(block_sig_message(bhash), sig, key)


def genesis(config: ElectionConfig) -> Block:
    """Deterministic unsigned genesis: any two nodes with the same config
    derive the identical block."""
    return make_block(
        election_id=config.election_id,
        index=0,
        timestamp=config.open_at,
        prev_hash=ZERO_DIGEST,
        txs=(),
        mode=config.mode,
    )


def signed_genesis(config: ElectionConfig, validator_keys: dict) -> Block:
    block = genesis(config)
    sigs = tuple(
        (vid, sign_block_hash(block.hash, key))
        for vid, key in sorted(validator_keys.items())
    )
    return replace(block, signatures=sigs)


@dataclass
class ChainState:
    config: ElectionConfig
    blocks: list = field(default_factory=list)
    nullifiers: set = field(default_factory=set)
    tx_locator: dict = field(default_factory=dict)  # ballot_hash -> (block, pos)

    @classmethod
    def from_genesis(cls, config: ElectionConfig, genesis_block: Block) -> "ChainState":
        expected = genesis(config)
        if block_strip_sigs(genesis_block) != expected:
            raise BadParent("genesis does not match config")
        _check_quorum(genesis_block, config)
        return cls(config=config, blocks=[genesis_block])

    @property
    def head(self) -> Block:
        return self.blocks[-1]

    @property
    def height(self) -> int:
        return self.head.index

    @property
    def mode(self) -> str:
        return self.config.mode

    def ballot_count(self) -> int:
        return len(self.tx_locator)

    def ballots(self):
        """Every committed ballot tx in commit order."""
        for block in self.blocks:
            for tx in block.txs:
                yield block.index, tx

    def find_tx(self, ballot_hash: bytes):
        loc = self.tx_locator.get(ballot_hash)
        if loc is None:
            return None
        bidx, pos = loc
        return bidx, self.blocks[bidx].txs[pos]


def block_strip_sigs(block: Block) -> Block:
    return replace(block, signatures=())


def _check_quorum(block: Block, config: ElectionConfig) -> None:
    valid = set()
    for vid, sig in block.signatures:
        info = config.validator_by_id(vid)
        if info is None or vid in valid:
            continue
        if verify_block_sig(block.hash, sig, info.key):
            valid.add(vid)
    if len(valid) < config.quorum:
        raise BadQuorum(
            f"block {block.index}: {len(valid)} valid signatures, need {config.quorum}"
        )


def _check_tx(
    config: ElectionConfig, tx: BallotTx, nullifiers, pending=frozenset()
) -> None:
    if tx.election_id != config.election_id:
        raise WrongElection(tx.election_id)
    if not rsa_verify(
        token_message(config.election_id, tx.token_serial),
        tx.token_sig,
        config.registrar_key,
    ):
        raise InvalidToken("token signature does not verify")
    if tx.token_serial in nullifiers or tx.token_serial in pending:
        raise DoubleVote(tx.token_serial.hex())
    if not in_subgroup(config.group, tx.ciphertext.c1) or not in_subgroup(
        config.group, tx.ciphertext.c2
    ):
        raise MalformedCiphertext("ciphertext element outside the subgroup")
    if config.mode == MODE_DEMO:
        if tx.candidate is None or tx.candidate not in config.candidates:
            raise MalformedCiphertext("demo-mode tx needs a known candidate label")
    elif tx.candidate is not None:
        raise MalformedCiphertext("sealed-mode tx must not carry a plaintext label")
    if ballot_hash_of(tx.body_dict()) != tx.ballot_hash:
        raise HashMismatch(digest_hex(tx.ballot_hash))


def validate_tx(state: ChainState, tx: BallotTx, pending_serials=frozenset()) -> None:
    """Raise the precise failure; passing means the tx may enter a block."""
    _check_tx(state.config, tx, state.nullifiers, pending_serials)


def apply_block(state: ChainState, block: Block) -> ChainState:
    """Full verification, then an all-or-nothing append."""
    head = state.head
    if block.index != head.index + 1 or block.prev_hash != head.hash:
        raise BadParent(f"block {block.index} does not extend height {head.index}")
    if block.mode is not None:
        raise BadParent("mode marker only belongs on genesis")
    if block_hash(block, state.config.election_id) != block.hash:
        raise BadParent(f"block {block.index}: stored hash does not recompute")
    if compute_ballot_root(block.txs) != block.ballot_root:
        raise BadRoot(f"block {block.index}")
    _check_quorum(block, state.config)
    seen = set()
    for i, tx in enumerate(block.txs):
        try:
            validate_tx(state, tx, pending_serials=seen)
        except TxError as exc:
            raise TxInvalid(i, exc.code, str(exc)) from exc
        seen.add(tx.token_serial)
    new_locator = dict(state.tx_locator)
    for pos, tx in enumerate(block.txs):
        new_locator[tx.ballot_hash] = (block.index, pos)
    return ChainState(
        config=state.config,
        blocks=state.blocks + [block],
        nullifiers=state.nullifiers | seen,
        tx_locator=new_locator,
    )


def get_blocks(state: ChainState, start: int, end: int) -> list:
    if not 0 <= start <= end <= state.height:
        raise RangeOutOfBounds(f"[{start}, {end}] outside [0, {state.height}]")
    return state.blocks[start : end + 1]


@dataclass(frozen=True)
class Finding:
    block_index: int
    code: str
    detail: str

    def to_dict(self) -> dict:
        return {"block": self.block_index, "code": self.code, "detail": self.detail}


def verify_chain(blocks, config: ElectionConfig) -> list:
    """Re-audit a chain from scratch; an empty report means valid.

    A tampered header flags its own block (hash mismatch) and, because
    linkage is recomputed transitively, every descendant (parent
    mismatch).
    """
    findings = []
    if not blocks:
        return [Finding(0, "empty", "no genesis block")]
    expected_genesis = genesis(config)
    if block_strip_sigs(blocks[0]) != expected_genesis:
        findings.append(Finding(0, "genesis", "genesis differs from config"))
    nullifiers = set()
    true_prev = ZERO_DIGEST
    for i, block in enumerate(blocks):
        if block.index != i:
            findings.append(Finding(i, "index_mismatch", f"stored index {block.index}"))
        direct = block_hash(block, config.election_id)
        if direct != block.hash:
            findings.append(Finding(i, "hash_mismatch", "header does not recompute"))
        if block.prev_hash != true_prev:
            findings.append(Finding(i, "parent_mismatch", "chain linkage broken"))
        true_prev = block_hash(block, config.election_id, prev_hash=true_prev)
        if compute_ballot_root(block.txs) != block.ballot_root:
            findings.append(Finding(i, "root_mismatch", "ballot root does not recompute"))
        try:
            _check_quorum(block, config)
        except BadQuorum as exc:
            findings.append(Finding(i, "quorum", str(exc)))
        for j, tx in enumerate(block.txs):
            try:
                _check_tx(config, tx, nullifiers)
            except TxError as exc:
                findings.append(Finding(i, "tx_invalid", f"tx {j}: {exc.code}"))
            nullifiers.add(tx.token_serial)
    return findings


def save_chain(path, blocks) -> None:
    from anchorvote.canonical import canon_dumps

    with open(path, "w", encoding="ascii") as fh:
        for block in blocks:
            fh.write(canon_dumps(block.to_dict()) + "\n")


def append_block_line(path, block: Block) -> None:
    append_journal(path, block.to_dict())


def load_chain(path) -> list:
    return [Block.from_dict(rec) for rec in read_journal(path)]


def replay_chain(blocks, config: ElectionConfig) -> ChainState:
    """Rebuild state from persisted blocks; raises on any violation."""
    state = ChainState.from_genesis(config, blocks[0])
    for block in blocks[1:]:
        state = apply_block(state, block)
    return state
