"""Trustee ceremony and the threshold tally.

A dealer samples the election secret inside the offline ceremony,
shares it t-of-n, hands each trustee one share, and destroys its own
state; only the public key persists. After close, trustees compute
per-ballot partial decryptions independently; any t submissions combine
into the final counts, which are cross-checked against the chain audit
and the public anchors. Undecryptable ballots are reported, never
dropped, and any nonempty set fails the audit.
"""

import time
from dataclasses import dataclass, field

from anchorvote.canonical import canon_dumps, canon_loads
from anchorvote.config import ElectionConfig
from anchorvote.crypto import (
    ElgCiphertext,
    GroupParams,
    KeyShare,
    NotACandidate,
    PartialDecryption,
    digest_from_hex,
    digest_hex,
    eg_combine,
    eg_keygen,
    eg_partial_decrypt,
    shamir_split,
)
from anchorvote.crypto import InsufficientShares
from anchorvote.crypto.shamir import BadThreshold  # noqa: F401  (re-raised)
from anchorvote.ledger import verify_chain


class TallyError(Exception):
    code = "tally"


class ElectionOpen(TallyError):
    code = "election_open"


class AlreadyClosed(TallyError):
    code = "already_closed"


class UnknownTrustee(TallyError):
    code = "unknown_trustee"


class DuplicateSubmission(TallyError):
    code = "duplicate_submission"


class InsufficientTrustees(InsufficientShares):
    """Fewer trustee submissions than the threshold."""

    code = "insufficient_shares"


class MissingPartials(TallyError):
    code = "missing_partials"

    def __init__(self, ballot_hashes):
        super().__init__(f"{len(ballot_hashes)} ballots lack enough partials")
        self.ballot_hashes = ballot_hashes


@dataclass(frozen=True)
class TrusteeShare:
    trustee_id: str
    share: KeyShare
    issued_at: int

    def to_dict(self) -> dict:
        return {
            "trustee_id": self.trustee_id,
            "share": self.share.to_dict(),
            "issued_at": self.issued_at,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TrusteeShare":
        return cls(
            trustee_id=data["trustee_id"],
            share=KeyShare.from_dict(data["share"]),
            issued_at=data["issued_at"],
        )

    def save(self, path) -> None:
        with open(path, "w", encoding="ascii") as fh:
            fh.write(canon_dumps(self.to_dict()) + "\n")

    @classmethod
    def load(cls, path) -> "TrusteeShare":
        with open(path, "r", encoding="ascii") as fh:
            return cls.from_dict(canon_loads(fh.read()))


@dataclass
class TallyResult:
    counts: dict
    total_decrypted: int
    undecryptable: list  # ballot hash hex strings
    crosscheck_passed: bool

    def to_dict(self) -> dict:
        return {
            "counts": dict(sorted(self.counts.items())),
            "total_decrypted": self.total_decrypted,
            "undecryptable": list(self.undecryptable),
            "crosscheck_passed": self.crosscheck_passed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TallyResult":
        return cls(
            counts=dict(data["counts"]),
            total_decrypted=data["total_decrypted"],
            undecryptable=list(data["undecryptable"]),
            crosscheck_passed=data["crosscheck_passed"],
        )


def ceremony_keygen(
    params: GroupParams, t: int, trustee_ids: list, rng, clock=None
):
    """Dealer ceremony: returns (election public key, trustee shares).

    The secret and polynomial exist only in this frame; nothing but the
    shares and the public key leave it.
    """
    now = (clock or (lambda: int(time.time())))()
    pair = eg_keygen(params, rng)
    shares = shamir_split(pair.x, t, len(trustee_ids), params.q, rng)
    issued = [
        TrusteeShare(trustee_id=tid, share=share, issued_at=now)
        for tid, share in zip(trustee_ids, shares)
    ]
    return pair.h, issued


@dataclass(frozen=True)
class FrozenBallot:
    ballot_hash: bytes
    ciphertext: ElgCiphertext

    def to_dict(self) -> dict:
        return {
            "ballot_hash": digest_hex(self.ballot_hash),
            "ciphertext": self.ciphertext.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "FrozenBallot":
        return cls(
            ballot_hash=digest_from_hex(data["ballot_hash"]),
            ciphertext=ElgCiphertext.from_dict(data["ciphertext"]),
        )


def freeze_ballots(state) -> list:
    """The immutable ordered ballot list the tally runs over."""
    return [
        FrozenBallot(ballot_hash=tx.ballot_hash, ciphertext=tx.ciphertext)
        for _, tx in state.ballots()
    ]


def compute_partials(
    params: GroupParams, share: KeyShare, frozen: list
) -> list:
    """Trustee-side: partial decryption for every ballot in frozen order."""
    return [eg_partial_decrypt(params, share, fb.ciphertext) for fb in frozen]


@dataclass
class PartialStore:
    """Collects trustee submissions keyed by (trustee, ballot)."""

    config: ElectionConfig
    submissions: dict = field(default_factory=dict)  # trustee_id -> {hash: Partial}

    def accept(self, trustee_id: str, partials: dict) -> None:
        """partials: ballot hash hex -> PartialDecryption."""
        info = self.config.trustee_by_id(trustee_id)
        if info is None:
            raise UnknownTrustee(trustee_id)
        if trustee_id in self.submissions:
            raise DuplicateSubmission(trustee_id)
        for part in partials.values():
            if part.index != info.share_index:
                raise UnknownTrustee(
                    f"{trustee_id} submitted share index {part.index}, "
                    f"registered {info.share_index}"
                )
        self.submissions[trustee_id] = dict(partials)

    def trustee_count(self) -> int:
        return len(self.submissions)


def combine_tally(
    store: PartialStore,
    frozen: list,
    config: ElectionConfig,
    chain_blocks,
    anchor_agent,
) -> TallyResult:
    """Threshold-combine every ballot, then audit the whole record."""
    t = config.threshold
    if store.trustee_count() < t:
        raise InsufficientTrustees(
            f"{store.trustee_count()} trustee submissions, need {t}"
        )
    missing = []
    per_ballot: list[list[PartialDecryption]] = []
    for fb in frozen:
        hh = digest_hex(fb.ballot_hash)
        parts = [
            sub[hh] for sub in store.submissions.values() if hh in sub
        ]
        if len(parts) < t:
            missing.append(hh)
        per_ballot.append(parts)
    if missing:
        raise MissingPartials(missing)

    counts = {label: 0 for label in config.candidates}
    undecryptable = []
    for fb, parts in zip(frozen, per_ballot):
        try:
            idx = eg_combine(
                config.group, parts[:t], fb.ciphertext, config.candidate_count, t
            )
            counts[config.candidates[idx]] += 1
        except NotACandidate:
            undecryptable.append(digest_hex(fb.ballot_hash))

    crosscheck = _crosscheck(config, chain_blocks, anchor_agent, frozen, undecryptable)
    return TallyResult(
        counts=counts,
        total_decrypted=len(frozen) - len(undecryptable),
        undecryptable=undecryptable,
        crosscheck_passed=crosscheck,
    )


def _crosscheck(config, chain_blocks, anchor_agent, frozen, undecryptable) -> bool:
    """verify_chain clean, every anchor verifies, anchored leaves equal the
    frozen ballot hashes exactly, and nothing was undecryptable."""
    if undecryptable:
        return False
    if verify_chain(chain_blocks, config):
        return False
    if anchor_agent is not None:
        results = anchor_agent.verify_all(chain_blocks)
        if not results or not all(ok for _, ok in results):
            return False
        if anchor_agent.last_anchored != len(chain_blocks) - 1:
            return False  # uncovered tail
        anchored_leaves = []
        for rec in anchor_agent.records:
            from anchorvote.anchoring import batch_leaves

            leaves = batch_leaves(chain_blocks[rec.first_block : rec.last_block + 1])
            # A heartbeat-only range anchors one all-zero placeholder leaf.
            anchored_leaves.extend(l for l in leaves if l != b"\x00" * 32)
        if anchored_leaves != [fb.ballot_hash for fb in frozen]:
            return False
    elif frozen:
        return False  # ballots exist but nothing was ever anchored
    return True
