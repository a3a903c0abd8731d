"""Exponential ElGamal over a prime-order subgroup, with threshold
decryption via Shamir-shared secret keys.

Candidate i is encoded as g^(i+1) so the identity never encodes a
candidate; decryption searches the bounded candidate range. Partial
decryptions c1^share combine through Lagrange weighting at zero.
"""

import random
from dataclasses import dataclass

from anchorvote.crypto.numutil import invmod, is_probable_prime, powmod
from anchorvote.crypto.shamir import KeyShare, lagrange_at_zero

MAX_CANDIDATES = 2**16


class CandidateOutOfRange(Exception):
    pass


class NotACandidate(Exception):
    """Decryption landed outside the candidate range: corrupted or
    mis-keyed ciphertext."""


class InsufficientShares(Exception):
    pass


class DuplicateShareIndex(Exception):
    pass


@dataclass(frozen=True)
class GroupParams:
    p: int
    q: int
    g: int

    def validate(self) -> None:
        if not is_probable_prime(self.p):
            raise ValueError("p is not prime")
        if not is_probable_prime(self.q):
            raise ValueError("q is not prime")
        if (self.p - 1) % self.q != 0:
            raise ValueError("q does not divide p-1")
        if self.g in (0, 1) or powmod(self.g, self.q, self.p) != 1:
            raise ValueError("g does not generate an order-q subgroup")

    def to_dict(self) -> dict:
        return {"p": self.p, "q": self.q, "g": self.g}

    @classmethod
    def from_dict(cls, data: dict) -> "GroupParams":
        return cls(p=data["p"], q=data["q"], g=data["g"])


@dataclass(frozen=True)
class ElgKeyPair:
    x: int
    h: int


@dataclass(frozen=True)
class ElgCiphertext:
    c1: int
    c2: int

    def to_dict(self) -> dict:
        return {"c1": self.c1, "c2": self.c2}

    @classmethod
    def from_dict(cls, data: dict) -> "ElgCiphertext":
        return cls(c1=data["c1"], c2=data["c2"])


@dataclass(frozen=True)
class PartialDecryption:
    """One trustee's contribution: d = c1^share mod p, tagged with the
    share index used for Lagrange weighting."""

    index: int
    value: int

    def to_dict(self) -> dict:
        return {"index": self.index, "value": self.value}

    @classmethod
    def from_dict(cls, data: dict) -> "PartialDecryption":
        return cls(index=data["index"], value=data["value"])


# Tiny group for fast deterministic tests: 2 generates the 11 quadratic
# residues mod 23.
TOY_GROUP = GroupParams(p=23, q=11, g=2)

# 2048-bit MODP safe prime (RFC 3526 group 14); p = 2q+1 with q prime,
# and 2 generates the order-q subgroup of quadratic residues.
_MODP_2048_P = int(
    "FFFFFFFFFFFFFFFFC90FDAA22168C234C4C6628B80DC1CD129024E088A67CC74"
    "020BBEA63B139B22514A08798E3404DDEF9519B3CD3A431B302B0A6DF25F1437"
    "4FE1356D6D51C245E485B576625E7EC6F44C42E9A637ED6B0BFF5CB6F406B7ED"
    "EE386BFB5A899FA5AE9F24117C4B1FE649286651ECE45B3DC2007CB8A163BF05"
    "98DA48361C55D39A69163FA8FD24CF5F83655D23DCA3AD961C62F356208552BB"
    "9ED529077096966D670C354E4ABC9804F1746C08CA18217C32905E462E36CE3B"
    "E39E772C180E86039B2783A2EC07A28FB5C55DF06F4C52C9DE2BCBF695581718"
    "3995497CEA956AE515D2261898FA051015728E5A8AACAA68FFFFFFFFFFFFFFFF",
    16,
)


def default_group() -> GroupParams:
    return GroupParams(p=_MODP_2048_P, q=(_MODP_2048_P - 1) // 2, g=2)


def in_subgroup(params: GroupParams, element: int) -> bool:
    if not 1 <= element < params.p:
        return False
    return powmod(element, params.q, params.p) == 1


def eg_keygen(params: GroupParams, rng: random.Random) -> ElgKeyPair:
    x = rng.randrange(1, params.q)
    return ElgKeyPair(x=x, h=powmod(params.g, x, params.p))


def eg_encrypt(
    params: GroupParams,
    h: int,
    candidate_index: int,
    k: int,
    candidate_count: int = MAX_CANDIDATES,
) -> ElgCiphertext:
    if not 0 <= candidate_index < min(candidate_count, MAX_CANDIDATES):
        raise CandidateOutOfRange(f"candidate index {candidate_index}")
    if not 1 <= k <= params.q - 1:
        raise ValueError("nonce k out of range")
    m = powmod(params.g, candidate_index + 1, params.p)
    c1 = powmod(params.g, k, params.p)
    c2 = (m * powmod(h, k, params.p)) % params.p
    return ElgCiphertext(c1=c1, c2=c2)


def _search_candidate(params: GroupParams, m: int, candidate_count: int) -> int:
    acc = 1
    for i in range(candidate_count):
        acc = (acc * params.g) % params.p
        if acc == m:
            return i
    raise NotACandidate("plaintext element encodes no candidate")


def eg_decrypt(
    params: GroupParams, x: int, ct: ElgCiphertext, candidate_count: int
) -> int:
    if candidate_count < 1:
        raise ValueError("candidate_count must be >= 1")
    m = (ct.c2 * invmod(powmod(ct.c1, x, params.p), params.p)) % params.p
    return _search_candidate(params, m, candidate_count)


def eg_partial_decrypt(
    params: GroupParams, share: KeyShare, ct: ElgCiphertext
) -> PartialDecryption:
    return PartialDecryption(
        index=share.index, value=powmod(ct.c1, share.value, params.p)
    )


def eg_combine(
    params: GroupParams,
    partials: list[PartialDecryption],
    ct: ElgCiphertext,
    candidate_count: int,
    threshold: int,
) -> int:
    """Reconstruct c1^x from >= threshold partials and finish decryption.

    Equals eg_decrypt with the dealer secret for every qualifying subset.
    """
    if len(partials) < threshold:
        raise InsufficientShares(
            f"got {len(partials)} partials, need {threshold}"
        )
    indices = [p.index for p in partials]
    if len(set(indices)) != len(indices):
        raise DuplicateShareIndex("partials carry repeated share indices")
    lam = lagrange_at_zero(indices, params.q)
    c1x = 1
    for part in partials:
        c1x = (c1x * powmod(part.value, lam[part.index], params.p)) % params.p
    m = (ct.c2 * invmod(c1x, params.p)) % params.p
    return _search_candidate(params, m, candidate_count)
