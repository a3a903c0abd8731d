"""Cryptographic primitives: hashing, RSA blind signatures, threshold
ElGamal over a prime-order subgroup, Shamir sharing, and Merkle trees."""

from anchorvote.crypto.hashes import (
    DIGEST_LEN,
    ZERO_DIGEST,
    digest_from_hex,
    digest_hex,
    sha256,
)
from anchorvote.crypto.rsa_blind import (
    BlindingNotInvertible,
    OutOfRange,
    RsaKey,
    encode_digest,
    generate_rsa_key,
    random_blinding_factor,
    rsa_blind,
    rsa_sign_blinded,
    rsa_unblind,
    rsa_verify,
)
from anchorvote.crypto.elgamal import (
    TOY_GROUP,
    CandidateOutOfRange,
    DuplicateShareIndex,
    ElgCiphertext,
    ElgKeyPair,
    GroupParams,
    InsufficientShares,
    NotACandidate,
    PartialDecryption,
    default_group,
    eg_combine,
    eg_decrypt,
    eg_encrypt,
    eg_keygen,
    eg_partial_decrypt,
    in_subgroup,
)
from anchorvote.crypto.shamir import (
    BadThreshold,
    KeyShare,
    lagrange_at_zero,
    shamir_recombine,
    shamir_split,
)
from anchorvote.crypto.merkle import (
    EmptyBatch,
    IndexOutOfRange,
    MerkleProof,
    merkle_prove,
    merkle_root,
    merkle_verify,
)
from anchorvote.crypto.numutil import default_rng, invmod, powmod

__all__ = [
    "DIGEST_LEN",
    "ZERO_DIGEST",
    "sha256",
    "digest_hex",
    "digest_from_hex",
    "RsaKey",
    "BlindingNotInvertible",
    "OutOfRange",
    "generate_rsa_key",
    "encode_digest",
    "random_blinding_factor",
    "rsa_blind",
    "rsa_sign_blinded",
    "rsa_unblind",
    "rsa_verify",
    "GroupParams",
    "ElgKeyPair",
    "ElgCiphertext",
    "PartialDecryption",
    "TOY_GROUP",
    "default_group",
    "CandidateOutOfRange",
    "NotACandidate",
    "InsufficientShares",
    "DuplicateShareIndex",
    "eg_keygen",
    "eg_encrypt",
    "eg_decrypt",
    "eg_partial_decrypt",
    "eg_combine",
    "in_subgroup",
    "KeyShare",
    "BadThreshold",
    "shamir_split",
    "shamir_recombine",
    "lagrange_at_zero",
    "MerkleProof",
    "EmptyBatch",
    "IndexOutOfRange",
    "merkle_root",
    "merkle_prove",
    "merkle_verify",
    "powmod",
    "invmod",
    "default_rng",
]
