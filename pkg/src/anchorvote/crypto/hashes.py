"""SHA-256 digests and their canonical lowercase-hex text form."""

import hashlib

DIGEST_LEN = 32
ZERO_DIGEST = b"\x00" * DIGEST_LEN
ZERO_DIGEST_HEX = "0" * 64


def sha256(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def digest_hex(digest: bytes) -> str:
    if len(digest) != DIGEST_LEN:
        raise ValueError(f"digest must be {DIGEST_LEN} bytes, got {len(digest)}")
    return digest.hex()


def digest_from_hex(text: str) -> bytes:
    if len(text) != 2 * DIGEST_LEN or text != text.lower():
        raise ValueError("digest hex must be 64 lowercase hex chars")
    return bytes.fromhex(text)
