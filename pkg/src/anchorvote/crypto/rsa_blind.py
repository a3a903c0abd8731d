"""Chaum-style RSA blind signatures for the one-time voting token.

The voter blinds the token digest, the registrar signs the blinded value
without seeing the digest, and the voter unblinds to a plain RSA
signature anyone can verify. Digests are encoded as big-endian integers
reduced mod n.
"""

import math
import random
from dataclasses import dataclass


class BlindingNotInvertible(Exception):
    """Blinding factor shares a divisor with the modulus."""


class OutOfRange(Exception):
    """Value outside [0, n-1]."""


@dataclass(frozen=True)
class RsaKey:
    n: int
    e: int
    d: int | None = None

    def public(self) -> "RsaKey":
        return RsaKey(self.n, self.e)

    def to_dict(self, include_private: bool = False) -> dict:
        out = {"n": self.n, "e": self.e}
        if include_private and self.d is not None:
            out["d"] = self.d
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "RsaKey":
        return cls(n=data["n"], e=data["e"], d=data.get("d"))


def generate_rsa_key(bits: int = 2048, rng: random.Random | None = None) -> RsaKey:
    # Key generation is standard machinery; the blind-signature math
    # below operates on the raw integers.
    if bits >= 1024:
        from cryptography.hazmat.primitives.asymmetric import rsa as _rsa

        key = _rsa.generate_private_key(public_exponent=65537, key_size=bits)
        nums = key.private_numbers()
        return RsaKey(n=nums.public_numbers.n, e=nums.public_numbers.e, d=nums.d)
    return _small_key(bits, rng or random.SystemRandom())


def _small_key(bits: int, rng: random.Random) -> RsaKey:
    """Sub-1024-bit keys for fast tests; the library refuses these sizes."""
    import gmpy2

    e = 65537
    while True:
        p = int(gmpy2.next_prime(rng.getrandbits(bits // 2) | (1 << (bits // 2 - 1))))
        q = int(gmpy2.next_prime(rng.getrandbits(bits - bits // 2) | (1 << (bits - bits // 2 - 1))))
        if p == q:
            continue
        lam = math.lcm(p - 1, q - 1)
        if math.gcd(e, lam) != 1:
            continue
        return RsaKey(n=p * q, e=e, d=pow(e, -1, lam))


def encode_digest(msg: bytes, n: int) -> int:
    return int.from_bytes(msg, "big") % n


def random_blinding_factor(key: RsaKey, rng: random.Random) -> int:
    while True:
        r = rng.randrange(2, key.n)
        if math.gcd(r, key.n) == 1:
            return r


def rsa_blind(msg: bytes, key: RsaKey, r: int) -> int:
    """Blind a digest: encode(msg) * r^e mod n."""
    if not 1 <= r < key.n:
        raise BlindingNotInvertible(f"blinding factor out of range: {r}")
    if math.gcd(r, key.n) != 1:
        raise BlindingNotInvertible("blinding factor not coprime to modulus")
    return (encode_digest(msg, key.n) * pow(r, key.e, key.n)) % key.n


def rsa_sign_blinded(blinded: int, key: RsaKey) -> int:
    """Sign a blinded value; the signer never sees the underlying digest."""
    if key.d is None:
        raise ValueError("private exponent required to sign")
    if not 0 <= blinded < key.n:
        raise OutOfRange(f"blinded value out of range: {blinded}")
    from anchorvote.crypto.numutil import powmod

    return powmod(blinded, key.d, key.n)


def rsa_unblind(blind_sig: int, r: int, key: RsaKey) -> int:
    """Strip the blinding factor: blind_sig * r^-1 mod n."""
    if math.gcd(r, key.n) != 1:
        raise BlindingNotInvertible("blinding factor not coprime to modulus")
    return (blind_sig * pow(r, -1, key.n)) % key.n


def rsa_verify(msg: bytes, sig: int, key: RsaKey) -> bool:
    """True iff sig^e mod n equals the encoded digest."""
    if not isinstance(sig, int) or not 0 <= sig < key.n:
        return False
    return pow(sig, key.e, key.n) == encode_digest(msg, key.n)
