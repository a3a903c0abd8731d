"""Shamir t-of-n secret sharing over the prime field of order q."""

import random
from dataclasses import dataclass


class BadThreshold(Exception):
    pass


@dataclass(frozen=True)
class KeyShare:
    index: int
    value: int

    def to_dict(self) -> dict:
        return {"index": self.index, "value": self.value}

    @classmethod
    def from_dict(cls, data: dict) -> "KeyShare":
        return cls(index=data["index"], value=data["value"])


def shamir_split(
    secret: int, t: int, n: int, q: int, rng: random.Random
) -> list[KeyShare]:
    """Evaluate a random degree-(t-1) polynomial with f(0)=secret at 1..n."""
    if not 1 <= t <= n < q:
        raise BadThreshold(f"need 1 <= t <= n < q, got t={t} n={n} q={q}")
    if not 0 <= secret < q:
        raise ValueError("secret out of field range")
    coeffs = [secret] + [rng.randrange(0, q) for _ in range(t - 1)]
    shares = []
    for j in range(1, n + 1):
        acc = 0
        for c in reversed(coeffs):
            acc = (acc * j + c) % q
        shares.append(KeyShare(index=j, value=acc))
    return shares


def lagrange_at_zero(indices: list[int], q: int) -> dict[int, int]:
    """Lagrange coefficients at zero for the given evaluation points."""
    lam = {}
    for j in indices:
        num, den = 1, 1
        for m in indices:
            if m == j:
                continue
            num = (num * m) % q
            den = (den * (m - j)) % q
        lam[j] = (num * pow(den, -1, q)) % q
    return lam


def shamir_recombine(shares: list[KeyShare], q: int) -> int:
    lam = lagrange_at_zero([s.index for s in shares], q)
    return sum(s.value * lam[s.index] for s in shares) % q
