"""Big-integer helpers and the injectable randomness source.

All nonces and blinding factors flow through an rng object with the
`random.Random` interface, so production code gets `SystemRandom` while
tests pass a seeded `random.Random` for reproducible transcripts.
"""

import math
import random

try:
    import gmpy2

    def powmod(base: int, exp: int, mod: int) -> int:
        return int(gmpy2.powmod(base, exp, mod))

    def is_probable_prime(n: int) -> bool:
        return bool(gmpy2.is_prime(n))

except ImportError:  # pragma: no cover - gmpy2 is a declared dependency

    def powmod(base: int, exp: int, mod: int) -> int:
        return pow(base, exp, mod)

    def is_probable_prime(n: int, rounds: int = 40) -> bool:
        if n < 2:
            return False
        for p in (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37):
            if n % p == 0:
                return n == p
        d, s = n - 1, 0
        while d % 2 == 0:
            d //= 2
            s += 1
        rng = random.Random(0xC0FFEE)
        for _ in range(rounds):
            a = rng.randrange(2, n - 1)
            x = pow(a, d, n)
            if x in (1, n - 1):
                continue
            for _ in range(s - 1):
                x = pow(x, 2, n)
                if x == n - 1:
                    break
            else:
                return False
        return True


def invmod(a: int, m: int) -> int:
    return pow(a, -1, m)


def gcd(a: int, b: int) -> int:
    return math.gcd(a, b)


def default_rng() -> random.Random:
    """Cryptographically strong source with the seedable interface."""
    return random.SystemRandom()
