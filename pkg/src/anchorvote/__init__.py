"""Hybrid online voting platform.

Encrypted ballots live on a small permissioned chain run by known
validators; batch fingerprints are anchored to a public chain; voters
hold anonymous blind-signed tokens and get receipts with inclusion
proofs; trustees jointly decrypt the final tally.
"""

__version__ = "0.1.0"
