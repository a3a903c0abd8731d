"""Merkle trees with inclusion proofs.

Leaf nodes are sha256(0x00 || leaf), internal nodes sha256(0x01 || left
|| right); the prefixes block leaf/internal confusion. A lone node at
the end of an odd level is promoted unchanged, never duplicated.
"""

from dataclasses import dataclass

from anchorvote.crypto.hashes import digest_from_hex, digest_hex, sha256

LEAF_PREFIX = b"\x00"
NODE_PREFIX = b"\x01"


class EmptyBatch(Exception):
    pass


class IndexOutOfRange(Exception):
    pass


@dataclass(frozen=True)
class MerkleProof:
    leaf_index: int
    path: tuple  # of (sibling digest bytes, "left" | "right")

    def to_dict(self) -> dict:
        return {
            "leaf_index": self.leaf_index,
            "path": [[digest_hex(sib), side] for sib, side in self.path],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MerkleProof":
        return cls(
            leaf_index=data["leaf_index"],
            path=tuple((digest_from_hex(sib), side) for sib, side in data["path"]),
        )


def _leaf_hash(leaf: bytes) -> bytes:
    return sha256(LEAF_PREFIX + leaf)


def _node_hash(left: bytes, right: bytes) -> bytes:
    return sha256(NODE_PREFIX + left + right)


def _next_level(level: list[bytes]) -> list[bytes]:
    nxt = []
    for i in range(0, len(level) - 1, 2):
        nxt.append(_node_hash(level[i], level[i + 1]))
    if len(level) % 2 == 1:
        nxt.append(level[-1])
    return nxt


def merkle_root(leaves: list[bytes]) -> bytes:
    if not leaves:
        raise EmptyBatch("merkle root of zero leaves")
    level = [_leaf_hash(leaf) for leaf in leaves]
    while len(level) > 1:
        level = _next_level(level)
    return level[0]


def merkle_prove(leaves: list[bytes], index: int) -> MerkleProof:
    if not leaves:
        raise EmptyBatch("merkle proof over zero leaves")
    if not 0 <= index < len(leaves):
        raise IndexOutOfRange(f"leaf index {index} of {len(leaves)}")
    path = []
    level = [_leaf_hash(leaf) for leaf in leaves]
    pos = index
    while len(level) > 1:
        if pos % 2 == 0 and pos + 1 < len(level):
            path.append((level[pos + 1], "right"))
        elif pos % 2 == 1:
            path.append((level[pos - 1], "left"))
        # else: lone last node, promoted without a sibling
        level = _next_level(level)
        pos //= 2
    return MerkleProof(leaf_index=index, path=tuple(path))


def merkle_verify(leaf: bytes, proof: MerkleProof, root: bytes) -> bool:
    try:
        acc = _leaf_hash(leaf)
        for sibling, side in proof.path:
            if side == "left":
                acc = _node_hash(sibling, acc)
            elif side == "right":
                acc = _node_hash(acc, sibling)
            else:
                return False
        return acc == root
    except (TypeError, ValueError):
        return False
