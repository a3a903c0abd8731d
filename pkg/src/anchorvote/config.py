"""Election configuration: the public contract every role loads.

The config file is canonical text; its digest pins the election identity
for genesis derivation. Private key material never lives here.
"""

from dataclasses import dataclass, field

from anchorvote.canonical import canon_bytes, canon_loads
from anchorvote.crypto import GroupParams, RsaKey, sha256

MODE_SEALED = "sealed"
MODE_DEMO = "demo"


@dataclass(frozen=True)
class ValidatorInfo:
    validator_id: str
    key: RsaKey  # public part
    address: str | None = None  # host:port for live deployments

    def to_dict(self) -> dict:
        out = {"id": self.validator_id, "key": self.key.public().to_dict()}
        if self.address is not None:
            out["address"] = self.address
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ValidatorInfo":
        return cls(
            validator_id=data["id"],
            key=RsaKey.from_dict(data["key"]),
            address=data.get("address"),
        )


@dataclass(frozen=True)
class TrusteeInfo:
    trustee_id: str
    share_index: int

    def to_dict(self) -> dict:
        return {"id": self.trustee_id, "share_index": self.share_index}

    @classmethod
    def from_dict(cls, data: dict) -> "TrusteeInfo":
        return cls(trustee_id=data["id"], share_index=data["share_index"])


@dataclass
class ElectionConfig:
    election_id: str
    mode: str
    candidates: list[str]
    group: GroupParams
    registrar_key: RsaKey  # public part
    validators: list[ValidatorInfo]
    trustees: list[TrusteeInfo] = field(default_factory=list)
    threshold: int = 1
    election_pubkey: int | None = None  # set by the trustee ceremony
    anchor_blocks: int = 8
    anchor_seconds: int = 60
    max_txs_per_block: int = 25
    open_at: int = 0
    close_at: int | None = None

    def __post_init__(self):
        if self.mode not in (MODE_SEALED, MODE_DEMO):
            raise ValueError(f"unknown mode: {self.mode}")
        if len(set(self.candidates)) != len(self.candidates):
            raise ValueError("duplicate candidate labels")
        if not 1 <= self.threshold <= max(len(self.trustees), 1):
            raise ValueError("threshold out of range")

    @property
    def n_validators(self) -> int:
        return len(self.validators)

    @property
    def quorum(self) -> int:
        return (2 * self.n_validators) // 3 + 1

    @property
    def candidate_count(self) -> int:
        return len(self.candidates)

    def validator_by_id(self, validator_id: str) -> ValidatorInfo | None:
        for v in self.validators:
            if v.validator_id == validator_id:
                return v
        return None

    def trustee_by_id(self, trustee_id: str) -> TrusteeInfo | None:
        for t in self.trustees:
            if t.trustee_id == trustee_id:
                return t
        return None

    def to_dict(self) -> dict:
        return {
            "election_id": self.election_id,
            "mode": self.mode,
            "candidates": list(self.candidates),
            "group": self.group.to_dict(),
            "registrar_key": self.registrar_key.public().to_dict(),
            "validators": [v.to_dict() for v in self.validators],
            "trustees": [t.to_dict() for t in self.trustees],
            "threshold": self.threshold,
            "election_pubkey": self.election_pubkey,
            "anchor_blocks": self.anchor_blocks,
            "anchor_seconds": self.anchor_seconds,
            "max_txs_per_block": self.max_txs_per_block,
            "open_at": self.open_at,
            "close_at": self.close_at,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ElectionConfig":
        return cls(
            election_id=data["election_id"],
            mode=data["mode"],
            candidates=list(data["candidates"]),
            group=GroupParams.from_dict(data["group"]),
            registrar_key=RsaKey.from_dict(data["registrar_key"]),
            validators=[ValidatorInfo.from_dict(v) for v in data["validators"]],
            trustees=[TrusteeInfo.from_dict(t) for t in data["trustees"]],
            threshold=data["threshold"],
            election_pubkey=data.get("election_pubkey"),
            anchor_blocks=data["anchor_blocks"],
            anchor_seconds=data["anchor_seconds"],
            max_txs_per_block=data["max_txs_per_block"],
            open_at=data["open_at"],
            close_at=data.get("close_at"),
        )

    def digest(self) -> bytes:
        return sha256(canon_bytes(self.to_dict()))

    def save(self, path) -> None:
        from anchorvote.canonical import canon_dumps

        with open(path, "w", encoding="ascii") as fh:
            fh.write(canon_dumps(self.to_dict()) + "\n")

    @classmethod
    def load(cls, path) -> "ElectionConfig":
        with open(path, "r", encoding="ascii") as fh:
            return cls.from_dict(canon_loads(fh.read()))
