"""Deterministic discrete-event harness driving many validator state
machines from one seeded event loop.

Every source of nondeterminism - message drops, delivery delays, timer
interleaving - is drawn from one rng seeded by the scenario, so a
transcript is a pure function of (scenario, seed) and byte-identical on
re-run. Byzantine behaviors: `silent` never sends; `equivocate` sends
conflicting proposals to disjoint halves of the peers when it leads and
is otherwise silent (it still applies commits so later proposals extend
the live head).
"""

import heapq
import itertools
import random
from collections import Counter
from dataclasses import dataclass, field

from anchorvote.canonical import canon_bytes, canon_dumps, canon_loads
from anchorvote.config import ElectionConfig
from anchorvote.consensus import (
    BROADCAST,
    COMMIT,
    PROPOSE,
    TX_GOSSIP,
    ConsensusMessage,
    Outbound,
    ValidatorNode,
    sign_envelope,
)
from anchorvote.crypto import digest_hex, sha256
from anchorvote.ledger import (
    BallotTx,
    ChainState,
    TxError,
    make_block,
    signed_genesis,
)

SILENT = "silent"
EQUIVOCATE = "equivocate"


@dataclass
class SimScenario:
    n_validators: int = 4
    byzantine: dict = field(default_factory=dict)  # vid -> silent | equivocate
    drop_prob: float = 0.0
    delay_min: int = 1
    delay_max: int = 3
    seed: int = 0
    tx_schedule: list = field(default_factory=list)  # [time, vid, tx dict]
    max_time: int = 20000
    round_timeout: int = 25
    heartbeat_every: int | None = None

    def __post_init__(self):
        f = len(self.byzantine)
        if f and self.n_validators < 3 * f + 1:
            raise ValueError("liveness scenarios need n >= 3f+1")

    def to_dict(self) -> dict:
        return {
            "n_validators": self.n_validators,
            "byzantine": dict(sorted(self.byzantine.items())),
            "drop_prob": self.drop_prob,
            "delay_min": self.delay_min,
            "delay_max": self.delay_max,
            "seed": self.seed,
            "tx_schedule": [list(entry) for entry in self.tx_schedule],
            "max_time": self.max_time,
            "round_timeout": self.round_timeout,
            "heartbeat_every": self.heartbeat_every,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SimScenario":
        return cls(
            n_validators=data["n_validators"],
            byzantine=dict(data.get("byzantine", {})),
            drop_prob=data["drop_prob"],
            delay_min=data["delay_min"],
            delay_max=data["delay_max"],
            seed=data["seed"],
            tx_schedule=[tuple(e) for e in data.get("tx_schedule", [])],
            max_time=data["max_time"],
            round_timeout=data.get("round_timeout", 25),
            heartbeat_every=data.get("heartbeat_every"),
        )

    def save(self, path) -> None:
        with open(path, "w", encoding="ascii") as fh:
            fh.write(canon_dumps(self.to_dict()) + "\n")

    @classmethod
    def load(cls, path) -> "SimScenario":
        with open(path, "r", encoding="ascii") as fh:
            return cls.from_dict(canon_loads(fh.read()))


@dataclass
class SimTranscript:
    chains: dict  # vid -> list of block dicts
    events: list  # canonical text lines
    metrics: dict

    def honest_chains(self, scenario: SimScenario) -> dict:
        return {
            vid: blocks
            for vid, blocks in self.chains.items()
            if vid not in scenario.byzantine
        }

    def chain_hashes(self, vid: str) -> list:
        """Chain identity: the committed block hash sequence. Signature
        sets may differ per node (any quorum subset certifies)."""
        return [b["hash"] for b in self.chains[vid]]

    def committed_ballots(self, vid: str) -> set:
        return {tx["ballot_hash"] for b in self.chains[vid] for tx in b["txs"]}

    def to_canonical(self) -> bytes:
        return canon_bytes(
            {
                "chains": {
                    vid: [b["hash"] for b in blocks]
                    for vid, blocks in self.chains.items()
                },
                "events": self.events,
                "metrics": dict(sorted(self.metrics.items())),
            }
        )

    def fingerprint(self) -> str:
        return digest_hex(sha256(self.to_canonical()))


class ByzantineNode(ValidatorNode):
    """`silent` is a crash fault: fully inert. `equivocate` follows the
    chain through commit certificates and tx gossip but never votes; when
    its rotation comes up it sends conflicting proposals to disjoint
    halves of the peers."""

    def __init__(self, *args, behavior: str, **kwargs):
        super().__init__(*args, **kwargs)
        self.behavior = behavior

    def _propose(self, now):
        if self.behavior != EQUIVOCATE:
            return []
        block_a = self._build_block(now)
        if block_a is None:
            return []
        block_b = make_block(
            election_id=self.config.election_id,
            index=block_a.index,
            timestamp=block_a.timestamp + 1,
            prev_hash=block_a.prev_hash,
            txs=block_a.txs,
        )
        outs = []
        peers = [v for v in self._ids if v != self.vid]
        mid = (len(peers) + 1) // 2
        for variant, targets in ((block_a, peers[:mid]), (block_b, peers[mid:])):
            msg = sign_envelope(
                ConsensusMessage(
                    kind=PROPOSE,
                    election_id=self.config.election_id,
                    height=self.view.height,
                    round=self.view.round,
                    sender=self.vid,
                    block=variant.to_dict(),
                ),
                self.key,
            )
            outs.extend(Outbound(t, msg) for t in targets)
        return outs

    def on_message(self, msg_dict, now):
        if self.behavior == SILENT:
            return []
        kind = msg_dict.get("kind")
        if kind not in (COMMIT, TX_GOSSIP):
            return []  # never votes, never reacts to proposals
        outs = super().on_message(msg_dict, now)
        # Advancing past a commit may rotate leadership onto us; keep
        # only the equivocating proposals that produces.
        return [o for o in outs if o.msg.kind == PROPOSE]

    def on_tick(self, now):
        if self.behavior == SILENT:
            return []
        outs = super().on_tick(now)
        return [o for o in outs if o.msg.kind == PROPOSE]


def build_nodes(
    scenario: SimScenario, config: ElectionConfig, validator_keys: dict
) -> dict:
    genesis_block = signed_genesis(config, validator_keys)
    nodes = {}
    for vid in sorted(validator_keys):
        chain = ChainState.from_genesis(config, genesis_block)
        behavior = scenario.byzantine.get(vid)
        common = dict(
            round_timeout=scenario.round_timeout,
            now=0,
            heartbeat_every=scenario.heartbeat_every,
        )
        if behavior:
            nodes[vid] = ByzantineNode(
                vid, config, validator_keys[vid], chain, behavior=behavior, **common
            )
        else:
            nodes[vid] = ValidatorNode(
                vid, config, validator_keys[vid], chain, **common
            )
    return nodes


def run_sim(
    scenario: SimScenario,
    config: ElectionConfig,
    validator_keys: dict,
    expected_hashes: list | None = None,
) -> SimTranscript:
    """Execute the scenario; returns every node's chain, the event log,
    and counters (commits, view changes, drops, conflicts)."""
    rng = random.Random(scenario.seed)
    nodes = build_nodes(scenario, config, validator_keys)
    ids = sorted(nodes)
    honest = [v for v in ids if v not in scenario.byzantine]
    heap: list = []
    seq = itertools.count()
    events: list[str] = []
    metrics: Counter = Counter(
        {
            k: 0
            for k in (
                "sent",
                "delivered",
                "dropped",
                "submitted",
                "submit_rejected",
                "commits",
                "view_changes",
                "invalid_dropped",
                "timeouts",
                "conflicting_commits",
            )
        }
    )
    commit_registry: dict[int, str] = {}
    scheduled_tick: dict[str, int | None] = {vid: None for vid in ids}
    expected_b = {bytes.fromhex(h) for h in (expected_hashes or [])}

    def log(now: int, ev: str, **kw):
        line = {"t": now, "ev": ev}
        line.update(kw)
        events.append(canon_dumps(line))

    def schedule(t: int, etype: str, data):
        heapq.heappush(heap, (t, next(seq), etype, data))

    def arm_tick(vid: str):
        node = nodes[vid]
        if scheduled_tick[vid] != node.deadline:
            schedule(node.deadline, "tick", vid)
            scheduled_tick[vid] = node.deadline

    def note_commits(vid: str, before: int, now: int):
        # Safety is a claim about honest nodes; byzantine logs don't count.
        if vid in scenario.byzantine:
            return
        node = nodes[vid]
        for height, hh in node.commit_log[before:]:
            prior = commit_registry.get(height)
            if prior is None:
                commit_registry[height] = hh
            elif prior != hh:
                metrics["conflicting_commits"] += 1
            log(now, "commit", node=vid, h=height, hash=hh[:16])

    def emit(src: str, outs, now: int):
        for ob in outs:
            targets = [v for v in ids if v != src] if ob.dst == BROADCAST else [ob.dst]
            for dst in targets:
                metrics["sent"] += 1
                if rng.random() < scenario.drop_prob:
                    metrics["dropped"] += 1
                    log(now, "drop", src=src, dst=dst, kind=ob.msg.kind, h=ob.msg.height)
                    continue
                delay = rng.randint(scenario.delay_min, scenario.delay_max)
                schedule(now + delay, "deliver", (src, dst, ob.msg.to_dict()))

    def interact(vid: str, fn, now: int):
        node = nodes[vid]
        before = len(node.commit_log)
        outs = fn(node)
        note_commits(vid, before, now)
        emit(vid, outs, now)
        arm_tick(vid)

    for entry in scenario.tx_schedule:
        t, vid, txd = entry
        schedule(t, "submit", (vid, txd))
    for vid in ids:
        arm_tick(vid)

    def all_caught_up() -> bool:
        return all(
            all(h in nodes[v].chain.tx_locator for h in expected_b) for v in honest
        )

    now = 0
    while heap:
        now, _, etype, data = heapq.heappop(heap)
        if now > scenario.max_time:
            break
        if etype == "deliver":
            src, dst, msg = data
            metrics["delivered"] += 1
            log(now, "deliver", src=src, dst=dst, kind=msg["kind"], h=msg["height"])
            interact(dst, lambda n: n.on_message(msg, now), now)
        elif etype == "tick":
            interact(data, lambda n: n.on_tick(now), now)
        elif etype == "submit":
            vid, txd = data
            tx = BallotTx.from_dict(txd)
            metrics["submitted"] += 1
            try:
                interact(vid, lambda n: n.submit_tx(tx), now)
                log(now, "accept", node=vid, tx=txd["ballot_hash"][:16])
            except TxError as exc:
                metrics["submit_rejected"] += 1
                log(now, "reject", node=vid, code=exc.code, tx=txd["ballot_hash"][:16])
        if expected_b and all_caught_up():
            log(now, "done")
            break

    for vid in ids:
        node = nodes[vid]
        metrics["commits"] += node.telemetry["commits"]
        metrics["view_changes"] += node.telemetry["view_changes"]
        metrics["invalid_dropped"] += node.telemetry["invalid_dropped"]
        metrics["timeouts"] += node.telemetry["timeouts"]
    rounds = [
        r for vid in honest for r in nodes[vid].rounds_used.values()
    ]
    metrics["max_rounds_per_height"] = max(rounds) if rounds else 0
    metrics["final_time"] = now
    return SimTranscript(
        chains={vid: [b.to_dict() for b in nodes[vid].chain.blocks] for vid in ids},
        events=events,
        metrics=dict(metrics),
    )
