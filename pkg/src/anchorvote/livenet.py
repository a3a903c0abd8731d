"""Live validator transport: the same consensus state machine driven by
wall-clock timers and length-prefixed canonical frames over TCP.

Each validator accepts peer connections (identified by a hello frame)
and dials every configured peer; duplicate links are harmless because
message handling is idempotent. Ballot submissions arrive as one-shot
client frames and are answered with an ack or the named rejection.
Committed blocks append to the node's ledger file, which a co-located
gateway tails for its read-side replica.
"""

import asyncio
import os
import time

from anchorvote.canonical import canon_bytes, canon_loads
from anchorvote.config import ElectionConfig
from anchorvote.consensus import BROADCAST, ValidatorNode
from anchorvote.crypto import RsaKey
from anchorvote.ledger import (
    BallotTx,
    ChainState,
    TxError,
    append_block_line,
    load_chain,
    replay_chain,
    signed_genesis,
)

FRAME_LIMIT = 16 * 1024 * 1024


def _now_ms() -> int:
    return int(time.monotonic() * 1000)


async def read_frame(reader: asyncio.StreamReader) -> dict | None:
    try:
        header = await reader.readexactly(4)
    except (asyncio.IncompleteReadError, ConnectionError):
        return None
    length = int.from_bytes(header, "big")
    if not 0 < length <= FRAME_LIMIT:
        return None
    try:
        body = await reader.readexactly(length)
    except (asyncio.IncompleteReadError, ConnectionError):
        return None
    try:
        return canon_loads(body)
    except ValueError:
        return None


def frame(data: dict) -> bytes:
    body = canon_bytes(data)
    return len(body).to_bytes(4, "big") + body


class LiveValidator:
    def __init__(
        self,
        validator_id: str,
        config: ElectionConfig,
        key: RsaKey,
        validator_keys: dict,
        ledger_path: str,
        listen: str,
        tick_ms: int = 200,
        round_timeout_ms: int = 2000,
    ):
        self.vid = validator_id
        self.config = config
        self.listen = listen
        self.ledger_path = ledger_path
        self.tick_ms = tick_ms
        if ledger_path and os.path.exists(ledger_path):
            chain = replay_chain(load_chain(ledger_path), config)
        else:
            genesis_block = signed_genesis(config, validator_keys)
            chain = ChainState.from_genesis(config, genesis_block)
            if ledger_path:
                append_block_line(ledger_path, genesis_block)
        self._persisted_height = chain.height
        self.node = ValidatorNode(
            validator_id,
            config,
            key,
            chain,
            round_timeout=round_timeout_ms,
            now=_now_ms(),
        )
        self._peers: dict[str, asyncio.StreamWriter] = {}
        self._lock = asyncio.Lock()
        self._server = None
        self._tasks: list[asyncio.Task] = []

    async def start(self):
        host, port = self.listen.rsplit(":", 1)
        self._server = await asyncio.start_server(self._on_connection, host, int(port))
        self._tasks.append(asyncio.create_task(self._tick_loop()))
        for info in self.config.validators:
            if info.validator_id != self.vid and info.address:
                self._tasks.append(
                    asyncio.create_task(self._dial_loop(info.validator_id, info.address))
                )

    async def stop(self):
        for task in self._tasks:
            task.cancel()
        if self._server is not None:
            self._server.close()
            await self._server.wait_closed()
        for writer in self._peers.values():
            writer.close()

    # -- plumbing ------------------------------------------------------------

    def _persist_new_blocks(self):
        chain = self.node.chain
        while self._persisted_height < chain.height:
            self._persisted_height += 1
            append_block_line(self.ledger_path, chain.blocks[self._persisted_height])

    async def _send_outs(self, outs):
        self._persist_new_blocks()
        for ob in outs:
            targets = (
                list(self._peers.values())
                if ob.dst == BROADCAST
                else [self._peers[ob.dst]]
                if ob.dst in self._peers
                else []
            )
            payload = frame(ob.msg.to_dict())
            for writer in targets:
                try:
                    writer.write(payload)
                    await writer.drain()
                except ConnectionError:
                    pass

    async def _tick_loop(self):
        while True:
            await asyncio.sleep(self.tick_ms / 1000)
            async with self._lock:
                outs = self.node.on_tick(_now_ms())
                await self._send_outs(outs)

    async def _dial_loop(self, peer_id: str, address: str):
        host, port = address.rsplit(":", 1)
        while True:
            if peer_id not in self._peers:
                try:
                    reader, writer = await asyncio.open_connection(host, int(port))
                    writer.write(frame({"hello": self.vid}))
                    await writer.drain()
                    self._peers[peer_id] = writer
                    asyncio.create_task(self._peer_reader(peer_id, reader, writer))
                except ConnectionError:
                    pass
            await asyncio.sleep(0.5)

    async def _peer_reader(self, peer_id: str, reader, writer):
        while True:
            msg = await read_frame(reader)
            if msg is None:
                break
            async with self._lock:
                outs = self.node.on_message(msg, _now_ms())
                await self._send_outs(outs)
        if self._peers.get(peer_id) is writer:
            del self._peers[peer_id]

    async def _on_connection(self, reader, writer):
        first = await read_frame(reader)
        if first is None:
            writer.close()
            return
        if "hello" in first:
            peer_id = first["hello"]
            self._peers.setdefault(peer_id, writer)
            await self._peer_reader(peer_id, reader, writer)
            return
        # One-shot client frame: a ballot submission or a status probe.
        if first.get("kind") == "tx":
            try:
                tx = BallotTx.from_dict(first["tx"])
                async with self._lock:
                    outs = self.node.submit_tx(tx)
                    await self._send_outs(outs)
                reply = {"status": "accepted", "ballot_hash": first["tx"]["ballot_hash"]}
            except TxError as exc:
                reply = {"status": "rejected", "error": exc.code, "detail": str(exc)}
            except (KeyError, TypeError, ValueError) as exc:
                reply = {"status": "rejected", "error": "bad_request", "detail": str(exc)}
        elif first.get("kind") == "status":
            async with self._lock:
                reply = {
                    "validator": self.vid,
                    "height": self.node.chain.height,
                    "ballots": self.node.chain.ballot_count(),
                    "pool": len(self.node.pool),
                }
        else:
            reply = {"status": "rejected", "error": "bad_request"}
        try:
            writer.write(frame(reply))
            await writer.drain()
            writer.close()
        except ConnectionError:
            pass


async def submit_tx(address: str, tx_data: dict, timeout: float = 5.0) -> dict:
    host, port = address.rsplit(":", 1)
    reader, writer = await asyncio.wait_for(
        asyncio.open_connection(host, int(port)), timeout
    )
    writer.write(frame({"kind": "tx", "tx": tx_data}))
    await writer.drain()
    reply = await asyncio.wait_for(read_frame(reader), timeout)
    writer.close()
    return reply if reply is not None else {"status": "rejected", "error": "no_reply"}


async def validator_status(address: str, timeout: float = 5.0) -> dict:
    host, port = address.rsplit(":", 1)
    reader, writer = await asyncio.wait_for(
        asyncio.open_connection(host, int(port)), timeout
    )
    writer.write(frame({"kind": "status"}))
    await writer.drain()
    reply = await asyncio.wait_for(read_frame(reader), timeout)
    writer.close()
    return reply or {}


class FollowerService:
    """Gateway-side service for distributed deployments: casts forward to
    the validators over TCP, reads come from tailing a co-located
    validator's ledger file. Mixes into ElectionService for everything
    that only needs the chain, the registrar, and the anchor agent."""

    def __init__(self, base_service, validator_addrs: list):
        self._svc = base_service
        self._addrs = validator_addrs

    def __getattr__(self, name):
        return getattr(self._svc, name)

    def cast(self, tx_data: dict) -> dict:
        from anchorvote.election import ElectionClosed

        if self._svc._election_over():
            raise ElectionClosed("no casts after close")
        tx = BallotTx.from_dict(tx_data)
        # Pre-validate on the replica for a fast, named rejection.
        from anchorvote.ledger import validate_tx

        validate_tx(self._svc.chain, tx)
        reply = {}
        for addr in self._addrs:
            reply = asyncio.run(submit_tx(addr, tx_data))
        if reply.get("status") != "accepted":
            raise TxError(reply.get("detail", "validator rejected the ballot"))
        return {"ballot_hash": tx_data["ballot_hash"], "status": "accepted"}

    def refresh(self) -> None:
        """Apply ledger lines appended by the co-located validator."""
        path = self._svc.ledger_path
        if not path or not os.path.exists(path):
            return
        blocks = load_chain(path)
        chain = self._svc.chain
        from anchorvote.ledger import apply_block

        for block in blocks[chain.height + 1 :]:
            chain = apply_block(chain, block)
        self._svc.chain = chain

    def tick(self) -> None:
        self.refresh()
        self._svc.agent.poll(self._svc.chain)
