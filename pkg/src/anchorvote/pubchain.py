"""The public chain behind an adapter interface.

Anything with submit/fetch works: the bundled MockChain keeps an
append-only file of (txid, payload, height) and stands in for a real
low-cost public chain; an HTTP client adapter talks to the MockChain
service; real-chain adapters are future work.
"""

from anchorvote.canonical import append_journal, read_journal
from anchorvote.crypto import digest_hex, sha256


class AdapterUnavailable(Exception):
    """Transient submit/fetch failure; the anchoring agent retries."""


class UnknownTxid(Exception):
    """No such transaction: a fabricated anchor reference."""


class MockChain:
    """Append-only stand-in chain; txid = sha256(payload || height)."""

    def __init__(self, persist_path=None):
        self._entries = []  # (txid, payload bytes, height)
        self._by_txid = {}
        self._persist_path = persist_path
        if persist_path is not None:
            try:
                for rec in read_journal(persist_path):
                    self._restore(rec["txid"], bytes.fromhex(rec["payload"]), rec["height"])
            except FileNotFoundError:
                pass

    def _restore(self, txid, payload, height):
        if height != len(self._entries):
            raise ValueError("mockchain journal heights must be contiguous")
        self._entries.append((txid, payload, height))
        self._by_txid[txid] = (payload, height)

    @property
    def height(self) -> int:
        return len(self._entries)

    def submit(self, payload: bytes) -> str:
        height = len(self._entries)
        txid = digest_hex(sha256(payload + str(height).encode("ascii")))
        self._entries.append((txid, payload, height))
        self._by_txid[txid] = (payload, height)
        if self._persist_path is not None:
            append_journal(
                self._persist_path,
                {"txid": txid, "payload": payload.hex(), "height": height},
            )
        return txid

    def fetch(self, txid: str) -> tuple:
        try:
            return self._by_txid[txid]
        except KeyError:
            raise UnknownTxid(txid) from None

    def entries(self) -> list:
        return list(self._entries)


class HttpChainAdapter:
    """Client for the MockChain HTTP service."""

    def __init__(self, base_url: str, timeout: float = 5.0):
        import httpx

        self._client = httpx.Client(base_url=base_url, timeout=timeout)

    def submit(self, payload: bytes) -> str:
        import httpx

        try:
            resp = self._client.post("/tx", content=payload)
            resp.raise_for_status()
        except httpx.HTTPError as exc:
            raise AdapterUnavailable(str(exc)) from exc
        return resp.json()["txid"]

    def fetch(self, txid: str) -> tuple:
        import httpx

        try:
            resp = self._client.get(f"/tx/{txid}")
        except httpx.HTTPError as exc:
            raise AdapterUnavailable(str(exc)) from exc
        if resp.status_code == 404:
            raise UnknownTxid(txid)
        if resp.status_code != 200:
            raise AdapterUnavailable(f"status {resp.status_code}")
        data = resp.json()
        return bytes.fromhex(data["payload"]), data["height"]


def make_mockchain_app(chain: MockChain):
    from fastapi import FastAPI, Request
    from fastapi.responses import JSONResponse

    app = FastAPI(title="mockchain")

    @app.post("/tx")
    async def submit(request: Request):
        payload = await request.body()
        txid = chain.submit(payload)
        _, height = chain.fetch(txid)
        return {"txid": txid, "height": height}

    @app.get("/tx/{txid}")
    async def fetch(txid: str):
        try:
            payload, height = chain.fetch(txid)
        except UnknownTxid:
            return JSONResponse({"error": "unknown txid"}, status_code=404)
        return {"payload": payload.hex(), "height": height}

    @app.get("/height")
    async def height():
        return {"height": chain.height}

    return app
