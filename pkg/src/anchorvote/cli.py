"""Operator and voter command line: one binary family for every role."""

import json
import os
import sys
import threading
import time

import click

from anchorvote.canonical import canon_dumps


def _serve(app, host, port):
    import uvicorn

    uvicorn.run(app, host=host, port=port, log_level="warning")


def _echo_json(data):
    click.echo(canon_dumps(data))


@click.group()
def main():
    """Hybrid voting platform: private ballot chain, public anchors."""


# -- election ----------------------------------------------------------------


@main.group()
def election():
    """Create and close elections."""


@election.command("init")
@click.option("--dir", "directory", required=True, type=click.Path())
@click.option("--id", "election_id", required=True)
@click.option("--candidates", required=True, help="comma-separated labels")
@click.option("--mode", type=click.Choice(["sealed", "demo"]), default="sealed")
@click.option("--validators", "n_validators", default=4, show_default=True)
@click.option("--trustees", default="t1,t2,t3,t4,t5", show_default=True)
@click.option("--threshold", default=3, show_default=True)
@click.option("--voters", default=25, show_default=True, help="demo roster size")
@click.option("--toy-crypto", is_flag=True, help="tiny parameters for demos/tests")
@click.option("--anchor-blocks", default=8, show_default=True)
@click.option("--anchor-seconds", default=60, show_default=True)
@click.option("--max-txs-per-block", default=25, show_default=True)
@click.option("--close-at", default=None, type=int, help="unix seconds")
def election_init(
    directory,
    election_id,
    candidates,
    mode,
    n_validators,
    trustees,
    threshold,
    voters,
    toy_crypto,
    anchor_blocks,
    anchor_seconds,
    max_txs_per_block,
    close_at,
):
    """Write config + genesis and run the trustee key ceremony."""
    from anchorvote.election import init_election

    config, _keys = init_election(
        directory,
        election_id,
        [c.strip() for c in candidates.split(",") if c.strip()],
        mode=mode,
        n_validators=n_validators,
        trustee_ids=[t.strip() for t in trustees.split(",") if t.strip()],
        threshold=threshold,
        voters=voters,
        toy_crypto=toy_crypto,
        anchor_blocks=anchor_blocks,
        anchor_seconds=anchor_seconds,
        max_txs_per_block=max_txs_per_block,
        close_at=close_at,
    )
    click.echo(f"election '{config.election_id}' initialized in {directory}")
    click.echo(f"  candidates: {', '.join(config.candidates)}")
    click.echo(f"  trustees: {len(config.trustees)} (threshold {config.threshold})")
    click.echo(f"  voters in demo roster: {voters} (credentials.csv)")


@election.command("close")
@click.option("--gateway", "gateway_url", required=True)
def election_close(gateway_url):
    """Freeze the ballot list and force the final anchor."""
    import httpx

    resp = httpx.post(f"{gateway_url}/api/close", timeout=30)
    click.echo(resp.text.strip())
    sys.exit(0 if resp.status_code == 200 else 1)


# -- registrar ----------------------------------------------------------------


@main.group()
def registrar():
    """Eligibility and token issuance."""


@registrar.command("serve")
@click.option("--dir", "directory", required=True, type=click.Path(exists=True))
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=9100, show_default=True)
def registrar_serve(directory, host, port):
    from anchorvote.election import election_path, load_election_keys
    from anchorvote.registrar import Registrar, make_registrar_app

    keys = load_election_keys(directory)
    reg = Registrar.open(
        election_path(directory, "roster"),
        keys["registrar"],
        election_path(directory, "issuance"),
    )
    click.echo(f"registrar: {reg.roster_size()} voters, listening on {host}:{port}")
    _serve(make_registrar_app(reg), host, port)


# -- validator ----------------------------------------------------------------


@main.group()
def validator():
    """Permissioned chain validators."""


@validator.command("serve")
@click.option("--dir", "directory", required=True, type=click.Path(exists=True))
@click.option("--id", "validator_id", required=True)
@click.option("--listen", default=None, help="host:port (defaults to config address)")
@click.option("--round-timeout-ms", default=2000, show_default=True)
def validator_serve(directory, validator_id, listen, round_timeout_ms):
    import asyncio

    from anchorvote.config import ElectionConfig
    from anchorvote.election import election_path, load_election_keys
    from anchorvote.livenet import LiveValidator

    config = ElectionConfig.load(election_path(directory, "config"))
    keys = load_election_keys(directory)
    if validator_id not in keys["validators"]:
        raise click.ClickException(f"unknown validator id {validator_id}")
    info = config.validator_by_id(validator_id)
    address = listen or (info.address if info else None)
    if address is None:
        raise click.ClickException("no listen address (pass --listen or set config)")
    ledger_path = os.path.join(directory, f"ledger-{validator_id}.log")

    async def run():
        node = LiveValidator(
            validator_id,
            config,
            keys["validators"][validator_id],
            keys["validators"],
            ledger_path=ledger_path,
            listen=address,
            round_timeout_ms=round_timeout_ms,
        )
        await node.start()
        click.echo(f"validator {validator_id} listening on {address}")
        while True:
            await asyncio.sleep(3600)

    asyncio.run(run())


# -- mockchain ----------------------------------------------------------------


@main.group()
def mockchain():
    """The bundled public-chain stand-in."""


@mockchain.command("serve")
@click.option("--dir", "directory", required=True, type=click.Path(exists=True))
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=9200, show_default=True)
def mockchain_serve(directory, host, port):
    from anchorvote.election import election_path
    from anchorvote.pubchain import MockChain, make_mockchain_app

    chain = MockChain(election_path(directory, "mockchain"))
    click.echo(f"mockchain at height {chain.height}, listening on {host}:{port}")
    _serve(make_mockchain_app(chain), host, port)


# -- gateway ------------------------------------------------------------------


@main.group()
def gateway():
    """Voter- and auditor-facing HTTP service."""


@gateway.command("serve")
@click.option("--dir", "directory", required=True, type=click.Path(exists=True))
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=9000, show_default=True)
@click.option("--registrar-url", default=None, help="proxy check-ins to a registrar service")
@click.option("--mockchain-url", default=None, help="anchor via a mockchain service")
@click.option("--follow", default=None, help="validator id to follow (distributed mode)")
@click.option("--static", "static_dir", default=None, type=click.Path(exists=True))
@click.option("--tick-seconds", default=1.0, show_default=True)
def gateway_serve(
    directory, host, port, registrar_url, mockchain_url, follow, static_dir, tick_seconds
):
    from anchorvote.config import ElectionConfig
    from anchorvote.election import ElectionService, election_path, load_election_keys, open_election
    from anchorvote.gateway import make_gateway_app
    from anchorvote.pubchain import HttpChainAdapter, MockChain
    from anchorvote.registrar import Registrar, RegistrarProxy

    config = ElectionConfig.load(election_path(directory, "config"))
    adapter = (
        HttpChainAdapter(mockchain_url)
        if mockchain_url
        else MockChain(election_path(directory, "mockchain"))
    )
    if registrar_url:
        reg = RegistrarProxy(registrar_url)
    else:
        keys = load_election_keys(directory)
        reg = Registrar.open(
            election_path(directory, "roster"),
            keys["registrar"],
            election_path(directory, "issuance"),
        )
    if follow:
        from anchorvote.livenet import FollowerService

        ledger_path = os.path.join(directory, f"ledger-{follow}.log")
        if not os.path.exists(ledger_path):
            raise click.ClickException(f"no ledger file to follow: {ledger_path}")
        base = ElectionService.__new__(ElectionService)
        _init_follower_base(base, config, reg, adapter, directory, ledger_path)
        addrs = [v.address for v in config.validators if v.address]
        service = FollowerService(base, addrs)
    else:
        keys = load_election_keys(directory)
        service = ElectionService(
            config,
            reg,
            keys["validators"],
            adapter=adapter,
            ledger_path=election_path(directory, "ledger"),
            anchor_journal=election_path(directory, "anchors"),
        )

    def ticker():
        while True:
            time.sleep(tick_seconds)
            try:
                service.tick()
            except Exception as exc:  # keep serving through adapter outages
                click.echo(f"tick error: {exc}", err=True)

    threading.Thread(target=ticker, daemon=True).start()
    click.echo(f"gateway for '{config.election_id}' listening on {host}:{port}")
    _serve(make_gateway_app(service, static_dir=static_dir), host, port)


def _init_follower_base(base, config, reg, adapter, directory, ledger_path):
    """ElectionService fields for a read-replica (no local block signing)."""
    from collections import OrderedDict

    from anchorvote.anchoring import AnchorAgent
    from anchorvote.election import election_path
    from anchorvote.ledger import load_chain, replay_chain
    from anchorvote.tally import PartialStore

    base.config = config
    base.registrar = reg
    base.validator_keys = {}
    base.clock = lambda: int(time.time())
    base.ledger_path = ledger_path
    base.chain = replay_chain(load_chain(ledger_path), config)
    base.adapter = adapter
    base.agent = AnchorAgent(
        adapter,
        config.election_id,
        config.anchor_blocks,
        config.anchor_seconds,
        journal_path=election_path(directory, "anchors"),
        clock=base.clock,
    )
    base.pool = OrderedDict()
    base.closed = False
    base.frozen = None
    base.partials = PartialStore(config)
    base.tally_result = None
    base._lock = threading.Lock()


# -- trustee / tally ------------------------------------------------------------


@main.group()
def trustee():
    """Trustee-side partial decryption."""


@trustee.command("decrypt")
@click.option("--share", "share_file", required=True, type=click.Path(exists=True))
@click.option("--gateway", "gateway_url", required=True)
@click.option("--out", "out_file", default=None, type=click.Path())
def trustee_decrypt(share_file, gateway_url, out_file):
    """Compute partial decryptions over the frozen ballots and submit them
    (or write them to --out for offline transfer)."""
    import httpx

    from anchorvote.config import ElectionConfig
    from anchorvote.crypto import eg_partial_decrypt
    from anchorvote.tally import TrusteeShare

    share = TrusteeShare.load(share_file)
    config = ElectionConfig.from_dict(
        httpx.get(f"{gateway_url}/api/config", timeout=30).json()
    )
    resp = httpx.get(f"{gateway_url}/api/ballots", timeout=60)
    if resp.status_code != 200:
        raise click.ClickException(f"frozen ballots unavailable: {resp.text.strip()}")
    from anchorvote.tally import FrozenBallot

    frozen = [FrozenBallot.from_dict(d) for d in resp.json()]
    partials = [
        {
            "ballot_hash": fb.to_dict()["ballot_hash"],
            "index": share.share.index,
            "value": eg_partial_decrypt(config.group, share.share, fb.ciphertext).value,
        }
        for fb in frozen
    ]
    payload = {"trustee_id": share.trustee_id, "partials": partials}
    if out_file:
        with open(out_file, "w", encoding="ascii") as fh:
            fh.write(canon_dumps(payload) + "\n")
        click.echo(f"{len(partials)} partials written to {out_file}")
        return
    resp = httpx.post(f"{gateway_url}/api/tally/partial", json=payload, timeout=120)
    click.echo(resp.text.strip())
    sys.exit(0 if resp.status_code == 200 else 1)


@main.group()
def tally():
    """Combine partial decryptions into the final counts."""


@tally.command("combine")
@click.option("--gateway", "gateway_url", required=True)
@click.option("--partials", "partials_files", multiple=True, type=click.Path(exists=True))
def tally_combine(gateway_url, partials_files):
    """Submit any offline partials files, then combine on the gateway."""
    import httpx

    for path in partials_files:
        with open(path, "r", encoding="ascii") as fh:
            payload = json.load(fh)
        resp = httpx.post(
            f"{gateway_url}/api/tally/partial", json=payload, timeout=120
        )
        if resp.status_code not in (200, 409):
            raise click.ClickException(f"{path}: {resp.text.strip()}")
    resp = httpx.post(f"{gateway_url}/api/tally/combine", timeout=300)
    click.echo(resp.text.strip())
    sys.exit(0 if resp.status_code == 200 else 1)


# -- audit ----------------------------------------------------------------------


@main.group()
def audit():
    """Independent verification from the persisted artifacts alone."""


@audit.command("verify")
@click.option("--ledger", "ledger_file", required=True, type=click.Path(exists=True))
@click.option("--anchors", "anchors_file", required=True, type=click.Path(exists=True))
@click.option("--config", "config_file", required=True, type=click.Path(exists=True))
@click.option("--mockchain-url", default=None)
@click.option("--mockchain-file", default=None, type=click.Path(exists=True))
def audit_verify(ledger_file, anchors_file, config_file, mockchain_url, mockchain_file):
    """Re-run the full chain audit and verify every anchor."""
    from anchorvote.anchoring import AnchorRecord, verify_anchor
    from anchorvote.canonical import read_journal
    from anchorvote.config import ElectionConfig
    from anchorvote.ledger import load_chain, verify_chain
    from anchorvote.pubchain import HttpChainAdapter, MockChain, UnknownTxid

    config = ElectionConfig.load(config_file)
    blocks = load_chain(ledger_file)
    findings = verify_chain(blocks, config)
    for f in findings:
        _echo_json(f.to_dict())
    if mockchain_url:
        adapter = HttpChainAdapter(mockchain_url)
    elif mockchain_file:
        adapter = MockChain(mockchain_file)
    else:
        raise click.ClickException("need --mockchain-url or --mockchain-file")
    anchor_failures = 0
    expected_first = 1
    for rec_data in read_journal(anchors_file):
        rec = AnchorRecord.from_dict(rec_data)
        try:
            ok = verify_anchor(blocks, rec, adapter, config.election_id)
        except UnknownTxid:
            ok = False
        if rec.first_block != expected_first:
            ok = False
        expected_first = rec.last_block + 1
        if not ok:
            anchor_failures += 1
            _echo_json({"anchor_seq": rec.anchor_seq, "code": "anchor_invalid"})
    ballots = sum(len(b.txs) for b in blocks)
    _echo_json(
        {
            "blocks": len(blocks),
            "ballots": ballots,
            "chain_findings": len(findings),
            "anchor_failures": anchor_failures,
            "valid": not findings and anchor_failures == 0,
        }
    )
    sys.exit(0 if not findings and anchor_failures == 0 else 1)


# -- voter client -----------------------------------------------------------------


@main.command("vote")
@click.option("--gateway", "gateway_url", required=True)
@click.option("--voter-id", required=True)
@click.option("--credential", required=True)
@click.option("--candidate", required=True)
@click.option("--wait/--no-wait", default=True, show_default=True, help="poll until anchored and verify")
def vote(gateway_url, voter_id, credential, candidate, wait):
    """Blind check-in, encrypt, cast, then fetch and verify the receipt."""
    from anchorvote.client import HttpGateway, VoterClient

    client = VoterClient(HttpGateway(gateway_url))
    outcome = client.vote(voter_id, credential, candidate, wait_receipt=wait)
    _echo_json(
        {
            "ballot_hash": outcome.ballot_hash,
            "receipt": outcome.receipt,
            "verified": outcome.verified,
        }
    )
    if wait and not outcome.verified:
        sys.exit(1)


# -- demo --------------------------------------------------------------------------


@main.command("demo")
@click.option("--dir", "directory", default=None, type=click.Path())
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=9000, show_default=True)
@click.option("--voters", default=25, show_default=True)
@click.option("--candidates", default="Ada,Boole,Church", show_default=True)
@click.option("--full-crypto", is_flag=True, help="production-size parameters")
@click.option("--static", "static_dir", default=None, type=click.Path(exists=True))
def demo(directory, host, port, voters, candidates, full_crypto, static_dir):
    """Every role in one process, demo mode: live totals and explorer."""
    import tempfile

    from anchorvote.election import init_election, open_election
    from anchorvote.gateway import make_gateway_app

    directory = directory or tempfile.mkdtemp(prefix="anchorvote-demo-")
    init_election(
        directory,
        "demo-election",
        [c.strip() for c in candidates.split(",") if c.strip()],
        mode="demo",
        voters=voters,
        toy_crypto=not full_crypto,
        anchor_blocks=4,
        anchor_seconds=30,
        max_txs_per_block=5,
    )
    service = open_election(directory)
    if static_dir is None:
        bundled = os.path.join(os.path.dirname(__file__), "webui")
        static_dir = bundled if os.path.isdir(bundled) else None

    def ticker():
        while True:
            time.sleep(1)
            try:
                service.tick()
            except Exception as exc:
                click.echo(f"tick error: {exc}", err=True)

    threading.Thread(target=ticker, daemon=True).start()
    click.echo(f"demo election in {directory}")
    click.echo(f"sample credentials: {directory}/credentials.csv")
    click.echo(f"gateway: http://{host}:{port}  (API under /api)")
    _serve(make_gateway_app(service, static_dir=static_dir), host, port)


if __name__ == "__main__":
    main()
