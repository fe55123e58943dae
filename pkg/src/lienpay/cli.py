"""Command line entry point: ``lienpay <command>``.

Exit codes: 0 success, 2 expectation mismatch, 3 input error.
"""

import argparse
import os
import sys
import time

from .cas import CHUNK_SIZE, BlockStore, Cid, DiskBlockStore
from .errors import ExpectationMismatch, LienpayError, UnknownKey
from .harness import (
    CONTRACT_TYPES,
    Project,
    audit_report,
    bundled_scenario,
    cycle_report,
    find_contract,
    load_scenario,
    parse_key,
)
from .ledger import Chain, FINALITY_DEPTH

EXIT_OK = 0
EXIT_MISMATCH = 2
EXIT_INPUT = 3


def _scenario_path(name):
    if os.path.exists(name):
        return name
    path = bundled_scenario(name)
    if os.path.exists(path):
        return path
    raise FileNotFoundError(f"no scenario {name!r}")


def _store(args):
    if getattr(args, "store", None):
        return DiskBlockStore(args.store, chunk_size=args.chunk_size)
    return BlockStore(chunk_size=args.chunk_size)


def _load_chain(args, append=False):
    if not args.journal or not os.path.exists(args.journal):
        raise FileNotFoundError(f"journal {args.journal!r} not found")
    return Chain.replay(args.journal, CONTRACT_TYPES, journal=args.journal if append else None)


def cmd_init(args):
    project = Project(load_scenario(_scenario_path(args.scenario)), journal=args.journal,
                      store=_store(args), confirmations=args.confirmations)
    addr = project.setup()
    project.chain.close()
    print(f"contract {addr}")
    print(f"height   {project.chain.height}")
    return EXIT_OK


def cmd_run(args):
    started = time.perf_counter()
    project = Project(load_scenario(_scenario_path(args.scenario)), journal=args.journal,
                      store=_store(args), confirmations=args.confirmations)
    project.run()
    project.chain.close()
    sys.stdout.write(cycle_report(project.chain, project.contract, args.format))
    print(f"runtime {time.perf_counter() - started:.3f}s", file=sys.stderr)
    diffs = project.check()
    if diffs:
        for d in diffs:
            print(f"MISMATCH {d}", file=sys.stderr)
        return EXIT_MISMATCH
    return EXIT_OK


def cmd_mine(args):
    chain = _load_chain(args, append=True)
    for header in chain.mine(args.blocks):
        print(f"{header.number}  {header.hash.hex()}")
    chain.close()
    return EXIT_OK


def cmd_report(args):
    chain = _load_chain(args)
    contract = find_contract(chain)
    if contract is None:
        raise UnknownKey("journal has no payment contract")
    if args.key is None:
        sys.stdout.write(cycle_report(chain, contract, args.format))
    else:
        sys.stdout.write(audit_report(chain, contract, parse_key(args.key), args.format))
    return EXIT_OK


def cmd_cas(args):
    store = _store(args)
    if args.cas_cmd == "add":
        with open(args.path, "rb") as fh:
            print(store.put(fh.read()).text)
    else:
        data = store.get(Cid.parse(args.cid))
        if args.output:
            with open(args.output, "wb") as fh:
                fh.write(data)
        else:
            sys.stdout.buffer.write(data)
    return EXIT_OK


def cmd_serve(args):
    from .rpc import RpcServer, serve_http, serve_socket

    chain = _load_chain(args, append=True)
    contract = find_contract(chain)
    keyring = {chain.address_of(k): k for k in chain.signer.registered_keys()}
    server = RpcServer(chain, contract, _store(args), keyring, allow_mine=args.allow_mine)
    factory = serve_http if args.transport == "http" else serve_socket
    srv = factory(server, args.host, args.port)
    host, port = srv.server_address[:2]
    print(f"serving {args.transport} on {host}:{port} (contract {contract})", flush=True)
    try:
        srv.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        srv.server_close()
        chain.close()
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="lienpay", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--confirmations", type=int, default=FINALITY_DEPTH,
                        help="blocks required for finality (default 12)")
    common.add_argument("--chunk-size", type=int, default=CHUNK_SIZE,
                        help="block store leaf size in bytes (default 262144)")
    common.add_argument("--journal", help="chain journal path")
    common.add_argument("--store", help="directory for an on-disk block store")
    common.add_argument("--format", choices=("text", "json"), default="text")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("init", parents=[common], help="genesis, deploy and fund a scenario's contract")
    s.add_argument("scenario")
    s.set_defaults(fn=cmd_init)

    s = sub.add_parser("run", parents=[common], help="replay a scenario end to end")
    s.add_argument("scenario")
    s.set_defaults(fn=cmd_run)

    s = sub.add_parser("mine", parents=[common], help="mine blocks onto a journaled chain")
    s.add_argument("-n", "--blocks", type=int, default=1)
    s.set_defaults(fn=cmd_mine)

    s = sub.add_parser("report", parents=[common], help="cycle report, or audit for one key")
    s.add_argument("key", nargs="?", help="tx id, token:N, payee address, CID or cycle:N")
    s.set_defaults(fn=cmd_report)

    s = sub.add_parser("cas", help="block store add/get")
    cas_sub = s.add_subparsers(dest="cas_cmd", required=True)
    a = cas_sub.add_parser("add", parents=[common])
    a.add_argument("path")
    g = cas_sub.add_parser("get", parents=[common])
    g.add_argument("cid")
    g.add_argument("-o", "--output")
    s.set_defaults(fn=cmd_cas)

    s = sub.add_parser("serve", parents=[common], help="serve the rpc interface over a journaled chain")
    s.add_argument("--host", default="127.0.0.1")
    s.add_argument("--port", type=int, default=8545)
    s.add_argument("--transport", choices=("http", "socket"), default="http")
    s.add_argument("--allow-mine", action="store_true", help="expose chain.mine (testing only)")
    s.set_defaults(fn=cmd_serve)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ExpectationMismatch as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISMATCH
    except (LienpayError, OSError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
