"""Command-line front end: ``qcoin mint | serve | verify | attack | inspect``.

Logs go to standard error, reports to standard output.  Every flag is
validated before anything is read from or written to disk.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .coin import (
    BankLedger,
    CoinFileError,
    LedgerError,
    Mint,
    load_coin,
    load_ledger,
    save_coin,
    save_ledger,
)
from .protocol import ProtocolParams, Reason, verification_budget
from .qsim import RngSeed
from .transport import (
    DEFAULT_TIMEOUT,
    ENV_BANK_ADDR,
    parse_endpoint,
    serve_bank,
    verify_remote,
)

log = logging.getLogger("qcoin")

DEFAULT_LISTEN = "127.0.0.1:8650"

# Exit status of ``verify`` for every verdict reason.
EXIT_CODES = {
    Reason.OK: 0,
    Reason.HMP_CHECK_FAILED: 1,
    Reason.UNKNOWN_COIN: 1,
    Reason.BAD_SELECTION: 2,
    Reason.PROTOCOL_VIOLATION: 2,
    Reason.COIN_EXHAUSTED: 2,
    Reason.TIMEOUT: 2,
    Reason.INVALID_PARAMS: 2,
}
EXIT_ERROR = 2


def exit_code(reason: Reason | str) -> int:
    return EXIT_CODES[Reason(reason)]


# --- argument types -----------------------------------------------------------


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be at least 1, got {value}")
    return value


def _seed(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer seed, got {text!r}") from None
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must lie in [0, 2**64)")
    return value


def _t_param(text: str) -> ProtocolParams:
    try:
        return ProtocolParams(int(text))
    except ValueError:
        raise argparse.ArgumentTypeError(f"t must be a positive multiple of 3 (3|t), got {text!r}") from None


def _endpoint(text: str) -> str:
    try:
        parse_endpoint(text)
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e)) from None
    return text


def _seed_or_fresh(seed: int | None) -> RngSeed:
    return RngSeed(seed) if seed is not None else RngSeed.fresh()


# --- commands -------------------------------------------------------------------


def cmd_mint(args) -> int:
    ledger_path = Path(args.ledger)
    coins_dir = Path(args.coins)
    try:
        ledger = load_ledger(ledger_path) if ledger_path.exists() else BankLedger()
    except (OSError, LedgerError) as e:
        log.error("cannot read ledger %s: %s", ledger_path, e)
        return EXIT_ERROR

    rng = _seed_or_fresh(args.seed).generator()
    issuer = Mint()
    minted = [issuer.mint(args.k, rng) for _ in range(args.count)]

    # check every id before writing anything
    for coin, record in minted:
        target = coins_dir / f"{coin.coin_id}.coin.json"
        if record.coin_id in ledger or target.exists():
            log.error("coin id %s already exists; nothing written", record.coin_id)
            return EXIT_ERROR

    coins_dir.mkdir(parents=True, exist_ok=True)
    for coin, record in minted:
        ledger.add(record)
    save_ledger(ledger, ledger_path)
    for coin, _ in minted:
        path = coins_dir / f"{coin.coin_id}.coin.json"
        save_coin(coin, path)
        print(path)
    log.info("minted %d coin(s) with k=%d into %s", len(minted), args.k, ledger_path)
    return 0


def cmd_serve(args) -> int:
    try:
        ledger = load_ledger(args.ledger)
    except (OSError, LedgerError) as e:
        log.error("refusing to start, bad ledger %s: %s", args.ledger, e)
        return EXIT_ERROR
    too_small = [r.coin_id for r in ledger if r.k < args.t.t]
    if too_small:
        log.warning("%d coin(s) have k < t=%d and will get INVALID_PARAMS", len(too_small), args.t.t)
    try:
        service = serve_bank(ledger, args.listen, args.t, seed=_seed_or_fresh(args.seed),
                             timeout=args.timeout, background=False)
    except OSError as e:
        log.error("cannot listen on %s: %s", args.listen, e)
        return EXIT_ERROR
    log.info("bank serving %d coin(s) on %s with t=%d", len(ledger), service.endpoint, args.t.t)
    try:
        service.serve_forever()
    except KeyboardInterrupt:
        log.info("shutting down")
    finally:
        service.close()
    return 0


def cmd_verify(args) -> int:
    if args.bank is None:
        log.error("no bank endpoint: pass --bank or set %s", ENV_BANK_ADDR)
        return EXIT_ERROR
    try:
        coin = load_coin(args.coin)
    except (OSError, CoinFileError) as e:
        log.error("cannot read coin %s: %s", args.coin, e)
        return EXIT_ERROR
    before = coin.snapshot()
    try:
        result = verify_remote(coin, args.bank, _seed_or_fresh(args.seed), timeout=args.timeout)
    except OSError as e:
        log.error("cannot reach bank at %s: %s", args.bank, e)
        return EXIT_ERROR
    if coin.snapshot() != before:
        save_coin(coin, args.coin)
    reason = result.verdict.reason
    print(f"{coin.coin_id}: valid={str(result.verdict.valid).lower()} reason={reason.value} "
          f"({coin.popcount()}/{coin.k} registers consumed)")
    return exit_code(reason)


def cmd_attack(args) -> int:
    from .adversary import estimate

    if args.t.t > args.k:
        log.error("t=%d exceeds k=%d", args.t.t, args.k)
        return EXIT_ERROR
    report = estimate(args.strategy, args.t, args.trials, args.seed, k=args.k)
    print(json.dumps(report.to_dict(), indent=2))
    return 0


def cmd_inspect(args) -> int:
    if args.coin is not None:
        try:
            coin = load_coin(args.coin)
        except (OSError, CoinFileError) as e:
            log.error("cannot read coin %s: %s", args.coin, e)
            return EXIT_ERROR
        measured = sum(not coin.is_live(i) for i in range(coin.k))
        print(f"coin {coin.coin_id}  [SIMULATION-ONLY register file]")
        print(f"  {coin.popcount()}/{coin.k} registers consumed ({measured} measured)")
        print(f"  P = {coin.p_bitstring()}")
        for t in (3, 15):
            if t <= coin.k:
                left = len(coin.fresh_indices()) // (2 * t // 3)
                print(f"  at t={t}: at most {left} more verification(s) "
                      f"(budget {verification_budget(coin.k, t)} when fresh)")
        return 0
    try:
        ledger = load_ledger(args.ledger)
    except (OSError, LedgerError) as e:
        log.error("cannot read ledger %s: %s", args.ledger, e)
        return EXIT_ERROR
    ks = sorted({r.k for r in ledger})
    print(f"ledger {args.ledger}: {len(ledger)} coin(s), k values {ks}")
    for r in ledger:
        print(f"  {r.coin_id}  k={r.k}")
    return 0


# --- parser -------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qcoin", description="Simulated quantum coins: mint, bank, verify, attack.")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    m = sub.add_parser("mint", help="create coins, append their records to a ledger")
    m.add_argument("--k", type=_positive_int, required=True, help="registers per coin")
    m.add_argument("--count", type=_positive_int, default=1)
    m.add_argument("--ledger", required=True, help="bank ledger file (created if missing)")
    m.add_argument("--coins", required=True, help="directory for holder coin files")
    m.add_argument("--seed", type=_seed)
    m.set_defaults(func=cmd_mint)

    s = sub.add_parser("serve", help="run the bank daemon")
    s.add_argument("--ledger", required=True)
    s.add_argument("--listen", type=_endpoint, default=os.environ.get(ENV_BANK_ADDR, DEFAULT_LISTEN),
                   help=f"host:port (default ${ENV_BANK_ADDR} or {DEFAULT_LISTEN})")
    s.add_argument("--t", type=_t_param, default=ProtocolParams(15), help="challenge size, 3|t (default 15)")
    s.add_argument("--seed", type=_seed)
    s.add_argument("--timeout", type=float, default=DEFAULT_TIMEOUT, help="session inactivity timeout, seconds")
    s.set_defaults(func=cmd_serve)

    v = sub.add_parser("verify", help="verify a coin file against a bank")
    v.add_argument("--coin", required=True)
    v.add_argument("--bank", type=_endpoint, default=os.environ.get(ENV_BANK_ADDR),
                   help=f"host:port (default ${ENV_BANK_ADDR})")
    v.add_argument("--seed", type=_seed)
    v.add_argument("--timeout", type=float, default=DEFAULT_TIMEOUT)
    v.set_defaults(func=cmd_verify)

    a = sub.add_parser("attack", help="estimate a forgery strategy's acceptance rate")
    a.add_argument("--strategy", choices=["honest", "blind", "wrong-basis", "replay"], required=True)
    a.add_argument("--t", type=_t_param, required=True)
    a.add_argument("--k", type=_positive_int, default=60)
    a.add_argument("--trials", type=_positive_int, required=True)
    a.add_argument("--seed", type=_seed, default=0)
    a.set_defaults(func=cmd_attack)

    i = sub.add_parser("inspect", help="summarise a coin or ledger file")
    g = i.add_mutually_exclusive_group(required=True)
    g.add_argument("--coin")
    g.add_argument("--ledger")
    i.set_defaults(func=cmd_inspect)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s", stream=sys.stderr)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
