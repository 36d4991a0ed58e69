"""Coins, the mint, the bank's static ledger and their file formats."""
from __future__ import annotations

import itertools
import json
import os
import tempfile
import threading
import time
from collections.abc import Iterable, Iterator
from dataclasses import dataclass
from pathlib import Path
from typing import IO

import numpy as np

from .hmp import Bits4, Outcome, prepare, run_query_collapsing
from .qsim import StateVector

LEDGER_VERSION = 1
COIN_FORMAT = "qcoin-register-file"
SIMULATION_MARKER = "SIMULATION-ONLY"


class LedgerError(ValueError):
    pass


class CoinFileError(ValueError):
    pass


class RegisterConsumedError(RuntimeError):
    """The register was already measured; a collapsed register cannot be queried again."""


@dataclass(frozen=True)
class SecretRecord:
    coin_id: str
    entries: tuple[Bits4, ...]

    def __post_init__(self):
        if not isinstance(self.coin_id, str) or not self.coin_id:
            raise ValueError("coin_id must be a non-empty string")
        if len(self.entries) < 1:
            raise ValueError("a secret record needs at least one entry")

    @property
    def k(self) -> int:
        return len(self.entries)

    @classmethod
    def from_strings(cls, coin_id: str, entries: Iterable[str]) -> SecretRecord:
        return cls(coin_id, tuple(Bits4.parse(e) for e in entries))


class QCoin:
    """Holder-side coin: k two-qubit registers, the used-marker register P and an id.

    ``p_register[i] == 1`` once register i has been selected for a check or
    measured.  Measured registers keep their post-measurement vector, reachable
    only through ``collapsed_state`` (debugging and the forgery harness).
    """

    def __init__(self, coin_id: str, registers: Iterable[StateVector],
                 p_register: Iterable[int] | None = None,
                 collapsed: Iterable[bool] | None = None):
        self.coin_id = coin_id
        self._registers = list(registers)
        k = len(self._registers)
        if k < 1:
            raise ValueError("a coin needs at least one register")
        self._p = bytearray(p_register if p_register is not None else bytes(k))
        self._collapsed = list(collapsed) if collapsed is not None else [False] * k
        if len(self._p) != k or len(self._collapsed) != k:
            raise ValueError("register, P and collapse flags must all have length k")
        if any(b not in (0, 1) for b in self._p):
            raise ValueError("P bits must be 0 or 1")
        if any(c and not p for c, p in zip(self._collapsed, self._p)):
            raise ValueError("a collapsed register must be marked in P")

    @property
    def k(self) -> int:
        return len(self._registers)

    @property
    def p_register(self) -> tuple[int, ...]:
        return tuple(self._p)

    def p_bitstring(self) -> str:
        return "".join(map(str, self._p))

    def popcount(self) -> int:
        return sum(self._p)

    def is_live(self, i: int) -> bool:
        return not self._collapsed[i]

    def is_fresh(self, i: int) -> bool:
        return self._p[i] == 0

    def fresh_indices(self) -> list[int]:
        return [i for i, p in enumerate(self._p) if p == 0]

    def reserve(self, indices: Iterable[int]) -> None:
        """Mark registers as used before they are measured."""
        indices = list(indices)
        for i in indices:
            if not 0 <= i < self.k:
                raise IndexError(f"register {i} out of range for k={self.k}")
        for i in indices:
            self._p[i] = 1

    def consume_register(self, i: int, m: int, rng: np.random.Generator) -> Outcome:
        """Query register i with bit m; the register collapses and P_i becomes 1."""
        if not 0 <= i < self.k:
            raise IndexError(f"register {i} out of range for k={self.k}")
        if self._collapsed[i]:
            raise RegisterConsumedError(f"register {i} of coin {self.coin_id} was already measured")
        outcome, after = run_query_collapsing(self._registers[i], m, rng)
        self._registers[i] = after
        self._collapsed[i] = True
        self._p[i] = 1
        return outcome

    def live_state(self, i: int) -> StateVector:
        if self._collapsed[i]:
            raise RegisterConsumedError(f"register {i} of coin {self.coin_id} was already measured")
        return self._registers[i]

    def collapsed_state(self, i: int) -> StateVector:
        """Debug accessor: post-measurement vector of a consumed register."""
        if not self._collapsed[i]:
            raise ValueError(f"register {i} has not been measured")
        return self._registers[i]

    def snapshot(self) -> tuple:
        return (bytes(self._p), tuple(self._collapsed),
                tuple(r.amplitudes.tobytes() for r in self._registers))

    def __repr__(self) -> str:
        return f"QCoin(id={self.coin_id!r}, k={self.k}, used={self.popcount()})"


def coin_from_record(record: SecretRecord) -> QCoin:
    """A fresh coin whose registers are built by the preparation circuits."""
    return QCoin(record.coin_id, [prepare(x) for x in record.entries])


class Mint:
    """Issues coin ids ``<epoch>-<counter>`` and fresh coins.

    The epoch defaults to the wall clock in nanoseconds so separate minting
    runs never reuse an id.
    """

    def __init__(self, epoch: int | None = None, start: int = 0):
        self.epoch = time.time_ns() if epoch is None else int(epoch)
        self._counter = itertools.count(start)
        self._lock = threading.Lock()

    def next_id(self) -> str:
        with self._lock:
            n = next(self._counter)
        if n >= 2 ** 64:
            raise OverflowError("coin counter exhausted")
        return f"{self.epoch}-{n}"

    def draw_record(self, k: int, rng: np.random.Generator) -> SecretRecord:
        if not isinstance(k, (int, np.integer)) or k < 1:
            raise ValueError(f"k must be a positive integer, got {k!r}")
        values = rng.integers(0, 16, size=int(k))
        return SecretRecord(self.next_id(), tuple(Bits4.from_int(int(v)) for v in values))

    def mint(self, k: int, rng: np.random.Generator) -> tuple[QCoin, SecretRecord]:
        record = self.draw_record(k, rng)
        return coin_from_record(record), record


_default_mint: Mint | None = None


def mint(k: int, rng: np.random.Generator, issuer: Mint | None = None) -> tuple[QCoin, SecretRecord]:
    global _default_mint
    if issuer is None:
        if _default_mint is None:
            _default_mint = Mint()
        issuer = _default_mint
    return issuer.mint(k, rng)


class BankLedger:
    """Append-only map coin_id -> SecretRecord."""

    def __init__(self, records: Iterable[SecretRecord] = ()):
        self._records: dict[str, SecretRecord] = {}
        for r in records:
            self.add(r)

    def add(self, record: SecretRecord) -> None:
        if record.coin_id in self._records:
            raise LedgerError(f"duplicate coin id {record.coin_id!r}")
        self._records[record.coin_id] = record

    def get(self, coin_id: str) -> SecretRecord | None:
        return self._records.get(coin_id)

    def __contains__(self, coin_id) -> bool:
        return coin_id in self._records

    def __len__(self) -> int:
        return len(self._records)

    def __iter__(self) -> Iterator[SecretRecord]:
        return iter(self._records.values())

    def __eq__(self, other) -> bool:
        return isinstance(other, BankLedger) and list(self) == list(other)

    def __repr__(self) -> str:
        return f"BankLedger({len(self)} coins)"


# --- files ---------------------------------------------------------------------

def ledger_to_dict(ledger: BankLedger) -> dict:
    return {
        "version": LEDGER_VERSION,
        "coins": [{"id": r.coin_id, "k": r.k, "entries": [str(x) for x in r.entries]} for r in ledger],
    }


def ledger_from_dict(doc) -> BankLedger:
    if not isinstance(doc, dict):
        raise LedgerError("ledger document must be a JSON object")
    if doc.get("version") != LEDGER_VERSION:
        raise LedgerError(f"unsupported ledger version {doc.get('version')!r}")
    coins = doc.get("coins")
    if not isinstance(coins, list):
        raise LedgerError("'coins' must be a list")
    ledger = BankLedger()
    for pos, c in enumerate(coins):
        where = f"coin #{pos}"
        if not isinstance(c, dict):
            raise LedgerError(f"{where}: expected an object")
        cid = c.get("id")
        if not isinstance(cid, str) or not cid:
            raise LedgerError(f"{where}: 'id' must be a non-empty string")
        where = f"coin #{pos} (id {cid!r})"
        entries = c.get("entries")
        if not isinstance(entries, list) or not entries:
            raise LedgerError(f"{where}: 'entries' must be a non-empty list")
        k = c.get("k")
        if type(k) is not int or k != len(entries):
            raise LedgerError(f"{where}: 'k' is {k!r} but there are {len(entries)} entries")
        parsed = []
        for idx, e in enumerate(entries):
            if not isinstance(e, str) or len(e) != 4 or set(e) - {"0", "1"}:
                raise LedgerError(f"{where}, entry {idx}: {e!r} is not a 4-bit string")
            parsed.append(Bits4.parse(e))
        if cid in ledger:
            raise LedgerError(f"{where}: duplicate coin id")
        ledger.add(SecretRecord(cid, tuple(parsed)))
    return ledger


def _write_json_atomic(path: Path, doc) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=1)
            fh.write("\n")
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def save_ledger(ledger: BankLedger, sink: str | os.PathLike | IO[str]) -> None:
    doc = ledger_to_dict(ledger)
    if hasattr(sink, "write"):
        json.dump(doc, sink, indent=1)
        sink.write("\n")
    else:
        _write_json_atomic(Path(sink), doc)


def load_ledger(source: str | os.PathLike | IO[str]) -> BankLedger:
    try:
        if hasattr(source, "read"):
            doc = json.load(source)
        else:
            with open(source, encoding="utf-8") as fh:
                doc = json.load(fh)
    except json.JSONDecodeError as e:
        raise LedgerError(f"malformed ledger JSON at line {e.lineno} column {e.colno}: {e.msg}") from None
    return ledger_from_dict(doc)


def coin_to_dict(coin: QCoin) -> dict:
    regs = []
    for i, state in enumerate(coin._registers):
        regs.append({
            "collapsed": not coin.is_live(i),
            "amplitudes": [[float(a.real), float(a.imag)] for a in state.amplitudes],
        })
    return {
        "format": COIN_FORMAT,
        "marker": SIMULATION_MARKER,
        "note": "simulated amplitudes; a physical coin keeps these registers in quantum memory",
        "version": 1,
        "id": coin.coin_id,
        "k": coin.k,
        "p": coin.p_bitstring(),
        "registers": regs,
    }


def coin_from_dict(doc) -> QCoin:
    if not isinstance(doc, dict) or doc.get("format") != COIN_FORMAT:
        raise CoinFileError("not a coin file")
    if doc.get("marker") != SIMULATION_MARKER:
        raise CoinFileError(f"coin file lacks the {SIMULATION_MARKER} marker")
    cid, k, p, regs = doc.get("id"), doc.get("k"), doc.get("p"), doc.get("registers")
    if not isinstance(cid, str) or not cid:
        raise CoinFileError("'id' must be a non-empty string")
    if type(k) is not int or not isinstance(regs, list) or len(regs) != k:
        raise CoinFileError("'k' must equal the number of registers")
    if not isinstance(p, str) or len(p) != k or set(p) - {"0", "1"}:
        raise CoinFileError(f"'p' must be a {k}-character bit string")
    states, collapsed = [], []
    for i, r in enumerate(regs):
        try:
            amps = [complex(re, im) for re, im in r["amplitudes"]]
            if len(amps) != 4:
                raise ValueError("need 4 amplitudes")
            states.append(StateVector(amps))
            collapsed.append(bool(r["collapsed"]))
        except (KeyError, TypeError, ValueError) as e:
            raise CoinFileError(f"register {i}: {e}") from None
    try:
        return QCoin(cid, states, [int(c) for c in p], collapsed)
    except ValueError as e:
        raise CoinFileError(str(e)) from None


def save_coin(coin: QCoin, path: str | os.PathLike) -> None:
    _write_json_atomic(Path(path), coin_to_dict(coin))


def load_coin(path: str | os.PathLike) -> QCoin:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as e:
        raise CoinFileError(f"malformed coin JSON: {e.msg}") from None
    return coin_from_dict(doc)
