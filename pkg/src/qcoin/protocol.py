"""Six-message verification protocol as two transport-independent state machines.

Wire order::

    holder  VerifyRequest(coin_id)          ->
            BankChallenge(L_bank)           <-  bank
    holder  HolderSelection(L_holder)       ->
            BankBits(m)                     <-  bank
    holder  HolderResults((a, b) pairs)     ->
            Verdict(valid, reason)          <-  bank

Index lists travel sorted ascending and 0-based; ``m`` and the pairs align
positionally with the sorted holder selection, whatever order it was sent in.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .coin import BankLedger, QCoin
from .hmp import OUTCOMES, Outcome, hmp4_member
from .qsim import RngSeed


class Reason(str, enum.Enum):
    OK = "OK"
    UNKNOWN_COIN = "UNKNOWN_COIN"
    BAD_SELECTION = "BAD_SELECTION"
    HMP_CHECK_FAILED = "HMP_CHECK_FAILED"
    PROTOCOL_VIOLATION = "PROTOCOL_VIOLATION"
    COIN_EXHAUSTED = "COIN_EXHAUSTED"
    TIMEOUT = "TIMEOUT"
    INVALID_PARAMS = "INVALID_PARAMS"

    def __str__(self) -> str:
        return self.value


class MessageError(ValueError):
    def __init__(self, field_name: str, problem: str):
        super().__init__(f"{field_name}: {problem}")
        self.field = field_name


def _is_int(v) -> bool:
    return type(v) is int or isinstance(v, np.integer)


def _indices(name: str, values) -> tuple[int, ...]:
    try:
        values = tuple(values)
    except TypeError:
        raise MessageError(name, "must be a list of integers") from None
    if not all(type(v) is int for v in values):
        if not all(_is_int(v) for v in values):
            raise MessageError(name, "must be a list of integers")
        values = tuple(int(v) for v in values)
    if values and min(values) < 0:
        raise MessageError(name, "indices must be non-negative")
    if len(set(values)) != len(values):
        raise MessageError(name, "duplicate index")
    return values


def _bit(name: str, v) -> int:
    if type(v) is int and (v == 0 or v == 1):
        return v
    if not _is_int(v) or v not in (0, 1):
        raise MessageError(name, f"expected a bit 0|1, got {v!r}")
    return int(v)


@dataclass(frozen=True)
class VerifyRequest:
    coin_id: str

    def __post_init__(self):
        if not isinstance(self.coin_id, str) or not self.coin_id:
            raise MessageError("coin_id", "must be a non-empty string")


@dataclass(frozen=True)
class BankChallenge:
    indices: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "indices", _indices("indices", self.indices))


@dataclass(frozen=True)
class HolderSelection:
    indices: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "indices", _indices("indices", self.indices))


@dataclass(frozen=True)
class BankBits:
    m: tuple[int, ...]

    def __post_init__(self):
        try:
            values = tuple(self.m)
        except TypeError:
            raise MessageError("m", "must be a list of bits") from None
        object.__setattr__(self, "m", tuple(_bit("m", v) for v in values))


_VALID_OUTCOMES = frozenset(OUTCOMES)


@dataclass(frozen=True)
class HolderResults:
    pairs: tuple[Outcome, ...]

    def __post_init__(self):
        out = []
        try:
            items = tuple(self.pairs)
        except TypeError:
            raise MessageError("pairs", "must be a list of [a, b] pairs") from None
        for p in items:
            if type(p) is Outcome and type(p.a) is int and type(p.b) is int and p in _VALID_OUTCOMES:
                out.append(p)
                continue
            if isinstance(p, (str, bytes)) or not hasattr(p, "__len__") or len(p) != 2:
                raise MessageError("pairs", f"expected an [a, b] pair, got {p!r}")
            out.append(Outcome(_bit("pairs", p[0]), _bit("pairs", p[1])))
        object.__setattr__(self, "pairs", tuple(out))


@dataclass(frozen=True)
class Verdict:
    valid: bool
    reason: Reason = Reason.OK

    def __post_init__(self):
        if not isinstance(self.valid, bool):
            raise MessageError("valid", "must be a boolean")
        try:
            reason = Reason(self.reason)
        except ValueError:
            raise MessageError("reason", f"unknown reason code {self.reason!r}") from None
        if self.valid != (reason is Reason.OK):
            raise MessageError("reason", "valid must be true exactly when reason is OK")
        object.__setattr__(self, "reason", reason)


Message = Union[VerifyRequest, BankChallenge, HolderSelection, BankBits, HolderResults, Verdict]


@dataclass(frozen=True)
class ProtocolParams:
    """t: number of indexes the bank challenges; 3 | t."""

    t: int

    def __post_init__(self):
        if not _is_int(self.t) or self.t < 1:
            raise ValueError(f"t must be a positive integer, got {self.t!r}")
        if self.t % 3:
            raise ValueError(f"t={self.t} violates 3|t")

    @property
    def selection_size(self) -> int:
        return 2 * self.t // 3

    def check_for(self, k: int) -> None:
        if self.t > k:
            raise ValueError(f"t={self.t} exceeds the coin size k={k}")


def verification_budget(k: int, t: int) -> int:
    """Best-case number of successful verifications: floor(k / (2t/3))."""
    return k // (2 * t // 3)


def _as_generator(rng) -> np.random.Generator:
    return rng.generator() if isinstance(rng, RngSeed) else rng


# --- bank ----------------------------------------------------------------------

class BankState(enum.Enum):
    AWAIT_REQUEST = "await_request"
    AWAIT_SELECTION = "await_selection"
    AWAIT_RESULTS = "await_results"
    DONE = "done"


class BankSession:
    def __init__(self, ledger: BankLedger, params: ProtocolParams, rng: RngSeed | np.random.Generator):
        self.ledger = ledger
        self.params = params
        self.state = BankState.AWAIT_REQUEST
        self.coin_id: str | None = None
        self.verdict: Verdict | None = None
        self._rng = _as_generator(rng)
        self._record = None
        self._challenge: frozenset[int] = frozenset()
        self._selection: tuple[int, ...] = ()
        self._m: tuple[int, ...] = ()

    @property
    def done(self) -> bool:
        return self.state is BankState.DONE

    def abort(self, reason: Reason) -> Verdict:
        if self.done:
            return self.verdict
        return self._finish(reason)

    def _finish(self, reason: Reason) -> Verdict:
        self.verdict = Verdict(reason is Reason.OK, reason)
        self.state = BankState.DONE
        return self.verdict

    def step(self, msg: Message) -> Message:
        if self.done:
            return Verdict(False, Reason.PROTOCOL_VIOLATION)
        if self.state is BankState.AWAIT_REQUEST and isinstance(msg, VerifyRequest):
            return self._on_request(msg)
        if self.state is BankState.AWAIT_SELECTION and isinstance(msg, HolderSelection):
            return self._on_selection(msg)
        if self.state is BankState.AWAIT_RESULTS and isinstance(msg, HolderResults):
            return self._on_results(msg)
        return self._finish(Reason.PROTOCOL_VIOLATION)

    def _on_request(self, msg: VerifyRequest) -> Message:
        self.coin_id = msg.coin_id
        record = self.ledger.get(msg.coin_id)
        if record is None:
            return self._finish(Reason.UNKNOWN_COIN)
        if self.params.t > record.k:
            return self._finish(Reason.INVALID_PARAMS)
        self._record = record
        picked = self._rng.choice(record.k, size=self.params.t, replace=False).tolist()
        self._challenge = frozenset(picked)
        self.state = BankState.AWAIT_SELECTION
        return BankChallenge(tuple(sorted(self._challenge)))

    def _on_selection(self, msg: HolderSelection) -> Message:
        chosen = msg.indices
        if len(chosen) != self.params.selection_size or not self._challenge.issuperset(chosen):
            return self._finish(Reason.BAD_SELECTION)
        self._selection = tuple(sorted(chosen))  # m and the pairs align with this order
        self._m = tuple(self._rng.integers(0, 2, size=len(chosen)).tolist())
        self.state = BankState.AWAIT_RESULTS
        return BankBits(self._m)

    def _on_results(self, msg: HolderResults) -> Message:
        if len(msg.pairs) != len(self._selection):
            return self._finish(Reason.PROTOCOL_VIOLATION)
        entries = self._record.entries
        ok = all(hmp4_member(entries[i], m, a, b)
                 for i, m, (a, b) in zip(self._selection, self._m, msg.pairs))
        return self._finish(Reason.OK if ok else Reason.HMP_CHECK_FAILED)


# --- holder --------------------------------------------------------------------

class HolderState(enum.Enum):
    START = "start"
    AWAIT_CHALLENGE = "await_challenge"
    AWAIT_BITS = "await_bits"
    AWAIT_VERDICT = "await_verdict"
    DONE = "done"


class HolderBase:
    """Holder-role state machine.  Subclasses decide selection and answers.

    ``step`` returns the next outgoing message, or None when the session is
    over (verdict received or local abort); the outcome is in ``verdict``.
    """

    def __init__(self, coin_id: str):
        self.coin_id = coin_id
        self.state = HolderState.START
        self.verdict: Verdict | None = None
        self.selection: tuple[int, ...] = ()
        self.aborted = False

    @property
    def done(self) -> bool:
        return self.state is HolderState.DONE

    def abort(self, reason: Reason) -> None:
        if not self.done:
            self.verdict = Verdict(False, reason)
            self.aborted = True
            self.state = HolderState.DONE

    def start(self) -> VerifyRequest:
        if self.state is not HolderState.START:
            raise RuntimeError("session already started")
        self.state = HolderState.AWAIT_CHALLENGE
        return VerifyRequest(self.coin_id)

    def step(self, msg: Message) -> Message | None:
        if self.done:
            return None
        if isinstance(msg, Verdict) and self.state is not HolderState.START:
            self.verdict = msg
            self.state = HolderState.DONE
            return None
        if self.state is HolderState.AWAIT_CHALLENGE and isinstance(msg, BankChallenge):
            return self._on_challenge(msg)
        if self.state is HolderState.AWAIT_BITS and isinstance(msg, BankBits):
            return self._on_bits(msg)
        self.abort(Reason.PROTOCOL_VIOLATION)
        return None

    def _on_challenge(self, msg: BankChallenge) -> Message | None:
        t = len(msg.indices)
        if t == 0 or t % 3 or not self._indices_valid(msg.indices):
            self.abort(Reason.PROTOCOL_VIOLATION)
            return None
        chosen = self.select(sorted(msg.indices), 2 * t // 3)
        if chosen is None:
            self.abort(Reason.COIN_EXHAUSTED)
            return None
        self.selection = tuple(sorted(chosen))
        self.state = HolderState.AWAIT_BITS
        return HolderSelection(self.selection)

    def _on_bits(self, msg: BankBits) -> Message | None:
        if len(msg.m) != len(self.selection):
            self.abort(Reason.PROTOCOL_VIOLATION)
            return None
        pairs = self.answer(self.selection, msg.m)
        self.state = HolderState.AWAIT_VERDICT
        return HolderResults(tuple(pairs))

    def _indices_valid(self, indices) -> bool:
        return True

    def select(self, challenge: list[int], n: int) -> list[int] | None:
        raise NotImplementedError

    def answer(self, selection: tuple[int, ...], m_values: tuple[int, ...]) -> list[Outcome]:
        raise NotImplementedError


class HolderSession(HolderBase):
    """Honest holder of a real coin."""

    def __init__(self, coin: QCoin, rng: RngSeed):
        super().__init__(coin.coin_id)
        self.coin = coin
        self.rng = rng
        self._select_rng = rng.child(0).generator()

    def _indices_valid(self, indices) -> bool:
        return all(i < self.coin.k for i in indices)

    def select(self, challenge, n):
        fresh = [i for i in challenge if self.coin.is_fresh(i)]
        if len(fresh) < n:
            return None
        chosen = sorted(self._select_rng.choice(fresh, size=n, replace=False).tolist())
        self.coin.reserve(chosen)
        return chosen

    def answer(self, selection, m_values):
        return [self.coin.consume_register(i, m, self.rng.child(1, i).generator())
                for i, m in zip(selection, m_values)]


# --- driving a session pair ------------------------------------------------------

@dataclass
class VerificationResult:
    verdict: Verdict
    transcript: list = field(default_factory=list)

    @property
    def valid(self) -> bool:
        return self.verdict.valid


def run_session(bank: BankSession, holder: HolderBase) -> VerificationResult:
    """Pass messages between the two machines until one side finishes."""
    transcript: list[Message] = []
    msg = holder.start()
    while True:
        transcript.append(msg)
        reply = bank.step(msg)
        transcript.append(reply)
        msg = holder.step(reply)
        if msg is None:
            break
    if holder.aborted:
        bank.abort(holder.verdict.reason)
    verdict = holder.verdict if holder.verdict is not None else bank.verdict
    return VerificationResult(verdict, transcript)


def run_verification(ledger: BankLedger, coin: QCoin, params: ProtocolParams,
                     rng_bank: RngSeed | np.random.Generator, rng_holder: RngSeed) -> VerificationResult:
    params.check_for(coin.k)
    return run_session(BankSession(ledger, params, rng_bank), HolderSession(coin, rng_holder))
