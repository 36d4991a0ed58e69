"""Forgery strategies playing the holder role, exact oracles for their success
rates, and a Monte Carlo harness that runs them against the real bank machine.

None of the strategies can see a ``SecretRecord``: the harness mints the
record for the bank side and hands the attacker only what its threat model
allows (a coin id, a stolen coin, or an old transcript).
"""
from __future__ import annotations

import enum
import itertools
from dataclasses import asdict, dataclass
from fractions import Fraction
from math import comb

import numpy as np
from scipy.stats import binomtest

from .coin import BankLedger, QCoin, SecretRecord, coin_from_record
from .hmp import (
    ALL_STRINGS,
    OUTCOMES,
    Outcome,
    exact_probabilities,
    hmp4_member,
    integer_columns,
    run_query,
)
from .protocol import (
    BankBits,
    BankSession,
    HolderBase,
    HolderResults,
    HolderSelection,
    HolderSession,
    ProtocolParams,
    VerifyRequest,
    run_session,
)
from .qsim import RngSeed


class Strategy(str, enum.Enum):
    HONEST = "honest"
    BLIND_GUESS = "blind"
    WRONG_BASIS = "wrong-basis"
    REPLAY = "replay"


# --- holders -------------------------------------------------------------------

class BlindGuessHolder(HolderBase):
    """Knows only a coin id: picks any 2t/3 challenged indexes and guesses (a, b)."""

    def __init__(self, coin_id: str, rng: np.random.Generator):
        super().__init__(coin_id)
        self.rng = rng

    def select(self, challenge, n):
        return sorted(self.rng.choice(challenge, size=n, replace=False).tolist())

    def answer(self, selection, m_values):
        return [Outcome(a, b) for a, b in self.rng.integers(0, 2, size=(len(selection), 2)).tolist()]


def measure_early(coin: QCoin, rng: RngSeed) -> dict[int, tuple[int, Outcome]]:
    """Measure every live register with a self-chosen random query bit.

    Returns ``{index: (m_guess, outcome)}``.  The registers are left collapsed.
    """
    guesses = rng.child(0).generator().integers(0, 2, size=coin.k)
    out = {}
    for i in range(coin.k):
        if coin.is_live(i):
            m_guess = int(guesses[i])
            out[i] = (m_guess, coin.consume_register(i, m_guess, rng.child(1, i).generator()))
    return out


class WrongBasisHolder(HolderBase):
    """Holds a stolen coin that was measured before the bank's bits were known.

    Where its guessed bit matches the bank's it replays the early result;
    otherwise it measures the collapsed register again in the requested basis.
    """

    def __init__(self, coin: QCoin, premeasured: dict[int, tuple[int, Outcome]], rng: RngSeed):
        super().__init__(coin.coin_id)
        self.coin = coin
        self.premeasured = premeasured
        self.rng = rng
        self._select_rng = rng.child(0).generator()

    def _indices_valid(self, indices):
        return all(i < self.coin.k for i in indices)

    def select(self, challenge, n):
        return sorted(int(i) for i in self._select_rng.choice(challenge, size=n, replace=False))

    def answer(self, selection, m_values):
        pairs = []
        for i, m in zip(selection, m_values):
            m_guess, early = self.premeasured[i]
            if m_guess == m:
                pairs.append(early)
            else:
                pairs.append(run_query(self.coin.collapsed_state(i), m, self.rng.child(1, i).generator()))
        return pairs


@dataclass(frozen=True)
class _Observed:
    coin_id: str
    answers: dict  # index -> (m, Outcome)


def _observe(transcript) -> _Observed:
    req = next(m for m in transcript if isinstance(m, VerifyRequest))
    sel = next(m for m in transcript if isinstance(m, HolderSelection))
    bits = next(m for m in transcript if isinstance(m, BankBits))
    res = next(m for m in transcript if isinstance(m, HolderResults))
    return _Observed(req.coin_id, {i: (m, p) for i, m, p in zip(sel.indices, bits.m, res.pairs)})


class ReplayHolder(HolderBase):
    """Replays answers from one recorded honest verification.

    It selects as many previously answered indexes as the new challenge
    allows; a recorded answer is reused when the bank's bit repeats, anything
    else is a guess.
    """

    def __init__(self, transcript, rng: np.random.Generator, coin_id: str | None = None):
        self.observed = _observe(transcript)
        super().__init__(coin_id or self.observed.coin_id)
        self.rng = rng

    def select(self, challenge, n):
        known = [i for i in challenge if i in self.observed.answers][:n]
        others = [i for i in challenge if i not in self.observed.answers]
        filler = self.rng.choice(others, size=n - len(known), replace=False) if n > len(known) else []
        return sorted(known + [int(i) for i in filler])

    def answer(self, selection, m_values):
        pairs = []
        for i, m in zip(selection, m_values):
            seen = self.observed.answers.get(i)
            if seen is not None and seen[0] == m:
                pairs.append(seen[1])
            else:
                a, b = self.rng.integers(0, 2, size=2)
                pairs.append(Outcome(int(a), int(b)))
        return pairs


# --- exact oracles -------------------------------------------------------------

def blind_guess_register_rate() -> Fraction:
    """P[(x, m, a, b) in HMP4] for uniform x, m and a uniformly guessed (a, b)."""
    hits = sum(hmp4_member(x, m, a, b) for x in ALL_STRINGS for m in (0, 1) for a, b in OUTCOMES)
    return Fraction(hits, 16 * 2 * 4)


def blind_guess_joint_enumeration(t: int) -> Fraction:
    """Acceptance of a blind guess by enumerating every register jointly.

    All (x, m, guess) tuples of all 2t/3 checked registers; 128**(2t/3) cases,
    so only small t are practical.
    """
    n = 2 * t // 3
    per_register = [(x, m, o) for x in ALL_STRINGS for m in (0, 1) for o in OUTCOMES]
    hits = sum(all(hmp4_member(x, m, *o) for x, m, o in combo)
               for combo in itertools.product(per_register, repeat=n))
    return Fraction(hits, len(per_register) ** n)


def wrong_basis_register_rate(matched: bool = False) -> Fraction:
    """Per-register success of the early-measurement attacker.

    Enumerates x, the guessed bit m', the early outcome and the re-measured
    outcome exactly.  ``matched=False`` gives the rate when m' != m.
    """
    total = Fraction(0)
    cases = 0
    for x in ALL_STRINGS:
        for m_guess in (0, 1):
            m = m_guess if matched else 1 - m_guess
            cases += 1
            early = exact_probabilities(x.signs(), m_guess)
            for (out, p_early), column in zip(early.items(), integer_columns(m_guess)):
                if p_early == 0:
                    continue
                if matched:
                    total += p_early * hmp4_member(x, m, *out)
                    continue
                again = exact_probabilities(column, m)
                total += p_early * sum(q * hmp4_member(x, m, *o) for o, q in again.items())
    return total / cases


def wrong_basis_acceptance(t: int) -> Fraction:
    """Each checked register: bank bit matches the guess w.p. 1/2."""
    per_register = (wrong_basis_register_rate(True) + wrong_basis_register_rate(False)) / 2
    return per_register ** (2 * t // 3)


def blind_guess_acceptance(t: int) -> Fraction:
    return blind_guess_register_rate() ** (2 * t // 3)


def replay_acceptance(k: int, t: int) -> Fraction:
    """Replay of one honest transcript against a fresh challenge.

    J = |old selection ∩ new challenge| is hypergeometric; a reused index
    passes w.p. 1/2 + 1/2 * 1/2 (bit repeats, or a lucky guess), the rest
    w.p. 1/2.
    """
    n = 2 * t // 3
    reused = Fraction(1, 2) + Fraction(1, 2) * blind_guess_register_rate()
    guess = blind_guess_register_rate()
    total = Fraction(0)
    for j in range(n + 1):
        ways = comb(n, j) * comb(k - n, t - j)
        if ways:
            total += Fraction(ways, comb(k, t)) * reused ** j * guess ** (n - j)
    return total


def exact_acceptance(strategy: Strategy, k: int, t: int) -> Fraction:
    strategy = Strategy(strategy)
    if strategy is Strategy.HONEST:
        return Fraction(1)
    if strategy is Strategy.BLIND_GUESS:
        return blind_guess_acceptance(t)
    if strategy is Strategy.WRONG_BASIS:
        return wrong_basis_acceptance(t)
    return replay_acceptance(k, t)


# --- Monte Carlo ---------------------------------------------------------------

@dataclass
class AttackReport:
    strategy: str
    k: int
    t: int
    seed: int
    trials: int
    acceptances: int
    estimate: float
    ci_low: float
    ci_high: float
    exact: float

    def __post_init__(self):
        if not 0 <= self.acceptances <= self.trials:
            raise ValueError("acceptances must lie in [0, trials]")

    @property
    def sigma(self) -> float:
        p = self.exact
        return float(np.sqrt(p * (1 - p) / self.trials))

    def z_score(self) -> float:
        """Distance of the estimate from the exact oracle, in binomial sigmas."""
        s = self.sigma
        return 0.0 if s == 0 else (self.estimate - self.exact) / s

    def to_dict(self) -> dict:
        return asdict(self)


def _random_record(coin_id: str, k: int, rng: np.random.Generator) -> SecretRecord:
    return SecretRecord(coin_id, tuple(ALL_STRINGS[v] for v in rng.integers(0, 16, size=k).tolist()))


def run_trial(strategy: Strategy, k: int, params: ProtocolParams, rng: RngSeed) -> bool:
    """One attack session against a freshly minted record and a fresh bank stream.

    The blind guesser shares a single stream between record, bank and holder:
    it never looks at the other parties, and one generator per trial is what
    keeps 10^5-trial runs fast.
    """
    if strategy is Strategy.BLIND_GUESS:
        g = rng.generator()
        record = _random_record("attack-target", k, g)
        return run_session(BankSession(BankLedger([record]), params, g),
                           BlindGuessHolder(record.coin_id, g)).verdict.valid
    record = _random_record("attack-target", k, rng.child(0).generator())
    ledger = BankLedger([record])
    bank = BankSession(ledger, params, rng.child(1))
    if strategy is Strategy.HONEST:
        holder = HolderSession(coin_from_record(record), rng.child(2))
    elif strategy is Strategy.WRONG_BASIS:
        stolen = coin_from_record(record)
        early = measure_early(stolen, rng.child(3))
        holder = WrongBasisHolder(stolen, early, rng.child(2))
    else:
        victim = coin_from_record(record)
        old = run_session(BankSession(ledger, params, rng.child(4)), HolderSession(victim, rng.child(5)))
        holder = ReplayHolder(old.transcript, rng.child(2).generator())
    return run_session(bank, holder).verdict.valid


def estimate(strategy: Strategy | str, params: ProtocolParams, trials: int, seed: int,
             k: int = 60) -> AttackReport:
    """Run ``trials`` independent sessions; trial i draws from ``RngSeed(seed).child(i)``."""
    strategy = Strategy(strategy)
    if trials < 1:
        raise ValueError("trials must be at least 1")
    params.check_for(k)
    root = RngSeed(seed)
    accepted = sum(run_trial(strategy, k, params, root.child(i)) for i in range(trials))
    ci = binomtest(accepted, trials).proportion_ci(confidence_level=0.95, method="exact")
    return AttackReport(strategy.value, k, params.t, seed, trials, accepted, accepted / trials,
                        float(ci.low), float(ci.high), float(exact_acceptance(strategy, k, params.t)))


def wrong_basis_register_trials(trials: int, seed: int) -> float:
    """Monte Carlo of the m' != m per-register success through the simulator."""
    from .hmp import prepare

    rng = RngSeed(seed)
    g = rng.child(0).generator()
    hits = 0
    for i in range(trials):
        x = ALL_STRINGS[int(g.integers(16))]
        m_guess = int(g.integers(2))
        coin = QCoin("probe", [prepare(x)])
        coin.consume_register(0, m_guess, rng.child(1, i).generator())
        out = run_query(coin.collapsed_state(0), 1 - m_guess, rng.child(2, i).generator())
        hits += hmp4_member(x, 1 - m_guess, *out)
    return hits / trials
