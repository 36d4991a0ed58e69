import io
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qcoin.coin import (
    COIN_FORMAT,
    SIMULATION_MARKER,
    BankLedger,
    CoinFileError,
    LedgerError,
    Mint,
    QCoin,
    RegisterConsumedError,
    SecretRecord,
    coin_from_dict,
    coin_from_record,
    coin_to_dict,
    ledger_from_dict,
    ledger_to_dict,
    load_coin,
    load_ledger,
    mint,
    save_coin,
    save_ledger,
)
from qcoin.hmp import ALL_STRINGS, Bits4, encode, support_table
from qcoin.qsim import RngSeed


class TestMint:
    def test_forced_single_register(self):
        coin = coin_from_record(SecretRecord.from_strings("c", ["0110"]))
        assert coin.k == 1
        assert coin.live_state(0).max_error([0.5, -0.5, -0.5, 0.5]) < 1e-12
        assert coin.p_bitstring() == "0"

    def test_k60(self):
        coin, record = mint(60, np.random.default_rng(0))
        assert coin.k == record.k == 60
        assert coin.p_bitstring() == "0" * 60
        assert all(coin.is_live(i) for i in range(60))

    def test_same_seed_same_entries_distinct_ids(self):
        issuer = Mint(epoch=5)
        _, a = issuer.mint(20, RngSeed(9).generator())
        _, b = issuer.mint(20, RngSeed(9).generator())
        assert a.entries == b.entries
        assert a.coin_id != b.coin_id

    def test_id_format(self):
        issuer = Mint(epoch=77, start=3)
        assert issuer.next_id() == "77-3"
        assert issuer.next_id() == "77-4"

    @pytest.mark.parametrize("k", [0, -1])
    def test_bad_k(self, k):
        with pytest.raises(ValueError):
            mint(k, np.random.default_rng(0))

    def test_fresh_coin_fidelity(self):
        issuer = Mint(epoch=1)
        for seed in range(100):
            coin, record = issuer.mint(12, RngSeed(seed).generator())
            for i, x in enumerate(record.entries):
                assert coin.live_state(i).max_error(encode(x)) < 1e-12

    def test_entries_roughly_uniform(self):
        _, record = Mint(epoch=1).mint(16_000, RngSeed(3).generator())
        counts = np.bincount([int(x) for x in record.entries], minlength=16)
        assert counts.min() > 850 and counts.max() < 1150


class TestConsume:
    def test_flips_p_bit(self):
        coin, _ = mint(4, np.random.default_rng(1))
        out = coin.consume_register(2, 1, np.random.default_rng(0))
        assert out in {(0, 0), (0, 1), (1, 0), (1, 1)}
        assert coin.p_bitstring() == "0010"
        assert not coin.is_live(2)

    def test_second_consume_rejected(self):
        coin, _ = mint(2, np.random.default_rng(1))
        coin.consume_register(0, 0, np.random.default_rng(0))
        with pytest.raises(RegisterConsumedError):
            coin.consume_register(0, 0, np.random.default_rng(0))
        with pytest.raises(RegisterConsumedError):
            coin.live_state(0)

    def test_0000_m0(self):
        coin = coin_from_record(SecretRecord.from_strings("z", ["0000"]))
        allowed = {o for o, p in support_table(Bits4.parse("0000"), 0).items() if p}
        assert allowed == {(0, 0), (1, 0)}
        assert coin.consume_register(0, 0, np.random.default_rng(5)) in allowed

    def test_out_of_range(self):
        coin, _ = mint(2, np.random.default_rng(1))
        with pytest.raises(IndexError):
            coin.consume_register(2, 0, np.random.default_rng(0))

    def test_collapsed_state_debug_accessor(self):
        coin, _ = mint(2, np.random.default_rng(1))
        with pytest.raises(ValueError):
            coin.collapsed_state(0)
        coin.consume_register(0, 1, np.random.default_rng(0))
        assert abs(coin.collapsed_state(0).norm() - 1) < 1e-12

    def test_reserve_then_consume(self):
        coin, _ = mint(3, np.random.default_rng(1))
        coin.reserve([1])
        assert not coin.is_fresh(1) and coin.is_live(1)
        coin.consume_register(1, 0, np.random.default_rng(0))
        assert coin.popcount() == 1

    def test_popcount_counts_successful_consumes(self):
        coin, _ = mint(30, np.random.default_rng(2))
        g = np.random.default_rng(3)
        ok = 0
        before = coin.p_register
        for i in g.integers(0, 30, size=60):
            try:
                coin.consume_register(int(i), int(g.integers(2)), g)
                ok += 1
            except RegisterConsumedError:
                pass
            after = coin.p_register
            assert all(b <= a for b, a in zip(before, after))  # bits never reset
            before = after
        assert coin.popcount() == ok

    def test_collapsed_requires_p(self):
        with pytest.raises(ValueError):
            QCoin("c", [encode(ALL_STRINGS[0])], p_register=[0], collapsed=[True])


class TestLedger:
    def test_empty_round_trip(self):
        buf = io.StringIO()
        save_ledger(BankLedger(), buf)
        buf.seek(0)
        assert len(load_ledger(buf)) == 0

    def test_small_round_trip(self, tmp_path):
        ledger = BankLedger([SecretRecord.from_strings("a", ["0110", "0000", "1111"])])
        save_ledger(ledger, tmp_path / "l.json")
        back = load_ledger(tmp_path / "l.json")
        assert back == ledger
        assert [str(x) for x in back.get("a").entries] == ["0110", "0000", "1111"]

    def test_file_schema(self):
        doc = ledger_to_dict(BankLedger([SecretRecord.from_strings("7", ["1000"])]))
        assert doc == {"version": 1, "coins": [{"id": "7", "k": 1, "entries": ["1000"]}]}

    def test_five_bit_entry_named(self):
        doc = {"version": 1, "coins": [
            {"id": "ok", "k": 1, "entries": ["0000"]},
            {"id": "bad", "k": 2, "entries": ["0000", "01101"]},
        ]}
        with pytest.raises(LedgerError) as e:
            ledger_from_dict(doc)
        assert "bad" in str(e.value) and "entry 1" in str(e.value) and "coin #1" in str(e.value)

    def test_duplicate_id(self):
        doc = {"version": 1, "coins": [{"id": "a", "k": 1, "entries": ["0000"]}] * 2}
        with pytest.raises(LedgerError, match="duplicate"):
            ledger_from_dict(doc)
        ledger = BankLedger([SecretRecord.from_strings("a", ["0000"])])
        with pytest.raises(LedgerError):
            ledger.add(SecretRecord.from_strings("a", ["1111"]))

    @pytest.mark.parametrize("doc", [
        [],
        {"version": 2, "coins": []},
        {"version": 1, "coins": {}},
        {"version": 1, "coins": [{"id": "", "k": 1, "entries": ["0000"]}]},
        {"version": 1, "coins": [{"id": "a", "k": 2, "entries": ["0000"]}]},
        {"version": 1, "coins": [{"id": "a", "k": 1, "entries": [1]}]},
        {"version": 1, "coins": [{"id": "a", "k": 0, "entries": []}]},
    ])
    def test_malformed(self, doc):
        with pytest.raises(LedgerError):
            ledger_from_dict(doc)

    def test_malformed_json(self):
        with pytest.raises(LedgerError, match="malformed"):
            load_ledger(io.StringIO('{"version": 1,'))

    def test_append_only_interface(self):
        assert not hasattr(BankLedger(), "remove")


_bits4 = st.integers(0, 15).map(Bits4.from_int)
_record = st.builds(lambda cid, xs: SecretRecord(cid, tuple(xs)),
                    st.text(min_size=1, max_size=12), st.lists(_bits4, min_size=1, max_size=20))
_ledger = st.lists(_record, max_size=6, unique_by=lambda r: r.coin_id).map(BankLedger)


@settings(max_examples=200, deadline=None)
@given(_ledger)
def test_ledger_round_trip_property(ledger):
    buf = io.StringIO()
    save_ledger(ledger, buf)
    buf.seek(0)
    back = load_ledger(buf)
    assert back == ledger
    assert ledger_to_dict(back) == ledger_to_dict(ledger)


class TestCoinFile:
    def test_round_trip_exact(self, tmp_path):
        coin, _ = mint(8, np.random.default_rng(4))
        coin.reserve([5])
        coin.consume_register(1, 1, np.random.default_rng(0))
        save_coin(coin, tmp_path / "c.json")
        back = load_coin(tmp_path / "c.json")
        assert back.snapshot() == coin.snapshot()
        assert back.coin_id == coin.coin_id

    def test_marker_and_format(self):
        coin, _ = mint(2, np.random.default_rng(4))
        doc = coin_to_dict(coin)
        assert doc["marker"] == SIMULATION_MARKER and doc["format"] == COIN_FORMAT
        assert doc["p"] == "00" and len(doc["registers"][0]["amplitudes"]) == 4

    def test_missing_marker(self):
        coin, _ = mint(2, np.random.default_rng(4))
        doc = coin_to_dict(coin)
        del doc["marker"]
        with pytest.raises(CoinFileError, match=SIMULATION_MARKER):
            coin_from_dict(doc)

    @pytest.mark.parametrize("mutate", [
        lambda d: d["registers"][0].update(amplitudes=[[1, 0], [1, 0], [0, 0], [0, 0]]),
        lambda d: d["registers"][0].update(amplitudes=[[1, 0]]),
        lambda d: d.update(p="0"),
        lambda d: d.update(k=3),
        lambda d: d.update(id=""),
    ])
    def test_corrupt(self, mutate):
        coin, _ = mint(2, np.random.default_rng(4))
        doc = json.loads(json.dumps(coin_to_dict(coin)))
        mutate(doc)
        with pytest.raises(CoinFileError):
            coin_from_dict(doc)

    def test_malformed_json(self, tmp_path):
        (tmp_path / "c.json").write_text("{")
        with pytest.raises(CoinFileError):
            load_coin(tmp_path / "c.json")
