"""Burst-to-slot mapping and its steady-state occupancy properties."""

import pytest

from pncsim.schedule import (SchemeParams, format_occupancy, listener_of, occupancy,
                             receiver_slots, slots_for_codeword, transmitters_on_slot)

from oracles import unrolled_schedule


class TestSlotsForCodeword:
    def test_examples(self):
        assert slots_for_codeword(2, 2, SchemeParams(4, 3)) == range(6, 9)
        assert slots_for_codeword(1, 1, SchemeParams(4, 1)) == range(1, 2)
        assert slots_for_codeword(4, 1, SchemeParams(4, 2)) == range(4, 6)

    def test_bad_user(self):
        with pytest.raises(ValueError):
            slots_for_codeword(5, 1, SchemeParams(4, 2))
        with pytest.raises(ValueError):
            slots_for_codeword(0, 1, SchemeParams(4, 2))

    def test_bad_codeword_index(self):
        with pytest.raises(ValueError):
            slots_for_codeword(1, 0, SchemeParams(4, 2))


class TestReceiver:
    def test_listener_wraps(self):
        assert listener_of(4, SchemeParams(4, 2)) == 1
        assert listener_of(1, SchemeParams(4, 2)) == 2

    def test_slots(self):
        assert receiver_slots(1, 3, SchemeParams(4, 2)) == range(9, 11)
        # classical two-user layout
        assert receiver_slots(2, 1, SchemeParams(2, 2)) == range(2, 4)


class TestTransmittersOnSlot:
    def test_examples(self):
        assert set(transmitters_on_slot(6, SchemeParams(4, 2)).entries) == {(2, 1), (1, 2)}
        assert set(transmitters_on_slot(1, SchemeParams(4, 3)).entries) == {(1, 1), (4, 2), (3, 3)}

    def test_tdma(self):
        for q in range(1, 20):
            assert len(transmitters_on_slot(q, SchemeParams(5, 1)).entries) == 1

    def test_burst_of(self):
        a = transmitters_on_slot(6, SchemeParams(4, 2))
        assert a.burst_of(1) == 2
        assert a.burst_of(3) is None

    def test_bad_slot(self):
        with pytest.raises(ValueError):
            transmitters_on_slot(0, SchemeParams(4, 2))

    @pytest.mark.parametrize("nu", range(2, 9))
    def test_matches_unrolled_rule(self, nu):
        for nb in range(1, nu + 1):
            p = SchemeParams(nu, nb)
            for q in range(1, 3 * nu + 1):
                assert set(transmitters_on_slot(q, p).entries) == unrolled_schedule(nu, nb, q)


@pytest.mark.parametrize("nu", range(2, 9))
def test_occupancy_properties(nu):
    for nb in range(1, nu + 1):
        p = SchemeParams(nu, nb)
        slots = 3 * nu
        for q in range(1, slots + 1):
            a = transmitters_on_slot(q, p)
            assert sorted(b for _, b in a.entries) == list(range(1, nb + 1))
            assert len(set(a.users)) == nb
            assert transmitters_on_slot(q + nu, p).entries == a.entries
        for row in occupancy(p, slots):
            # N_b consecutive active slots then N_u - N_b silent ones, cyclically
            active = [b > 0 for b in row]
            for q in range(slots):
                if row[q] == 1:
                    assert [row[(q + j) % slots] for j in range(nb)] == list(range(1, nb + 1))
                    assert not any(active[(q + nb + j) % slots] for j in range(nu - nb))
            assert sum(active) == 3 * nb


class TestSchemeParams:
    def test_validation(self):
        with pytest.raises(ValueError):
            SchemeParams(1, 1)
        with pytest.raises(ValueError):
            SchemeParams(4, 5)
        with pytest.raises(ValueError):
            SchemeParams(4, 0)
        assert SchemeParams(4, 1).is_tdma


class TestFormat:
    def test_text_table(self):
        text = format_occupancy(SchemeParams(4, 2), 4)
        assert text.splitlines() == [
            "user  1  2  3  4",
            "   1  1  2  .  .",
            "   2  .  1  2  .",
            "   3  .  .  1  2",
            "   4  2  .  .  1",
        ]

    def test_csv(self):
        text = format_occupancy(SchemeParams(2, 2), 2, csv=True)
        assert text.splitlines() == ["user,slot1,slot2", "1,1,2", "2,2,1"]
