"""Pulse shaping, impairments and the amplify-and-forward channel."""

import math

import numpy as np
import pytest

from pncsim.constellation import from_fractions, qpsk
from pncsim.receiver import matched_filter_sample
from pncsim.waveform import (ChannelParams, ImpairmentParams, InfiniteSNRError, Waveform,
                             fractional_shift, impair, raised_cosine, read_iq, relay_channel,
                             rrc_taps, shape, snr_on_slot, write_iq)

from oracles import raised_cosine as rc_oracle

L = 8


def _mf_snr_db(cp, rhos, rng, num_symbols):
    """Matched-filter SNR of a superposed co-phased burst sent through the relay."""
    c = from_fractions(rhos, cp.es)
    sym = c.points[rng.integers(0, c.points.size, num_symbols)]
    r = relay_channel([shape(sym)], cp, rng)
    y = matched_filter_sample(r, num_symbols)
    clean = cp.amplitude * sym
    return 10 * math.log10(np.mean(np.abs(clean) ** 2) / np.mean(np.abs(y - clean) ** 2))


class TestShape:
    def test_single_symbol_nyquist(self):
        y = matched_filter_sample(shape([1.0]), 1)
        assert abs(y[0] - 1) < 1e-3

    def test_adjacent_symbols_no_isi(self):
        y = matched_filter_sample(shape([1.0, 0.0, 0.0]), 3)
        assert abs(y[0] - 1) < 1e-3
        assert np.all(np.abs(y[1:]) < 1e-3)

    def test_energy_per_symbol(self):
        rng = np.random.default_rng(0)
        sym = qpsk(1.0).points[rng.integers(0, 4, 1000)]
        assert shape(sym).energy() / 1000 == pytest.approx(1.0, rel=0.01)

    @pytest.mark.parametrize("rho", [1.0, 0.5, 0.25, 0.1])
    def test_burst_energy_accounting(self, rho):
        rng = np.random.default_rng(1)
        sym = math.sqrt(rho) * qpsk(1.0).points[rng.integers(0, 4, 1000)]
        assert shape(sym).energy() / 1000 == pytest.approx(rho, rel=0.01)

    def test_taps_normalised(self):
        h = rrc_taps(8, 0.35, 8)
        assert np.sum(h**2) == pytest.approx(8.0)
        assert h.size == 2 * 8 * 8 + 1

    def test_rrc_convolves_to_raised_cosine(self):
        h = rrc_taps(L, 0.35, 8)
        g = np.convolve(h, h) / L
        t = (np.arange(g.size) - (g.size - 1) / 2) / L
        for tt in (0.0, 0.5, 1.0, 1.25, 2.0):
            idx = int(round((tt - t[0]) * L))
            assert g[idx] == pytest.approx(rc_oracle(tt, 0.35), abs=2e-3)

    def test_closed_form_matches_oracle(self):
        for t in np.linspace(-4, 4, 81):
            assert float(raised_cosine(t, 0.35)) == pytest.approx(rc_oracle(t, 0.35), abs=1e-12)

    @pytest.mark.parametrize("rolloff", [0.0, 1.5])
    def test_invalid_rolloff(self, rolloff):
        with pytest.raises(ValueError):
            shape([1.0], rolloff=rolloff)

    def test_invalid_oversampling(self):
        with pytest.raises(ValueError):
            shape([1.0], oversampling=1)

    def test_tail_adds_headroom(self):
        w = shape([1.0, -1.0], tail=5)
        assert w.headroom == 5 * L
        assert len(w) == (2 - 1) * L + 2 * 8 * L + 1 + 5 * L


class TestImpair:
    def test_identity_is_bit_exact(self):
        w = shape(np.array([1 + 1j, -1 + 1j]), tail=2)
        out = impair(w, ImpairmentParams())
        np.testing.assert_array_equal(out.samples, w.samples)

    def test_phase_pi_negates(self):
        w = shape(np.array([1 + 1j, -1 + 1j]))
        out = impair(w, ImpairmentParams(phase=math.pi))
        np.testing.assert_allclose(out.samples, -w.samples, atol=1e-12)

    def test_half_symbol_delay_samples_raised_cosine(self):
        w = shape([1.0], tail=2)
        moved = impair(w, ImpairmentParams(delay=0.5))
        # sampling at the undelayed instant sees the pulse half a period early
        y = matched_filter_sample(moved, 1)
        assert y[0].real == pytest.approx(rc_oracle(0.5, 0.35), abs=1e-2)
        # sampling at the delayed instant recovers the peak
        y = matched_filter_sample(moved, 1, ImpairmentParams(delay=0.5))
        assert y[0].real == pytest.approx(1.0, abs=1e-3)

    def test_integer_delay_is_a_shift(self):
        w = shape([1.0, 2.0], tail=3)
        out = impair(w, ImpairmentParams(delay=2.0))
        np.testing.assert_array_equal(out.samples[2 * L:], w.samples[:-2 * L])
        assert out.headroom == L

    def test_delay_beyond_headroom(self):
        with pytest.raises(ValueError, match="headroom"):
            impair(shape([1.0], tail=1), ImpairmentParams(delay=1.5))

    def test_cfo_rotation(self):
        w = Waveform(np.ones(16, dtype=complex), L)
        out = impair(w, ImpairmentParams(cfo=0.02))
        t = np.arange(16) / L
        np.testing.assert_allclose(out.samples, np.exp(2j * np.pi * 0.02 * t))

    def test_fractional_shift_roundtrip(self):
        x = shape([1.0, -1.0, 1.0], tail=2).samples
        back = fractional_shift(fractional_shift(x, 3.3), -3.3)
        np.testing.assert_allclose(back, x, atol=1e-12)

    def test_param_validation(self):
        with pytest.raises(ValueError):
            ImpairmentParams(delay=-1.0)
        with pytest.raises(ValueError):
            ImpairmentParams(cfo=0.5)


class TestSnrOnSlot:
    def test_worked_example(self):
        cp = ChannelParams(es=1, beta_u=1, beta_d=1, gain=2, n0_u=0.1, n0_d=0.2)
        assert snr_on_slot([1.0, 0.25], cp) == pytest.approx(1.25 * 4 / 0.6, rel=1e-12)

    def test_uplink_limited(self):
        cp = ChannelParams(es=2, gain=1e6, n0_u=0.5, n0_d=1.0)
        assert snr_on_slot([1.0], cp) == pytest.approx(2 / 0.5, rel=1e-9)

    def test_zero_energy(self):
        assert snr_on_slot([0.0, 0.0], ChannelParams(n0_u=1.0)) == 0.0

    def test_infinite(self):
        with pytest.raises(InfiniteSNRError):
            snr_on_slot([1.0], ChannelParams())

    def test_negative_parameter(self):
        with pytest.raises(ValueError):
            ChannelParams(gain=-1.0)


class TestChannelParams:
    def test_at_snr_keeps_split(self):
        cp = ChannelParams(gain=2.0, n0_u=1.0, n0_d=3.0).at_snr_db(10.0)
        assert cp.n0_d / cp.n0_u == pytest.approx(3.0)
        assert snr_on_slot([1.0], cp) == pytest.approx(10.0)

    def test_at_snr_even_split_when_noiseless(self):
        cp = ChannelParams().at_snr_db(0.0)
        assert cp.n0_u == cp.n0_d
        assert snr_on_slot([1.0], cp) == pytest.approx(1.0)

    def test_infinite_snr(self):
        assert ChannelParams(n0_u=1.0).at_snr_db(math.inf).is_noiseless


class TestRelayChannel:
    def test_noiseless_identity(self):
        w = shape(np.array([1 + 1j, -1 - 1j, 1 - 1j]))
        out = relay_channel([w], ChannelParams())
        np.testing.assert_array_equal(out.samples, w.samples)

    def test_noiseless_linearity(self):
        cp = ChannelParams(beta_u=0.7, beta_d=1.3, gain=2.0)
        a = shape(np.array([1 + 1j, -1 - 1j]))
        b = shape(np.array([0.5 - 1j, 2j]))
        zero = a.with_samples(np.zeros(len(a), dtype=complex))
        s = relay_channel([a, b], cp).samples
        s -= relay_channel([a], cp).samples + relay_channel([b], cp).samples
        s += relay_channel([zero], cp).samples
        np.testing.assert_allclose(s, 0, atol=1e-13)

    def test_mismatched_rates(self):
        with pytest.raises(ValueError):
            relay_channel([shape([1.0], 8), shape([1.0], 4)], ChannelParams())

    def test_noise_needs_rng(self):
        with pytest.raises(ValueError):
            relay_channel([shape([1.0])], ChannelParams(n0_u=1.0))

    def test_mf_snr_matches_closed_form(self):
        cp = ChannelParams(es=1, beta_u=1, beta_d=1, gain=2, n0_u=0.1, n0_d=0.2)
        rng = np.random.default_rng(42)
        measured = _mf_snr_db(cp, [1.0, 0.25], rng, 100_000)
        assert measured == pytest.approx(10 * math.log10(snr_on_slot([1.0, 0.25], cp)), abs=0.1)

    def test_mf_snr_random_parameter_sets(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            cp = ChannelParams(es=rng.uniform(0.5, 2), beta_u=rng.uniform(0.3, 1.5),
                               beta_d=rng.uniform(0.3, 1.5), gain=rng.uniform(0.5, 3),
                               n0_u=rng.uniform(0.01, 0.5), n0_d=rng.uniform(0.01, 0.5))
            rhos = sorted(rng.uniform(0.1, 1, rng.integers(1, 4)), reverse=True)
            predicted = 10 * math.log10(snr_on_slot(rhos, cp))
            assert _mf_snr_db(cp, rhos, rng, 20_000) == pytest.approx(predicted, abs=0.15)


def test_iq_file_roundtrip(tmp_path):
    w = shape(np.array([1 + 1j, -1 - 1j, 0.5 - 0.25j]))
    path = tmp_path / "burst.iq"
    write_iq(path, w)
    raw = np.fromfile(path, dtype="<f4")
    assert raw.size == 2 * len(w)
    assert raw[0] == np.float32(w.samples[0].real)
    back = read_iq(path, L)
    np.testing.assert_allclose(back.samples, w.samples, atol=1e-6)
