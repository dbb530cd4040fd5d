"""End-to-end link simulation, reporting and reproducibility."""

import json
import math
from dataclasses import replace

import numpy as np
import pytest

from pncsim.capacity import PowerAllocation
from pncsim.fec import load_toy_code
from pncsim.harness import (CHUNK_FRAMES, CSV_COLUMNS, ConfigurationError, ImpairmentPolicy,
                            ReportRow, SimConfig, SimReport, binomial_interval, frame_rng,
                            plot_pairs, run_point, run_sweep, run_tdma_baseline, throughput,
                            write_report)
from pncsim.schedule import SchemeParams
from pncsim.waveform import ChannelParams

SYNC = ImpairmentPolicy("sync")


@pytest.fixture(scope="module")
def toy16():
    return load_toy_code(16)


@pytest.fixture(scope="module")
def toy24():
    return load_toy_code(24)


def _cfg(code, nu=4, rhos=(1.0, 0.5), **kw):
    kw.setdefault("channel", ChannelParams(n0_u=1.0, n0_d=1.0))
    return SimConfig(SchemeParams(nu, len(rhos)), PowerAllocation(rhos), code, **kw)


def _row(snr, plr, rate=0.5, bps=2, nb=2):
    return ReportRow(snr, plr, throughput(bps, nb, rate, plr), 100, round(100 * plr),
                     1.0, 1, bps, nb, rate)


class TestThroughput:
    def test_worked_example(self):
        assert throughput(2, 2, 0.5, 0.1) == pytest.approx(1.8)

    def test_row_identity(self):
        assert _row(1.0, 0.25).eq6_holds()
        bad = replace(_row(1.0, 0.25), throughput=1.0)
        assert not bad.eq6_holds()


class TestNoiseless:
    @pytest.mark.parametrize("nu,rhos", [(2, (1.0, 0.5)), (4, (1.0, 0.5)),
                                         (4, (1.0, 0.6, 0.3))])
    def test_scheme_sync(self, toy24, nu, rhos):
        cfg = _cfg(toy24, nu, rhos, impairments=SYNC, snr_db=(math.inf,), frames=100)
        row = run_sweep(cfg).rows[0]
        assert row.plr == 0.0
        assert row.throughput == pytest.approx(2 * len(rhos) * 0.5)
        assert row.iters_max == 1

    @pytest.mark.parametrize("nu", [2, 4])
    def test_scheme_async_two_bursts(self, toy24, nu):
        cfg = _cfg(toy24, nu, (1.0, 0.5), snr_db=(math.inf,), frames=100)
        assert run_sweep(cfg).rows[0].plr == 0.0

    @pytest.mark.parametrize("mod,want", [("qpsk", 1.0), ("qam16", 2.0)])
    def test_tdma_baseline(self, toy16, mod, want):
        cfg = _cfg(toy16, snr_db=(math.inf,), frames=100)
        row = run_tdma_baseline(cfg, mod).rows[0]
        assert row.plr == 0.0
        assert row.throughput == pytest.approx(want)

    def test_three_point_sweep(self, toy16):
        cfg = _cfg(toy16, impairments=SYNC, snr_db=(math.inf, 30.0, 25.0), frames=50)
        rep = run_sweep(cfg)
        assert [r.snr_db for r in rep.rows] == [25.0, 30.0, math.inf]
        assert all(r.plr == 0.0 and r.eq6_holds() for r in rep.rows)


class TestReproducibility:
    def test_threads_do_not_change_results(self, toy16):
        cfg = _cfg(toy16, snr_db=(2.0, 4.0), frames=4 * CHUNK_FRAMES, early_stop_errors=None)
        one = run_sweep(cfg)
        four = run_sweep(replace(cfg, threads=4))
        assert one.digest() == four.digest()
        assert one.to_json() == four.to_json()

    def test_early_stop_is_thread_independent(self, toy16):
        cfg = _cfg(toy16, snr_db=(-3.0,), frames=10 * CHUNK_FRAMES, early_stop_errors=5)
        one = run_sweep(cfg).rows[0]
        three = run_sweep(replace(cfg, threads=3)).rows[0]
        assert one == three
        assert one.frames_run % CHUNK_FRAMES == 0
        assert one.frames_run < cfg.frames
        assert one.frames_failed >= 5

    def test_seed_changes_results(self, toy16):
        cfg = _cfg(toy16, snr_db=(1.0,), frames=100, early_stop_errors=None)
        assert run_sweep(cfg).digest() != run_sweep(replace(cfg, master_seed=1)).digest()

    def test_frame_rng_streams(self):
        a = frame_rng(7, 0, 1, 3).integers(0, 2**31, 4)
        np.testing.assert_array_equal(a, frame_rng(7, 0, 1, 3).integers(0, 2**31, 4))
        assert not np.array_equal(a, frame_rng(7, 1, 1, 3).integers(0, 2**31, 4))
        assert not np.array_equal(a, frame_rng(7, 0, 1, 4).integers(0, 2**31, 4))

    def test_plr_monotone_within_bounds(self, toy16):
        cfg = _cfg(toy16, impairments=SYNC, snr_db=(0.0, 3.0, 6.0, 9.0), frames=600,
                   early_stop_errors=None)
        rows = run_sweep(cfg).rows
        for lo, hi in zip(rows, rows[1:]):
            # a later point may exceed an earlier one only inside the overlap of the intervals
            assert binomial_interval(hi.frames_failed, hi.frames_run)[0] <= \
                binomial_interval(lo.frames_failed, lo.frames_run)[1]
        assert rows[0].plr > rows[-1].plr


class TestValidation:
    def test_allocation_length(self, toy24):
        cfg = SimConfig(SchemeParams(4, 3), PowerAllocation((1.0, 0.5)), toy24)
        with pytest.raises(ConfigurationError, match="fractions"):
            run_point(cfg, 0.0)

    def test_code_length_divisibility(self, toy16):
        cfg = _cfg(toy16, rhos=(1.0, 0.6, 0.3))
        with pytest.raises(ConfigurationError, match="multiple"):
            cfg.validate()

    @pytest.mark.parametrize("field,value", [("frames", 0), ("decoder", "viterbi"),
                                             ("baseline", "bpsk"), ("threads", 0),
                                             ("snr_db", ())])
    def test_bad_fields(self, toy16, field, value):
        with pytest.raises(ConfigurationError):
            replace(_cfg(toy16), **{field: value}).validate()

    def test_bad_baseline_modulation(self, toy16):
        with pytest.raises(ConfigurationError):
            run_tdma_baseline(_cfg(toy16), "8psk")

    def test_impairment_policy(self):
        with pytest.raises(ConfigurationError):
            ImpairmentPolicy("chaotic")
        with pytest.raises(ConfigurationError):
            ImpairmentPolicy(cfo=0.6)


class TestImpairmentPolicy:
    def test_sync_is_identity(self):
        imp = SYNC.draw(np.random.default_rng(0))
        assert (imp.delay, imp.cfo, imp.phase) == (0.0, 0.0, 0.0)
        assert SYNC.tail_symbols == 0

    def test_async_draw_bounds(self):
        pol = ImpairmentPolicy()
        rng = np.random.default_rng(1)
        draws = [pol.draw(rng) for _ in range(500)]
        assert all(0 <= d.delay <= 4 and abs(d.cfo) == 0.02 for d in draws)
        assert {d.cfo for d in draws} == {0.02, -0.02}
        assert pol.tail_symbols >= 5

    def test_integer_delay(self):
        pol = ImpairmentPolicy(integer_delay=True)
        rng = np.random.default_rng(2)
        assert {pol.draw(rng).delay for _ in range(200)} == {0.0, 1.0, 2.0, 3.0, 4.0}


class TestReport:
    def test_fraction_of_peak_interpolates(self):
        rep = SimReport([_row(0.0, 1.0), _row(1.0, 0.5), _row(2.0, 0.0)])
        # peak 2.0, 90% is 1.8, reached between 1 dB (T=1.0) and 2 dB (T=2.0)
        assert rep.snr_at_fraction_of_peak() == pytest.approx(1.8)

    def test_fraction_of_peak_never_reached(self):
        assert math.isnan(SimReport([_row(0.0, 1.0), _row(1.0, 0.5)]).snr_at_fraction_of_peak())

    def test_csv_columns(self):
        text = SimReport([_row(0.0, 0.5)]).to_csv()
        lines = text.splitlines()
        assert lines[0] == ",".join(CSV_COLUMNS)
        assert lines[1].split(",")[:3] == ["0.0", "0.5", "1.0"]

    def test_json_roundtrip(self, tmp_path):
        rep = SimReport([_row(math.inf, 0.0)], {"kind": "scheme"})
        jp, cp = tmp_path / "r.json", tmp_path / "r.csv"
        write_report(rep, jp, cp)
        doc = json.loads(jp.read_text())
        assert doc["rows"][0]["snr_db"] == "inf"
        assert doc["digest"] == rep.digest()
        assert cp.read_text() == rep.to_csv()

    def test_plot_pairs(self):
        a = SimReport([_row(0.0, 0.5), _row(1.0, 0.0)])
        b = SimReport([_row(1.0, 0.0, bps=4, nb=1)])
        assert plot_pairs(a, b).splitlines() == ["snr_db,scheme_throughput,baseline_throughput",
                                                 "0.0,1.0,", "1.0,2.0,2.0"]

    def test_metadata(self, toy16):
        rep = run_sweep(_cfg(toy16, snr_db=(math.inf,), frames=10))
        assert rep.metadata["kind"] == "scheme"
        assert rep.metadata["energy_factor"] == pytest.approx(1.5)
        assert rep.metadata["config_hash"] == _cfg(toy16, snr_db=(math.inf,),
                                                   frames=10).config_hash()

    def test_config_hash_ignores_threads(self, toy16):
        cfg = _cfg(toy16)
        assert cfg.config_hash() == replace(cfg, threads=8).config_hash()
        assert cfg.config_hash() != replace(cfg, frames=7).config_hash()


class TestBinomialInterval:
    def test_zero_failures(self):
        lo, hi = binomial_interval(0, 100)
        assert lo == 0.0
        assert hi == pytest.approx(1.96**2 / (100 + 1.96**2), rel=1e-9)

    def test_contains_estimate(self):
        lo, hi = binomial_interval(30, 200)
        assert lo < 0.15 < hi

    def test_no_trials(self):
        assert binomial_interval(0, 0) == (0.0, 1.0)


def test_dump_dir(tmp_path, toy16):
    cfg = _cfg(toy16, snr_db=(3.0,), frames=10, dump_dir=str(tmp_path / "dump"))
    run_sweep(cfg)
    names = sorted(p.name for p in (tmp_path / "dump").iterdir())
    assert names == ["scheme_snr+3.00dB_llr_hist.csv", "scheme_snr+3.00dB_symbols.csv"]
    sym = (tmp_path / "dump" / names[1]).read_text().splitlines()
    assert sym[0] == "slot,re,im"
    # two bursts of 16 / 4 = 4 symbols each
    assert len(sym) == 1 + 2 * 4
