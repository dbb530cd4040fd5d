"""Monte Carlo link simulation, throughput accounting and the TDMA baseline.

Per-frame random streams come from ``SeedSequence(master_seed,
spawn_key=(stream, snr_index, frame_index))`` (stream 0 = cooperative
scheme, 1 = TDMA baseline), so results do not depend on how frames are
spread over worker threads. Frames are processed in fixed chunks of
``CHUNK_FRAMES``; the early-stop rule is evaluated chunk by chunk in index
order and later chunks are discarded.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import constellation as cons
from .capacity import PowerAllocation
from .fec import Interleaver, LdpcCode, decode, encode
from .receiver import (LlrFrame, assemble_codeword, cancel_self, demap_all_llrs,
                       demap_layer_llrs, matched_filter_sample, split_codeword)
from .schedule import SchemeParams, listener_of, slots_for_codeword, transmitters_on_slot
from .waveform import (DEFAULT_OVERSAMPLING, DEFAULT_ROLLOFF, DEFAULT_SPAN, ChannelParams,
                       ImpairmentParams, impair, relay_channel, shape)

CHUNK_FRAMES = 50
# demapper variance used when the channel itself is noiseless, relative to E_s at the receiver
NOISELESS_DEMAP_VAR = 1e-2
STREAM_SCHEME, STREAM_TDMA = 0, 1


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class ImpairmentPolicy:
    """How per-user impairments are drawn for each frame."""

    mode: str = "async"  # "sync" or "async"
    delay_max: float = 4.0
    cfo: float = 0.02
    integer_delay: bool = False

    def __post_init__(self):
        if self.mode not in ("sync", "async"):
            raise ConfigurationError(f"unknown impairment mode {self.mode!r}")
        if self.delay_max < 0 or not abs(self.cfo) < 0.5:
            raise ConfigurationError("invalid impairment bounds")

    @property
    def tail_symbols(self) -> int:
        return 0 if self.mode == "sync" else math.ceil(self.delay_max) + 1

    def draw(self, rng: np.random.Generator) -> ImpairmentParams:
        """Delay uniform on [0, delay_max], CFO of random sign, uniform phase."""
        if self.mode == "sync":
            return ImpairmentParams()
        if self.integer_delay:
            delay = float(rng.integers(0, math.floor(self.delay_max) + 1))
        else:
            delay = float(rng.uniform(0.0, self.delay_max))
        cfo = self.cfo * (1.0 if rng.random() < 0.5 else -1.0)
        return ImpairmentParams(delay, cfo, float(rng.uniform(0.0, 2 * math.pi)))


@dataclass(frozen=True, eq=False)
class SimConfig:
    scheme: SchemeParams
    allocation: PowerAllocation
    code: LdpcCode
    channel: ChannelParams = ChannelParams()
    impairments: ImpairmentPolicy = ImpairmentPolicy()
    snr_db: tuple[float, ...] = (0.0,)
    frames: int = 2000
    early_stop_errors: int | None = 100
    master_seed: int = 0
    interleaver_seed: int = 0
    max_iters: int = 50
    decoder: str = "sum_product"
    max_log: bool = False
    oversampling: int = DEFAULT_OVERSAMPLING
    rolloff: float = DEFAULT_ROLLOFF
    span: int = DEFAULT_SPAN
    threads: int = 1
    baseline: str = "none"  # none | qpsk | qam16
    dump_dir: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "snr_db", tuple(float(s) for s in self.snr_db))

    def validate(self, modulation: str = "scheme") -> None:
        nb = 1 if modulation != "scheme" else self.scheme.bursts_per_codeword
        bps = 4 if modulation == "qam16" else 2
        if self.frames < 1:
            raise ConfigurationError("frames must be >= 1")
        if not self.snr_db:
            raise ConfigurationError("SNR sweep is empty")
        if modulation == "scheme" and len(self.allocation) != nb:
            raise ConfigurationError(
                f"allocation has {len(self.allocation)} fractions, scheme needs {nb}")
        if self.code.n % (bps * nb):
            raise ConfigurationError(
                f"code length {self.code.n} is not a multiple of {bps}*N_b = {bps * nb}")
        if self.decoder not in ("sum_product", "min_sum"):
            raise ConfigurationError(f"unknown decoder {self.decoder!r}")
        if self.baseline not in ("none", "qpsk", "qam16"):
            raise ConfigurationError(f"unknown baseline {self.baseline!r}")
        if self.threads < 1:
            raise ConfigurationError("threads must be >= 1")

    def identity(self) -> dict:
        """Everything that determines results (thread count excluded)."""
        return {
            "scheme": asdict(self.scheme),
            "allocation": list(self.allocation.rhos),
            "code": code_identity(self.code),
            "channel": asdict(self.channel),
            "impairments": asdict(self.impairments),
            "snr_db": [_jsonable(s) for s in self.snr_db],
            "frames": self.frames,
            "early_stop_errors": self.early_stop_errors,
            "master_seed": self.master_seed,
            "interleaver_seed": self.interleaver_seed,
            "max_iters": self.max_iters,
            "decoder": self.decoder,
            "max_log": self.max_log,
            "oversampling": self.oversampling,
            "rolloff": self.rolloff,
            "span": self.span,
        }

    def config_hash(self) -> str:
        return _sha(self.identity())


def code_identity(code: LdpcCode) -> dict:
    h = hashlib.sha256(code.H.indptr.tobytes() + code.H.indices.tobytes()).hexdigest()[:16]
    return {"name": code.name, "n": code.n, "k": code.k, "matrix_sha": h}


def _jsonable(x: float):
    return x if math.isfinite(x) else ("inf" if x > 0 else "-inf")


def _sha(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()


@dataclass(frozen=True)
class ReportRow:
    snr_db: float
    plr: float
    throughput: float
    frames_run: int
    frames_failed: int
    iters_mean: float
    iters_max: int
    bits_per_symbol: int
    bursts: int
    rate: float

    def eq6_holds(self) -> bool:
        """T = log2(M) * N_b * R * (1 - PLR), recomputed from this row's own fields."""
        return self.throughput == throughput(self.bits_per_symbol, self.bursts, self.rate, self.plr)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["snr_db"] = _jsonable(self.snr_db)
        return d


def throughput(bits_per_symbol: int, bursts: int, rate: float, plr: float) -> float:
    """Bits delivered per symbol period: log2(M) N_b R (1 - PLR)."""
    return bits_per_symbol * bursts * rate * (1.0 - plr)


CSV_COLUMNS = ("snr_db", "plr", "throughput", "frames_run", "frames_failed",
               "iters_mean", "iters_max")


@dataclass
class SimReport:
    rows: list[ReportRow]
    metadata: dict = field(default_factory=dict)

    def digest(self) -> str:
        """Hash of rows and metadata; a pure function of (config, master_seed)."""
        return _sha({"rows": [r.to_dict() for r in self.rows], "metadata": self.metadata})

    def to_json(self) -> str:
        return json.dumps({"metadata": self.metadata, "rows": [r.to_dict() for r in self.rows],
                           "digest": self.digest()}, indent=2)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.rows:
            w.writerow([repr(getattr(r, c)) if isinstance(getattr(r, c), float) else getattr(r, c)
                        for c in CSV_COLUMNS])
        return buf.getvalue()

    def snr_at_fraction_of_peak(self, fraction: float = 0.9) -> float:
        """Lowest SNR where throughput reaches ``fraction`` of its peak.

        Linear interpolation in dB between the bracketing sweep points; NaN if
        never reached.
        """
        rows = sorted(self.rows, key=lambda r: r.snr_db)
        peak = rows[0].bits_per_symbol * rows[0].bursts * rows[0].rate
        level = fraction * peak
        prev = None
        for r in rows:
            if r.throughput >= level:
                if prev is None or not math.isfinite(prev.snr_db):
                    return r.snr_db
                t = (level - prev.throughput) / (r.throughput - prev.throughput)
                return prev.snr_db + t * (r.snr_db - prev.snr_db)
            prev = r
        return math.nan


# ---------------------------------------------------------------------------
# Frame simulation


def frame_rng(master_seed: int, stream: int, snr_index: int, frame: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(master_seed,
                                                        spawn_key=(stream, snr_index, frame)))


class _Link:
    """Per-configuration constants shared by all frames."""

    def __init__(self, cfg: SimConfig, modulation: str):
        self.cfg = cfg
        self.modulation = modulation
        self.ilv = Interleaver(cfg.code.n, cfg.interleaver_seed)
        self.unit_qpsk = cons.qpsk(1.0)

    def _shape(self, symbols) -> "object":
        c = self.cfg
        return shape(symbols, c.oversampling, c.rolloff, c.span, c.impairments.tail_symbols)

    def frame(self, cp: ChannelParams, rng: np.random.Generator, diag: dict | None = None):
        if self.modulation == "scheme":
            return self._scheme_frame(cp, rng, diag)
        return self._tdma_frame(cp, rng, diag)

    def _demap_var(self, cp: ChannelParams) -> float:
        nv = cp.noise_var
        return nv if nv > 0 else NOISELESS_DEMAP_VAR * cp.es * cp.amplitude**2

    def _scheme_frame(self, cp, rng, diag):
        cfg = self.cfg
        p = cfg.scheme
        nb = p.bursts_per_codeword
        rhos = cfg.allocation.rhos
        code = cfg.code
        sender, receiver = 1, listener_of(1, p)
        info = rng.integers(0, 2, code.k, dtype=np.uint8)
        cw = encode(code, info)
        bursts = split_codeword(self.ilv.interleave(cw), nb)
        nsym = code.n // (2 * nb)
        user_imp = {u: cfg.impairments.draw(rng) for u in range(1, p.num_users + 1)}
        nv = self._demap_var(cp)
        rx_base = cp.es * cp.amplitude**2
        frames = []
        for b, q in enumerate(slots_for_codeword(sender, 1, p), start=1):
            asg = transmitters_on_slot(q, p)
            ups, own = [], None
            for u, bb in asg.entries:
                if u == sender:
                    sym = self.unit_qpsk.modulate(bursts[b - 1])
                else:
                    sym = self.unit_qpsk.points[rng.integers(0, 4, nsym)]
                imp = user_imp[u]
                if cfg.impairments.mode == "async":
                    # delay and CFO persist over the frame; carrier phase is fresh per slot
                    imp = replace(imp, phase=float(rng.uniform(0.0, 2 * math.pi)))
                if u == sender:
                    sender_imp = imp
                w = impair(self._shape(math.sqrt(rhos[bb - 1] * cp.es) * sym), imp)
                ups.append(w)
                if u == receiver:
                    own = w
            r = relay_channel(ups, cp, rng)
            if own is not None:
                r = cancel_self(r, own.scaled(cp.amplitude))
            y = matched_filter_sample(r, nsym, sender_imp)
            layers = [bb for u, bb in asg.entries if u != receiver]
            c = cons.from_fractions([rhos[bb - 1] for bb in layers], rx_base)
            frames.append(demap_layer_llrs(y, c, None, nv, cfg.max_log, slot=q,
                                           target_rank=layers.index(b) + 1))
            if diag is not None:
                diag.setdefault("symbols", []).append((q, y))
        llr = assemble_codeword(frames, self.ilv)
        if diag is not None:
            diag["llrs"] = llr.values
        return cw, llr

    def _tdma_frame(self, cp, rng, diag):
        cfg = self.cfg
        code = cfg.code
        c_tx = cons.qam16(cp.es) if self.modulation == "qam16" else cons.qpsk(cp.es)
        info = rng.integers(0, 2, code.k, dtype=np.uint8)
        cw = encode(code, info)
        sym = c_tx.modulate(self.ilv.interleave(cw))
        imp = cfg.impairments.draw(rng)
        r = relay_channel([impair(self._shape(sym), imp)], cp, rng)
        y = matched_filter_sample(r, sym.size, imp)
        c_rx = cons.qam16(cp.es * cp.amplitude**2) if self.modulation == "qam16" \
            else cons.qpsk(cp.es * cp.amplitude**2)
        llr = demap_all_llrs(y, c_rx, self._demap_var(cp), cfg.max_log, slot=1)
        llr = assemble_codeword([llr], self.ilv)
        if diag is not None:
            diag["symbols"] = [(1, y)]
            diag["llrs"] = llr.values
        return cw, llr


def _run_chunk(link: _Link, cp: ChannelParams, stream: int, snr_index: int,
               frames: range) -> tuple[int, int, np.ndarray]:
    cfg = link.cfg
    cws, llrs = [], []
    for f in frames:
        cw, llr = link.frame(cp, frame_rng(cfg.master_seed, stream, snr_index, f))
        cws.append(cw)
        llrs.append(llr.values)
    res = decode(cfg.code, np.array(llrs), cfg.max_iters, cfg.decoder)
    failed = ~res.converged | np.any(res.bits != np.array(cws), axis=1)
    return len(frames), int(failed.sum()), np.asarray(res.iters_used)


def _modulation_params(modulation: str, cfg: SimConfig) -> tuple[int, int]:
    if modulation == "scheme":
        return 2, cfg.scheme.bursts_per_codeword
    return (4 if modulation == "qam16" else 2), 1


def _run_point(cfg: SimConfig, snr_db: float, snr_index: int, modulation: str) -> ReportRow:
    stream = STREAM_SCHEME if modulation == "scheme" else STREAM_TDMA
    link = _Link(cfg, modulation)
    cp = cfg.channel.at_snr_db(snr_db)
    chunks = [range(lo, min(lo + CHUNK_FRAMES, cfg.frames))
              for lo in range(0, cfg.frames, CHUNK_FRAMES)]
    run = fail = 0
    iters: list[np.ndarray] = []
    stop = False

    def absorb(result):
        nonlocal run, fail, stop
        n, f, it = result
        run += n
        fail += f
        iters.append(it)
        if cfg.early_stop_errors is not None and fail >= cfg.early_stop_errors:
            stop = True

    if cfg.threads == 1:
        for ch in chunks:
            absorb(_run_chunk(link, cp, stream, snr_index, ch))
            if stop:
                break
    else:
        with ThreadPoolExecutor(cfg.threads) as pool:
            for lo in range(0, len(chunks), cfg.threads):
                wave = chunks[lo:lo + cfg.threads]
                results = list(pool.map(lambda ch: _run_chunk(link, cp, stream, snr_index, ch),
                                        wave))
                for res in results:
                    absorb(res)
                    if stop:
                        break
                if stop:
                    break

    if cfg.dump_dir:
        _dump_diagnostics(link, cp, cfg, stream, snr_index, snr_db, modulation)

    bps, nb = _modulation_params(modulation, cfg)
    plr = fail / run
    it = np.concatenate(iters)
    return ReportRow(snr_db, plr, throughput(bps, nb, cfg.code.rate, plr), run, fail,
                     float(it.mean()), int(it.max()), bps, nb, cfg.code.rate)


def _dump_diagnostics(link, cp, cfg, stream, snr_index, snr_db, modulation) -> None:
    out = Path(cfg.dump_dir)
    out.mkdir(parents=True, exist_ok=True)
    diag: dict = {}
    link.frame(cp, frame_rng(cfg.master_seed, stream, snr_index, 0), diag)
    tag = f"{modulation}_snr{snr_db:+.2f}dB"
    with open(out / f"{tag}_symbols.csv", "w") as fh:
        fh.write("slot,re,im\n")
        for q, y in diag["symbols"]:
            for v in y:
                fh.write(f"{q},{v.real:.9g},{v.imag:.9g}\n")
    counts, edges = np.histogram(diag["llrs"], bins=50)
    with open(out / f"{tag}_llr_hist.csv", "w") as fh:
        fh.write("bin_lo,bin_hi,count\n")
        for lo, hi, c in zip(edges[:-1], edges[1:], counts):
            fh.write(f"{lo:.6g},{hi:.6g},{c}\n")


def _metadata(cfg: SimConfig, modulation: str) -> dict:
    return {
        "kind": modulation,
        "config_hash": cfg.config_hash(),
        "seed": cfg.master_seed,
        "code": code_identity(cfg.code),
        "rate": cfg.code.rate,
        "energy_factor": cfg.allocation.energy_factor if modulation == "scheme" else 1.0,
    }


def run_point(cfg: SimConfig, snr_db: float, snr_index: int = 0) -> ReportRow:
    """Simulate ``cfg.frames`` codewords of the cooperative scheme at one SNR."""
    cfg.validate()
    return _run_point(cfg, snr_db, snr_index, "scheme")


def run_sweep(cfg: SimConfig) -> SimReport:
    cfg.validate()
    order = sorted(range(len(cfg.snr_db)), key=lambda i: cfg.snr_db[i])
    rows = [_run_point(cfg, cfg.snr_db[i], i, "scheme") for i in order]
    return SimReport(rows, _metadata(cfg, "scheme"))


def run_tdma_baseline(cfg: SimConfig, modulation: str = "qam16") -> SimReport:
    """Same pipeline with one transmitter per slot (N_b = 1) and no cancellation."""
    if modulation not in ("qpsk", "qam16"):
        raise ConfigurationError(f"unknown baseline modulation {modulation!r}")
    cfg = replace(cfg, scheme=SchemeParams(cfg.scheme.num_users, 1),
                  allocation=PowerAllocation((1.0,)))
    cfg.validate(modulation)
    order = sorted(range(len(cfg.snr_db)), key=lambda i: cfg.snr_db[i])
    rows = [_run_point(cfg, cfg.snr_db[i], i, modulation) for i in order]
    return SimReport(rows, _metadata(cfg, f"tdma_{modulation}"))


def plot_pairs(scheme: SimReport, baseline: SimReport) -> str:
    """CSV pairing scheme and baseline throughput per SNR (blank where a curve lacks a point)."""
    s = {r.snr_db: r.throughput for r in scheme.rows}
    b = {r.snr_db: r.throughput for r in baseline.rows}
    lines = ["snr_db,scheme_throughput,baseline_throughput"]
    for snr in sorted(set(s) | set(b)):
        lines.append(f"{snr},{s.get(snr, '')},{b.get(snr, '')}")
    return "\n".join(lines) + "\n"


def binomial_interval(failures: int, trials: int, z: float = 1.96) -> tuple[float, float]:
    """Wilson 95% interval for a packet loss ratio."""
    if trials == 0:
        return 0.0, 1.0
    p = failures / trials
    den = 1 + z**2 / trials
    centre = (p + z**2 / (2 * trials)) / den
    half = z * math.sqrt(p * (1 - p) / trials + z**2 / (4 * trials**2)) / den
    return max(0.0, centre - half), min(1.0, centre + half)


def write_report(report: SimReport, json_path: str | os.PathLike | None = None,
                 csv_path: str | os.PathLike | None = None) -> None:
    if json_path:
        Path(json_path).write_text(report.to_json())
    if csv_path:
        Path(csv_path).write_text(report.to_csv())
