"""Self-interference cancellation, matched filtering and layer demapping."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .constellation import Constellation
from .fec import Interleaver
from .waveform import ImpairmentParams, Waveform, fractional_shift, rrc_taps


@dataclass(frozen=True, eq=False)
class LlrFrame:
    """Soft bits (positive = bit 0) and the slot each value came from."""

    values: np.ndarray
    slot_of_origin: np.ndarray

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            raise ValueError("LLR values must be finite")
        if self.values.shape != self.slot_of_origin.shape:
            raise ValueError("slot_of_origin must match values")

    def __len__(self) -> int:
        return self.values.size


def cancel_self(received: Waveform, own_replica: Waveform) -> Waveform:
    """Subtract the receiver's own channel-distorted burst."""
    if received.oversampling != own_replica.oversampling:
        raise ValueError("replica sample rate differs from received waveform")
    if len(received) != len(own_replica):
        raise ValueError("replica length differs from received waveform")
    return received.with_samples(received.samples - own_replica.samples)


def matched_filter_sample(w: Waveform, num_symbols: int,
                          timing: ImpairmentParams = ImpairmentParams()) -> np.ndarray:
    """Recover ``num_symbols`` symbols of the user whose impairments are ``timing``.

    The waveform is de-rotated by that user's CFO and phase, advanced by its
    delay, filtered with the RRC pulse and sampled at the symbol instants.
    """
    L = w.oversampling
    x = w.samples
    if timing.cfo or timing.phase:
        t = (w.t0 + np.arange(x.size)) / L
        x = x * np.exp(-1j * (2 * np.pi * timing.cfo * t + timing.phase))
    if timing.delay:
        x = fractional_shift(x, -timing.delay * L)
    h = rrc_taps(L, w.rolloff, w.span)
    first = 2 * w.span * L
    last = first + (num_symbols - 1) * L
    if num_symbols < 1 or last >= x.size + h.size - 1:
        raise ValueError("sampling instants fall outside the waveform")
    # only the symbol instants are needed, so correlate instead of full convolution
    starts = first + L * np.arange(num_symbols) - (h.size - 1)
    pad = np.concatenate([x, np.zeros(h.size, dtype=complex)])
    idx = starts[:, None] + np.arange(h.size)[None, :]
    return (pad[idx] @ h[::-1]) / L


def bit_llrs(symbols: np.ndarray, c: Constellation, positions: Sequence[int],
             noise_var: float, max_log: bool = False) -> np.ndarray:
    """LLRs of label columns ``positions`` for every symbol, shape (S, len(positions)).

    Exact log-sum-exp over all constellation points under complex AWGN of
    variance ``noise_var``; ``max_log`` keeps only the dominant term.
    """
    if not noise_var > 0:
        raise ValueError("noise_var must be > 0")
    y = np.asarray(symbols, dtype=complex)
    d = -np.abs(y[:, None] - c.points[None, :]) ** 2 / noise_var
    out = np.empty((y.size, len(positions)))
    for k, pos in enumerate(positions):
        zero = c.bits[:, pos] == 0
        d0, d1 = d[:, zero], d[:, ~zero]
        if max_log:
            out[:, k] = d0.max(axis=1) - d1.max(axis=1)
        else:
            out[:, k] = _lse(d0) - _lse(d1)
    return out


def _lse(a: np.ndarray) -> np.ndarray:
    m = a.max(axis=1)
    return m + np.log(np.exp(a - m[:, None]).sum(axis=1))


def demap_layer_llrs(symbols: np.ndarray, c: Constellation, target_energy: float | None,
                     noise_var: float, max_log: bool = False, slot: int = 0,
                     target_rank: int | None = None) -> LlrFrame:
    """LLRs of the two bits of one layer, interleaved per symbol as (b1, b2, b1, b2, ...).

    The layer is chosen by its energy; ``target_rank`` selects it by rank
    instead.
    """
    if target_rank is None:
        if target_energy is None:
            raise ValueError("give target_energy or target_rank")
        target_rank = c.rank_of_energy(target_energy)
    pos = c.layer_bit_positions(target_rank)
    vals = bit_llrs(symbols, c, pos, noise_var, max_log).reshape(-1)
    return LlrFrame(vals, np.full(vals.size, slot, dtype=np.int64))


def demap_all_llrs(symbols: np.ndarray, c: Constellation, noise_var: float,
                   max_log: bool = False, slot: int = 0) -> LlrFrame:
    """LLRs of every label bit, in label order per symbol."""
    vals = bit_llrs(symbols, c, range(c.bits_per_symbol), noise_var, max_log).reshape(-1)
    return LlrFrame(vals, np.full(vals.size, slot, dtype=np.int64))


def split_codeword(bits: np.ndarray, num_bursts: int) -> list[np.ndarray]:
    """Transmit-side split of an (interleaved) codeword into equal bursts."""
    bits = np.asarray(bits)
    if bits.size % num_bursts:
        raise ValueError("codeword length not divisible by the number of bursts")
    return np.split(bits, num_bursts)


def assemble_codeword(llr_slots: Sequence[LlrFrame], ilv: Interleaver) -> LlrFrame:
    """Concatenate per-burst LLRs in burst order and undo the interleaver."""
    sizes = {len(f) for f in llr_slots}
    if len(sizes) != 1:
        raise ValueError("per-slot LLR frames have different lengths")
    vals = np.concatenate([f.values for f in llr_slots])
    slots = np.concatenate([f.slot_of_origin for f in llr_slots])
    return LlrFrame(ilv.deinterleave(vals), ilv.deinterleave(slots))


def llr_mutual_information(llrs: np.ndarray, bits: np.ndarray) -> float:
    """Bit mutual information estimated from true-posterior LLRs: 1 - E[log2(1+e^{-sL})]."""
    s = 1.0 - 2.0 * np.asarray(bits, dtype=float)
    return float(1.0 - np.mean(np.logaddexp(0.0, -s * np.asarray(llrs)) / math.log(2)))
