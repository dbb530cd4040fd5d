"""Labeled QPSK, 16-QAM and superposed (layered) constellations.

A superposed constellation is the sum of L independently Gray-labeled QPSK
layers. Points are indexed by the integer value of their binary label read
MSB first, so ``points[i]`` carries label ``format(i, "0{2L}b")``. The layer
of rank ``l`` (1 = strongest) owns label bit positions ``2l-1`` and ``2l``
(1-based), i.e. columns ``2l-2`` and ``2l-1`` of :attr:`Constellation.bits`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

MAX_LAYERS = 8
COLLISION_TOL = 1e-9

# Gray QPSK: first bit -> sign of I, second bit -> sign of Q.
# 00 -> ++, 01 -> +-, 10 -> -+, 11 -> --
_QPSK_UNIT = np.array([1 + 1j, 1 - 1j, -1 + 1j, -1 - 1j]) / math.sqrt(2.0)


@dataclass(frozen=True)
class LayerSpec:
    """One QPSK layer: energy fraction of E_s and relative carrier phase."""

    energy_fraction: float
    phase_offset: float = 0.0

    def __post_init__(self):
        if not math.isfinite(self.energy_fraction):
            raise ValueError("energy_fraction must be finite")
        if self.energy_fraction < 0:
            raise ValueError("energy_fraction must be non-negative")
        if not (0.0 <= self.phase_offset < 2 * math.pi):
            raise ValueError("phase_offset must lie in [0, 2*pi)")


@dataclass(frozen=True, eq=False)
class Constellation:
    """Immutable labeled signal set.

    ``layers`` is empty for constellations that are not built from QPSK
    layers (16-QAM); ``num_layers`` is then 0 and layer-based helpers refuse
    to operate on it.
    """

    points: np.ndarray
    base_energy: float
    layers: tuple[LayerSpec, ...] = ()
    _bits: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        pts = np.array(self.points, dtype=complex)
        m = pts.size
        nbits = int(round(math.log2(m))) if m else 0
        if m == 0 or 2**nbits != m:
            raise ValueError("number of points must be a power of two")
        pts.setflags(write=False)
        idx = np.arange(m)
        bits = ((idx[:, None] >> np.arange(nbits - 1, -1, -1)[None, :]) & 1).astype(np.uint8)
        bits.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "_bits", bits)

    @property
    def bits(self) -> np.ndarray:
        """(M, bits_per_symbol) array of label bits, MSB first."""
        return self._bits

    @property
    def bits_per_symbol(self) -> int:
        return self._bits.shape[1]

    @property
    def labels(self) -> list[str]:
        n = self.bits_per_symbol
        return [format(i, f"0{n}b") for i in range(self.points.size)]

    @property
    def num_layers(self) -> int:
        return len(self.layers)

    @property
    def layer_energies(self) -> tuple[float, ...]:
        return tuple(s.energy_fraction * self.base_energy for s in self.layers)

    @property
    def is_cophased(self) -> bool:
        return bool(self.layers) and all(s.phase_offset == 0.0 for s in self.layers)

    def average_energy(self) -> float:
        return float(np.mean(np.abs(self.points) ** 2))

    def layer_bit_positions(self, rank: int) -> tuple[int, int]:
        """Zero-based label columns owned by the layer of the given rank."""
        if not 1 <= rank <= self.num_layers:
            raise ValueError(f"rank {rank} outside 1..{self.num_layers}")
        return 2 * rank - 2, 2 * rank - 1

    def rank_of_energy(self, energy: float, rtol: float = 1e-9) -> int:
        """Rank of the first layer whose energy matches ``energy``."""
        for r, e in enumerate(self.layer_energies, start=1):
            if math.isclose(e, energy, rel_tol=rtol, abs_tol=rtol * max(self.base_energy, 1e-300)):
                return r
        raise ValueError(f"no layer with energy {energy} in {self.layer_energies}")

    def collisions(self) -> list[tuple[int, int]]:
        """Index pairs of distinct labels whose points coincide.

        Two points collide when their distance is at most
        ``1e-9 * sqrt(base_energy)``.
        """
        tol = COLLISION_TOL * math.sqrt(self.base_energy)
        d = np.abs(self.points[:, None] - self.points[None, :])
        i, j = np.nonzero(np.triu(d <= tol, k=1))
        return list(zip(i.tolist(), j.tolist()))

    @property
    def is_injective(self) -> bool:
        return not self.collisions()

    def modulate(self, bits: np.ndarray) -> np.ndarray:
        """Map a flat bit array (length multiple of bits_per_symbol) to points."""
        bits = np.asarray(bits, dtype=np.int64)
        n = self.bits_per_symbol
        if bits.size % n:
            raise ValueError(f"bit count {bits.size} is not a multiple of {n}")
        weights = 1 << np.arange(n - 1, -1, -1)
        return self.points[bits.reshape(-1, n) @ weights]

    def to_csv_rows(self) -> list[str]:
        return [f"{p.real:.12g},{p.imag:.12g},{lab}" for p, lab in zip(self.points, self.labels)]


def qpsk(energy: float) -> Constellation:
    """Gray-labeled QPSK with average symbol energy ``energy``."""
    if energy < 0:
        raise ValueError("energy must be non-negative")
    return Constellation(_QPSK_UNIT * math.sqrt(energy), energy, (LayerSpec(1.0),))


def superpose(layers: Sequence[LayerSpec], base_energy: float) -> Constellation:
    """Superposition of QPSK layers, ``layers`` sorted by descending energy.

    The returned constellation has ``4**L`` points; the layer at position
    ``l`` of the input occupies label bits ``2l-1, 2l``.
    """
    layers = tuple(layers)
    if not 1 <= len(layers) <= MAX_LAYERS:
        raise ValueError(f"need between 1 and {MAX_LAYERS} layers")
    if base_energy < 0:
        raise ValueError("base_energy must be non-negative")
    fr = [s.energy_fraction for s in layers]
    if any(a < b for a, b in zip(fr, fr[1:])):
        raise ValueError("layers must be sorted by descending energy_fraction")
    L = len(layers)
    idx = np.arange(4**L)
    pts = np.zeros(idx.size, dtype=complex)
    for l, s in enumerate(layers):
        sym = (idx >> (2 * (L - 1 - l))) & 3
        amp = math.sqrt(s.energy_fraction * base_energy)
        pts += _QPSK_UNIT[sym] * amp * np.exp(1j * s.phase_offset)
    return Constellation(pts, base_energy, layers)


def remove_layer(c: Constellation, rank: int) -> Constellation:
    """Constellation with the rank-``rank`` layer removed and the rest re-ranked."""
    if not 1 <= rank <= c.num_layers:
        raise ValueError(f"rank {rank} outside 1..{c.num_layers}")
    rest = [s for r, s in enumerate(c.layers, start=1) if r != rank]
    if not rest:
        raise ValueError("cannot remove the only layer")
    # stable sort keeps input order among equal energies
    rest.sort(key=lambda s: -s.energy_fraction)
    return superpose(rest, c.base_energy)


def from_fractions(rhos: Sequence[float], base_energy: float = 1.0,
                   phases: Sequence[float] | None = None) -> Constellation:
    """Shorthand for :func:`superpose` from plain energy fractions."""
    phases = [0.0] * len(rhos) if phases is None else phases
    return superpose([LayerSpec(float(r), float(p)) for r, p in zip(rhos, phases)], base_energy)


def qam16(energy: float) -> Constellation:
    """Gray-labeled square 16-QAM with average energy ``energy``.

    Bits 1-2 select the I level and bits 3-4 the Q level, each through the
    Gray sequence 00 -> +3, 01 -> +1, 11 -> -1, 10 -> -3.
    """
    if energy < 0:
        raise ValueError("energy must be non-negative")
    level = {0b00: 3.0, 0b01: 1.0, 0b11: -1.0, 0b10: -3.0}
    scale = math.sqrt(energy / 10.0)
    pts = np.array([complex(level[i >> 2], level[i & 3]) * scale for i in range(16)])
    return Constellation(pts, energy)
