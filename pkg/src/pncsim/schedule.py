"""Burst-to-slot scheduling.

User ``i`` sends its ``K``-th codeword to user ``i+1`` (mod N_u) as N_b
bursts on slots ``(K-1)N_u + i`` .. ``(K-1)N_u + i + N_b - 1``. Users, slots,
codewords and burst indices are all 1-indexed. Slot occupancy is taken in
the cyclic steady state so that every slot, including the first N_b - 1,
carries exactly N_b bursts.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class SchemeParams:
    num_users: int
    bursts_per_codeword: int

    def __post_init__(self):
        if self.num_users < 2:
            raise ValueError("num_users must be >= 2")
        if not 1 <= self.bursts_per_codeword <= self.num_users:
            raise ValueError("bursts_per_codeword must lie in 1..num_users")

    @property
    def is_tdma(self) -> bool:
        return self.bursts_per_codeword == 1


@dataclass(frozen=True)
class SlotAssignment:
    slot: int
    entries: tuple[tuple[int, int], ...]  # (user, burst_index), sorted by burst

    def burst_of(self, user: int) -> int | None:
        for u, b in self.entries:
            if u == user:
                return b
        return None

    @property
    def users(self) -> tuple[int, ...]:
        return tuple(u for u, _ in self.entries)


def _check_user(i: int, p: SchemeParams) -> None:
    if not 1 <= i <= p.num_users:
        raise ValueError(f"user {i} outside 1..{p.num_users}")


def slots_for_codeword(i: int, K: int, p: SchemeParams) -> range:
    """Slots carrying codeword ``K`` of user ``i``; burst b sits on ``range[b-1]``."""
    _check_user(i, p)
    if K < 1:
        raise ValueError("codeword index K must be >= 1")
    start = (K - 1) * p.num_users + i
    return range(start, start + p.bursts_per_codeword)


def receiver_slots(i: int, K: int, p: SchemeParams) -> range:
    """Slots the listener of user ``i`` reads to recover its ``K``-th codeword."""
    return slots_for_codeword(i, K, p)


def listener_of(i: int, p: SchemeParams) -> int:
    """User that receives user ``i``'s traffic."""
    _check_user(i, p)
    return i % p.num_users + 1


def transmitters_on_slot(q: int, p: SchemeParams) -> SlotAssignment:
    if q < 1:
        raise ValueError("slot index must be >= 1")
    n = p.num_users
    entries = []
    for j in range(p.bursts_per_codeword):
        # user i sends burst j+1 on slot q iff q - i - j = 0 (mod N_u)
        i = (q - j - 1) % n + 1
        entries.append((i, j + 1))
    return SlotAssignment(q, tuple(entries))


def occupancy(p: SchemeParams, num_slots: int) -> list[list[int]]:
    """``table[u-1][q-1]`` = burst index user ``u`` sends on slot ``q`` (0 = silent)."""
    table = [[0] * num_slots for _ in range(p.num_users)]
    for q in range(1, num_slots + 1):
        for u, b in transmitters_on_slot(q, p).entries:
            table[u - 1][q - 1] = b
    return table


def format_occupancy(p: SchemeParams, num_slots: int, csv: bool = False) -> str:
    table = occupancy(p, num_slots)
    if csv:
        head = "user," + ",".join(f"slot{q}" for q in range(1, num_slots + 1))
        rows = [f"{u}," + ",".join(map(str, r)) for u, r in enumerate(table, start=1)]
        return "\n".join([head, *rows])
    w = max(len(str(num_slots)), 2)
    head = "user " + " ".join(f"{q:>{w}}" for q in range(1, num_slots + 1))
    rows = [
        f"{u:>4} " + " ".join(f"{(b if b else '.'):>{w}}" for b in r)
        for u, r in enumerate(table, start=1)
    ]
    return "\n".join([head, *rows])
