"""How bursts superpose on the relay slots, and what the receiver sees.

Four users each split a codeword into two bursts. On every slot two bursts
meet at the relay: a full-power burst and a weaker one. Run:

    python demos/01_superposition_and_schedule.py
"""

from pncsim.constellation import from_fractions
from pncsim.schedule import SchemeParams, format_occupancy, listener_of, transmitters_on_slot

p = SchemeParams(num_users=4, bursts_per_codeword=2)
print("Occupancy over two periods (burst index per user and slot):")
print(format_occupancy(p, 8))

print("\nSlot 5 carries", transmitters_on_slot(5, p).entries,
      "; user 1 talks to user", listener_of(1, p))

# the relay sees the sum of the two layers; co-phased, they form a 16-point grid
c = from_fractions([1.0, 0.25])
print(f"\nSuperposed constellation, rho = (1, 0.25): {c.points.size} points,"
      f" average energy {c.average_energy():.3f}")
for row in c.to_csv_rows()[:4]:
    print("  ", row)
print("   ...")
