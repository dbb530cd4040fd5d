"""Power allocation that maximises the per-user rate, for two and three bursts.

Two bursts and three bursts per codeword reach nearly the same sum rate once
each allocation is optimised, and both stay above plain QPSK. Small sample
counts keep this under a minute; the acceptance suite uses the full ones.

    python demos/02_power_allocation.py
"""

from pncsim.capacity import layer_capacity, optimize_allocation, snr_seed
from pncsim.constellation import qpsk
from pncsim.schedule import SchemeParams

print("snr_db, C_qpsk, NuRa(Nb=2), rho(Nb=2), NuRa(Nb=3), rho(Nb=3)")
for snr_db in (0, 2, 4):
    snr = 10 ** (snr_db / 10)
    c_qpsk = layer_capacity(qpsk(1.0), 1, 1 / snr)
    row = [f"{snr_db}", f"{c_qpsk:.3f}"]
    for nb in (2, 3):
        rp = optimize_allocation(snr, SchemeParams(4, nb), grid_step=0.1, samples=50_000,
                                 report_samples=200_000, seed=snr_seed(snr_db, nb))
        row += [f"{rp.sum_rate:.3f}", str(rp.allocation.rhos)]
    print(", ".join(row))
