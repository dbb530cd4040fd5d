"""Regenerate the bundled PEG codes under src/pncsim/data/."""

import time
from pathlib import Path

from pncsim.fec import DESK_CODES, TOY_CODE, TOY_CODE_24, LdpcCode, peg_matrix, write_alist

DATA = Path(__file__).resolve().parents[1] / "src" / "pncsim" / "data"
N = 2160
CHECKS = {"1/5": 1728, "2/5": 1296, "1/2": 1080, "11/15": 576}


def build(fname, n, m, seed):
    t = time.time()
    H = peg_matrix(n, m, col_degree=3, seed=seed)
    code = LdpcCode(H)
    write_alist(DATA / fname, H)
    print(f"{fname}: n={code.n} k={code.k} rate={code.rate:.4f} "
          f"systematic={code.is_systematic_prefix} ({time.time() - t:.1f}s)")


if __name__ == "__main__":
    # lowest seeds giving a row-regular, full-rank, systematic toy code with d_min = 4
    build(TOY_CODE, 16, 8, seed=3)
    build(TOY_CODE_24, 24, 12, seed=34)
    for rate, fname in DESK_CODES.items():
        build(fname, N, CHECKS[rate], seed=2024)
