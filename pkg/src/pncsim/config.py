"""Flat ``key = value`` configuration files for simulation runs.

Keys are dotted (``section.name``); ``#`` starts a comment; unknown keys are
errors. See README.md for the full key table.
"""

from __future__ import annotations

import math
import os
from typing import Callable

from .capacity import PowerAllocation
from .fec import load_code, load_desk_code
from .harness import ConfigurationError, ImpairmentPolicy, SimConfig
from .schedule import SchemeParams
from .waveform import ChannelParams


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def parse_snr_range(text: str) -> tuple[float, ...]:
    """``a:b:step`` (inclusive), a comma list, or a single value; ``inf`` allowed."""
    text = text.strip()
    if ":" in text:
        parts = [float(x) for x in text.split(":")]
        if len(parts) != 3 or parts[2] <= 0:
            raise ValueError(f"bad range {text!r}; expected start:stop:step")
        a, b, st = parts
        n = int(math.floor((b - a) / st + 1e-9)) + 1
        return tuple(round(a + i * st, 10) for i in range(max(n, 0)))
    return tuple(float(x) for x in text.split(",") if x.strip())


DEFAULTS: dict[str, str] = {
    "scheme.users": "4",
    "scheme.bursts": "2",
    "scheme.rho": "1,1",
    "chan.es": "1",
    "chan.beta_u": "1",
    "chan.beta_d": "1",
    "chan.gain": "1",
    "chan.n0_u": "0",
    "chan.n0_d": "0",
    "phy.oversampling": "8",
    "phy.rolloff": "0.35",
    "phy.span": "8",
    "imp.mode": "async",
    "imp.delay_max_sym": "4",
    "imp.cfo": "0.02",
    "imp.integer_delay": "false",
    "fec.matrix_path": "",
    "fec.rate": "1/2",
    "fec.max_iters": "50",
    "fec.decoder": "sum_product",
    "fec.interleaver_seed": "0",
    "sim.frames": "2000",
    "sim.snr_db": "0:6:1",
    "sim.seed": "0",
    "sim.early_stop_errors": "100",
    "sim.threads": "1",
    "sim.demap": "exact",
    "sim.baseline": "none",
}

_CHECKS: dict[str, Callable[[str], object]] = {
    "scheme.users": int, "scheme.bursts": int,
    "scheme.rho": lambda s: [float(x) for x in s.split(",")],
    "chan.es": float, "chan.beta_u": float, "chan.beta_d": float, "chan.gain": float,
    "chan.n0_u": float, "chan.n0_d": float,
    "phy.oversampling": int, "phy.rolloff": float, "phy.span": int,
    "imp.delay_max_sym": float, "imp.cfo": float, "imp.integer_delay": _bool,
    "fec.max_iters": int, "fec.interleaver_seed": int,
    "sim.frames": int, "sim.snr_db": parse_snr_range, "sim.seed": int,
    "sim.early_stop_errors": int, "sim.threads": int,
}


def parse_config_text(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {lineno}: expected 'key = value'")
        key, val = (x.strip() for x in line.split("=", 1))
        if key not in DEFAULTS:
            raise ConfigurationError(f"line {lineno}: unknown key {key!r}")
        if key in out:
            raise ConfigurationError(f"line {lineno}: duplicate key {key!r}")
        out[key] = val
    return out


def build_config(values: dict[str, str], base_dir: str | os.PathLike = ".") -> SimConfig:
    unknown = set(values) - set(DEFAULTS)
    if unknown:
        raise ConfigurationError(f"unknown keys: {sorted(unknown)}")
    v = {**DEFAULTS, **values}
    parsed = {}
    for key, fn in _CHECKS.items():
        try:
            parsed[key] = fn(v[key])
        except ValueError as exc:
            raise ConfigurationError(f"{key}: {exc}") from None
    if v["imp.mode"] not in ("sync", "async"):
        raise ConfigurationError("imp.mode must be sync or async")
    if v["sim.demap"] not in ("exact", "maxlog"):
        raise ConfigurationError("sim.demap must be exact or maxlog")

    try:
        cfg = _assemble(v, parsed, base_dir)
    except ConfigurationError:
        raise
    except ValueError as exc:
        raise ConfigurationError(str(exc)) from None
    cfg.validate()
    return cfg


def _assemble(v: dict[str, str], parsed: dict, base_dir) -> SimConfig:
    if v["fec.matrix_path"]:
        code = load_code(os.path.join(base_dir, v["fec.matrix_path"]))
    else:
        code = load_desk_code(v["fec.rate"])
    es = parsed["sim.early_stop_errors"]
    return SimConfig(
        scheme=SchemeParams(parsed["scheme.users"], parsed["scheme.bursts"]),
        allocation=PowerAllocation(tuple(parsed["scheme.rho"])),
        code=code,
        channel=ChannelParams(parsed["chan.es"], parsed["chan.beta_u"], parsed["chan.beta_d"],
                              parsed["chan.gain"], parsed["chan.n0_u"], parsed["chan.n0_d"]),
        impairments=ImpairmentPolicy(v["imp.mode"], parsed["imp.delay_max_sym"],
                                     parsed["imp.cfo"], parsed["imp.integer_delay"]),
        snr_db=parsed["sim.snr_db"],
        frames=parsed["sim.frames"],
        early_stop_errors=es if es > 0 else None,
        master_seed=parsed["sim.seed"],
        interleaver_seed=parsed["fec.interleaver_seed"],
        max_iters=parsed["fec.max_iters"],
        decoder=v["fec.decoder"],
        max_log=v["sim.demap"] == "maxlog",
        oversampling=parsed["phy.oversampling"],
        rolloff=parsed["phy.rolloff"],
        span=parsed["phy.span"],
        threads=parsed["sim.threads"],
        baseline=v["sim.baseline"],
    )


def load_config(path: str | os.PathLike) -> SimConfig:
    with open(path) as fh:
        values = parse_config_text(fh.read())
    return build_config(values, base_dir=os.path.dirname(os.path.abspath(path)))

