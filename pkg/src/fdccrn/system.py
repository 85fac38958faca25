"""Scenario configuration, geometry, path loss and random channel generation.

All powers are stored in watts internally; scenario files carry dBm (powers)
and dB (A0, theta2) and are converted exactly once on load.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

__all__ = [
    "Placement",
    "Geometry",
    "SystemConfig",
    "ChannelSet",
    "dbm_to_watt",
    "watt_to_dbm",
    "db_to_linear",
    "linear_to_db",
    "pathloss",
    "resolve_eap_positions",
    "generate_channels",
    "validate_config",
    "validate_channels",
    "tx_slices",
    "rx_slices",
    "ant_slices",
    "select_eaps",
    "config_to_dict",
    "config_from_dict",
    "load_config",
    "save_config",
]


def dbm_to_watt(x_dbm: float) -> float:
    return 10.0 ** ((x_dbm - 30.0) / 10.0)


def watt_to_dbm(x_w: float) -> float:
    if x_w <= 0.0:
        raise ValueError("power must be positive to convert to dBm")
    return 10.0 * math.log10(x_w) + 30.0


def db_to_linear(x_db: float) -> float:
    return 10.0 ** (x_db / 10.0)


def linear_to_db(x: float) -> float:
    if x <= 0.0:
        raise ValueError("value must be positive to convert to dB")
    return 10.0 * math.log10(x)


@dataclass(frozen=True)
class Placement:
    """EAP placement recipe.

    kind='ring': K EAPs evenly spaced on a circle of given radius around the ST.
    kind='disk': each EAP drawn with radius ~ U[0, radius], angle ~ U[0, 2pi).
    """

    kind: str  # 'ring' | 'disk'
    radius: float


@dataclass(frozen=True)
class Geometry:
    """2-D node positions in meters. EAPs are explicit positions or a recipe."""

    pt: tuple[float, float]
    st: tuple[float, float]
    pr: tuple[float, float]
    sr: tuple[float, float]
    eaps: tuple[tuple[float, float], ...] | Placement


@dataclass(frozen=True)
class SystemConfig:
    """All scalars, weights and geometry defining one scenario.

    Powers and noise variances in watts, eta in (0,1], theta2 the linear
    residual loop-interference gain, c1/c2 rate weights, c3/c4 cost factors.
    The cost budget is absolute (cost units) or a fraction of C_max.
    """

    K: int
    N: int
    M: int
    nT: tuple[int, ...]
    nR: tuple[int, ...]
    Pp: float
    P0: float
    sigma_na2: float
    sigma_nc2: float
    sigma_eap2: float
    sigma_pr2: float
    sigma_sr2: float
    eta: float
    theta2: float
    c1: float
    c2: float
    c3: float
    c4: float
    cost_budget_mode: str  # 'absolute' | 'normalized'
    cost_budget: float
    A0: float
    alpha: float
    d0: float
    geometry: Geometry
    rho_step: float = 0.05

    @property
    def n(self) -> tuple[int, ...]:
        return tuple(t + r for t, r in zip(self.nT, self.nR))

    @property
    def sum_nT(self) -> int:
        return sum(self.nT)

    @property
    def sum_nR(self) -> int:
        return sum(self.nR)

    @property
    def sum_n(self) -> int:
        return self.sum_nT + self.sum_nR


@dataclass(frozen=True)
class ChannelSet:
    """One realization of all complex channels for both slots.

    h_p_st:   (N,)            PT -> ST
    H_eap_st: (N, sum nT)     EAP transmit antennas -> ST
    h_p_eap:  (sum nR,)       PT -> EAP receive antennas
    H_tr_err: (sum nR, sum nT) normalized residual-LI error channel
    g_sp:     (N,)            ST -> PR (conjugate channel)
    g_eap_p:  (sum n,)        EAPs -> PR, all antennas, second slot
    G_ss:     (M, N)          ST -> SR
    """

    h_p_st: np.ndarray
    H_eap_st: np.ndarray
    h_p_eap: np.ndarray
    H_tr_err: np.ndarray
    g_sp: np.ndarray
    g_eap_p: np.ndarray
    G_ss: np.ndarray

    def __post_init__(self):
        for name in ("h_p_st", "H_eap_st", "h_p_eap", "H_tr_err", "g_sp", "g_eap_p", "G_ss"):
            arr = np.asarray(getattr(self, name), dtype=complex)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


def pathloss(d: float, cfg: SystemConfig) -> float:
    """Linear path-loss gain A0*(d/d0)^(-alpha) at distance d meters."""
    if d <= 0.0:
        raise ValueError(f"distance must be positive, got {d}")
    return cfg.A0 * (d / cfg.d0) ** (-cfg.alpha)


def _dist(a, b) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def resolve_eap_positions(cfg: SystemConfig, rng: np.random.Generator) -> np.ndarray:
    """EAP positions as a (K,2) array; 'disk' recipes consume rng draws."""
    geo = cfg.geometry
    if isinstance(geo.eaps, Placement):
        cx, cy = geo.st
        if geo.eaps.kind == "ring":
            ang = 2.0 * np.pi * np.arange(cfg.K) / cfg.K
            rad = np.full(cfg.K, geo.eaps.radius)
        elif geo.eaps.kind == "disk":
            # one (radius, angle) pair per EAP so position sets are nested
            # across increasing K at a fixed seed
            rad = np.empty(cfg.K)
            ang = np.empty(cfg.K)
            for k in range(cfg.K):
                rad[k] = rng.uniform(0.0, geo.eaps.radius)
                ang[k] = rng.uniform(0.0, 2.0 * np.pi)
        else:
            raise ValueError(f"unknown placement kind {geo.eaps.kind!r}")
        return np.column_stack([cx + rad * np.cos(ang), cy + rad * np.sin(ang)])
    pos = np.asarray(geo.eaps, dtype=float)
    return pos.reshape(cfg.K, 2)


def _cscg(rng: np.random.Generator, std: np.ndarray) -> np.ndarray:
    """Circularly-symmetric complex Gaussian entries with given per-entry std."""
    shape = np.shape(std)
    re = rng.standard_normal(shape)
    im = rng.standard_normal(shape)
    return (re + 1j * im) * (np.asarray(std) / np.sqrt(2.0))


def generate_channels(cfg: SystemConfig, seed: int) -> ChannelSet:
    """Draw one ChannelSet; deterministic given (cfg, seed).

    Entry variances equal the path loss of the corresponding link.  The
    residual-LI error channel has unit variance inside each EAP's own block
    and inter-EAP path-loss variance on cross blocks.
    """
    violations = validate_config(cfg)
    if violations:
        raise ValueError("invalid config: " + "; ".join(violations))
    rng = np.random.default_rng(seed)
    eap_pos = resolve_eap_positions(cfg, rng)
    geo = cfg.geometry

    d_p_st = _dist(geo.pt, geo.st)
    d_st_pr = _dist(geo.st, geo.pr)
    d_st_sr = _dist(geo.st, geo.sr)
    d_eap_st = [_dist(eap_pos[k], geo.st) for k in range(cfg.K)]
    d_p_eap = [_dist(geo.pt, eap_pos[k]) for k in range(cfg.K)]
    d_eap_pr = [_dist(eap_pos[k], geo.pr) for k in range(cfg.K)]

    sum_nT, sum_nR, sum_n = cfg.sum_nT, cfg.sum_nR, cfg.sum_n

    h_p_st = _cscg(rng, np.full(cfg.N, math.sqrt(pathloss(d_p_st, cfg))))

    std = np.zeros((cfg.N, sum_nT))
    for k, sl in enumerate(tx_slices(cfg)):
        std[:, sl] = math.sqrt(pathloss(d_eap_st[k], cfg))
    H_eap_st = _cscg(rng, std)

    std = np.zeros(sum_nR)
    for k, sl in enumerate(rx_slices(cfg)):
        std[sl] = math.sqrt(pathloss(d_p_eap[k], cfg))
    h_p_eap = _cscg(rng, std)

    std = np.zeros((sum_nR, sum_nT))
    for j, slr in enumerate(rx_slices(cfg)):  # receiving EAP j
        for i, slt in enumerate(tx_slices(cfg)):  # transmitting EAP i
            if i == j:
                std[slr, slt] = 1.0
            else:
                std[slr, slt] = math.sqrt(pathloss(_dist(eap_pos[i], eap_pos[j]), cfg))
    H_tr_err = _cscg(rng, std)

    g_sp = _cscg(rng, np.full(cfg.N, math.sqrt(pathloss(d_st_pr, cfg))))

    std = np.zeros(sum_n)
    for k, sl in enumerate(ant_slices(cfg)):
        std[sl] = math.sqrt(pathloss(d_eap_pr[k], cfg))
    g_eap_p = _cscg(rng, std)

    G_ss = _cscg(rng, np.full((cfg.M, cfg.N), math.sqrt(pathloss(d_st_sr, cfg))))

    return ChannelSet(h_p_st, H_eap_st, h_p_eap, H_tr_err, g_sp, g_eap_p, G_ss)


def tx_slices(cfg: SystemConfig) -> list[slice]:
    """Per-EAP slices into the stacked transmit-antenna dimension (sum nT)."""
    out, off = [], 0
    for t in cfg.nT:
        out.append(slice(off, off + t))
        off += t
    return out


def rx_slices(cfg: SystemConfig) -> list[slice]:
    """Per-EAP slices into the stacked receive-antenna dimension (sum nR)."""
    out, off = [], 0
    for r in cfg.nR:
        out.append(slice(off, off + r))
        off += r
    return out


def ant_slices(cfg: SystemConfig) -> list[slice]:
    """Per-EAP slices into the all-antennas dimension (sum n), second slot."""
    out, off = [], 0
    for nk in cfg.n:
        out.append(slice(off, off + nk))
        off += nk
    return out


def validate_config(cfg: SystemConfig) -> list[str]:
    """Return the list of violated invariants (empty when the config is valid)."""
    v: list[str] = []
    if cfg.K < 1:
        v.append("K >= 1")
    if cfg.N < 1:
        v.append("N >= 1")
    if cfg.M < 1:
        v.append("M >= 1")
    if len(cfg.nT) != cfg.K or len(cfg.nR) != cfg.K:
        v.append("nT/nR must have K entries")
    if any(t < 1 for t in cfg.nT) or any(r < 1 for r in cfg.nR):
        v.append("antenna counts >= 1")
    for name in ("Pp", "P0", "sigma_na2", "sigma_nc2", "sigma_eap2", "sigma_pr2", "sigma_sr2"):
        if getattr(cfg, name) <= 0.0:
            v.append(f"{name} must be positive")
    if not (0.0 < cfg.eta <= 1.0):
        v.append("eta out of range")
    if cfg.theta2 < 0.0:
        v.append("theta2 must be nonnegative")
    for name in ("c1", "c2", "c3", "c4"):
        if getattr(cfg, name) < 0.0:
            v.append(f"{name} must be nonnegative")
    if cfg.cost_budget_mode not in ("absolute", "normalized"):
        v.append("cost_budget_mode must be 'absolute' or 'normalized'")
    elif cfg.cost_budget_mode == "normalized":
        if not (0.0 < cfg.cost_budget <= 1.0):
            v.append("normalized budget in (0,1]")
    elif cfg.cost_budget <= 0.0:
        v.append("absolute budget must be positive")
    if cfg.A0 <= 0.0:
        v.append("A0 must be positive")
    if cfg.d0 <= 0.0:
        v.append("d0 must be positive")
    if cfg.alpha < 0.0:
        v.append("alpha must be nonnegative")
    if not (0.0 < cfg.rho_step <= 1.0):
        v.append("rho_step in (0,1]")
    geo = cfg.geometry
    if not isinstance(geo.eaps, Placement) and len(geo.eaps) != cfg.K:
        v.append("geometry must give one position per EAP")
    if isinstance(geo.eaps, Placement) and geo.eaps.radius <= 0.0:
        v.append("placement radius must be positive")
    for a, b, lbl in ((geo.pt, geo.st, "PT-ST"), (geo.st, geo.pr, "ST-PR"), (geo.st, geo.sr, "ST-SR")):
        if _dist(a, b) <= 0.0:
            v.append(f"{lbl} distance must be positive")
    return v


def validate_channels(ch: ChannelSet, cfg: SystemConfig) -> list[str]:
    """Dimension and finiteness checks for a ChannelSet against a config."""
    v: list[str] = []
    want = {
        "h_p_st": (cfg.N,),
        "H_eap_st": (cfg.N, cfg.sum_nT),
        "h_p_eap": (cfg.sum_nR,),
        "H_tr_err": (cfg.sum_nR, cfg.sum_nT),
        "g_sp": (cfg.N,),
        "g_eap_p": (cfg.sum_n,),
        "G_ss": (cfg.M, cfg.N),
    }
    for name, shape in want.items():
        arr = getattr(ch, name)
        if arr.shape != shape:
            v.append(f"{name} shape {arr.shape} != {shape}")
        elif not np.all(np.isfinite(arr)):
            v.append(f"{name} has non-finite entries")
    return v


def select_eaps(ch: ChannelSet, cfg: SystemConfig, keep: Sequence[int]) -> tuple[ChannelSet, SystemConfig]:
    """Restrict a channel set and config to a subset of EAPs.

    Removes all channel blocks of unselected EAPs; the residual-LI channel
    keeps only the rows/columns of the kept EAPs (silent EAPs neither
    transmit energy nor take part in joint decoding).
    """
    keep = list(keep)
    tx = tx_slices(cfg)
    rx = rx_slices(cfg)
    an = ant_slices(cfg)
    tx_idx = np.concatenate([np.arange(s.start, s.stop) for s in (tx[k] for k in keep)])
    rx_idx = np.concatenate([np.arange(s.start, s.stop) for s in (rx[k] for k in keep)])
    an_idx = np.concatenate([np.arange(s.start, s.stop) for s in (an[k] for k in keep)])
    ch_red = ChannelSet(
        h_p_st=ch.h_p_st,
        H_eap_st=ch.H_eap_st[:, tx_idx],
        h_p_eap=ch.h_p_eap[rx_idx],
        H_tr_err=ch.H_tr_err[np.ix_(rx_idx, tx_idx)],
        g_sp=ch.g_sp,
        g_eap_p=ch.g_eap_p[an_idx],
        G_ss=ch.G_ss,
    )
    geo = cfg.geometry
    eaps = geo.eaps if isinstance(geo.eaps, Placement) else tuple(geo.eaps[k] for k in keep)
    cfg_red = replace(
        cfg,
        K=len(keep),
        nT=tuple(cfg.nT[k] for k in keep),
        nR=tuple(cfg.nR[k] for k in keep),
        geometry=replace(geo, eaps=eaps),
    )
    return ch_red, cfg_red


# ---------------------------------------------------------------------------
# Scenario file I/O.  Keys mirror SystemConfig field names; powers are dBm,
# A0 and theta2 are dB, distances are meters.

_POWER_FIELDS = ("Pp", "P0", "sigma_na2", "sigma_nc2", "sigma_eap2", "sigma_pr2", "sigma_sr2")


def config_to_dict(cfg: SystemConfig) -> dict:
    d: dict = {
        "K": cfg.K,
        "N": cfg.N,
        "M": cfg.M,
        "nT": list(cfg.nT),
        "nR": list(cfg.nR),
        "eta": cfg.eta,
        "theta2": linear_to_db(cfg.theta2) if cfg.theta2 > 0 else None,
        "c1": cfg.c1,
        "c2": cfg.c2,
        "c3": cfg.c3,
        "c4": cfg.c4,
        "cost_budget_mode": cfg.cost_budget_mode,
        "cost_budget": cfg.cost_budget,
        "A0": linear_to_db(cfg.A0),
        "alpha": cfg.alpha,
        "d0": cfg.d0,
        "rho_step": cfg.rho_step,
    }
    for name in _POWER_FIELDS:
        d[name] = watt_to_dbm(getattr(cfg, name))
    geo = cfg.geometry
    g: dict = {"pt": list(geo.pt), "st": list(geo.st), "pr": list(geo.pr), "sr": list(geo.sr)}
    if isinstance(geo.eaps, Placement):
        g["eaps"] = {"placement": geo.eaps.kind, "radius": geo.eaps.radius}
    else:
        g["eaps"] = [list(p) for p in geo.eaps]
    d["geometry"] = g
    return d


def config_from_dict(d: dict) -> SystemConfig:
    g = d["geometry"]
    if isinstance(g["eaps"], dict):
        eaps: tuple | Placement = Placement(g["eaps"]["placement"], float(g["eaps"]["radius"]))
    else:
        eaps = tuple((float(p[0]), float(p[1])) for p in g["eaps"])
    geo = Geometry(
        pt=tuple(g["pt"]),
        st=tuple(g["st"]),
        pr=tuple(g["pr"]),
        sr=tuple(g["sr"]),
        eaps=eaps,
    )
    kw: dict = {
        "K": int(d["K"]),
        "N": int(d["N"]),
        "M": int(d["M"]),
        "nT": tuple(int(x) for x in d["nT"]),
        "nR": tuple(int(x) for x in d["nR"]),
        "eta": float(d["eta"]),
        "theta2": db_to_linear(float(d["theta2"])) if d["theta2"] is not None else 0.0,
        "c1": float(d["c1"]),
        "c2": float(d["c2"]),
        "c3": float(d["c3"]),
        "c4": float(d["c4"]),
        "cost_budget_mode": d["cost_budget_mode"],
        "cost_budget": float(d["cost_budget"]),
        "A0": db_to_linear(float(d["A0"])),
        "alpha": float(d["alpha"]),
        "d0": float(d["d0"]),
        "geometry": geo,
        "rho_step": float(d.get("rho_step", 0.05)),
    }
    for name in _POWER_FIELDS:
        kw[name] = dbm_to_watt(float(d[name]))
    return SystemConfig(**kw)


def load_config(path: str) -> SystemConfig:
    with open(path) as f:
        return config_from_dict(json.load(f))


def save_config(cfg: SystemConfig, path: str) -> None:
    with open(path, "w") as f:
        json.dump(config_to_dict(cfg), f, indent=2)
        f.write("\n")
