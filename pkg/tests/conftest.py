import numpy as np
import pytest

from fdccrn.system import Geometry, Placement, SystemConfig, dbm_to_watt, db_to_linear, generate_channels

NOISE = dbm_to_watt(-110) + dbm_to_watt(-70)


def make_config(**kw) -> SystemConfig:
    """Reference-default desk-scale configuration, overridable per test."""
    base = dict(
        K=3,
        N=2,
        M=2,
        nT=(2, 2, 2),
        nR=(2, 2, 2),
        Pp=dbm_to_watt(10),
        P0=dbm_to_watt(20),
        sigma_na2=dbm_to_watt(-110),
        sigma_nc2=dbm_to_watt(-70),
        sigma_eap2=NOISE,
        sigma_pr2=NOISE,
        sigma_sr2=NOISE,
        eta=0.5,
        theta2=db_to_linear(-60),
        c1=1.0,
        c2=1.0,
        c3=1.0,
        c4=1.0,
        cost_budget_mode="normalized",
        cost_budget=0.1,
        A0=db_to_linear(-30),
        alpha=2.5,
        d0=1.0,
        geometry=Geometry(pt=(-10.0, 0.0), st=(0.0, 0.0), pr=(10.0, 0.0), sr=(0.0, 10.0), eaps=Placement("disk", 10.0)),
        rho_step=0.05,
    )
    geo_kw = {k: kw.pop(k) for k in list(kw) if k in ("pt", "pr", "sr", "eaps")}
    base.update(kw)
    if geo_kw:
        from dataclasses import replace

        base["geometry"] = replace(base["geometry"], **geo_kw)
    return SystemConfig(**base)


def scalar_config(**kw) -> SystemConfig:
    """Single-EAP, single-antenna instance used by the brute-force oracle."""
    base = dict(
        K=1,
        N=1,
        M=1,
        nT=(1,),
        nR=(1,),
        pt=(-5.0, 0.0),
        pr=(6.0, 0.0),
        sr=(0.0, 6.0),
        eaps=((3.0, 0.0),),
    )
    base.update(kw)
    return make_config(**base)


def unit_scale_config(**kw) -> SystemConfig:
    """Small instance with O(1) channels and noise for numerics-facing tests."""
    base = dict(
        K=2,
        N=2,
        M=2,
        nT=(2, 2),
        nR=(2, 2),
        Pp=1.0,
        P0=1.0,
        sigma_na2=0.1,
        sigma_nc2=0.2,
        sigma_eap2=0.3,
        sigma_pr2=0.25,
        sigma_sr2=0.25,
        theta2=0.5,
        A0=1.0,
        alpha=0.0,  # flat path loss: unit-variance channels
        pt=(-2.0, 0.0),
        pr=(2.0, 0.0),
        sr=(0.0, 2.0),
        eaps=((1.0, 0.0), (0.0, 1.0)),
        cost_budget_mode="absolute",
        cost_budget=1.0,
    )
    base.update(kw)
    return make_config(**base)


@pytest.fixture
def cfg_default():
    return make_config()


@pytest.fixture
def channels_default(cfg_default):
    return generate_channels(cfg_default, 0)


@pytest.fixture
def cfg_unit():
    return unit_scale_config()


@pytest.fixture
def channels_unit(cfg_unit):
    return generate_channels(cfg_unit, 1)


def random_psd(rng: np.random.Generator, dim: int, scale: float = 1.0) -> np.ndarray:
    A = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    M = A @ A.conj().T
    return scale * M / max(np.trace(M).real, 1e-300) * dim
