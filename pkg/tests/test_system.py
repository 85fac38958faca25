import json
import math

import numpy as np
import pytest

from fdccrn.system import (
    Placement,
    config_from_dict,
    config_to_dict,
    dbm_to_watt,
    generate_channels,
    linear_to_db,
    pathloss,
    resolve_eap_positions,
    select_eaps,
    validate_channels,
    validate_config,
    watt_to_dbm,
)

from conftest import make_config


def test_pathloss_reference_values():
    cfg = make_config(A0=1e-3, d0=1.0, alpha=2.5)
    assert pathloss(1.0, cfg) == pytest.approx(1e-3, rel=1e-12)
    assert pathloss(10.0, cfg) == pytest.approx(1e-3 * 10 ** (-2.5), rel=1e-12)
    assert pathloss(100.0, cfg) == pytest.approx(1e-8, rel=1e-12)


def test_pathloss_rejects_nonpositive_distance():
    cfg = make_config()
    with pytest.raises(ValueError):
        pathloss(0.0, cfg)
    with pytest.raises(ValueError):
        pathloss(-1.0, cfg)


def test_pathloss_strictly_decreasing():
    cfg = make_config()
    d = np.linspace(0.5, 50.0, 40)
    gains = [pathloss(x, cfg) for x in d]
    assert all(a > b for a, b in zip(gains, gains[1:]))


def test_dbm_watt_roundtrip_exact():
    assert dbm_to_watt(10.0) == 0.01
    assert watt_to_dbm(0.01) == 10.0
    assert dbm_to_watt(20.0) == pytest.approx(0.1, rel=1e-15)
    for x in (-30.0, 0.0, 17.0):
        assert watt_to_dbm(dbm_to_watt(x)) == pytest.approx(x, abs=1e-12)


def test_generate_channels_deterministic(cfg_default):
    a = generate_channels(cfg_default, 123)
    b = generate_channels(cfg_default, 123)
    for name in ("h_p_st", "H_eap_st", "h_p_eap", "H_tr_err", "g_sp", "g_eap_p", "G_ss"):
        assert np.array_equal(getattr(a, name), getattr(b, name))
    c = generate_channels(cfg_default, 124)
    assert not np.array_equal(a.h_p_st, c.h_p_st)


def test_channel_dimensions():
    cfg = make_config(K=3, nT=(2, 2, 2), nR=(2, 2, 2), N=2)
    ch = generate_channels(cfg, 0)
    assert ch.H_eap_st.shape == (2, 6)
    assert ch.h_p_eap.shape == (6,)
    assert ch.g_eap_p.shape == (12,)
    assert validate_channels(ch, cfg) == []


def test_channel_dimensions_asymmetric():
    cfg = make_config(K=2, nT=(1, 3), nR=(2, 2), N=4, M=3)
    ch = generate_channels(cfg, 5)
    assert ch.H_eap_st.shape == (4, 4)
    assert ch.H_tr_err.shape == (4, 4)
    assert ch.g_eap_p.shape == (3 + 5,)
    assert ch.G_ss.shape == (3, 4)
    assert validate_channels(ch, cfg) == []


def test_empirical_variance_matches_pathloss():
    cfg = make_config(K=1, nT=(1,), nR=(1,), N=1, M=1, eaps=((3.0, 0.0),))
    target = pathloss(10.0, cfg)  # PT at (-10,0), ST at origin
    acc = 0.0
    n = 10_000
    for seed in range(n):
        ch = generate_channels(cfg, seed)
        acc += abs(ch.h_p_st[0]) ** 2
    assert acc / n == pytest.approx(target, rel=0.05)


def test_tr_err_variance_structure():
    # intra-EAP block has unit variance, cross blocks carry the inter-EAP loss
    cfg = make_config(K=2, nT=(2, 2), nR=(2, 2), eaps=((3.0, 0.0), (0.0, 6.0)))
    intra0 = 0.0
    cross01 = 0.0
    n = 4000
    for seed in range(n):
        ch = generate_channels(cfg, seed)
        intra0 += np.mean(np.abs(ch.H_tr_err[0:2, 0:2]) ** 2)
        cross01 += np.mean(np.abs(ch.H_tr_err[2:4, 0:2]) ** 2)  # EAP0 tx -> EAP1 rx
    d01 = math.hypot(3.0, 6.0)
    assert intra0 / n == pytest.approx(1.0, rel=0.05)
    assert cross01 / n == pytest.approx(pathloss(d01, cfg), rel=0.08)


def test_validate_config_examples():
    assert validate_config(make_config()) == []
    assert "eta out of range" in validate_config(make_config(eta=0.0))
    assert "K >= 1" in validate_config(make_config(K=0, nT=(), nR=()))
    assert validate_config(make_config(rho_step=0.05)) == []
    assert any("rho_step" in v for v in validate_config(make_config(rho_step=0.0)))
    assert any("budget" in v for v in validate_config(make_config(cost_budget=1.5)))
    assert any("positive" in v for v in validate_config(make_config(Pp=0.0)))


def test_ring_placement_deterministic():
    cfg = make_config(K=4, nT=(2,) * 4, nR=(2,) * 4, eaps=Placement("ring", 5.0))
    rng = np.random.default_rng(0)
    pos = resolve_eap_positions(cfg, rng)
    assert pos.shape == (4, 2)
    assert np.allclose(np.hypot(pos[:, 0], pos[:, 1]), 5.0)
    # evenly spaced: consecutive angular gaps are all 2*pi/K
    ang = np.unwrap(np.arctan2(pos[:, 1], pos[:, 0]))
    gaps = np.diff(ang)
    assert np.allclose(gaps, gaps[0])


def test_disk_placement_nested_across_k():
    cfg3 = make_config(K=3, nT=(2, 2, 2), nR=(2, 2, 2), eaps=Placement("disk", 10.0))
    cfg4 = make_config(K=4, nT=(2,) * 4, nR=(2,) * 4, eaps=Placement("disk", 10.0))
    p3 = resolve_eap_positions(cfg3, np.random.default_rng(9))
    p4 = resolve_eap_positions(cfg4, np.random.default_rng(9))
    assert np.allclose(p3, p4[:3])


def test_select_eaps_slices_blocks():
    cfg = make_config(K=3, nT=(1, 2, 3), nR=(2, 2, 1), N=2)
    ch = generate_channels(cfg, 2)
    red, cfg_red = select_eaps(ch, cfg, [1])
    assert cfg_red.K == 1 and cfg_red.nT == (2,) and cfg_red.nR == (2,)
    assert np.array_equal(red.H_eap_st, ch.H_eap_st[:, 1:3])
    assert np.array_equal(red.h_p_eap, ch.h_p_eap[2:4])
    assert np.array_equal(red.H_tr_err, ch.H_tr_err[2:4, 1:3])
    assert np.array_equal(red.g_eap_p, ch.g_eap_p[3:7])
    assert validate_channels(red, cfg_red) == []


def test_config_json_roundtrip(tmp_path, cfg_default):
    d = config_to_dict(cfg_default)
    text = json.dumps(d)
    cfg2 = config_from_dict(json.loads(text))
    assert cfg2.Pp == pytest.approx(cfg_default.Pp, rel=1e-12)
    assert cfg2.theta2 == pytest.approx(cfg_default.theta2, rel=1e-12)
    assert cfg2.A0 == pytest.approx(cfg_default.A0, rel=1e-12)
    assert cfg2.nT == cfg_default.nT
    assert cfg2.geometry.eaps == cfg_default.geometry.eaps
    assert linear_to_db(cfg2.theta2) == pytest.approx(-60.0, abs=1e-9)
