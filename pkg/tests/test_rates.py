import numpy as np
import pytest
from scipy.linalg import eigh

from fdccrn.rates import (
    EAP_FIRST_HOP,
    ST_FIRST_HOP,
    DesignPoint,
    cost_spent,
    eap_receive_sinr,
    evaluate,
    g1,
    g2,
    harvested_power,
    matrix_A,
    matrix_B,
    max_cost,
    max_wpt_trace,
    pr_sinr,
    primary_rate,
    resolve_cost_budget,
    secondary_rate,
    st_receive_beamformer,
    st_receive_sinr,
)
from fdccrn.system import ant_slices, generate_channels

from conftest import make_config, random_psd, scalar_config, unit_scale_config


def scalar_channelset(h=1.0, H=1.0, h_pe=1.0, H_tr=1.0, g_sp=1.0, g_e=(1.0, 0.0), G=1.0):
    from fdccrn.system import ChannelSet

    return ChannelSet(
        h_p_st=np.array([h], dtype=complex),
        H_eap_st=np.array([[H]], dtype=complex),
        h_p_eap=np.array([h_pe], dtype=complex),
        H_tr_err=np.array([[H_tr]], dtype=complex),
        g_sp=np.array([g_sp], dtype=complex),
        g_eap_p=np.array(g_e, dtype=complex),
        G_ss=np.array([[G]], dtype=complex),
    )


def scfg(**kw):
    base = dict(Pp=1.0, P0=1.0, sigma_na2=0.1, sigma_nc2=0.1, sigma_eap2=1.0, sigma_pr2=1.0, sigma_sr2=1.0,
                theta2=1.0, eta=0.5, c1=1.0, c2=1.0, c3=1.0, c4=1.0,
                cost_budget_mode="absolute", cost_budget=10.0)
    base.update(kw)
    return scalar_config(**base)


class TestMatrixA:
    def test_scalar_zero_x(self):
        cfg = scfg()
        ch = scalar_channelset()
        A = matrix_A(ch, np.zeros((1, 1)), 0.0, cfg)
        assert A[0, 0].real == pytest.approx(0.2, rel=1e-12)

    def test_rho_one_leaves_conversion_noise(self):
        cfg = scfg()
        ch = scalar_channelset()
        A = matrix_A(ch, 7.0 * np.eye(1), 1.0, cfg)
        assert A[0, 0].real == pytest.approx(cfg.sigma_nc2, rel=1e-12)

    def test_scalar_midpoint(self):
        cfg = scfg()
        ch = scalar_channelset()
        A = matrix_A(ch, np.eye(1), 0.5, cfg)
        assert A[0, 0].real == pytest.approx(0.65, rel=1e-12)

    def test_positive_definite(self):
        cfg = make_config()
        ch = generate_channels(cfg, 3)
        rng = np.random.default_rng(0)
        X = random_psd(rng, cfg.sum_nT, cfg.P0)
        for rho in (0.0, 0.4, 1.0):
            assert np.linalg.eigvalsh(matrix_A(ch, X, rho, cfg))[0] > 0


class TestStSinr:
    def test_scalar(self):
        cfg = scfg()
        ch = scalar_channelset()
        val = st_receive_sinr(ch, np.zeros((1, 1)), 0.5, cfg)
        assert val == pytest.approx(0.5 / 0.15, rel=1e-12)

    def test_rho_one_is_zero(self):
        cfg = scfg()
        ch = scalar_channelset()
        assert st_receive_sinr(ch, np.eye(1), 1.0, cfg) == 0.0

    def test_matches_generalized_eigenvalue(self):
        cfg = unit_scale_config()
        rng = np.random.default_rng(7)
        for seed in range(20):
            ch = generate_channels(cfg, seed)
            X = random_psd(rng, cfg.sum_nT, cfg.P0)
            rho = rng.uniform(0.0, 0.95)
            A = matrix_A(ch, X, rho, cfg)
            R = (1 - rho) * cfg.Pp * np.outer(ch.h_p_st, ch.h_p_st.conj())
            lam = eigh(R, A, eigvals_only=True)[-1]
            assert st_receive_sinr(ch, X, rho, cfg) == pytest.approx(lam, rel=1e-8)

    def test_nonincreasing_in_rho(self):
        cfg = unit_scale_config()
        rng = np.random.default_rng(3)
        for seed in range(20):
            ch = generate_channels(cfg, seed)
            X = random_psd(rng, cfg.sum_nT, cfg.P0)
            vals = [st_receive_sinr(ch, X, r, cfg) for r in np.linspace(0.0, 0.99, 25)]
            assert all(a >= b - 1e-12 * abs(a) for a, b in zip(vals, vals[1:]))


class TestStBeamformer:
    def test_matched_filter_when_interference_free(self):
        cfg = unit_scale_config(sigma_na2=1e-12)
        ch = generate_channels(cfg, 2)
        u = st_receive_beamformer(ch, np.zeros((cfg.sum_nT, cfg.sum_nT)), 0.3, cfg)
        h = ch.h_p_st / np.linalg.norm(ch.h_p_st)
        assert abs(abs(u.conj() @ h) - 1.0) < 1e-9

    def test_dominates_random_beams(self):
        cfg = unit_scale_config()
        ch = generate_channels(cfg, 4)
        rng = np.random.default_rng(11)
        X = random_psd(rng, cfg.sum_nT, cfg.P0)
        rho = 0.4
        A = matrix_A(ch, X, rho, cfg)
        u_opt = st_receive_beamformer(ch, X, rho, cfg)

        def sinr(u):
            num = (1 - rho) * cfg.Pp * abs(u.conj() @ ch.h_p_st) ** 2
            den = np.real(u.conj() @ A @ u)
            return num / den

        best = sinr(u_opt)
        assert best == pytest.approx(st_receive_sinr(ch, X, rho, cfg), rel=1e-9)
        for _ in range(100):
            u = rng.standard_normal(cfg.N) + 1j * rng.standard_normal(cfg.N)
            u /= np.linalg.norm(u)
            assert sinr(u) <= best * (1 + 1e-9)

    def test_scalar_is_unit_modulus(self):
        cfg = scfg()
        ch = scalar_channelset(h=0.3 - 0.4j)
        u = st_receive_beamformer(ch, np.eye(1), 0.2, cfg)
        assert abs(abs(u[0]) - 1.0) < 1e-12


class TestMatrixBAndEapSinr:
    def test_zero_x(self):
        cfg = scfg(sigma_eap2=0.7)
        ch = scalar_channelset()
        B = matrix_B(ch, np.zeros((1, 1)), cfg)
        assert B[0, 0].real == pytest.approx(0.7, rel=1e-12)

    def test_theta_zero_ignores_x(self):
        cfg = scfg(theta2=0.0, sigma_eap2=0.7)
        ch = scalar_channelset()
        B = matrix_B(ch, 5.0 * np.eye(1), cfg)
        assert B[0, 0].real == pytest.approx(0.7, rel=1e-12)
        assert eap_receive_sinr(ch, 5.0 * np.eye(1), cfg) == pytest.approx(
            eap_receive_sinr(ch, np.zeros((1, 1)), cfg), rel=1e-12
        )

    def test_scalar_value(self):
        cfg = scfg(theta2=1e-6, sigma_eap2=1e-10)
        ch = scalar_channelset()
        B = matrix_B(ch, np.eye(1), cfg)
        assert B[0, 0].real == pytest.approx(1.0001e-6, rel=1e-9)

    def test_zero_x_norm_formula(self):
        cfg = make_config()
        ch = generate_channels(cfg, 1)
        val = eap_receive_sinr(ch, np.zeros((cfg.sum_nT, cfg.sum_nT)), cfg)
        assert val == pytest.approx(cfg.Pp * np.linalg.norm(ch.h_p_eap) ** 2 / cfg.sigma_eap2, rel=1e-10)

    def test_matches_eigenvalue_form(self):
        cfg = unit_scale_config()
        rng = np.random.default_rng(5)
        for seed in range(20):
            ch = generate_channels(cfg, seed)
            X = random_psd(rng, cfg.sum_nT, cfg.P0)
            B = matrix_B(ch, X, cfg)
            R = cfg.Pp * np.outer(ch.h_p_eap, ch.h_p_eap.conj())
            lam = eigh(R, B, eigvals_only=True)[-1]
            assert eap_receive_sinr(ch, X, cfg) == pytest.approx(lam, rel=1e-8)


class TestHarvestAndCost:
    def test_zero_x(self):
        cfg = scfg(Pp=2.0)
        ch = scalar_channelset(h=1.5)
        assert harvested_power(ch, np.zeros((1, 1)), cfg) == pytest.approx(2.0 * 1.5**2, rel=1e-12)

    def test_scalar_trace_term(self):
        cfg = scfg(Pp=1e-30)
        ch = scalar_channelset(H=2.0)
        assert harvested_power(ch, np.eye(1), cfg) == pytest.approx(4.0, rel=1e-9)

    def test_additivity(self):
        cfg = unit_scale_config()
        ch = generate_channels(cfg, 8)
        rng = np.random.default_rng(2)
        base = cfg.Pp * np.linalg.norm(ch.h_p_st) ** 2
        for _ in range(10):
            X1 = random_psd(rng, cfg.sum_nT)
            X2 = random_psd(rng, cfg.sum_nT)
            lhs = harvested_power(ch, X1 + X2, cfg)
            rhs = harvested_power(ch, X1, cfg) + harvested_power(ch, X2, cfg) - base
            assert lhs == pytest.approx(rhs, rel=1e-10)

    def test_cost_examples(self):
        cfg = scfg(eta=0.5)
        ch = scalar_channelset(H=1.0, g_e=(1.0, 0.0))
        dp = DesignPoint.zeros(cfg)
        assert cost_spent(ch, dp, cfg) == 0.0
        dp0 = DesignPoint(X=2.0 * np.eye(1), Qs=np.zeros((1, 1)), wp=np.zeros(1), vp=np.zeros(2), rho=0.0)
        assert cost_spent(ch, dp0, cfg) == 0.0
        dp1 = DesignPoint(X=2.0 * np.eye(1), Qs=np.zeros((1, 1)), wp=np.zeros(1), vp=np.array([1.0, 0.0]), rho=1.0)
        assert cost_spent(ch, dp1, cfg) == pytest.approx(0.5 * 2.0 + 1.0, rel=1e-12)


class TestPrSinrAndRates:
    def test_examples(self):
        cfg = scfg(sigma_pr2=1.0)
        ch = scalar_channelset(g_sp=1.0, g_e=(1.0, 0.0))
        dp = DesignPoint(X=np.zeros((1, 1)), Qs=np.zeros((1, 1)), wp=np.array([2.0]), vp=np.zeros(2), rho=0.5)
        assert pr_sinr(ch, dp, cfg) == pytest.approx(4.0, rel=1e-12)
        dp0 = DesignPoint.zeros(cfg, rho=0.5)
        assert pr_sinr(ch, dp0, cfg) == 0.0
        dp2 = DesignPoint(
            X=np.zeros((1, 1)), Qs=np.zeros((1, 1)), wp=np.array([1.0]),
            vp=np.array([np.exp(1j * np.pi), 0.0]), rho=0.5,
        )
        assert pr_sinr(ch, dp2, cfg) == pytest.approx(0.0, abs=1e-24)

    def test_primary_rate_branches(self):
        # engineered SINRs: ST=3, EAP=1, PR=3 -> rate 1, ST branch
        cfg = scfg(Pp=1.0, sigma_nc2=1.0, sigma_na2=1e-30, sigma_eap2=1.0, sigma_pr2=1.0, theta2=1.0)
        ch = scalar_channelset(h=np.sqrt(3.0), h_pe=1.0, g_sp=1.0, g_e=(1.0, 0.0))
        dp = DesignPoint(X=np.zeros((1, 1)), Qs=np.zeros((1, 1)), wp=np.array([np.sqrt(3.0)]), vp=np.zeros(2), rho=0.0)
        r, branch = primary_rate(ch, dp, cfg)
        assert r == pytest.approx(1.0, rel=1e-12)
        assert branch == ST_FIRST_HOP

    def test_primary_rate_eap_branch(self):
        cfg = scfg(Pp=1.0, sigma_nc2=1.0, sigma_na2=1e-30, sigma_eap2=1.0, sigma_pr2=1.0, theta2=1.0)
        ch = scalar_channelset(h=1.0, h_pe=np.sqrt(3.0), g_sp=1.0, g_e=(1.0, 0.0))
        dp = DesignPoint(X=np.zeros((1, 1)), Qs=np.zeros((1, 1)), wp=np.array([np.sqrt(15.0)]), vp=np.zeros(2), rho=0.0)
        r, branch = primary_rate(ch, dp, cfg)
        assert r == pytest.approx(1.0, rel=1e-12)
        assert branch == EAP_FIRST_HOP

    def test_second_hop_bottleneck(self):
        cfg = scfg()
        ch = scalar_channelset()
        dp = DesignPoint.zeros(cfg, rho=0.0)  # wp=vp=0 -> PR SINR 0
        r, _ = primary_rate(ch, dp, cfg)
        assert r == 0.0

    def test_secondary_rate(self):
        cfg = scfg(sigma_sr2=1.0)
        ch = scalar_channelset(G=1.0)
        assert secondary_rate(ch, np.zeros((1, 1)), cfg) == 0.0
        assert secondary_rate(ch, np.eye(1), cfg) == pytest.approx(0.5, rel=1e-12)

    def test_secondary_rate_identity_2x2(self):
        cfg = unit_scale_config(sigma_sr2=1.0)
        ch = generate_channels(cfg, 0)
        from fdccrn.system import ChannelSet

        ch = ChannelSet(ch.h_p_st, ch.H_eap_st, ch.h_p_eap, ch.H_tr_err, ch.g_sp, ch.g_eap_p, np.eye(2, dtype=complex))
        assert secondary_rate(ch, np.eye(2), cfg) == pytest.approx(1.0, rel=1e-12)


class TestConvexity:
    def test_g1_g2_midpoint_convexity(self):
        cfg = unit_scale_config()
        ch = generate_channels(cfg, 6)
        rng = np.random.default_rng(4)
        for _ in range(10):
            X1 = random_psd(rng, cfg.sum_nT)
            X2 = random_psd(rng, cfg.sum_nT)
            lam = rng.uniform()
            Xm = lam * X1 + (1 - lam) * X2
            for g, args in ((g1, (0.4, cfg)), (g2, (cfg,))):
                mid = g(ch, Xm, *args)
                mix = lam * g(ch, X1, *args) + (1 - lam) * g(ch, X2, *args)
                assert mid <= mix + 1e-10


class TestMaxCost:
    def test_single_eap_closed_form(self):
        cfg = scfg(eta=1.0, c3=1.0, c4=1.0, P0=1.0)
        ch = scalar_channelset(H=1.0, g_e=(2.0, 0.0))
        # X* = P0 = 1 on the scalar link, WIT term P0 * |g|_1^2 = 4
        assert max_cost(ch, cfg, 1.0) == pytest.approx(5.0, rel=1e-9)

    def test_wit_term_l1_norm(self):
        cfg = unit_scale_config(c3=0.0, c4=1.0, P0=2.0)
        ch = generate_channels(cfg, 9)
        norms = [np.linalg.norm(ch.g_eap_p[sl]) for sl in ant_slices(cfg)]
        assert max_cost(ch, cfg, 1.0) == pytest.approx(2.0 * sum(norms) ** 2, rel=1e-12)

    def test_wpt_term_matches_conic_solve(self):
        from fdccrn import conic

        cfg = unit_scale_config()
        for seed in range(6):
            ch = generate_channels(cfg, seed)
            val = max_wpt_trace(ch, cfg)
            H = ch.H_eap_st
            M = H.conj().T @ H
            pb = conic.ConicProblem()
            Xv = pb.add_psd_matrix("X", cfg.sum_nT)
            from fdccrn.system import tx_slices

            for k, sl in enumerate(tx_slices(cfg)):
                Ek = np.zeros((cfg.sum_nT, cfg.sum_nT))
                Ek[sl, sl] = np.eye(sl.stop - sl.start)
                pb.add_affine_ineq(pb.trace_expr(Xv, Ek) * (1.0 / cfg.P0) - 1.0, label=f"p[{k}]")
            scale = float(np.trace(M).real)
            pb.set_objective(affine=pb.trace_expr(Xv, M / scale))
            sol = conic.solve(pb)
            assert sol.status == "optimal"
            assert val == pytest.approx(sol.objective * scale, rel=1e-6)


class TestEvaluate:
    def test_zero_point_feasible(self, cfg_default, channels_default):
        rep = evaluate(channels_default, DesignPoint.zeros(cfg_default), cfg_default)
        assert rep.feasible and rep.r_pr == 0.0 and rep.r_sr == 0.0

    def test_wit_violation_named(self, cfg_default, channels_default):
        cfg, ch = cfg_default, channels_default
        vp = np.zeros(cfg.sum_n, dtype=complex)
        vp[0] = np.sqrt(1.01 * cfg.P0)
        dp = DesignPoint(
            X=np.zeros((cfg.sum_nT, cfg.sum_nT)), Qs=np.zeros((cfg.N, cfg.N)), wp=np.zeros(cfg.N), vp=vp, rho=0.0
        )
        rep = evaluate(ch, dp, cfg)
        assert not rep.feasible
        assert "per-EAP WIT power" in rep.violations

    def test_st_power_within_budget(self, cfg_default, channels_default):
        cfg, ch = cfg_default, channels_default
        rho = 0.5
        p_eh = harvested_power(ch, np.zeros((cfg.sum_nT, cfg.sum_nT)), cfg)
        budget = cfg.eta * rho * p_eh
        Qs = 0.99 * budget * np.eye(cfg.N) / cfg.N
        dp = DesignPoint(X=np.zeros((cfg.sum_nT, cfg.sum_nT)), Qs=Qs, wp=np.zeros(cfg.N), vp=np.zeros(cfg.sum_n), rho=rho)
        rep = evaluate(ch, dp, cfg)
        assert rep.feasible

    def test_weighted_sum_identity(self, cfg_default, channels_default):
        cfg, ch = cfg_default, channels_default
        rng = np.random.default_rng(1)
        rho = 0.6
        p_eh = harvested_power(ch, np.zeros((cfg.sum_nT, cfg.sum_nT)), cfg)
        Qs = random_psd(rng, cfg.N, 0.2 * cfg.eta * rho * p_eh)
        dp = DesignPoint(X=np.zeros((cfg.sum_nT, cfg.sum_nT)), Qs=Qs, wp=np.zeros(cfg.N), vp=np.zeros(cfg.sum_n), rho=rho)
        rep = evaluate(ch, dp, cfg)
        assert rep.weighted_sum == cfg.c1 * rep.r_pr + cfg.c2 * rep.r_sr

    def test_resolve_cost_budget_modes(self, cfg_default, channels_default):
        from dataclasses import replace

        cfg, ch = cfg_default, channels_default
        c_norm = resolve_cost_budget(ch, cfg)
        assert c_norm == pytest.approx(0.1 * max_cost(ch, cfg, 1.0), rel=1e-12)
        cfg_abs = replace(cfg, cost_budget_mode="absolute", cost_budget=3.0)
        assert resolve_cost_budget(ch, cfg_abs) == 3.0
