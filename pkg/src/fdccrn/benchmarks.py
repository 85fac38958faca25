"""Benchmark schemes: selective non-cooperative operation (one EAP) and
half-duplex energy beamforming with relaying only at the ST.

The HD inner problem relaxes the rank-one beam for the relayed message to a
PSD matrix (provably tight), iterates the single linearized first-hop
constraint, and is swept by golden-section over the SINR target inside the
power-splitting grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import conic
from .conic import ConicProblem, ScalExpr, SolverOptions
from .rates import (
    DesignPoint,
    RateReport,
    evaluate,
    g1,
    harvested_power,
    resolve_cost_budget,
    secondary_rate,
)
from .sca import Algorithm1Result, ScaSettings, algorithm1, grad_g1, rho_grid
from .system import ChannelSet, SystemConfig, rx_slices, select_eaps, tx_slices

__all__ = [
    "select_eap",
    "NonCooperativeResult",
    "solve_noncooperative",
    "hd_primary_rate",
    "HdInnerResult",
    "solve_hd_inner",
    "HdResult",
    "solve_hd",
    "golden_section_max",
]

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0
INV_PHI2 = (3.0 - math.sqrt(5.0)) / 2.0


def golden_section_max(f, a: float, b: float, tol: float):
    """Golden-section maximization of a unimodal f on [a, b].

    Returns (x_best, f_best) over the evaluated points; -inf values (an
    infeasible right tail) are handled as arbitrarily poor.
    """
    evals = {}

    def F(x):
        if x not in evals:
            evals[x] = f(x)
        return evals[x]

    h = b - a
    if h <= tol:
        xs = [a, b]
        vals = [F(a), F(b)]
        i = int(np.argmax(vals))
        return xs[i], vals[i]
    F(a)  # endpoints always participate (t = 0 is always feasible)
    F(b)
    c = a + INV_PHI2 * h
    d = a + INV_PHI * h
    yc, yd = F(c), F(d)
    n = max(int(math.ceil(math.log(tol / h) / math.log(INV_PHI))), 1)
    for _ in range(n):
        if yc >= yd:
            b, d, yd = d, c, yc
            h = INV_PHI * h
            c = a + INV_PHI2 * h
            yc = F(c)
        else:
            a, c, yc = c, d, yd
            h = INV_PHI * h
            d = a + INV_PHI * h
            yd = F(d)
    best_x = max(evals, key=lambda x: evals[x])
    return best_x, evals[best_x]


# ---------------------------------------------------------------------------
# Selective non-cooperative scheme


def select_eap(ch: ChannelSet, cfg: SystemConfig) -> int:
    """Index of the EAP with the strongest PT link; ties go to the smallest."""
    norms = [float(np.linalg.norm(ch.h_p_eap[sl]) ** 2) for sl in rx_slices(cfg)]
    return int(np.argmax(norms))


@dataclass
class NonCooperativeResult:
    index: int
    reduced: Algorithm1Result
    dp: DesignPoint  # re-embedded with zeros for unselected EAPs
    report: RateReport
    cost_budget: float


def solve_noncooperative(
    ch: ChannelSet,
    cfg: SystemConfig,
    settings: ScaSettings | None = None,
    cost_budget: float | None = None,
) -> NonCooperativeResult:
    """Run the full iterative scheme with only the strongest-PT-link EAP.

    All other EAPs' channel blocks are removed (their residual LI included);
    the budget stays the one resolved on the full channel set so schemes are
    comparable.  The returned design is re-embedded with zeros.
    """
    C = resolve_cost_budget(ch, cfg) if cost_budget is None else cost_budget
    k = select_eap(ch, cfg)
    ch_red, cfg_red = select_eaps(ch, cfg, [k])
    res = algorithm1(ch_red, cfg_red, settings=settings, cost_budget=C)

    dp_red = res.dp
    X = np.zeros((cfg.sum_nT, cfg.sum_nT), dtype=complex)
    sl_t = tx_slices(cfg)[k]
    X[sl_t, sl_t] = dp_red.X
    vp = np.zeros(cfg.sum_n, dtype=complex)
    from .system import ant_slices

    sl_a = ant_slices(cfg)[k]
    vp[sl_a] = dp_red.vp
    dp = DesignPoint(X=X, Qs=dp_red.Qs, wp=dp_red.wp, vp=vp, rho=dp_red.rho, t=dp_red.t, y=dp_red.y)
    return NonCooperativeResult(index=k, reduced=res, dp=dp, report=res.report, cost_budget=C)


# ---------------------------------------------------------------------------
# Half-duplex scheme


def hd_primary_rate(ch: ChannelSet, dp: DesignPoint, cfg: SystemConfig) -> float:
    """DF rate when relaying happens only at the ST (no EAP transmission)."""
    first = (1.0 - dp.rho) * cfg.Pp * g1(ch, dp.X, dp.rho, cfg) if dp.rho < 1.0 else 0.0
    num = abs(ch.g_sp.conj() @ dp.wp) ** 2
    den = float(np.real(ch.g_sp.conj() @ dp.Qs @ ch.g_sp)) + cfg.sigma_pr2
    return float(0.5 * np.log2(1.0 + min(first, num / den)))


@dataclass
class HdInnerResult:
    objective: float  # -inf when infeasible at (rho, t)
    X: np.ndarray | None = None
    Qs: np.ndarray | None = None
    W_p: np.ndarray | None = None
    wp: np.ndarray | None = None
    rank_ratio: float = 0.0
    sca_iterations: int = 0
    newton_steps: int = 0


def _hd_subproblem(ch, cfg, rho, t_bar, C, X_bar, scales):
    """Conic subproblem of the HD scheme at one anchor."""
    SX, SQ = scales
    pb = ConicProblem()
    Xv = pb.add_psd_matrix("X", cfg.sum_nT)
    Qv = pb.add_psd_matrix("Qs", cfg.N)
    Wv = pb.add_psd_matrix("Wp", cfg.N)
    H = ch.H_eap_st
    M_eh = H.conj().T @ H
    for k, sl in enumerate(tx_slices(cfg)):
        Ek = np.zeros((cfg.sum_nT, cfg.sum_nT))
        Ek[sl, sl] = np.eye(sl.stop - sl.start)
        pb.add_affine_ineq(pb.trace_expr(Xv, Ek / SX) * SX - 1.0, label=f"wpt[{k}]")
    # linearized first hop: (1-rho)*Pp*g1_lin(X) >= t_bar (trivial at t_bar=0)
    if t_bar > 0.0:
        gbar = g1(ch, X_bar, rho, cfg)
        grad = grad_g1(ch, X_bar, rho, cfg)
        lin_const = gbar - float(np.real(np.trace(grad @ X_bar)))
        g_lin = SX * pb.trace_expr(Xv, grad) + lin_const
        s_fh = max((1.0 - rho) * cfg.Pp * gbar, 1e-300)
        pb.add_affine_ineq(ScalExpr(t_bar / s_fh) - g_lin * ((1.0 - rho) * cfg.Pp / s_fh), label="fh")
    # PR SINR in SDR form: tr(G_sp W) >= t_bar * (g_sp^H Qs g_sp + sigma^2)
    Gsp = np.outer(ch.g_sp, ch.g_sp.conj())
    s_pr = max(t_bar * cfg.sigma_pr2, SQ * float(np.linalg.norm(ch.g_sp) ** 2), 1e-300)
    expr = ScalExpr(t_bar * cfg.sigma_pr2 / s_pr)
    expr = expr + (t_bar * SQ / s_pr) * pb.trace_expr(Qv, Gsp)
    expr = expr - (SQ / s_pr) * pb.trace_expr(Wv, Gsp)
    pb.add_affine_ineq(expr, label="pr")
    # harvested power budget: tr(Qs + Wp) <= eta*rho*P_EH(X)
    harv = ScalExpr(cfg.eta * rho * cfg.Pp * np.linalg.norm(ch.h_p_st) ** 2 / SQ)
    harv = harv + (cfg.eta * rho * SX / SQ) * pb.trace_expr(Xv, M_eh)
    pb.add_affine_ineq(pb.trace_expr(Qv, np.eye(cfg.N)) + pb.trace_expr(Wv, np.eye(cfg.N)) - harv, label="power")
    # WPT-only cost
    pb.add_affine_ineq((cfg.c3 * cfg.eta * rho * SX / C) * pb.trace_expr(Xv, M_eh) - 1.0, label="cost")
    logdet = []
    if cfg.c2 > 0.0:
        G = math.sqrt(SQ / cfg.sigma_sr2) * ch.G_ss
        logdet.append((0.5 * cfg.c2, ConicProblem.const_mat(np.eye(cfg.M)) + pb.mat_var_expr(Qv, G)))
    pb.set_objective(logdet=logdet)
    return pb


def solve_hd_inner(
    ch: ChannelSet,
    cfg: SystemConfig,
    rho_bar: float,
    t_bar: float,
    cost_budget: float | None = None,
    X_bar: np.ndarray | None = None,
    settings: ScaSettings | None = None,
    warm_state: tuple | None = None,
) -> HdInnerResult:
    """HD inner problem at fixed (rho, t): SCA over the single linearized
    first-hop constraint, rank-one beam recovered from the PSD relaxation."""
    st = settings or ScaSettings()
    C = resolve_cost_budget(ch, cfg) if cost_budget is None else cost_budget
    zero_rate = 0.5 * cfg.c1 * math.log2(1.0 + t_bar)
    if rho_bar <= 0.0:
        # no harvested power: Qs = Wp = 0, feasible only for t = 0
        if t_bar > 0.0:
            return HdInnerResult(objective=-np.inf)
        Z = np.zeros((cfg.N, cfg.N), dtype=complex)
        return HdInnerResult(0.0, np.zeros((cfg.sum_nT, cfg.sum_nT), complex), Z, Z, np.zeros(cfg.N, complex))

    SX = cfg.P0
    if X_bar is None:
        X_bar = np.zeros((cfg.sum_nT, cfg.sum_nT), dtype=complex)
        for sl, nt in zip(tx_slices(cfg), cfg.nT):
            X_bar[sl, sl] = 0.5 * cfg.P0 / nt * np.eye(nt)
    # the first hop shrinks with the energy covariance, so the anchor must be
    # scaled back until its own linearization admits the target; an empty-X
    # first hop below the target is a genuine infeasibility
    def fh_at(X):
        return (1.0 - rho_bar) * cfg.Pp * g1(ch, X, rho_bar, cfg)

    if fh_at(np.zeros_like(X_bar)) < t_bar:
        return HdInnerResult(objective=-np.inf)
    if fh_at(X_bar) < 1.05 * t_bar:
        lo, hi = 0.0, 1.0
        for _ in range(40):
            mid = 0.5 * (lo + hi)
            if fh_at(mid * X_bar) >= 1.05 * t_bar:
                lo = mid
            else:
                hi = mid
        X_bar = lo * X_bar
    SQ = max(cfg.eta * rho_bar * harvested_power(ch, X_bar, cfg), 1e-300)
    # the default (tight) gap keeps the relaxed beam matrix numerically
    # rank-one; these subproblems are small and cheap
    inner_opts = SolverOptions()

    obj = -np.inf
    best = None
    iters = 0
    newton = 0
    init_point = None
    if warm_state is not None:
        Xw, Qw, Ww = warm_state
        init_point = {"X": Xw / SX, "Qs": Qw / SQ, "Wp": Ww / SQ}
    for _ in range(st.max_iters):
        pb = _hd_subproblem(ch, cfg, rho_bar, t_bar, C, X_bar, (SX, SQ))
        sol = conic.solve(pb, init=init_point, warm=init_point is not None, options=inner_opts)
        newton += sol.iterations
        if sol.status not in ("optimal", "max-iterations") or not np.isfinite(sol.objective):
            break
        iters += 1
        vals = sol.values
        X_new = SX * vals["X"]
        Qs_new = SQ * vals["Qs"]
        obj_new = zero_rate + cfg.c2 * secondary_rate(ch, Qs_new, cfg)
        if obj_new < obj:
            break
        rel = abs(obj_new - obj) / max(abs(obj), 1e-8)
        obj = obj_new
        best = (X_new, Qs_new, SQ * vals["Wp"])
        X_bar = X_new
        init_point = vals
        if rel < st.rel_tol:
            break
    if best is None:
        return HdInnerResult(objective=-np.inf, sca_iterations=iters, newton_steps=newton)
    X, Qs, Wp = best
    lam, V = np.linalg.eigh(0.5 * (Wp + Wp.conj().T))
    lam = np.maximum(lam, 0.0)
    if lam[-1] <= 0.0:
        wp = np.zeros(cfg.N, dtype=complex)
        ratio = 0.0
    else:
        wp = math.sqrt(lam[-1]) * V[:, -1]
        ratio = float(lam[-2] / lam[-1]) if cfg.N > 1 else 0.0
    return HdInnerResult(obj, X, Qs, Wp, wp, ratio, iters, newton)


@dataclass
class HdResult:
    dp: DesignPoint
    report: RateReport
    objective: float
    rho: float
    t: float
    inner: HdInnerResult
    cost_budget: float
    sca_iterations: int = 0
    newton_steps: int = 0


def hd_report(ch: ChannelSet, dp: DesignPoint, cfg: SystemConfig, cost_budget: float | None = None) -> RateReport:
    """Report for the HD scheme (no EAP hop, WPT-only cost)."""
    base = evaluate(ch, dp, cfg, cost_budget=cost_budget)
    r_pr = hd_primary_rate(ch, dp, cfg)
    r_sr = secondary_rate(ch, dp.Qs, cfg)
    return RateReport(
        r_pr=r_pr,
        r_sr=r_sr,
        weighted_sum=cfg.c1 * r_pr + cfg.c2 * r_sr,
        branch="ST-first-hop",
        harvested_power=base.harvested_power,
        cost_spent=base.cost_spent,
        feasible=base.feasible,
        violations=base.violations,
    )


def solve_hd(
    ch: ChannelSet,
    cfg: SystemConfig,
    settings: ScaSettings | None = None,
    cost_budget: float | None = None,
) -> HdResult:
    """HD benchmark: golden-section over the SINR target inside the
    power-splitting sweep (the inner optimum is concave in the target)."""
    C = resolve_cost_budget(ch, cfg) if cost_budget is None else cost_budget
    best = None  # (objective, rho, t, inner)
    iters = 0
    newton = 0
    chain_X: np.ndarray | None = None
    # the harvested power is bounded by full per-EAP budgets; through the
    # second hop this caps the reachable SINR target much tighter than the
    # interference-free first hop when the receivers are far
    H = ch.H_eap_st
    p_eh_ub = cfg.Pp * np.linalg.norm(ch.h_p_st) ** 2 + cfg.P0 * sum(
        np.linalg.eigvalsh((H[:, sl].conj().T @ H[:, sl]))[-1] for sl in tx_slices(cfg)
    )
    for rho in rho_grid(cfg):
        rho = float(rho)
        if rho >= 1.0:
            t_max = 0.0
        else:
            t_first = (1.0 - rho) * cfg.Pp * np.linalg.norm(ch.h_p_st) ** 2 / (
                (1.0 - rho) * cfg.sigma_na2 + cfg.sigma_nc2
            )
            t_second = float(np.linalg.norm(ch.g_sp) ** 2) * cfg.eta * rho * p_eh_ub / cfg.sigma_pr2
            t_max = min(t_first, t_second)
        cache: dict[float, HdInnerResult] = {}
        state: list = [None]

        def f(t, rho=rho, cache=cache, state=state):
            res = solve_hd_inner(ch, cfg, rho, t, C, X_bar=chain_X, settings=settings, warm_state=state[0])
            cache[t] = res
            if res.X is not None:
                state[0] = (res.X, res.Qs, res.W_p)
            return res.objective

        if t_max <= 0.0:
            t_star, val = 0.0, f(0.0)
        else:
            t_star, val = golden_section_max(f, 0.0, t_max, tol=1e-3 * t_max)
        inner = cache[t_star]
        for r in cache.values():
            iters += r.sca_iterations
            newton += r.newton_steps
        if inner.X is not None:
            chain_X = inner.X
        if np.isfinite(val) and (best is None or val > best[0]):
            best = (val, rho, t_star, inner)
    obj, rho, t_star, inner = best
    dp = DesignPoint(
        X=inner.X,
        Qs=inner.Qs,
        wp=inner.wp,
        vp=np.zeros(cfg.sum_n, dtype=complex),
        rho=rho,
        t=t_star,
        y=float(np.real(ch.g_sp.conj() @ inner.Qs @ ch.g_sp)) + cfg.sigma_pr2,
    )
    report = hd_report(ch, dp, cfg, cost_budget=C)
    return HdResult(dp, report, obj, rho, t_star, inner, C, iters, newton)
