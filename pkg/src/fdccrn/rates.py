"""Closed-form SINR, rate, power and cost evaluators shared by all schemes.

Rates follow the two-slot protocol and always carry the 1/2 pre-log.  All
functions are pure; linear systems with the interference-plus-noise matrices
are solved through Hermitian positive-definite factorizations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .system import ChannelSet, SystemConfig, ant_slices, tx_slices

__all__ = [
    "DesignPoint",
    "RateReport",
    "ST_FIRST_HOP",
    "EAP_FIRST_HOP",
    "PSD_TOL",
    "FEAS_TOL",
    "matrix_A",
    "matrix_B",
    "g1",
    "g2",
    "st_receive_sinr",
    "st_receive_beamformer",
    "eap_receive_sinr",
    "harvested_power",
    "pr_sinr",
    "primary_rate",
    "secondary_rate",
    "cost_spent",
    "max_cost",
    "max_wpt_trace",
    "resolve_cost_budget",
    "evaluate",
    "check_design_point",
]

ST_FIRST_HOP = "ST-first-hop"
EAP_FIRST_HOP = "EAP-first-hop"

# eigenvalues >= -PSD_TOL * trace are accepted as PSD (solver roundoff)
PSD_TOL = 1e-9
# relative feasibility tolerance for the (P1) constraint set
FEAS_TOL = 1e-7


@dataclass(frozen=True)
class DesignPoint:
    """Decision variables of the weighted sum-rate problem.

    X:  (sum nT, sum nT) Hermitian PSD energy covariance of the EAPs [W]
    Qs: (N, N) Hermitian PSD covariance of the ST's secondary signal [W]
    wp: (N,) ST beam for the relayed primary message
    vp: (sum n,) EAP second-slot beam
    rho: power-splitting ratio in [0, 1]
    t, y: SINR epigraph / interference auxiliaries (nonnegative)
    """

    X: np.ndarray
    Qs: np.ndarray
    wp: np.ndarray
    vp: np.ndarray
    rho: float
    t: float = 0.0
    y: float = 0.0

    def __post_init__(self):
        for name in ("X", "Qs", "wp", "vp"):
            arr = np.asarray(getattr(self, name), dtype=complex)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @staticmethod
    def zeros(cfg: SystemConfig, rho: float = 0.0) -> "DesignPoint":
        return DesignPoint(
            X=np.zeros((cfg.sum_nT, cfg.sum_nT), dtype=complex),
            Qs=np.zeros((cfg.N, cfg.N), dtype=complex),
            wp=np.zeros(cfg.N, dtype=complex),
            vp=np.zeros(cfg.sum_n, dtype=complex),
            rho=rho,
        )


@dataclass(frozen=True)
class RateReport:
    """Evaluated rates, powers and feasibility of one design point."""

    r_pr: float
    r_sr: float
    weighted_sum: float
    branch: str
    harvested_power: float
    cost_spent: float
    feasible: bool
    violations: tuple[str, ...] = ()


def _herm(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M + M.conj().T)


def _pd_solve(M: np.ndarray, b: np.ndarray) -> np.ndarray:
    return cho_solve(cho_factor(_herm(M), lower=True), b)


def matrix_A(ch: ChannelSet, X: np.ndarray, rho: float, cfg: SystemConfig) -> np.ndarray:
    """Interference-plus-noise matrix at the ST's information-decoding chain."""
    H = ch.H_eap_st
    return _herm((1.0 - rho) * (H @ X @ H.conj().T + cfg.sigma_na2 * np.eye(cfg.N)) + cfg.sigma_nc2 * np.eye(cfg.N))


def matrix_B(ch: ChannelSet, X: np.ndarray, cfg: SystemConfig) -> np.ndarray:
    """Residual-LI-plus-noise matrix at the EAPs' joint receiver."""
    Ht = ch.H_tr_err
    return _herm(cfg.theta2 * (Ht @ X @ Ht.conj().T) + cfg.sigma_eap2 * np.eye(cfg.sum_nR))


def g1(ch: ChannelSet, X: np.ndarray, rho: float, cfg: SystemConfig) -> float:
    """Quadratic form h_p_st^H A^-1(rho, X) h_p_st (convex in X)."""
    return float(np.real(ch.h_p_st.conj() @ _pd_solve(matrix_A(ch, X, rho, cfg), ch.h_p_st)))


def g2(ch: ChannelSet, X: np.ndarray, cfg: SystemConfig) -> float:
    """Quadratic form h_p_eap^H B^-1(X) h_p_eap (convex in X)."""
    return float(np.real(ch.h_p_eap.conj() @ _pd_solve(matrix_B(ch, X, cfg), ch.h_p_eap)))


def st_receive_sinr(ch: ChannelSet, X: np.ndarray, rho: float, cfg: SystemConfig) -> float:
    """First-slot SINR at the ST with the MVDR receive beam."""
    if rho >= 1.0:
        return 0.0
    return (1.0 - rho) * cfg.Pp * g1(ch, X, rho, cfg)


def st_receive_beamformer(ch: ChannelSet, X: np.ndarray, rho: float, cfg: SystemConfig) -> np.ndarray:
    """Unit-norm receive beam attaining st_receive_sinr (u1 proportional to A^-1 h)."""
    u = _pd_solve(matrix_A(ch, X, rho, cfg), ch.h_p_st)
    nrm = np.linalg.norm(u)
    if nrm == 0.0:
        u = np.zeros(cfg.N, dtype=complex)
        u[0] = 1.0
        return u
    return u / nrm


def eap_receive_sinr(ch: ChannelSet, X: np.ndarray, cfg: SystemConfig) -> float:
    """First-slot SINR of the EAPs' joint decoder with the MVDR receive beam."""
    return cfg.Pp * g2(ch, X, cfg)


def harvested_power(ch: ChannelSet, X: np.ndarray, cfg: SystemConfig) -> float:
    """Total wireless power arriving at the ST (before eta and rho factors)."""
    H = ch.H_eap_st
    return float(np.real(np.trace(H @ X @ H.conj().T)) + cfg.Pp * np.linalg.norm(ch.h_p_st) ** 2)


def pr_sinr(ch: ChannelSet, dp: DesignPoint, cfg: SystemConfig) -> float:
    """Second-slot SINR at the PR; secondary interference treated as noise."""
    num = abs(ch.g_sp.conj() @ dp.wp + ch.g_eap_p.conj() @ dp.vp) ** 2
    den = float(np.real(ch.g_sp.conj() @ dp.Qs @ ch.g_sp)) + cfg.sigma_pr2
    return float(num / den)


def primary_rate(ch: ChannelSet, dp: DesignPoint, cfg: SystemConfig) -> tuple[float, str]:
    """DF relaying rate for the PR and the first-hop branch attaining it.

    Ties between the ST and EAP first hops resolve to the ST branch.
    """
    sinr_st = st_receive_sinr(ch, dp.X, dp.rho, cfg)
    sinr_eap = eap_receive_sinr(ch, dp.X, cfg)
    branch = ST_FIRST_HOP if sinr_st >= sinr_eap else EAP_FIRST_HOP
    first_hop = max(sinr_st, sinr_eap)
    rate = 0.5 * np.log2(1.0 + min(first_hop, pr_sinr(ch, dp, cfg)))
    return float(rate), branch


def secondary_rate(ch: ChannelSet, Qs: np.ndarray, cfg: SystemConfig) -> float:
    """Rate of the interference-free secondary MIMO link, 0.5*log2 det(I + G Qs G^H / sigma^2)."""
    G = ch.G_ss
    M = np.eye(cfg.M) + (G @ Qs @ G.conj().T) / cfg.sigma_sr2
    sign, logdet = np.linalg.slogdet(_herm(M))
    if sign <= 0:
        return 0.0
    return float(0.5 * logdet / np.log(2.0))


def cost_spent(ch: ChannelSet, dp: DesignPoint, cfg: SystemConfig) -> float:
    """Payment to the EAPs: harvested-energy share plus received WIT power."""
    H = ch.H_eap_st
    wpt = cfg.c3 * cfg.eta * dp.rho * float(np.real(np.trace(H @ dp.X @ H.conj().T)))
    wit = cfg.c4 * abs(ch.g_eap_p.conj() @ dp.vp) ** 2
    return float(wpt + wit)


def max_wpt_trace(ch: ChannelSet, cfg: SystemConfig) -> float:
    """Maximum of trace(H_eap_st X H_eap_st^H) over X >= 0 with per-EAP traces <= P0.

    Runs a block power iteration over rank-one candidates (multistarted,
    deterministic) and certifies optimality via the dual blockdiag(mu_k I) >= M;
    falls back to the conic solver when the certificate does not close.
    """
    H = ch.H_eap_st
    M = _herm(H.conj().T @ H)
    dim = M.shape[0]
    scale = float(np.trace(M).real)
    if scale <= 0.0:
        return 0.0
    slices = tx_slices(cfg)
    root = np.sqrt(cfg.P0)

    def normalize_blocks(x):
        out = np.zeros_like(x)
        for sl in slices:
            nrm = np.linalg.norm(x[sl])
            if nrm > 0:
                out[sl] = root * x[sl] / nrm
            else:
                out[sl][0] = root
        return out

    evals, evecs = np.linalg.eigh(M)
    starts = [evecs[:, -1].astype(complex)]
    for sl in slices:
        s = np.zeros(dim, dtype=complex)
        sub = np.linalg.eigh(M[sl, sl])[1][:, -1]
        s[sl] = sub
        starts.append(s)

    best_x, best_val = None, -np.inf
    for s in starts:
        x = normalize_blocks(s)
        for _ in range(200):
            x_new = normalize_blocks(M @ x)
            if np.linalg.norm(x_new - x) <= 1e-14 * root:
                x = x_new
                break
            x = x_new
        val = float(np.real(x.conj() @ M @ x))
        if val > best_val:
            best_val, best_x = val, x

    # dual certificate: mu_k = |(Mx)_k| / |x_k|; optimal iff blockdiag(mu) >= M
    mu = np.zeros(dim)
    Mx = M @ best_x
    dual = 0.0
    for sl in slices:
        m_k = np.linalg.norm(Mx[sl]) / root
        mu[sl] = m_k
        dual += cfg.P0 * m_k
    gap_ok = dual - best_val <= 1e-9 * max(dual, scale * cfg.P0)
    psd_ok = np.linalg.eigvalsh(np.diag(mu) - M)[0] >= -1e-9 * np.linalg.norm(M, 2)
    if gap_ok and psd_ok:
        return best_val

    from . import conic

    pb = conic.ConicProblem()
    Xv = pb.add_psd_matrix("X", dim)
    for k, sl in enumerate(slices):
        Ek = np.zeros((dim, dim))
        Ek[sl, sl] = np.eye(sl.stop - sl.start)
        pb.add_affine_ineq(pb.trace_expr(Xv, Ek / cfg.P0) - 1.0, label=f"wpt[{k}]")
    pb.set_objective(affine=pb.trace_expr(Xv, M / scale))
    sol = conic.solve(pb)
    return float(sol.objective * scale)


def max_cost(ch: ChannelSet, cfg: SystemConfig, rho: float) -> float:
    """Largest possible system payment C_max at power-splitting ratio rho.

    The WIT part has the closed form P0 * (sum_k |g_eap_p,k|)^2; the WPT part
    maximizes the transferred energy under the per-EAP power budgets.
    """
    gnorm_sum = sum(np.linalg.norm(ch.g_eap_p[sl]) for sl in ant_slices(cfg))
    wit = cfg.c4 * cfg.P0 * gnorm_sum**2
    wpt = cfg.c3 * cfg.eta * rho * max_wpt_trace(ch, cfg)
    return float(wpt + wit)


def resolve_cost_budget(ch: ChannelSet, cfg: SystemConfig) -> float:
    """Absolute cost budget C; normalized budgets are fractions of C_max at rho=1."""
    if cfg.cost_budget_mode == "absolute":
        return cfg.cost_budget
    return cfg.cost_budget * max_cost(ch, cfg, rho=1.0)


def check_design_point(dp: DesignPoint, cfg: SystemConfig) -> list[str]:
    """Violations of the DesignPoint type invariants (PSD, ranges, dimensions)."""
    v: list[str] = []
    if dp.X.shape != (cfg.sum_nT, cfg.sum_nT):
        v.append("X shape")
    if dp.Qs.shape != (cfg.N, cfg.N):
        v.append("Qs shape")
    if dp.wp.shape != (cfg.N,):
        v.append("wp shape")
    if dp.vp.shape != (cfg.sum_n,):
        v.append("vp shape")
    for name in ("X", "Qs"):
        A = getattr(dp, name)
        if A.shape[0] and np.linalg.eigvalsh(_herm(A))[0] < -PSD_TOL * max(np.trace(A).real, 0.0) - 1e-300:
            v.append(f"{name} PSD")
    if not (-1e-12 <= dp.rho <= 1.0 + 1e-12):
        v.append("rho range")
    if dp.t < 0.0:
        v.append("t >= 0")
    if dp.y < 0.0:
        v.append("y >= 0")
    return v


def evaluate(ch: ChannelSet, dp: DesignPoint, cfg: SystemConfig, cost_budget: float | None = None) -> RateReport:
    """Full rate report with feasibility flags for the (P1) constraint set."""
    if cost_budget is None:
        cost_budget = resolve_cost_budget(ch, cfg)
    r_pr, branch = primary_rate(ch, dp, cfg)
    r_sr = secondary_rate(ch, dp.Qs, cfg)
    p_eh = harvested_power(ch, dp.X, cfg)
    cost = cost_spent(ch, dp, cfg)

    violations: list[str] = []
    for k, sl in enumerate(ant_slices(cfg)):
        if np.linalg.norm(dp.vp[sl]) ** 2 > cfg.P0 * (1.0 + FEAS_TOL):
            violations.append("per-EAP WIT power")
            break
    for k, sl in enumerate(tx_slices(cfg)):
        if np.trace(dp.X[sl, sl]).real > cfg.P0 * (1.0 + FEAS_TOL):
            violations.append("per-EAP WPT power")
            break
    st_power = float(np.trace(dp.Qs).real + np.linalg.norm(dp.wp) ** 2)
    if st_power > cfg.eta * dp.rho * p_eh * (1.0 + FEAS_TOL):
        violations.append("ST power")
    if cost > cost_budget * (1.0 + FEAS_TOL):
        violations.append("cost budget")
    if not (-FEAS_TOL <= dp.rho <= 1.0 + FEAS_TOL):
        violations.append("rho range")
    for name in ("X", "Qs"):
        A = getattr(dp, name)
        if A.shape[0] and np.linalg.eigvalsh(_herm(A))[0] < -PSD_TOL * max(np.trace(A).real, 0.0) - 1e-300:
            violations.append(f"{name} PSD")

    return RateReport(
        r_pr=r_pr,
        r_sr=r_sr,
        weighted_sum=cfg.c1 * r_pr + cfg.c2 * r_sr,
        branch=branch,
        harvested_power=p_eh,
        cost_spent=cost,
        feasible=not violations,
        violations=tuple(violations),
    )
