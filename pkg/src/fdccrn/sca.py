"""Iterative convexification solver for the weighted sum-rate problem.

The min/max structure of the DF relaying rate is split into two branches
(first hop decoded at the ST, or at the EAPs).  Each branch is solved, at a
fixed power-splitting ratio, by successive convex approximation: the convex
quadratic forms g1/g2 are replaced by their first-order lower bounds, the
sqrt(t*y) coupling by its first-order upper bound, and the resulting conic
subproblems are solved at a sequence of anchors.  An outer one-dimensional
sweep covers the power-splitting ratio.

Subproblems are handed to the conic backend in per-anchor normalized units
(powers against their budgets, auxiliaries against their anchors) so that
every matrix the barrier method sees is O(1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import conic
from .conic import ConicProblem, MatExpr, ScalExpr, SolverOptions, VecExpr
from .rates import (
    DesignPoint,
    eap_receive_sinr,
    evaluate,
    g1,
    g2,
    harvested_power,
    matrix_A,
    matrix_B,
    pr_sinr,
    resolve_cost_budget,
    secondary_rate,
    st_receive_sinr,
)
from .system import ChannelSet, SystemConfig, ant_slices, tx_slices

__all__ = [
    "BRANCH_ST",
    "BRANCH_EAP",
    "ScaAnchor",
    "ScaTrace",
    "ScaSettings",
    "grad_g1",
    "grad_g2",
    "linearized_value",
    "sqrt_ty_upper",
    "gamma_star",
    "rho_grid",
    "branch_for_point",
    "anchor_from_point",
    "BranchSubproblem",
    "init_feasible",
    "init_feasible_p11",
    "sca_loop",
    "algorithm1",
    "Algorithm1Result",
]

BRANCH_ST = "st"  # first hop decoded at the ST
BRANCH_EAP = "eap"  # first hop decoded at the EAPs


@dataclass(frozen=True)
class ScaAnchor:
    """Linearization point of one convex subproblem."""

    X_bar: np.ndarray
    t_bar: float
    y_bar: float


@dataclass
class ScaTrace:
    """Objective trajectory of one SCA loop."""

    objectives: list[float] = field(default_factory=list)
    anchors: list[ScaAnchor] = field(default_factory=list)
    converged: bool = False
    final_kkt_residual: float = math.inf
    newton_steps: int = 0
    chained: bool = False  # anchor carried over from the previous grid point

    @property
    def iterations(self) -> int:
        return len(self.objectives)


@dataclass(frozen=True)
class ScaSettings:
    rel_tol: float = 1e-4
    max_iters: int = 30
    certify_tol: float = 1e-8  # anchor settlement for the KKT certification
    certify_iters: int = 12
    # sweep solves run at a looser duality gap; the winning point is
    # re-solved and certified at the solver default afterwards
    inner_gap: float = 2.5e-7
    # chain each branch's anchor from the previous grid point when feasible
    # (two-stage feasibility init is the fallback and the first point's path)
    chain: bool = True


# ---------------------------------------------------------------------------
# Gradients and surrogate bounds


def grad_g1(ch: ChannelSet, X: np.ndarray, rho_bar: float, cfg: SystemConfig) -> np.ndarray:
    """Gradient matrix of g1 at X for fixed rho_bar."""
    H = ch.H_eap_st
    u = np.linalg.solve(matrix_A(ch, X, rho_bar, cfg), ch.h_p_st)
    v = H.conj().T @ u
    return -(1.0 - rho_bar) * np.outer(v, v.conj())


def grad_g2(ch: ChannelSet, X: np.ndarray, cfg: SystemConfig) -> np.ndarray:
    """Gradient matrix of g2 at X."""
    Ht = ch.H_tr_err
    u = np.linalg.solve(matrix_B(ch, X, cfg), ch.h_p_eap)
    v = Ht.conj().T @ u
    return -cfg.theta2 * np.outer(v, v.conj())


def linearized_value(g_at_anchor: float, grad_at_anchor: np.ndarray, X_bar: np.ndarray, X: np.ndarray) -> float:
    """First-order expansion g(Xbar) + Re tr(grad (X - Xbar)); a global lower
    bound of the convex g1/g2."""
    return float(g_at_anchor + np.real(np.trace(grad_at_anchor @ (X - X_bar))))


def sqrt_ty_upper(t: float, y: float, t_bar: float, y_bar: float) -> float:
    """First-order upper bound of sqrt(t*y) around (t_bar, y_bar)."""
    if t_bar <= 0.0 or y_bar <= 0.0:
        raise ValueError("sqrt(t*y) linearization needs positive anchors")
    r = math.sqrt(t_bar * y_bar)
    return r + 0.5 * math.sqrt(y_bar / t_bar) * (t - t_bar) + 0.5 * math.sqrt(t_bar / y_bar) * (y - y_bar)


def gamma_star(ch: ChannelSet, cfg: SystemConfig, rho_bar: float, X: np.ndarray) -> float:
    """Largest achievable Re{g_sp^H wp + g_eap_p^H vp} under the power budgets
    (beams aligned per Cauchy-Schwarz; the cost budget is not imposed here)."""
    val = math.sqrt(max(cfg.eta * rho_bar * harvested_power(ch, X, cfg), 0.0)) * np.linalg.norm(ch.g_sp)
    val += math.sqrt(cfg.P0) * sum(np.linalg.norm(ch.g_eap_p[sl]) for sl in ant_slices(cfg))
    return float(val)


def rho_grid(cfg: SystemConfig) -> np.ndarray:
    """Increasing grid {0, step, ..., 1}; 1 is always included."""
    n = int(math.floor(1.0 / cfg.rho_step + 1e-9))
    vals = [round(i * cfg.rho_step, 12) for i in range(n + 1)]
    if vals[-1] < 1.0 - 1e-12:
        vals.append(1.0)
    else:
        vals[-1] = 1.0
    return np.array(vals)


def branch_for_point(ch: ChannelSet, cfg: SystemConfig, rho: float, X: np.ndarray) -> str:
    """Branch whose first-hop dominance holds at (rho, X); ties go to the ST."""
    lhs = (1.0 - rho) * g1(ch, X, rho, cfg) if rho < 1.0 else 0.0
    return BRANCH_ST if lhs >= g2(ch, X, cfg) else BRANCH_EAP


def anchor_from_point(ch: ChannelSet, cfg: SystemConfig, dp: DesignPoint) -> DesignPoint:
    """Fill the (t, y) auxiliaries of a design point from its achieved SINRs."""
    first_hop = max(st_receive_sinr(ch, dp.X, dp.rho, cfg), eap_receive_sinr(ch, dp.X, cfg))
    t = max(min(first_hop, pr_sinr(ch, dp, cfg)), 0.0)
    y = float(np.real(ch.g_sp.conj() @ dp.Qs @ ch.g_sp)) + cfg.sigma_pr2
    return replace(dp, t=t, y=y)


# ---------------------------------------------------------------------------
# Branch subproblem builder


class BranchSubproblem:
    """Builds and solves the convex subproblems of one branch at fixed rho.

    With a zero-forcing basis L the energy covariance is restricted to
    X = L Xt L^H; the EAPs' receive SINR is then the constant
    Pp*|h_p_eap|^2/sigma_eap2 because the loop interference is nulled.
    """

    def __init__(
        self,
        branch: str,
        ch: ChannelSet,
        cfg: SystemConfig,
        rho_bar: float,
        cost_budget: float,
        zf_L: np.ndarray | None = None,
    ):
        if branch not in (BRANCH_ST, BRANCH_EAP):
            raise ValueError(f"unknown branch {branch!r}")
        self.branch = branch
        self.ch = ch
        self.cfg = cfg
        self.rho = float(rho_bar)
        self.C = float(cost_budget)
        self.zf = zf_L is not None
        self.L = np.eye(cfg.sum_nT, dtype=complex) if zf_L is None else np.asarray(zf_L, dtype=complex)
        self.dX = self.L.shape[1]  # internal X dimension (0 under ZF with one tx antenna)
        self.H_eff = ch.H_eap_st @ self.L
        self.M_eh = self.H_eff.conj().T @ self.H_eff  # trace(H X H^H) = tr(M_eh Xt)
        self.Ek_eff = []
        for sl in tx_slices(cfg):
            Ek = np.zeros((cfg.sum_nT, cfg.sum_nT))
            Ek[sl, sl] = np.eye(sl.stop - sl.start)
            self.Ek_eff.append(self.L.conj().T @ Ek @ self.L)
        self.include_st_tx = self.rho > 0.0
        self.g2_zf = np.linalg.norm(ch.h_p_eap) ** 2 / cfg.sigma_eap2  # g2 with nulled LI
        self.newton_steps = 0

    # -- physical-space helpers ----------------------------------------------

    def to_physical_X(self, Xt: np.ndarray) -> np.ndarray:
        if self.dX == 0:
            return np.zeros((self.cfg.sum_nT, self.cfg.sum_nT), dtype=complex)
        return self.L @ Xt @ self.L.conj().T

    def to_internal_X(self, X: np.ndarray) -> np.ndarray:
        return self.L.conj().T @ X @ self.L

    def first_hop_g(self, X: np.ndarray) -> tuple[float, np.ndarray]:
        """Branch first-hop quadratic form g and its internal-space gradient."""
        if self.branch == BRANCH_ST:
            val = g1(self.ch, X, self.rho, self.cfg)
            grad = grad_g1(self.ch, X, self.rho, self.cfg)
        elif self.zf:
            return self.g2_zf, np.zeros((self.dX, self.dX), dtype=complex)
        else:
            val = g2(self.ch, X, self.cfg)
            grad = grad_g2(self.ch, X, self.cfg)
        return val, self.L.conj().T @ grad @ self.L

    def first_hop_factor(self) -> float:
        """Multiplier turning g into the first-hop SINR (without Pp)."""
        return (1.0 - self.rho) if self.branch == BRANCH_ST else 1.0

    def anchor_objective(self, dp: DesignPoint) -> float:
        return 0.5 * self.cfg.c1 * math.log2(1.0 + max(dp.t, 0.0)) + self.cfg.c2 * secondary_rate(self.ch, dp.Qs, self.cfg)

    # -- conic problem construction -------------------------------------------

    def _scales(self, anchor: DesignPoint):
        cfg, ch = self.cfg, self.ch
        SX = cfg.P0
        SQ = max(cfg.eta * self.rho * harvested_power(ch, anchor.X, cfg), 1e-300)
        if self.branch == BRANCH_ST:
            t_ub = (1.0 - self.rho) * cfg.Pp * np.linalg.norm(ch.h_p_st) ** 2 / ((1.0 - self.rho) * cfg.sigma_na2 + cfg.sigma_nc2)
        else:
            t_ub = cfg.Pp * self.g2_zf
        # anchor-independent variable scales keep the Newton systems stable
        # across the whole SCA run
        St = max(t_ub, 1e-300)
        Sy = float(np.linalg.norm(ch.g_sp) ** 2 * SQ + cfg.sigma_pr2)
        return SX, SQ, St, Sy, t_ub

    def _add_power_cost_wit(self, pb: ConicProblem, meta: dict, Xv, Qv, wv, vv):
        cfg, ch = self.cfg, self.ch
        SX, SQ = meta["SX"], meta["SQ"]

        def x_trace(Cmat):
            return pb.trace_expr(Xv, Cmat) if Xv is not None else ScalExpr(0.0)

        for k, sl in enumerate(ant_slices(cfg)):
            nk = sl.stop - sl.start
            Lsel = np.zeros((nk, cfg.sum_n))
            Lsel[:, sl] = np.eye(nk)
            pb.add_lmi(
                ConicProblem.border(ConicProblem.const_mat(np.eye(nk)), pb.cvec_expr(vv, Lsel), ScalExpr(1.0)),
                label=f"wit[{k}]",
            )
        if Xv is not None:
            for k, Mk in enumerate(self.Ek_eff):
                pb.add_affine_ineq(x_trace(Mk) - 1.0, label=f"wpt[{k}]")
        if Qv is not None:
            corner = (cfg.eta * self.rho * SX / SQ) * x_trace(self.M_eh)
            corner = corner + cfg.eta * self.rho * cfg.Pp * np.linalg.norm(ch.h_p_st) ** 2 / SQ
            corner = corner - pb.trace_expr(Qv, np.eye(cfg.N))
            pb.add_lmi(
                ConicProblem.border(ConicProblem.const_mat(np.eye(cfg.N)), pb.cvec_expr(wv), corner),
                label="power",
            )
        cost_corner = ScalExpr(1.0) - (cfg.c3 * cfg.eta * self.rho * SX / self.C) * x_trace(self.M_eh)
        cost_vec = pb.cvec_expr(vv, math.sqrt(cfg.c4 * cfg.P0 / self.C) * ch.g_eap_p.conj().reshape(1, -1))
        pb.add_lmi(ConicProblem.border(ConicProblem.const_mat(np.eye(1)), cost_vec, cost_corner), label="cost")

    def _add_first_hop(self, pb: ConicProblem, meta: dict, Xv, tv, anchor_X: np.ndarray, with_t: bool):
        """Branch first-hop constraints: comparison against the other hop and,
        when with_t, the epigraph bound on t."""
        cfg, ch = self.cfg, self.ch
        rho, SX = self.rho, meta["SX"]
        g_bar, grad_int = self.first_hop_g(anchor_X)
        Xt_bar = self.to_internal_X(anchor_X)
        lin_const = g_bar - float(np.real(np.trace(grad_int @ Xt_bar)))

        def x_trace(Cmat):
            return pb.trace_expr(Xv, Cmat) if Xv is not None else ScalExpr(0.0)

        g_lin = SX * x_trace(grad_int) + lin_const
        fac = self.first_hop_factor()

        if self.branch == BRANCH_ST and not self.zf:
            # (1-rho)*g1_lin(X) >= g2(X), via the Schur complement of B(X)
            b_scale = float(np.trace(matrix_B(ch, anchor_X, cfg)).real) / cfg.sum_nR
            s_scale = max(fac * g_bar, 1e-300)
            meta["fh_scale"] = s_scale
            Ht_eff = ch.H_tr_err @ self.L
            Bmat = ConicProblem.const_mat(cfg.sigma_eap2 / b_scale * np.eye(cfg.sum_nR))
            if Xv is not None and cfg.theta2 > 0.0:
                Bmat = Bmat + pb.mat_var_expr(Xv, math.sqrt(cfg.theta2 * SX / b_scale) * Ht_eff)
            vec = VecExpr(cfg.sum_nR, const=ch.h_p_eap / math.sqrt(b_scale * s_scale))
            pb.add_lmi(ConicProblem.border(Bmat, vec, g_lin * (fac / s_scale)), label="fh_cmp")
            meta["nl"]["fh_cmp"] = "g_corner"
        elif self.branch == BRANCH_ST:
            # ZF: the EAP hop is the constant g2_zf
            s_scale = max(fac * g_bar, 1e-300)
            meta["fh_scale"] = s_scale
            pb.add_affine_ineq(ScalExpr(self.g2_zf / s_scale) - g_lin * (fac / s_scale), label="fh_cmp")
            meta["nl"]["fh_cmp"] = "g_affine"
        else:
            # g2_lin(X) >= (1-rho)*g1-form(X), via the Schur complement of A(X);
            # under ZF the left side is the constant g2_zf and no anchor enters
            a_scale = float(np.trace(matrix_A(ch, anchor_X, rho, cfg)).real) / cfg.N
            s_scale = max(g_bar, 1e-300)
            meta["fh_scale"] = s_scale
            Amat = ConicProblem.const_mat(((1.0 - rho) * cfg.sigma_na2 + cfg.sigma_nc2) / a_scale * np.eye(cfg.N))
            if Xv is not None:
                Amat = Amat + pb.mat_var_expr(Xv, math.sqrt((1.0 - rho) * SX / a_scale) * self.H_eff)
            vec = VecExpr(cfg.N, const=math.sqrt(1.0 - rho) * ch.h_p_st / math.sqrt(a_scale * s_scale))
            corner = ScalExpr(1.0) if self.zf else g_lin * (1.0 / s_scale)
            pb.add_lmi(ConicProblem.border(Amat, vec, corner), label="fh_cmp")
            if not self.zf:
                meta["nl"]["fh_cmp"] = "g_corner"

        if with_t:
            St = meta["St"]
            if self.branch == BRANCH_EAP and self.zf:
                pb.add_affine_ineq(pb.scalar_expr(tv) - cfg.Pp * self.g2_zf / St, label="fh_t")
            else:
                pb.add_affine_ineq(pb.scalar_expr(tv) - g_lin * (fac * cfg.Pp / St), label="fh_t")
                meta["nl"]["fh_t"] = "g_t"

    def build(self, anchor: DesignPoint):
        """Full conic subproblem at the given anchor; returns (problem, meta)."""
        cfg, ch = self.cfg, self.ch
        SX, SQ, St, Sy, t_ub = self._scales(anchor)
        t_bar = max(anchor.t, 1e-12 * (1.0 + t_ub))
        y_bar = max(anchor.y, cfg.sigma_pr2)

        pb = ConicProblem()
        meta = {"SX": SX, "SQ": SQ, "St": St, "Sy": Sy, "t_bar": t_bar, "y_bar": y_bar, "nl": {}}
        Xv = pb.add_psd_matrix("X", self.dX) if self.dX else None
        Qv = pb.add_psd_matrix("Qs", cfg.N) if self.include_st_tx else None
        wv = pb.add_complex_vector("wp", cfg.N) if self.include_st_tx else None
        vv = pb.add_complex_vector("vp", cfg.sum_n)
        tv = pb.add_scalar("t", lower=0.0)
        yv = pb.add_scalar("y", lower=0.0)
        meta["vars"] = (Xv, Qv, wv, vv, tv, yv)

        self._add_power_cost_wit(pb, meta, Xv, Qv, wv, vv)
        self._add_first_hop(pb, meta, Xv, tv, anchor.X, with_t=True)

        # interference auxiliary: g_sp^H Qs g_sp + sigma_pr2 <= y
        y_expr = ScalExpr(cfg.sigma_pr2 / Sy) - pb.scalar_expr(yv)
        if self.include_st_tx:
            y_expr = y_expr + (SQ / Sy) * pb.trace_expr(Qv, np.outer(ch.g_sp, ch.g_sp.conj()))
        pb.add_affine_ineq(y_expr, label="y_def")

        # beam alignment: Re{g_sp^H wp + g_eap_p^H vp} >= linearized sqrt(t*y)
        r_bar = math.sqrt(t_bar * y_bar)
        align = ScalExpr(r_bar)
        align = align + 0.5 * math.sqrt(y_bar / t_bar) * (pb.scalar_expr(tv, St) - t_bar)
        align = align + 0.5 * math.sqrt(t_bar / y_bar) * (pb.scalar_expr(yv, Sy) - y_bar)
        align = align - math.sqrt(cfg.P0) * pb.re_inner_expr(vv, ch.g_eap_p)
        if self.include_st_tx:
            align = align - math.sqrt(SQ) * pb.re_inner_expr(wv, ch.g_sp)
        pb.add_affine_ineq(align * (1.0 / r_bar), label="align")
        meta["nl"]["align"] = "sqrt_ty"

        # objective: 0.5*c1*log2(1+t) + c2*r_SR(Qs)
        logdet = []
        if cfg.c1 > 0.0:
            logdet.append((0.5 * cfg.c1, MatExpr(1, const=np.array([[1.0]]), coeffs={tv.offset: np.array([[St]])})))
        if cfg.c2 > 0.0 and self.include_st_tx:
            G = math.sqrt(SQ / cfg.sigma_sr2) * ch.G_ss
            logdet.append((0.5 * cfg.c2, ConicProblem.const_mat(np.eye(cfg.M)) + pb.mat_var_expr(Qv, G)))
        pb.set_objective(logdet=logdet)
        return pb, meta

    def pack_point(self, meta, dp: DesignPoint) -> dict:
        SX, SQ, St, Sy = meta["SX"], meta["SQ"], meta["St"], meta["Sy"]
        point = {"vp": dp.vp / math.sqrt(self.cfg.P0), "t": dp.t / St, "y": dp.y / Sy}
        if self.dX:
            point["X"] = self.to_internal_X(dp.X) / SX
        if self.include_st_tx:
            point["Qs"] = dp.Qs / SQ
            point["wp"] = dp.wp / math.sqrt(SQ)
        return point

    def unpack_point(self, meta, values: dict) -> DesignPoint:
        cfg = self.cfg
        SX, SQ, St, Sy = meta["SX"], meta["SQ"], meta["St"], meta["Sy"]
        X = self.to_physical_X(values["X"] * SX) if self.dX else np.zeros((cfg.sum_nT, cfg.sum_nT), dtype=complex)
        if self.include_st_tx:
            Qs = values["Qs"] * SQ
            wp = values["wp"] * math.sqrt(SQ)
        else:
            Qs = np.zeros((cfg.N, cfg.N), dtype=complex)
            wp = np.zeros(cfg.N, dtype=complex)
        return DesignPoint(
            X=X,
            Qs=Qs,
            wp=wp,
            vp=values["vp"] * math.sqrt(cfg.P0),
            rho=self.rho,
            t=max(values["t"] * St, 0.0),
            y=max(values["y"] * Sy, 0.0),
        )

    def solve(self, anchor: DesignPoint, init: DesignPoint | None = None, options: SolverOptions | None = None, warm: bool = False):
        """One subproblem solve; returns (DesignPoint | None, ConicSolution, meta).

        Points from budget-exhausted solves are still returned when interior
        (feasible but without an optimality certificate); the monotone SCA
        guard decides whether they are worth keeping.
        """
        pb, meta = self.build(anchor)
        init_point = self.pack_point(meta, init) if init is not None else None
        sol = conic.solve(pb, options=options, init=init_point, warm=warm)
        self.newton_steps += sol.iterations
        if sol.status == "optimal" or (sol.status == "max-iterations" and np.isfinite(sol.objective)):
            return self.unpack_point(meta, sol.values), sol, meta
        return None, sol, meta

    def find_feasible_x(self, anchor_X: np.ndarray):
        """First-stage feasibility problem in (X, vp) only; None if infeasible.

        The per-EAP WIT bounds are included to keep vp bounded; vp = 0 is
        always admissible for them, so branch feasibility is unchanged.
        """
        cfg = self.cfg
        pb = ConicProblem()
        meta = {"SX": cfg.P0, "SQ": 1.0, "St": 1.0, "Sy": 1.0, "nl": {}}
        Xv = pb.add_psd_matrix("X", self.dX) if self.dX else None
        vv = pb.add_complex_vector("vp", cfg.sum_n)
        self._add_power_cost_wit(pb, meta, Xv, None, None, vv)
        self._add_first_hop(pb, meta, Xv, None, anchor_X, with_t=False)
        init = {"X": self.to_internal_X(anchor_X) / meta["SX"]} if Xv is not None else None
        sol = conic.solve(pb, init=init)
        self.newton_steps += sol.iterations
        if sol.status != "optimal":
            return None
        if self.dX == 0:
            return np.zeros((cfg.sum_nT, cfg.sum_nT), dtype=complex)
        return self.to_physical_X(sol.values["X"] * meta["SX"])

    def find_feasible_full(self, anchor: DesignPoint):
        """Second-stage feasibility over the full variable set; None if infeasible."""
        pb, meta = self.build(anchor)
        pb.obj_logdet = []
        pb.obj_affine = ScalExpr()
        sol = conic.solve(pb, init=self.pack_point(meta, anchor))
        self.newton_steps += sol.iterations
        if sol.status != "optimal":
            return None
        return self.unpack_point(meta, sol.values)

    # -- KKT residual of the un-linearized branch problem -----------------------

    def _nonlinear_coeffs(self, pb, meta, tag: str, dp: DesignPoint, point: dict):
        """Exact constraint gradient coefficients replacing the surrogate parts."""
        cfg = self.cfg
        Xv, Qv, wv, vv, tv, yv = meta["vars"]
        SX, St, Sy = meta["SX"], meta["St"], meta["Sy"]
        fac = self.first_hop_factor()
        if tag in ("g_corner", "g_affine", "g_t"):
            g_now, grad_now = self.first_hop_g(dp.X)
            if tag == "g_corner":
                # corner entry of the fh LMI: fac*g(X)/s_scale
                s_scale = meta["fh_scale"]
                coeffs = pb.trace_expr(Xv, SX * (fac / s_scale) * grad_now).coeffs if Xv is not None else {}
                return coeffs, fac * g_now / s_scale
            if tag == "g_affine":
                s_scale = meta["fh_scale"]
                coeffs = pb.trace_expr(Xv, -SX * (fac / s_scale) * grad_now).coeffs if Xv is not None else {}
                return coeffs, self.g2_zf / s_scale - fac * g_now / s_scale
            # g_t: t - fac*Pp*g(X), scaled by 1/St
            coeffs = pb.trace_expr(Xv, -SX * (fac * cfg.Pp / St) * grad_now).coeffs if Xv is not None else {}
            coeffs = dict(coeffs)
            coeffs[tv.offset] = 1.0
            return coeffs, point["t"] - fac * cfg.Pp * g_now / St
        if tag == "sqrt_ty":
            t_phys = max(St * point["t"], 1e-300)
            y_phys = max(Sy * point["y"], 1e-300)
            r_bar = math.sqrt(meta["t_bar"] * meta["y_bar"])
            con = next(c for c in pb.constraints if c.label == "align")
            coeffs = dict(con.expr.coeffs)
            coeffs[tv.offset] = 0.5 * math.sqrt(y_phys / t_phys) * St / r_bar
            coeffs[yv.offset] = 0.5 * math.sqrt(t_phys / y_phys) * Sy / r_bar
            lin_val = con.expr.value(pb.pack(point))
            lin_sqrt = sqrt_ty_upper(t_phys, y_phys, meta["t_bar"], meta["y_bar"])
            true_val = lin_val + (math.sqrt(t_phys * y_phys) - lin_sqrt) / r_bar
            return coeffs, true_val
        raise ValueError(tag)

    def kkt_unlinearized(self, dp: DesignPoint, options: SolverOptions | None = None) -> float:
        """Stationarity/complementarity residual of the branch problem with the
        true g1/g2 and sqrt(t*y) (not their surrogates) at a converged point.

        One subproblem anchored at dp supplies interior dual estimates; the
        Lagrangian gradient is then assembled with the exact constraint
        gradients in the solver's normalized variable space.
        """
        cfg, ch = self.cfg, self.ch
        anchor = replace(dp, t=max(dp.t, 0.0), y=max(dp.y, cfg.sigma_pr2))
        pb, meta = self.build(anchor)
        sol = conic.solve(pb, init=self.pack_point(meta, anchor), warm=True, options=options)
        self.newton_steps += sol.iterations
        if sol.status != "optimal":
            sol = conic.solve(pb, options=SolverOptions(max_newton=600))
            self.newton_steps += sol.iterations
        if sol.status != "optimal":
            return math.inf
        # residuals are assembled at the anchor itself, where the surrogate
        # gradients coincide with the true ones; the anchored solve supplies
        # the interior dual estimates
        point = self.pack_point(meta, anchor)
        x = pb.pack(point)
        dp_cert = anchor
        Xv, Qv, wv, vv, tv, yv = meta["vars"]
        SQ, St = meta["SQ"], meta["St"]
        n = pb.n_params

        # gradient of the minimized objective -F(x)
        r = np.zeros(n)
        if cfg.c1 > 0.0:
            r[tv.offset] -= 0.5 * cfg.c1 / math.log(2.0) * St / (1.0 + St * point["t"])
        if cfg.c2 > 0.0 and self.include_st_tx:
            G = math.sqrt(SQ / cfg.sigma_sr2) * ch.G_ss
            Sdet = np.eye(cfg.M) + G @ point["Qs"] @ G.conj().T
            grad_obj = G.conj().T @ np.linalg.solve(Sdet, G)
            for p, c in pb.trace_expr(Qv, 0.5 * cfg.c2 / math.log(2.0) * grad_obj).coeffs.items():
                r[p] -= c

        comp = 0.0
        for con in pb.constraints:
            dual = sol.duals[con.label]
            tag = meta["nl"].get(con.label)
            if con.kind in ("lmi", "psd"):
                Z = dual if isinstance(dual, np.ndarray) else np.array([[dual]])
                Smat = con.expr.value(x)
                coeffs = con.expr.coeffs
                if tag == "g_corner":
                    corner_coeffs, corner_val = self._nonlinear_coeffs(pb, meta, tag, dp_cert, point)
                    coeffs = {}
                    for p, m in con.expr.coeffs.items():
                        m = m.copy()
                        m[-1, -1] = 0.0
                        coeffs[p] = m
                    for p, c in corner_coeffs.items():
                        m = coeffs.get(p)
                        if m is None:
                            m = np.zeros_like(con.expr.const)
                        else:
                            m = m.copy()
                        m[-1, -1] += c
                        coeffs[p] = m
                    Smat = Smat.copy()
                    Smat[-1, -1] = corner_val
                for p, m in coeffs.items():
                    r[p] -= float(np.real(np.trace(Z @ m)))
                comp = max(comp, abs(float(np.real(np.trace(Z @ Smat)))))
            else:
                lam = float(dual)
                if tag in ("g_affine", "g_t", "sqrt_ty"):
                    coeffs, cval = self._nonlinear_coeffs(pb, meta, tag, dp_cert, point)
                else:
                    coeffs, cval = con.expr.coeffs, con.expr.value(x)
                for p, c in coeffs.items():
                    r[p] += lam * c
                comp = max(comp, abs(lam * cval))
        # the metric Hessian needs an interior point; the solver's iterate
        # sits next to the anchor and is strictly inside every cone
        stat = conic.newton_metric_norm(pb, sol.values, sol.t_final, r)
        return float(max(stat, comp))


# ---------------------------------------------------------------------------
# Feasibility initialization and the SCA loop


def _seed_X(cfg: SystemConfig, zf_L: np.ndarray | None) -> np.ndarray:
    """Half-budget seed: scaled identity per EAP transmit block (projected
    under ZF so every per-EAP power sits at half budget or below)."""
    if zf_L is None:
        blocks = [0.5 * cfg.P0 / nt * np.eye(nt) for nt in cfg.nT]
        X = np.zeros((cfg.sum_nT, cfg.sum_nT), dtype=complex)
        for sl, B in zip(tx_slices(cfg), blocks):
            X[sl, sl] = B
        return X
    d = zf_L.shape[1]
    if d == 0:
        return np.zeros((cfg.sum_nT, cfg.sum_nT), dtype=complex)
    occupancy = []
    for sl in tx_slices(cfg):
        Ek = np.zeros((cfg.sum_nT, cfg.sum_nT))
        Ek[sl, sl] = np.eye(sl.stop - sl.start)
        occupancy.append(float(np.real(np.trace(zf_L.conj().T @ Ek @ zf_L))))
    beta = 0.5 * cfg.P0 / max(max(occupancy), 1e-300)
    return zf_L @ (beta * np.eye(d)) @ zf_L.conj().T


def init_feasible(
    branch: str,
    ch: ChannelSet,
    cfg: SystemConfig,
    rho_bar: float,
    cost_budget: float,
    zf_L: np.ndarray | None = None,
):
    """Two-stage feasibility initialization of one branch at fixed rho.

    Returns (DesignPoint, BranchSubproblem) on success; ("stage1", None) when
    the X-feasibility problem is infeasible (the branch is dead for all larger
    rho); ("stage2", None) when only the full problem is infeasible at this rho.
    """
    sub = BranchSubproblem(branch, ch, cfg, rho_bar, cost_budget, zf_L)
    # the half-budget seed's tangent plane can miss branch regions living near
    # X = 0 where the first-hop forms are steep, so a seed whose interference
    # sits below both noise floors is probed before declaring the branch
    # uninitializable
    seeds = [_seed_X(cfg, zf_L)]
    lam_H = float(np.linalg.norm(ch.H_eap_st, 2) ** 2)
    lam_Ht = float(np.linalg.norm(ch.H_tr_err, 2) ** 2)
    quiet = 0.1 * min(
        cfg.sigma_nc2 / max(lam_H, 1e-300),
        cfg.sigma_eap2 / max(cfg.theta2 * lam_Ht, 1e-300),
    )
    s = min(quiet, 0.5 * cfg.P0 / max(cfg.nT))
    if sub.dX:
        seeds.append(sub.to_physical_X(s * np.eye(sub.dX)))
    X1 = None
    for seed in seeds:
        X1 = sub.find_feasible_x(seed)
        if X1 is not None:
            break
    if X1 is None:
        return "stage1", None, sub
    y_bar = cfg.sigma_pr2
    g_val, _ = sub.first_hop_g(X1)
    # the auxiliary anchor caps the target SINR by the best aligned beams;
    # the EAP part must additionally respect what the cost budget leaves for
    # WIT, otherwise the full feasibility stage is unsolvable whenever the
    # unconstrained beam gain overshoots the budget
    wit_part = math.sqrt(cfg.P0) * sum(np.linalg.norm(ch.g_eap_p[sl]) for sl in ant_slices(cfg))
    wp_part = gamma_star(ch, cfg, rho_bar, X1) - wit_part
    H = ch.H_eap_st
    wpt_cost = cfg.c3 * cfg.eta * rho_bar * float(np.real(np.trace(H @ X1 @ H.conj().T)))
    if cfg.c4 > 0.0:
        wit_part = min(wit_part, math.sqrt(max(cost_budget - wpt_cost, 0.0) / cfg.c4))
    gam = wp_part + wit_part
    t_bar = max(0.0, min(sub.first_hop_factor() * cfg.Pp * g_val, gam**2 / y_bar))
    anchor = DesignPoint(
        X=X1,
        Qs=np.zeros((cfg.N, cfg.N), dtype=complex),
        wp=np.zeros(cfg.N, dtype=complex),
        vp=np.zeros(cfg.sum_n, dtype=complex),
        rho=rho_bar,
        t=t_bar,
        y=y_bar,
    )
    dp0 = sub.find_feasible_full(anchor)
    if dp0 is None:
        return "stage2", None, sub
    return "ok", dp0, sub


def init_feasible_p11(ch: ChannelSet, cfg: SystemConfig, rho_bar: float, cost_budget: float | None = None):
    """Feasibility initialization of the ST-first-hop branch (anchor + point)."""
    if cost_budget is None:
        cost_budget = resolve_cost_budget(ch, cfg)
    status, dp0, sub = init_feasible(BRANCH_ST, ch, cfg, rho_bar, cost_budget)
    if status != "ok":
        return None
    return dp0, sub


def sca_loop(
    sub: BranchSubproblem,
    dp0: DesignPoint,
    settings: ScaSettings | None = None,
) -> tuple[ScaTrace, DesignPoint]:
    """Monotone SCA iteration from a feasible starting point.

    Each subproblem is solved at the previous iterate as anchor; if the solver
    returns a point no better than the anchor (both are feasible), the anchor
    is kept, which enforces a non-decreasing objective trace.
    """
    st = settings or ScaSettings()
    cfg = sub.cfg
    dp = replace(dp0, y=max(dp0.y, cfg.sigma_pr2))
    obj = sub.anchor_objective(dp)
    trace = ScaTrace()
    steps0 = sub.newton_steps
    inner_opts = SolverOptions(gap_tol=st.inner_gap)
    warm = False
    for it in range(st.max_iters):
        dp_new, sol, _meta = sub.solve(dp, init=dp, warm=warm, options=inner_opts)
        if dp_new is None:
            trace.objectives.append(obj)
            trace.anchors.append(ScaAnchor(dp.X, dp.t, dp.y))
            break
        obj_new = sub.anchor_objective(dp_new)
        if obj_new < obj:
            dp_new, obj_new = dp, obj
        trace.objectives.append(obj_new)
        trace.anchors.append(ScaAnchor(dp_new.X, dp_new.t, dp_new.y))
        rel = abs(obj_new - obj) / max(abs(obj), 1e-8)
        dp = replace(dp_new, y=max(dp_new.y, cfg.sigma_pr2))
        obj = obj_new
        # high-t warm starts only pay off once the anchors settle
        warm = rel < 0.01
        if rel < st.rel_tol:
            trace.converged = True
            break
    trace.newton_steps = sub.newton_steps - steps0
    return trace, dp


def _branch_holds(sub: BranchSubproblem, dp: DesignPoint, tol: float = 1e-9) -> bool:
    g_st = (1.0 - dp.rho) * g1(sub.ch, dp.X, dp.rho, sub.cfg) if dp.rho < 1.0 else 0.0
    # under ZF the nulled-LI value is exact and keeps the scheme free of theta2
    g_eap = sub.g2_zf if sub.zf else g2(sub.ch, dp.X, sub.cfg)
    scale = max(abs(g_st), abs(g_eap), 1e-300)
    if sub.branch == BRANCH_ST:
        return g_st >= g_eap - tol * scale
    return g_eap >= g_st - tol * scale


def certify_point(sub: BranchSubproblem, dp: DesignPoint, settings: ScaSettings | None = None):
    """Settle the SCA to a fixed point and report its un-linearized KKT residual.

    Extra anchored solves run until the subproblem objective stops moving (the
    plain loop's 1e-4 stop can leave drift).  When the anchored map then still
    sits away from stationarity -- the epigraph bound on the convex first-hop
    form makes the anchors crawl on some instances -- the point is handed to a
    smooth local NLP polish of the true branch problem and re-certified.
    Returns (refined point, kkt residual); the refined point never has a worse
    subproblem objective than the input.
    """
    st = settings or ScaSettings()
    cfg = sub.cfg
    obj = sub.anchor_objective(dp)
    settled = False
    inner_opts = SolverOptions(gap_tol=st.inner_gap)
    for _ in range(st.certify_iters):
        dp_new, sol, _meta = sub.solve(dp, init=dp, warm=True, options=inner_opts)
        if dp_new is None:
            break
        obj_new = sub.anchor_objective(dp_new)
        if obj_new < obj:
            settled = True
            break
        moved = abs(obj_new - obj) / max(abs(obj), 1e-8)
        dp, obj = replace(dp_new, y=max(dp_new.y, cfg.sigma_pr2)), obj_new
        if moved < st.certify_tol:
            settled = True
            break
    kkt = sub.kkt_unlinearized(dp)
    if kkt > 1e-6 or not settled:
        from .polish import polish_branch_point

        dp_pol = polish_branch_point(sub, dp)
        if dp_pol is not None:
            rep = evaluate(sub.ch, dp_pol, cfg, cost_budget=sub.C)
            if rep.feasible and _branch_holds(sub, dp_pol) and sub.anchor_objective(dp_pol) >= obj - 1e-12:
                dp_pol = replace(dp_pol, y=max(dp_pol.y, cfg.sigma_pr2))
                kkt_pol = sub.kkt_unlinearized(dp_pol)
                gate = 9e-6
                better_obj = sub.anchor_objective(dp_pol) > obj
                if (kkt_pol <= gate and (better_obj or kkt > gate)) or kkt_pol < kkt:
                    dp, kkt = dp_pol, kkt_pol
    return dp, kkt


# ---------------------------------------------------------------------------
# Outer sweep (the full iterative algorithm)


@dataclass
class Algorithm1Result:
    dp: DesignPoint
    report: RateReport
    objective: float
    rho: float
    branch: str
    trace: ScaTrace
    all_traces: list[tuple[float, str, ScaTrace]]
    sca_iterations: int
    newton_steps: int
    cost_budget: float


def _chain_anchor(sub: BranchSubproblem, prev_dp: DesignPoint):
    """Adapt the previous grid point's solution as this subproblem's anchor.

    Valid when the point stays feasible at the new rho and its first-hop
    comparison still selects this branch; the point then certifies stage-1
    feasibility by itself (the linearization is exact at its own anchor).
    """
    cfg, ch = sub.cfg, sub.ch
    from .rates import cost_spent, pr_sinr

    dp = replace(prev_dp, rho=sub.rho)
    # optima ride the cost boundary; a larger rho raises the energy share of
    # the cost, so shrink X (and then the ST transmit covariances against the
    # smaller harvest) back into the budget
    wit_cost = cfg.c4 * abs(ch.g_eap_p.conj() @ dp.vp) ** 2
    H = ch.H_eap_st
    wpt = cfg.c3 * cfg.eta * sub.rho * float(np.real(np.trace(H @ dp.X @ H.conj().T)))
    if wpt + wit_cost > sub.C:
        if wit_cost >= sub.C or wpt <= 0.0:
            return None
        dp = replace(dp, X=dp.X * ((sub.C - wit_cost) / wpt * (1.0 - 1e-9)))
    budget = cfg.eta * sub.rho * harvested_power(ch, dp.X, cfg)
    used = float(np.trace(dp.Qs).real + np.linalg.norm(dp.wp) ** 2)
    if used > budget:
        if budget <= 0.0:
            return None
        kappa = budget / used * (1.0 - 1e-9)
        dp = replace(dp, Qs=dp.Qs * kappa, wp=dp.wp * math.sqrt(kappa))
    if not _branch_holds(sub, dp, tol=0.0):
        return None
    rep = evaluate(ch, dp, cfg, cost_budget=sub.C)
    if not rep.feasible:
        return None
    g_val, _ = sub.first_hop_g(dp.X)
    t = max(min(sub.first_hop_factor() * cfg.Pp * g_val, pr_sinr(ch, dp, cfg)), 0.0)
    y = float(np.real(ch.g_sp.conj() @ dp.Qs @ ch.g_sp)) + cfg.sigma_pr2
    return replace(dp, t=t, y=y)


def _run_branch(branch, ch, cfg, rho, C, zf_L, settings, prev_dp=None):
    sub = BranchSubproblem(branch, ch, cfg, rho, C, zf_L)
    dp0 = _chain_anchor(sub, prev_dp) if prev_dp is not None else None
    chained = dp0 is not None
    if dp0 is None:
        status, dp0, sub = init_feasible(branch, ch, cfg, rho, C, zf_L)
        if status != "ok":
            return status, None, None, sub
    trace, dp = sca_loop(sub, dp0, settings)
    trace.chained = chained
    return "ok", trace, dp, sub


def algorithm1(
    ch: ChannelSet,
    cfg: SystemConfig,
    warm_starts: tuple[DesignPoint, ...] = (),
    settings: ScaSettings | None = None,
    zf_L: np.ndarray | None = None,
    cost_budget: float | None = None,
    report_fn=None,
) -> Algorithm1Result:
    """Branch split + SCA inner loops + increasing one-dimensional rho sweep.

    Once the ST branch's X-feasibility stage fails at some rho it is skipped
    for all larger rho (its feasible set only shrinks with rho); the EAP
    branch is attempted everywhere.  Warm starts (externally supplied feasible
    design points) seed extra SCA loops at their own rho; the best evaluated
    weighted sum-rate wins, ties resolving to the ST branch via sweep order.
    """
    settings = settings or ScaSettings()
    C = resolve_cost_budget(ch, cfg) if cost_budget is None else cost_budget
    if report_fn is None:
        report_fn = evaluate
    best = None  # (objective, rho, branch, dp, report, trace)
    all_traces: list[tuple[float, str, ScaTrace]] = []
    sca_iters = 0
    newton = 0
    st_dead = False
    prev: dict[str, DesignPoint] = {}
    for rho in rho_grid(cfg):
        for branch in (BRANCH_ST, BRANCH_EAP):
            if branch == BRANCH_ST and (st_dead or rho >= 1.0):
                continue
            status, trace, dp, sub = _run_branch(
                branch, ch, cfg, float(rho), C, zf_L, settings, prev.get(branch) if settings.chain else None
            )
            newton += sub.newton_steps
            if status == "stage1":
                if branch == BRANCH_ST:
                    st_dead = True
                continue
            if status != "ok":
                continue
            prev[branch] = dp
            report = report_fn(ch, dp, cfg, cost_budget=C)
            all_traces.append((float(rho), branch, trace))
            sca_iters += trace.iterations
            if best is None or report.weighted_sum > best[0]:
                best = (report.weighted_sum, float(rho), branch, dp, report, trace)
    for ws in warm_starts:
        ws = anchor_from_point(ch, cfg, ws)
        branch = branch_for_point(ch, cfg, ws.rho, ws.X)
        sub = BranchSubproblem(branch, ch, cfg, ws.rho, C, zf_L)
        trace, dp = sca_loop(sub, ws, settings)
        newton += sub.newton_steps
        sca_iters += trace.iterations
        all_traces.append((ws.rho, branch, trace))
        report = report_fn(ch, dp, cfg, cost_budget=C)
        if best is None or report.weighted_sum > best[0]:
            best = (report.weighted_sum, ws.rho, branch, dp, report, trace)
    if best is None:
        # no branch produced a point anywhere; report the all-zero design
        dp = DesignPoint.zeros(cfg)
        report = report_fn(ch, dp, cfg, cost_budget=C)
        return Algorithm1Result(dp, report, report.weighted_sum, 0.0, BRANCH_EAP, ScaTrace(), all_traces, sca_iters, newton, C)
    obj, rho, branch, dp, report, trace = best
    # settle the winner to a fixed point and certify its KKT residual
    sub = BranchSubproblem(branch, ch, cfg, rho, C, zf_L)
    dp_ref, kkt = certify_point(sub, dp, settings)
    newton += sub.newton_steps
    report_ref = report_fn(ch, dp_ref, cfg, cost_budget=C)
    if report_ref.weighted_sum >= obj:
        dp, report, obj = dp_ref, report_ref, report_ref.weighted_sum
    trace.final_kkt_residual = kkt
    return Algorithm1Result(dp, report, obj, rho, branch, trace, all_traces, sca_iters, newton, C)
