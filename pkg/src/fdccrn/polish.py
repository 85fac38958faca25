"""Local smooth-NLP polish of a converged SCA point.

The anchored convexification can stall sublinearly when the epigraph bound
t <= Pp * g(X) is active: g is convex in X, so each tangent under-estimates
the achievable first hop and the anchors crawl along the feasible boundary.
This module finishes the job with a sequential quadratic step on the true
(smooth, un-linearized) branch problem, using PSD-free factorizations
X = F F^H and Qs = G G^H so the only remaining constraints are smooth
inequalities.  The result is monotone-guarded by the caller.
"""

from __future__ import annotations

import math
from dataclasses import replace

import numpy as np
from scipy.optimize import minimize

from .rates import DesignPoint, g1, g2
from .sca import BRANCH_ST, grad_g1, grad_g2

__all__ = ["polish_branch_point"]


class _Layout:
    """Flat real vector <-> (F, G, w, v, t) in solver-normalized units."""

    def __init__(self, dX: int, N: int, n_v: int, with_st_tx: bool):
        self.dX = dX
        self.N = N
        self.n_v = n_v
        self.with_st_tx = with_st_tx
        o = 0
        self.sl_F = slice(o, o + 2 * dX * dX)
        o += 2 * dX * dX
        if with_st_tx:
            self.sl_G = slice(o, o + 2 * N * N)
            o += 2 * N * N
            self.sl_w = slice(o, o + 2 * N)
            o += 2 * N
        else:
            self.sl_G = self.sl_w = None
        self.sl_v = slice(o, o + 2 * n_v)
        o += 2 * n_v
        self.i_t = o
        self.size = o + 1

    def unpack(self, z: np.ndarray):
        F = z[self.sl_F][0::2].reshape(self.dX, self.dX) + 1j * z[self.sl_F][1::2].reshape(self.dX, self.dX) if self.dX else np.zeros((0, 0), complex)
        if self.with_st_tx:
            G = z[self.sl_G][0::2].reshape(self.N, self.N) + 1j * z[self.sl_G][1::2].reshape(self.N, self.N)
            w = z[self.sl_w][0::2] + 1j * z[self.sl_w][1::2]
        else:
            G = np.zeros((self.N, self.N), complex)
            w = np.zeros(self.N, complex)
        v = z[self.sl_v][0::2] + 1j * z[self.sl_v][1::2]
        return F, G, w, v, float(z[self.i_t])

    @staticmethod
    def _cpack(dst, sl, M):
        dst[sl][0::2] = np.real(M).ravel()
        dst[sl][1::2] = np.imag(M).ravel()

    def pack(self, F, G, w, v, t) -> np.ndarray:
        z = np.zeros(self.size)
        if self.dX:
            self._cpack(z, self.sl_F, F)
        if self.with_st_tx:
            self._cpack(z, self.sl_G, G)
            self._cpack(z, self.sl_w, w)
        self._cpack(z, self.sl_v, v)
        z[self.i_t] = t
        return z

    def grad(self, dF=None, dG=None, dw=None, dv=None, dt=0.0) -> np.ndarray:
        """Real gradient from complex matrix/vector gradients (d/dRe + i d/dIm)."""
        g = np.zeros(self.size)
        if dF is not None and self.dX:
            self._cpack(g, self.sl_F, dF)
        if self.with_st_tx and dG is not None:
            self._cpack(g, self.sl_G, dG)
        if self.with_st_tx and dw is not None:
            self._cpack(g, self.sl_w, dw)
        if dv is not None:
            self._cpack(g, self.sl_v, dv)
        g[self.i_t] = dt
        return g


def _factor(M: np.ndarray) -> np.ndarray:
    """Eigen square root: M = F F^H for Hermitian PSD M."""
    if M.shape[0] == 0:
        return M
    w, V = np.linalg.eigh(0.5 * (M + M.conj().T))
    w = np.maximum(w, 0.0)
    return V * np.sqrt(w)


def polish_branch_point(sub, dp: DesignPoint, max_iter: int = 300):
    """Refine a design point to a KKT point of the true branch problem.

    sub is the BranchSubproblem describing the branch, rho and budgets; the
    returned point is in physical units (None when the NLP step fails or ends
    infeasible).
    """
    cfg, ch = sub.cfg, sub.ch
    rho = sub.rho
    SX, SQ, St, Sy, _ = sub._scales(dp)
    lay = _Layout(sub.dX, cfg.N, cfg.sum_n, sub.include_st_tx)
    fac = sub.first_hop_factor()

    L = sub.L
    g_sp_s = math.sqrt(SQ) * ch.g_sp if sub.include_st_tx else np.zeros(cfg.N, complex)
    g_e_s = math.sqrt(cfg.P0) * ch.g_eap_p
    Gc = math.sqrt(SQ / cfg.sigma_sr2) * ch.G_ss if sub.include_st_tx else None
    M_eh = sub.M_eh
    from .system import ant_slices

    v_slices = list(ant_slices(cfg))

    def phys_X(F):
        if sub.dX == 0:
            return np.zeros((cfg.sum_nT, cfg.sum_nT), complex)
        Xt = F @ F.conj().T
        return SX * (L @ Xt @ L.conj().T)

    def fh_g(F):
        """Branch first-hop form and its factor-space gradient at X(F)."""
        X = phys_X(F)
        if sub.branch == BRANCH_ST:
            val = g1(ch, X, rho, cfg)
            grad = grad_g1(ch, X, rho, cfg)
        elif sub.zf:
            return sub.g2_zf, np.zeros_like(F)
        else:
            val = g2(ch, X, cfg)
            grad = grad_g2(ch, X, cfg)
        Gint = L.conj().T @ grad @ L
        return val, 2.0 * SX * (Gint @ F)

    def other_g(F):
        """The competing first-hop form (for the branch-dominance constraint)."""
        X = phys_X(F)
        if sub.branch == BRANCH_ST:
            if sub.zf:
                return sub.g2_zf, np.zeros_like(F)
            val = g2(ch, X, cfg)
            grad = grad_g2(ch, X, cfg)
        else:
            val = g1(ch, X, rho, cfg)
            grad = grad_g1(ch, X, rho, cfg)
        Gint = L.conj().T @ grad @ L
        return val, 2.0 * SX * (Gint @ F)

    ln2 = math.log(2.0)

    def objective(z):
        F, G, w, v, t = lay.unpack(z)
        val = 0.5 * cfg.c1 / ln2 * math.log1p(max(St * t, -0.999999))
        dt = 0.5 * cfg.c1 / ln2 * St / (1.0 + St * t)
        dG = None
        if sub.include_st_tx and cfg.c2 > 0.0:
            Q = G @ G.conj().T
            Sdet = np.eye(cfg.M) + Gc @ Q @ Gc.conj().T
            sign, logdet = np.linalg.slogdet(Sdet)
            val += 0.5 * cfg.c2 / ln2 * logdet
            Gam = Gc.conj().T @ np.linalg.solve(Sdet, Gc)
            dG = 0.5 * cfg.c2 / ln2 * 2.0 * (Gam @ G)
        return -val, -lay.grad(dG=dG, dt=dt)

    cons = []

    def add(fun):
        cons.append({"type": "ineq", "fun": lambda z, f=fun: f(z)[0], "jac": lambda z, f=fun: f(z)[1]})

    for k, sl in enumerate(v_slices):
        def wit_k(z, sl=sl):
            _F, _G, _w, v, _t = lay.unpack(z)
            dv = np.zeros(cfg.sum_n, complex)
            dv[sl] = -2.0 * v[sl]
            return 1.0 - float(np.linalg.norm(v[sl]) ** 2), lay.grad(dv=dv)
        add(wit_k)

    if sub.dX:
        for k, Mk in enumerate(sub.Ek_eff):
            def wpt_k(z, Mk=Mk):
                F, _G, _w, _v, _t = lay.unpack(z)
                Xt = F @ F.conj().T
                return 1.0 - float(np.real(np.trace(Mk @ Xt))), lay.grad(dF=-2.0 * (Mk @ F))
            add(wpt_k)

    if sub.include_st_tx:
        def power(z):
            F, G, w, v, _t = lay.unpack(z)
            harv = cfg.Pp * np.linalg.norm(ch.h_p_st) ** 2
            dF = None
            if sub.dX:
                Xt = F @ F.conj().T
                harv += SX * float(np.real(np.trace(M_eh @ Xt)))
                dF = cfg.eta * rho * SX / SQ * 2.0 * (M_eh @ F)
            val = cfg.eta * rho * harv / SQ - float(np.real(np.trace(G @ G.conj().T))) - float(np.linalg.norm(w) ** 2)
            return val, lay.grad(dF=dF, dG=-2.0 * G, dw=-2.0 * w)
        add(power)

    def cost(z):
        F, _G, _w, v, _t = lay.unpack(z)
        beta = complex(ch.g_eap_p.conj() @ v)
        val = 1.0 - cfg.c4 * cfg.P0 * abs(beta) ** 2 / sub.C
        dv = -cfg.c4 * cfg.P0 / sub.C * 2.0 * beta * ch.g_eap_p
        dF = None
        if sub.dX:
            Xt = F @ F.conj().T
            val -= cfg.c3 * cfg.eta * rho * SX * float(np.real(np.trace(M_eh @ Xt))) / sub.C
            dF = -cfg.c3 * cfg.eta * rho * SX / sub.C * 2.0 * (M_eh @ F)
        return val, lay.grad(dF=dF, dv=dv)
    add(cost)

    s_cmp = max(abs(fac * fh_g(_factor(sub.to_internal_X(dp.X) / SX))[0]), 1e-300)

    def branch_cmp(z):
        F, _G, _w, _v, _t = lay.unpack(z)
        mine, dmine = fh_g(F)
        other, dother = other_g(F)
        if sub.branch == BRANCH_ST:
            val = (fac * mine - other) / s_cmp
            dF = (fac * dmine - dother) / s_cmp
        else:
            val = (mine - (1.0 - rho) * other) / s_cmp
            dF = (dmine - (1.0 - rho) * dother) / s_cmp
        return val, lay.grad(dF=dF if sub.dX else None)
    add(branch_cmp)

    def fh_t(z):
        F, _G, _w, _v, t = lay.unpack(z)
        mine, dmine = fh_g(F)
        val = (fac * cfg.Pp * mine - St * t) / St
        return val, lay.grad(dF=(fac * cfg.Pp / St) * dmine if sub.dX else None, dt=-1.0)
    add(fh_t)

    def pr_sinr_con(z):
        F, G, w, v, t = lay.unpack(z)
        beta = complex(g_sp_s.conj() @ w + g_e_s.conj() @ v)
        denom = cfg.sigma_pr2
        dG = None
        if sub.include_st_tx:
            gq = G.conj().T @ ch.g_sp
            denom += SQ * float(np.linalg.norm(gq) ** 2)
        scale = St * Sy
        val = (abs(beta) ** 2 - St * t * denom) / scale
        dw = 2.0 * beta * g_sp_s / scale if sub.include_st_tx else None
        dv = 2.0 * beta * g_e_s / scale
        if sub.include_st_tx:
            dG = -St * t * SQ * 2.0 * np.outer(ch.g_sp, gq.conj()) / scale
        return val, lay.grad(dG=dG, dw=dw, dv=dv, dt=-St * denom / scale)
    add(pr_sinr_con)

    Xt0 = sub.to_internal_X(dp.X) / SX
    z0 = lay.pack(_factor(Xt0), _factor(dp.Qs / SQ) if sub.include_st_tx else None,
                  dp.wp / math.sqrt(SQ) if sub.include_st_tx else None,
                  dp.vp / math.sqrt(cfg.P0), dp.t / St)

    bounds = [(None, None)] * lay.size
    bounds[lay.i_t] = (0.0, None)
    try:
        res = minimize(
            objective,
            z0,
            jac=True,
            method="SLSQP",
            bounds=bounds,
            constraints=cons,
            options={"maxiter": max_iter, "ftol": 1e-12},
        )
    except (ValueError, np.linalg.LinAlgError):
        return None
    if not np.all(np.isfinite(res.x)):
        return None
    F, G, w, v, t = lay.unpack(res.x)
    X = phys_X(F)
    Qs = SQ * (G @ G.conj().T) if sub.include_st_tx else np.zeros((cfg.N, cfg.N), complex)
    wp = math.sqrt(SQ) * w if sub.include_st_tx else np.zeros(cfg.N, complex)
    vp = math.sqrt(cfg.P0) * v
    y = float(np.real(ch.g_sp.conj() @ Qs @ ch.g_sp)) + cfg.sigma_pr2
    return replace(dp, X=X, Qs=Qs, wp=wp, vp=vp, t=max(St * t, 0.0), y=y)
