"""Brute-force and numerical-differentiation oracles.

The grid search exhaustively sweeps scalarized instances (one EAP, one
antenna everywhere) of the full-duplex and half-duplex problems; power-type
variables are parameterized as fractions of their budgets so every grid point
automatically satisfies the power constraints, and only the relative phase
between the two beam inner products is swept (a common rotation never helps).
Rates are evaluated with vectorized copies of the closed forms and the
returned optimizer is cross-checked against the reference evaluator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .rates import DesignPoint, evaluate
from .system import ChannelSet, SystemConfig

__all__ = [
    "GridSpec",
    "GridResult",
    "grid_search",
    "finite_diff_grad",
    "hessian_form_check",
    "hermitian_directions",
]


@dataclass(frozen=True)
class GridSpec:
    """Steps per axis for the scalarized exhaustive search."""

    rho_steps: int = 21
    x_steps: int = 17  # energy covariance fraction of P0
    v_steps: int = 17  # EAP beam amplitude fraction of sqrt(P0)
    phase_steps: int = 17  # relative phase of the two beam inner products
    q_steps: int = 13  # secondary covariance fraction of the harvested budget
    w_steps: int = 13  # ST beam fraction of the remaining budget

    def axes_fd(self):
        return (
            np.linspace(0.0, 1.0, self.rho_steps),
            np.linspace(0.0, 1.0, self.x_steps),
            np.linspace(0.0, 1.0, self.v_steps),
            np.linspace(0.0, np.pi, self.phase_steps),
            np.linspace(0.0, 1.0, self.q_steps),
            np.linspace(0.0, 1.0, self.w_steps),
        )

    def total_points(self, scheme: str) -> int:
        if scheme == "fd":
            return self.rho_steps * self.x_steps * self.v_steps * self.phase_steps * self.q_steps * self.w_steps
        return self.rho_steps * self.x_steps * self.q_steps * self.w_steps

    def validate(self, scheme: str = "fd") -> list[str]:
        v = []
        for name in ("rho_steps", "x_steps", "v_steps", "phase_steps", "q_steps", "w_steps"):
            if getattr(self, name) < 8:
                v.append(f"{name} >= 8")
        if self.total_points(scheme) > 10**8:
            v.append("total grid size <= 1e8")
        return v


@dataclass
class GridResult:
    objective: float
    dp: DesignPoint | None
    feasible_points: int


def _scalars(ch: ChannelSet, cfg: SystemConfig):
    """Scalar channel magnitudes; g_eap_p stays a 2-vector (both antennas of
    the EAP transmit in the second slot) and enters through its norm."""
    if cfg.K != 1 or cfg.N != 1 or cfg.M != 1 or cfg.nT != (1,) or cfg.nR != (1,):
        raise ValueError("grid oracle requires a scalarized instance (K=1, all antennas 1)")
    return (
        complex(ch.h_p_st[0]),
        complex(ch.H_eap_st[0, 0]),
        complex(ch.h_p_eap[0]),
        complex(ch.H_tr_err[0, 0]),
        complex(ch.g_sp[0]),
        np.asarray(ch.g_eap_p),
        complex(ch.G_ss[0, 0]),
    )


def grid_search(
    ch: ChannelSet,
    cfg: SystemConfig,
    spec: GridSpec | None = None,
    scheme: str = "fd",
    cost_budget: float | None = None,
) -> GridResult:
    """Exhaustive search of the scalarized weighted sum-rate problem.

    scheme='fd' sweeps (rho, X, |vp|, phase, Qs, |wp|); scheme='hd' fixes
    vp=0, uses the ST-only relaying rate and the WPT-only cost.  Infeasible
    points (cost budget) are skipped; the best point is re-checked with the
    reference evaluator.
    """
    from .rates import resolve_cost_budget

    spec = spec or GridSpec()
    bad = spec.validate(scheme)
    if bad:
        raise ValueError("; ".join(bad))
    C = resolve_cost_budget(ch, cfg) if cost_budget is None else cost_budget
    h_pst, H_est, h_pe, H_tr, g_sp, g_e, G = _scalars(ch, cfg)
    a_h = abs(h_pst) ** 2
    a_H = abs(H_est) ** 2
    a_pe = abs(h_pe) ** 2
    a_tr = abs(H_tr) ** 2
    a_gsp = abs(g_sp) ** 2
    n_ge = float(np.linalg.norm(g_e))  # aligned |g_eap_p^H vp| = |g_e| * |vp|
    a_G = abs(G) ** 2

    rho_ax, x_ax, v_ax, ph_ax, q_ax, w_ax = spec.axes_fd()
    if scheme == "hd":
        v_ax = np.array([0.0])
        ph_ax = np.array([0.0])

    best_val = -np.inf
    best = None
    n_feas = 0
    # outer loops over (rho, x); the inner (v, phase, q, w) block is vectorized.
    # power-type axes are fractions of their remaining budgets so the grid
    # always reaches the power and cost boundaries exactly
    Vg, Pg, Qg, Wg = np.meshgrid(v_ax, ph_ax, q_ax, w_ax, indexing="ij")
    for rho in rho_ax:
        x_cost = cfg.c3 * cfg.eta * rho * a_H
        x_hi = min(cfg.P0, C / x_cost * (1.0 - 1e-12)) if x_cost > 0 else cfg.P0
        for xf in x_ax:
            x = xf * x_hi
            p_eh = a_H * x + cfg.Pp * a_h
            budget = cfg.eta * rho * p_eh
            sinr_st = (1.0 - rho) * cfg.Pp * a_h / ((1.0 - rho) * (a_H * x + cfg.sigma_na2) + cfg.sigma_nc2)
            sinr_eap = cfg.Pp * a_pe / (cfg.theta2 * a_tr * x + cfg.sigma_eap2)
            cost_left = max(C - cfg.c3 * cfg.eta * rho * a_H * x, 0.0)
            v_hi = min(math.sqrt(cfg.P0), math.sqrt(cost_left / cfg.c4) / n_ge * (1.0 - 1e-12) if cfg.c4 > 0 and n_ge > 0 else np.inf)
            v_amp = Vg * v_hi
            q = Qg * budget
            w_amp = np.sqrt(Wg * np.maximum(budget - q, 0.0))
            beam = abs(g_sp) * w_amp + n_ge * v_amp * np.exp(1j * Pg)
            num = np.abs(beam) ** 2
            den = a_gsp * q + cfg.sigma_pr2
            sinr_pr = num / den
            if scheme == "fd":
                first = max(sinr_st, sinr_eap)
                r_pr = 0.5 * np.log2(1.0 + np.minimum(first, sinr_pr))
            else:
                r_pr = 0.5 * np.log2(1.0 + np.minimum(sinr_st, sinr_pr))
            r_sr = 0.5 * np.log2(1.0 + a_G * q / cfg.sigma_sr2)
            val = cfg.c1 * r_pr + cfg.c2 * r_sr
            n_feas += val.size
            i = int(np.argmax(val))
            if val.flat[i] > best_val:
                best_val = float(val.flat[i])
                idx = np.unravel_index(i, val.shape)
                best = (float(rho), x, float(v_amp[idx]), float(Pg[idx]), float(q.flat[i]), float(w_amp[idx]))
    if best is None:
        return GridResult(-np.inf, None, 0)

    rho, x, v_amp, phase, q, w_amp = best
    # reconstruct complex beams: align the ST term with g_sp and offset the
    # EAP term by the swept relative phase
    wp = np.array([w_amp * g_sp / abs(g_sp) if abs(g_sp) > 0 else w_amp], dtype=complex)
    if n_ge > 0:
        vp = v_amp * np.exp(1j * phase) * g_e / n_ge
    else:
        vp = np.zeros_like(g_e)
        vp[0] = v_amp
    dp = DesignPoint(
        X=np.array([[x]], dtype=complex),
        Qs=np.array([[q]], dtype=complex),
        wp=wp,
        vp=vp,
        rho=rho,
        t=0.0,
        y=a_gsp * q + cfg.sigma_pr2,
    )
    rep = evaluate(ch, dp, cfg, cost_budget=C)
    if scheme == "fd":
        check = rep.weighted_sum
    else:
        from .benchmarks import hd_report

        check = hd_report(ch, dp, cfg, cost_budget=C).weighted_sum
    if not rep.feasible:
        raise AssertionError("oracle produced an infeasible argmax")
    if abs(check - best_val) > 1e-9 * max(1.0, abs(best_val)):
        raise AssertionError(f"oracle/evaluator mismatch: {check} vs {best_val}")
    return GridResult(best_val, dp, n_feas)


def hermitian_directions(dim: int):
    """The canonical Hermitian basis directions of a dim x dim matrix space."""
    out = []
    for i in range(dim):
        F = np.zeros((dim, dim), dtype=complex)
        F[i, i] = 1.0
        out.append(F)
    for i in range(dim):
        for j in range(i + 1, dim):
            F = np.zeros((dim, dim), dtype=complex)
            F[i, j] = 1.0
            F[j, i] = 1.0
            out.append(F)
            F = np.zeros((dim, dim), dtype=complex)
            F[i, j] = 1.0j
            F[j, i] = -1.0j
            out.append(F)
    return out


def finite_diff_grad(f, X: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Central-difference gradient matrix of a scalar function of a Hermitian
    matrix, in the convention df = Re tr(grad dX)."""
    dim = X.shape[0]
    G = np.zeros((dim, dim), dtype=complex)
    for i in range(dim):
        F = np.zeros((dim, dim), dtype=complex)
        F[i, i] = 1.0
        d = (f(X + step * F) - f(X - step * F)) / (2.0 * step)
        G[i, i] = d
    for i in range(dim):
        for j in range(i + 1, dim):
            F = np.zeros((dim, dim), dtype=complex)
            F[i, j] = 1.0
            F[j, i] = 1.0
            d_re = (f(X + step * F) - f(X - step * F)) / (2.0 * step)
            F = np.zeros((dim, dim), dtype=complex)
            F[i, j] = 1.0j
            F[j, i] = -1.0j
            d_im = (f(X + step * F) - f(X - step * F)) / (2.0 * step)
            G[i, j] = 0.5 * (d_re + 1j * d_im)
            G[j, i] = 0.5 * (d_re - 1j * d_im)
    return G


def hessian_form_check(f, X: np.ndarray, directions, step: float = 1e-4) -> float:
    """Minimum second-difference quadratic form of f at X along directions."""
    worst = np.inf
    f0 = f(X)
    for D in directions:
        nrm = np.linalg.norm(D)
        if nrm == 0.0:
            worst = min(worst, 0.0)
            continue
        Dn = D / nrm
        val = (f(X + step * Dn) - 2.0 * f0 + f(X - step * Dn)) / step**2
        worst = min(worst, float(val))
    return worst
