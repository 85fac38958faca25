"""Zero-forcing scheme: restrict the energy covariance to the orthogonal
complement of the effective loop-interference direction.

With X in the null space of h = H_tr_err^H h_p_eap, the EAPs' matched-filter
receive beam u2 ~ h_p_eap needs only local channel knowledge and attains the
interference-free SINR Pp*|h_p_eap|^2/sigma_eap2 exactly, so the whole design
never reads theta2 (except for the degenerate theta2 = 0 case, where nulling
is vacuous and the full space is kept).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rates import RateReport, DesignPoint, evaluate, pr_sinr, secondary_rate, st_receive_sinr
from .sca import Algorithm1Result, ScaSettings, algorithm1
from .system import ChannelSet, SystemConfig

__all__ = ["ZfBasis", "zf_basis", "zf_report", "algorithm2"]


@dataclass(frozen=True)
class ZfBasis:
    """Effective LI direction and an orthonormal basis of its complement."""

    h_tilde: np.ndarray  # (sum nT,)
    U_tilde: np.ndarray  # (sum nT, sum nT - 1); full space when h_tilde = 0

    def __post_init__(self):
        for name in ("h_tilde", "U_tilde"):
            arr = np.asarray(getattr(self, name), dtype=complex)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


def zf_basis(ch: ChannelSet) -> ZfBasis:
    """Orthonormal complement of the effective LI direction.

    Built by deterministic modified Gram-Schmidt of the standard basis against
    the normalized direction, so the basis is reproducible across runs.  A
    zero direction degenerates to the identity (full space).
    """
    h = ch.H_tr_err.conj().T @ ch.h_p_eap
    d = h.shape[0]
    nrm = np.linalg.norm(h)
    if nrm == 0.0:
        return ZfBasis(h, np.eye(d, dtype=complex))
    basis = [h / nrm]
    for i in range(d):
        v = np.zeros(d, dtype=complex)
        v[i] = 1.0
        for b in basis:
            v = v - (b.conj() @ v) * b
        n2 = np.linalg.norm(v)
        if n2 > 1e-10:
            basis.append(v / n2)
        if len(basis) == d:
            break
    U = np.column_stack(basis[1:]) if d > 1 else np.zeros((d, 0), dtype=complex)
    return ZfBasis(h, U)


def zf_report(ch: ChannelSet, dp: DesignPoint, cfg: SystemConfig, cost_budget: float | None = None) -> RateReport:
    """Rate report with the first hop of the EAPs taken at the nulled-LI
    value Pp*|h_p_eap|^2/sigma_eap2 (the beam the scheme actually uses).

    Mathematically equal to the report of the optimal receive beam for
    ZF-restricted covariances, but computed without touching theta2, which
    keeps the scheme's outputs bit-identical across LI levels.
    """
    base = evaluate(ch, dp, cfg, cost_budget=cost_budget)
    sinr_st = st_receive_sinr(ch, dp.X, dp.rho, cfg)
    sinr_eap = cfg.Pp * np.linalg.norm(ch.h_p_eap) ** 2 / cfg.sigma_eap2
    branch = "ST-first-hop" if sinr_st >= sinr_eap else "EAP-first-hop"
    r_pr = float(0.5 * np.log2(1.0 + min(max(sinr_st, sinr_eap), pr_sinr(ch, dp, cfg))))
    r_sr = secondary_rate(ch, dp.Qs, cfg)
    return RateReport(
        r_pr=r_pr,
        r_sr=r_sr,
        weighted_sum=cfg.c1 * r_pr + cfg.c2 * r_sr,
        branch=branch,
        harvested_power=base.harvested_power,
        cost_spent=base.cost_spent,
        feasible=base.feasible,
        violations=base.violations,
    )


def algorithm2(
    ch: ChannelSet,
    cfg: SystemConfig,
    warm_starts: tuple[DesignPoint, ...] = (),
    settings: ScaSettings | None = None,
    cost_budget: float | None = None,
) -> Algorithm1Result:
    """ZF-restricted variant of the full iterative algorithm.

    Same outer structure (branch split, SCA loops, rho sweep) with
    X = U_tilde Xt U_tilde^H substituted everywhere; the EAP receive SINR is
    the constant nulled-LI value, so in the EAP branch only the (t, y)
    anchors iterate.
    """
    if cfg.theta2 == 0.0:
        L = None  # nulling is vacuous; keep the full space
    else:
        L = zf_basis(ch).U_tilde
    return algorithm1(
        ch,
        cfg,
        warm_starts=warm_starts,
        settings=settings,
        zf_L=L,
        cost_budget=cost_budget,
        report_fn=zf_report,
    )
