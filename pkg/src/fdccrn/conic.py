"""Barrier solver for small conic programs with log-det objectives and LMIs.

Problem family: maximize  sum_j w_j * log2 det(S_j(x)) + c^T x  over real
scalars and complex Hermitian matrix variables, subject to LMIs
(affine Hermitian-valued maps >= 0), affine inequalities <= 0, PSD cones on
matrix variables and scalar bounds.

All complex Hermitian data is pushed through the standard 2d x 2d
real-symmetric embedding so a single real path-following barrier method
(damped Newton steps, backtracking line search, barrier parameter grown by a
fixed factor per stage) serves every problem.  Infeasibility is decided by a
phase-I slack minimization.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

LN2 = math.log(2.0)

__all__ = [
    "ScalExpr",
    "VecExpr",
    "MatExpr",
    "MatrixVar",
    "ScalarVar",
    "ComplexVecVar",
    "ConicProblem",
    "ConicSolution",
    "ConstraintResidual",
    "SolverOptions",
    "real_embedding",
    "hermitian_basis",
    "solve",
]


def real_embedding(M: np.ndarray) -> np.ndarray:
    """2d x 2d real-symmetric embedding [[Re M, -Im M], [Im M, Re M]].

    For Hermitian M the embedding is symmetric and carries each eigenvalue
    of M twice.
    """
    M = np.asarray(M, dtype=complex)
    return np.block([[M.real, -M.imag], [M.imag, M.real]])


# ---------------------------------------------------------------------------
# Affine expressions over the packed real parameter vector


class ScalExpr:
    """Real affine expression const + sum coeffs[p] * x[p]."""

    __slots__ = ("const", "coeffs")

    def __init__(self, const: float = 0.0, coeffs: dict[int, float] | None = None):
        self.const = float(const)
        self.coeffs = dict(coeffs or {})

    def __add__(self, other):
        if isinstance(other, (int, float)):
            return ScalExpr(self.const + other, self.coeffs)
        out = dict(self.coeffs)
        for p, c in other.coeffs.items():
            out[p] = out.get(p, 0.0) + c
        return ScalExpr(self.const + other.const, out)

    __radd__ = __add__

    def __mul__(self, a: float):
        return ScalExpr(self.const * a, {p: c * a for p, c in self.coeffs.items()})

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        if isinstance(other, (int, float)):
            return self + (-other)
        return self + (other * -1.0)

    def __rsub__(self, other):
        return (self * -1.0) + other

    def value(self, x: np.ndarray) -> float:
        return self.const + sum(c * x[p] for p, c in self.coeffs.items())


class VecExpr:
    """Complex-vector-valued affine expression."""

    __slots__ = ("dim", "const", "coeffs")

    def __init__(self, dim: int, const: np.ndarray | None = None, coeffs: dict[int, np.ndarray] | None = None):
        self.dim = dim
        self.const = np.zeros(dim, dtype=complex) if const is None else np.asarray(const, dtype=complex)
        self.coeffs = dict(coeffs or {})

    def __add__(self, other: "VecExpr"):
        out = {p: v.copy() for p, v in self.coeffs.items()}
        for p, v in other.coeffs.items():
            out[p] = out.get(p, 0.0) + v
        return VecExpr(self.dim, self.const + other.const, out)

    def value(self, x: np.ndarray) -> np.ndarray:
        v = self.const.copy()
        for p, c in self.coeffs.items():
            v = v + c * x[p]
        return v


class MatExpr:
    """Hermitian-matrix-valued affine expression const + sum coeffs[p]*x[p]."""

    __slots__ = ("dim", "const", "coeffs")

    def __init__(self, dim: int, const: np.ndarray | None = None, coeffs: dict[int, np.ndarray] | None = None):
        self.dim = dim
        self.const = np.zeros((dim, dim), dtype=complex) if const is None else np.asarray(const, dtype=complex)
        self.coeffs = dict(coeffs or {})

    def __add__(self, other: "MatExpr"):
        if self.dim != other.dim:
            raise ValueError("dimension mismatch")
        out = {p: m.copy() for p, m in self.coeffs.items()}
        for p, m in other.coeffs.items():
            out[p] = out.get(p, 0.0) + m
        return MatExpr(self.dim, self.const + other.const, out)

    def __mul__(self, a: float):
        return MatExpr(self.dim, self.const * a, {p: m * a for p, m in self.coeffs.items()})

    __rmul__ = __mul__

    def diag_scale(self, d: np.ndarray) -> "MatExpr":
        """Congruence with diag(d): entries scaled by outer(d, d)."""
        D = np.outer(d, d)
        return MatExpr(self.dim, self.const * D, {p: m * D for p, m in self.coeffs.items()})

    def value(self, x: np.ndarray) -> np.ndarray:
        M = self.const.copy()
        for p, c in self.coeffs.items():
            M = M + c * x[p]
        return 0.5 * (M + M.conj().T)


# ---------------------------------------------------------------------------
# Variables


@dataclass(frozen=True)
class MatrixVar:
    name: str
    dim: int
    offset: int
    psd: bool = True

    @property
    def n_params(self) -> int:
        return self.dim * self.dim


@dataclass(frozen=True)
class ScalarVar:
    name: str
    offset: int
    lower: float | None = None
    upper: float | None = None


@dataclass(frozen=True)
class ComplexVecVar:
    name: str
    dim: int
    offset: int

    @property
    def n_params(self) -> int:
        return 2 * self.dim


def hermitian_basis(var: MatrixVar):
    """Yield (param index, coefficient matrix) for the Hermitian basis of var.

    Layout: d diagonal entries, then (Re, Im) per off-diagonal pair (i<j),
    row-major.
    """
    d = var.dim
    p = var.offset
    for i in range(d):
        F = np.zeros((d, d), dtype=complex)
        F[i, i] = 1.0
        yield p, F
        p += 1
    for i in range(d):
        for j in range(i + 1, d):
            F = np.zeros((d, d), dtype=complex)
            F[i, j] = 1.0
            F[j, i] = 1.0
            yield p, F
            p += 1
            F = np.zeros((d, d), dtype=complex)
            F[i, j] = 1.0j
            F[j, i] = -1.0j
            yield p, F
            p += 1


def _pack_matrix(var: MatrixVar, M: np.ndarray, x: np.ndarray) -> None:
    d = var.dim
    p = var.offset
    for i in range(d):
        x[p] = M[i, i].real
        p += 1
    for i in range(d):
        for j in range(i + 1, d):
            x[p] = M[i, j].real
            x[p + 1] = M[i, j].imag
            p += 2


def _unpack_matrix(var: MatrixVar, x: np.ndarray) -> np.ndarray:
    d = var.dim
    M = np.zeros((d, d), dtype=complex)
    p = var.offset
    for i in range(d):
        M[i, i] = x[p]
        p += 1
    for i in range(d):
        for j in range(i + 1, d):
            M[i, j] = x[p] + 1j * x[p + 1]
            M[j, i] = x[p] - 1j * x[p + 1]
            p += 2
    return M


# ---------------------------------------------------------------------------
# Problem container


@dataclass
class ConstraintResidual:
    label: str
    kind: str  # 'lmi' | 'ineq' | 'psd' | 'bound'
    value: float  # min eigenvalue for LMI/PSD, a(x) for inequalities
    violation: float  # max(0, -value) for cones, max(0, value) for inequalities


@dataclass
class _Constraint:
    label: str
    kind: str
    expr: object  # MatExpr for lmi/psd, ScalExpr for ineq/bound


class ConicProblem:
    """Container plus small modeling layer for one conic problem."""

    def __init__(self):
        self.n_params = 0
        self.matrix_vars: list[MatrixVar] = []
        self.scalar_vars: list[ScalarVar] = []
        self.cvec_vars: list[ComplexVecVar] = []
        self.constraints: list[_Constraint] = []
        self.obj_logdet: list[tuple[float, MatExpr]] = []
        self.obj_affine: ScalExpr = ScalExpr()
        self._labels: set[str] = set()

    # -- variables ----------------------------------------------------------

    def add_psd_matrix(self, name: str, dim: int) -> MatrixVar:
        var = MatrixVar(name, dim, self.n_params, psd=True)
        self.n_params += var.n_params
        self.matrix_vars.append(var)
        self._register(f"{name}_cone")
        self.constraints.append(_Constraint(f"{name}_cone", "psd", self.mat_var_expr(var)))
        return var

    def add_scalar(self, name: str, lower: float | None = None, upper: float | None = None) -> ScalarVar:
        var = ScalarVar(name, self.n_params, lower, upper)
        self.n_params += 1
        self.scalar_vars.append(var)
        if lower is not None:
            self._register(f"{name}_lb")
            self.constraints.append(_Constraint(f"{name}_lb", "bound", ScalExpr(lower, {var.offset: -1.0})))
        if upper is not None:
            self._register(f"{name}_ub")
            self.constraints.append(_Constraint(f"{name}_ub", "bound", ScalExpr(-upper, {var.offset: 1.0})))
        return var

    def add_complex_vector(self, name: str, dim: int) -> ComplexVecVar:
        var = ComplexVecVar(name, dim, self.n_params)
        self.n_params += var.n_params
        self.cvec_vars.append(var)
        return var

    # -- expression builders -------------------------------------------------

    def mat_var_expr(self, var: MatrixVar, L: np.ndarray | None = None) -> MatExpr:
        """Affine map L X L^H of a Hermitian matrix variable (X itself if L is None)."""
        if L is None:
            coeffs = {p: F for p, F in hermitian_basis(var)}
            return MatExpr(var.dim, coeffs=coeffs)
        L = np.asarray(L, dtype=complex)
        coeffs = {p: L @ F @ L.conj().T for p, F in hermitian_basis(var)}
        return MatExpr(L.shape[0], coeffs=coeffs)

    def trace_expr(self, var: MatrixVar, C: np.ndarray) -> ScalExpr:
        """Real linear functional Re tr(C X) of a Hermitian matrix variable."""
        C = np.asarray(C, dtype=complex)
        coeffs = {}
        for p, F in hermitian_basis(var):
            c = float(np.real(np.trace(C @ F)))
            if c != 0.0:
                coeffs[p] = c
        return ScalExpr(0.0, coeffs)

    def scalar_expr(self, var: ScalarVar, coeff: float = 1.0, const: float = 0.0) -> ScalExpr:
        return ScalExpr(const, {var.offset: coeff})

    def cvec_expr(self, var: ComplexVecVar, L: np.ndarray | None = None) -> VecExpr:
        """Affine complex vector L v (v itself if L is None)."""
        if L is None:
            L = np.eye(var.dim, dtype=complex)
        L = np.asarray(L, dtype=complex)
        if L.ndim == 1:
            L = L.reshape(1, -1)
        coeffs = {}
        for i in range(var.dim):
            col = L[:, i]
            if np.any(col != 0):
                coeffs[var.offset + 2 * i] = col.astype(complex)
                coeffs[var.offset + 2 * i + 1] = 1j * col
        return VecExpr(L.shape[0], coeffs=coeffs)

    def re_inner_expr(self, var: ComplexVecVar, c: np.ndarray) -> ScalExpr:
        """Real affine functional Re(c^H v) of a complex vector variable."""
        c = np.asarray(c, dtype=complex)
        coeffs = {}
        for i in range(var.dim):
            if c[i] != 0:
                coeffs[var.offset + 2 * i] = float(c[i].real)
                coeffs[var.offset + 2 * i + 1] = float(c[i].imag)
        return ScalExpr(0.0, coeffs)

    @staticmethod
    def const_mat(C: np.ndarray) -> MatExpr:
        C = np.asarray(C, dtype=complex)
        return MatExpr(C.shape[0], const=C)

    @staticmethod
    def border(mat: MatExpr, vec: VecExpr, corner: ScalExpr) -> MatExpr:
        """Bordered Hermitian expression [[mat, vec], [vec^H, corner]]."""
        if mat.dim != vec.dim:
            raise ValueError("border dimension mismatch")
        d = mat.dim + 1
        out = MatExpr(d)
        out.const[: mat.dim, : mat.dim] = mat.const
        out.const[: mat.dim, -1] = vec.const
        out.const[-1, : mat.dim] = vec.const.conj()
        out.const[-1, -1] = corner.const
        coeffs: dict[int, np.ndarray] = {}

        def blk(p):
            if p not in coeffs:
                coeffs[p] = np.zeros((d, d), dtype=complex)
            return coeffs[p]

        for p, m in mat.coeffs.items():
            blk(p)[: mat.dim, : mat.dim] += m
        for p, v in vec.coeffs.items():
            B = blk(p)
            B[: mat.dim, -1] += v
            B[-1, : mat.dim] += v.conj()
        for p, c in corner.coeffs.items():
            blk(p)[-1, -1] += c
        out.coeffs = coeffs
        return out

    # -- constraints & objective ---------------------------------------------

    def _register(self, label: str):
        if label in self._labels:
            raise ValueError(f"duplicate constraint label {label!r}")
        self._labels.add(label)

    def add_lmi(self, expr: MatExpr, label: str):
        self._register(label)
        self.constraints.append(_Constraint(label, "lmi", expr))

    def add_affine_ineq(self, expr: ScalExpr, label: str):
        """Affine inequality expr <= 0."""
        self._register(label)
        self.constraints.append(_Constraint(label, "ineq", expr))

    def set_objective(self, logdet: list[tuple[float, MatExpr]] | None = None, affine: ScalExpr | None = None):
        """Maximize sum of weight*log2 det(expr) terms plus an affine term."""
        self.obj_logdet = list(logdet or [])
        for w, _ in self.obj_logdet:
            if w <= 0:
                raise ValueError("log-det weights must be positive")
        self.obj_affine = affine if affine is not None else ScalExpr()

    # -- evaluation helpers ---------------------------------------------------

    def pack(self, point: dict) -> np.ndarray:
        x = np.zeros(self.n_params)
        for var in self.matrix_vars:
            if var.name in point:
                _pack_matrix(var, np.asarray(point[var.name], dtype=complex), x)
        for var in self.scalar_vars:
            if var.name in point:
                x[var.offset] = float(point[var.name])
        for var in self.cvec_vars:
            if var.name in point:
                v = np.asarray(point[var.name], dtype=complex)
                x[var.offset : var.offset + 2 * var.dim : 2] = v.real
                x[var.offset + 1 : var.offset + 2 * var.dim : 2] = v.imag
        return x

    def unpack(self, x: np.ndarray) -> dict:
        point: dict = {}
        for var in self.matrix_vars:
            point[var.name] = _unpack_matrix(var, x)
        for var in self.scalar_vars:
            point[var.name] = float(x[var.offset])
        for var in self.cvec_vars:
            point[var.name] = x[var.offset : var.offset + 2 * var.dim : 2] + 1j * x[var.offset + 1 : var.offset + 2 * var.dim : 2]
        return point

    def eval_objective(self, point: dict) -> float:
        x = self.pack(point)
        val = self.obj_affine.value(x)
        for w, expr in self.obj_logdet:
            sign, logdet = np.linalg.slogdet(expr.value(x))
            if sign <= 0:
                return -np.inf
            val += w * logdet / LN2
        return float(val)

    def check_point(self, point: dict) -> list[ConstraintResidual]:
        """Signed per-constraint residuals at a point (dict of variable values)."""
        x = self.pack(point)
        out = []
        for con in self.constraints:
            if con.kind in ("lmi", "psd"):
                S = con.expr.value(x)
                val = float(np.linalg.eigvalsh(S)[0]) if S.shape[0] else 0.0
                out.append(ConstraintResidual(con.label, con.kind, val, max(0.0, -val)))
            else:
                a = con.expr.value(x)
                out.append(ConstraintResidual(con.label, con.kind, a, max(0.0, a)))
        return out

    def dump(self, path: str) -> None:
        """Write a structured description of the problem for debugging."""
        doc = {
            "n_params": self.n_params,
            "matrix_vars": [{"name": v.name, "dim": v.dim, "psd": v.psd} for v in self.matrix_vars],
            "scalar_vars": [{"name": v.name, "lower": v.lower, "upper": v.upper} for v in self.scalar_vars],
            "complex_vectors": [{"name": v.name, "dim": v.dim} for v in self.cvec_vars],
            "constraints": [{"label": c.label, "kind": c.kind, "dim": getattr(c.expr, "dim", 1)} for c in self.constraints],
            "objective": {
                "logdet": [{"weight": w, "dim": e.dim} for w, e in self.obj_logdet],
                "affine_terms": len(self.obj_affine.coeffs),
            },
        }
        with open(path, "w") as f:
            json.dump(doc, f, indent=2)
            f.write("\n")


# ---------------------------------------------------------------------------
# Solver


@dataclass
class SolverOptions:
    gap_tol: float = 1e-8  # duality measure target: nu/t <= gap_tol * nu
    t0: float = 1.0
    t_factor: float = 10.0
    max_newton: int = 200
    stage_tol: float = 0.04  # Newton decrement^2 at intermediate stages (lambda ~ 0.2)
    final_tol: float = 1e-12
    max_backtracks: int = 60
    armijo: float = 0.1
    backtrack: float = 0.5
    feas_slack: float = 1e-7  # phase-I slack above which the problem is infeasible
    feas_exit_margin: float = 1e-3  # phase-I early exit once this interior margin is reached


@dataclass
class ConicSolution:
    status: str  # 'optimal' | 'infeasible' | 'max-iterations'
    values: dict
    objective: float
    kkt_residual: float
    iterations: int
    duals: dict = field(default_factory=dict)
    barrier_nu: int = 0
    t_final: float = 0.0
    cert_gap: float = np.inf
    phase1_slack: float | None = None


class _Piece:
    """One -w*ln det S(x) matrix term in the barrier-augmented objective."""

    __slots__ = ("S0", "idx", "A", "weight", "is_obj", "nu", "label", "expr_dim", "ixgrid")

    def __init__(self, S0, idx, A, weight, is_obj, nu, label, expr_dim):
        self.S0 = S0
        self.idx = idx
        self.A = A
        self.weight = weight  # base weight; objective pieces get multiplied by t
        self.is_obj = is_obj
        self.nu = nu
        self.label = label
        self.expr_dim = expr_dim


def _build_piece(expr, weight, is_obj, label) -> _Piece:
    if isinstance(expr, ScalExpr):
        # scalar expression oriented so that S = [expr] >= 0
        d = 1
        S0 = np.array([[expr.const]])
        items = sorted((p, float(c)) for p, c in expr.coeffs.items())
        nu = 1
        w = weight if is_obj else 1.0
        A = np.array([[[c]] for _, c in items]) if items else np.zeros((0, 1, 1))
    elif expr.dim == 1:
        d = 1
        S0 = np.array([[float(np.real(expr.const[0, 0]))]])
        items = sorted((p, float(np.real(m[0, 0]))) for p, m in expr.coeffs.items())
        nu = 1
        w = weight if is_obj else 1.0
        A = np.array([[[c]] for _, c in items]) if items else np.zeros((0, 1, 1))
    else:
        # complex Hermitian data through the real-symmetric embedding; the
        # embedded log-det doubles, hence the halved objective weight
        d = expr.dim
        S0 = real_embedding(expr.const)
        items = sorted(expr.coeffs.items())
        A = np.array([real_embedding(m) for _, m in items]) if items else np.zeros((0, 2 * d, 2 * d))
        nu = 2 * d
        w = weight * 0.5 if is_obj else 1.0
    idx = np.array([p for p, _ in items], dtype=int)
    return _Piece(S0, idx, A.astype(float), w, is_obj, nu, label, d)


class _Engine:
    """Assembled solve state.

    All 1x1 pieces (bounds, affine inequalities, scalar log terms) are folded
    into one vectorized diagonal block; matrix pieces of equal size are
    grouped so domain checks and log-dets run through batched Cholesky calls.
    """

    __slots__ = ("n", "mats", "groups", "d_const", "d_A", "d_weight", "d_isobj", "c_lin", "nu", "pieces")

    def __init__(self, pieces, c_lin, n):
        self.n = n
        self.mats = [p for p in pieces if p.S0.shape[0] > 1]
        for p in self.mats:
            p.ixgrid = np.ix_(p.idx, p.idx)
        ones = [p for p in pieces if p.S0.shape[0] == 1]
        self.d_const = np.array([p.S0[0, 0] for p in ones])
        self.d_A = np.zeros((len(ones), n))
        for i, p in enumerate(ones):
            if len(p.idx):
                self.d_A[i, p.idx] = p.A[:, 0, 0]
        self.d_weight = np.array([p.weight for p in ones])
        self.d_isobj = np.array([p.is_obj for p in ones])
        self.c_lin = c_lin
        self.nu = sum(p.nu for p in pieces if not p.is_obj)
        self.pieces = list(pieces)
        # batched evaluation groups: (D, C_stack, A_flat, w_base, is_obj)
        by_dim: dict[int, list] = {}
        for p in self.mats:
            by_dim.setdefault(p.S0.shape[0], []).append(p)
        self.groups = []
        for D, plist in sorted(by_dim.items()):
            k = len(plist)
            C = np.array([p.S0 for p in plist])
            A_flat = np.zeros((k * D * D, n))
            for i, p in enumerate(plist):
                if len(p.idx):
                    A_flat[i * D * D : (i + 1) * D * D, p.idx] = p.A.transpose(1, 2, 0).reshape(D * D, len(p.idx))
            self.groups.append(
                (D, C.reshape(k * D * D), A_flat, np.array([p.weight for p in plist]), np.array([p.is_obj for p in plist]))
            )

    def diag_values(self, x):
        return self.d_const + self.d_A @ x

    def _group_chol(self, x):
        """Batched Cholesky factors per group; None when outside the domain."""
        out = []
        for D, C_flat, A_flat, w, is_obj in self.groups:
            S = (C_flat + A_flat @ x).reshape(-1, D, D)
            try:
                L = np.linalg.cholesky(S)
            except np.linalg.LinAlgError:
                return None
            out.append(L)
        return out

    def margins(self, x) -> float:
        worst = np.inf
        if len(self.d_const):
            worst = float(np.min(self.diag_values(x)))
        for D, C_flat, A_flat, _w, _o in self.groups:
            S = (C_flat + A_flat @ x).reshape(-1, D, D)
            worst = min(worst, float(np.linalg.eigvalsh(S)[:, 0].min()))
        return worst

    def phi(self, x, t):
        """Barrier-augmented objective; None when outside the domain."""
        val = t * float(self.c_lin @ x)
        s = self.diag_values(x)
        if len(s):
            if np.any(s <= 0.0):
                return None
            w = np.where(self.d_isobj, t * self.d_weight, self.d_weight)
            val -= float(w @ np.log(s))
        chols = self._group_chol(x)
        if chols is None:
            return None
        for (D, _C, _A, w_base, is_obj), L in zip(self.groups, chols):
            w = np.where(is_obj, t * w_base, w_base)
            logdets = 2.0 * np.sum(np.log(np.einsum("kii->ki", L)), axis=1)
            val -= float(w @ logdets)
        return val

    def grad_hess(self, x, t):
        g = t * self.c_lin.copy()
        H = np.zeros((self.n, self.n))
        s = self.diag_values(x)
        if len(s):
            w = np.where(self.d_isobj, t * self.d_weight, self.d_weight)
            s = np.maximum(s, 1e-150)  # underflow guard at the domain edge
            g -= self.d_A.T @ (w / s)
            H += (self.d_A.T * (w / s**2)) @ self.d_A
        for p in self.mats:
            S = _piece_value(p, x)
            npar = len(p.idx)
            if not npar:
                continue
            D = S.shape[0]
            c, low = cho_factor(S, lower=True)
            B = p.A.transpose(1, 0, 2).reshape(D, npar * D)
            W = cho_solve((c, low), B).reshape(D, npar, D).transpose(1, 0, 2)
            w = t * p.weight if p.is_obj else p.weight
            g[p.idx] -= w * np.einsum("pii->p", W)
            Wf = W.reshape(npar, D * D)
            Wt = W.transpose(0, 2, 1).reshape(npar, D * D)
            H[p.ixgrid] += w * (Wf @ Wt.T)
        return g, H


def _piece_value(piece: _Piece, x: np.ndarray) -> np.ndarray:
    S = piece.S0.copy()
    if len(piece.idx):
        S += np.einsum("p,pab->ab", x[piece.idx], piece.A)
    return S


def _newton(eng: _Engine, x, t, tol, budget, opts):
    """Damped Newton centering at barrier parameter t.

    Returns (x, steps, converged, lam2); stalls in the line search count as
    stage convergence (the caller checks residuals at the end).
    """
    n = eng.n
    steps = 0
    lam2 = np.inf
    phi0 = None
    while steps < budget:
        g, H = eng.grad_hess(x, t)
        jitter = 0.0
        base = np.trace(H) / max(n, 1)
        for _ in range(10):
            try:
                cH = cho_factor(H + jitter * np.eye(n), lower=True) if jitter else cho_factor(H, lower=True)
                break
            except np.linalg.LinAlgError:
                jitter = max(jitter * 100.0, 1e-14 * max(base, 1.0))
        else:
            return x, steps, False, lam2
        d = cho_solve(cH, -g)
        lam2 = float(-g @ d)
        if lam2 <= tol:
            return x, steps, True, lam2
        if phi0 is None:
            phi0 = eng.phi(x, t)
        alpha = 1.0
        accepted = False
        for _ in range(opts.max_backtracks):
            phi1 = eng.phi(x + alpha * d, t)
            if phi1 is not None and (lam2 <= 0.02 or phi1 <= phi0 - opts.armijo * alpha * lam2):
                x = x + alpha * d
                phi0 = phi1
                accepted = True
                break
            alpha *= opts.backtrack
        steps += 1
        if not accepted:
            return x, steps, True, lam2
    return x, steps, False, lam2


def _phase1(eng: _Engine, x0, opts):
    """Minimize the common slack s with S_i(x) + s I >= 0 over all pieces.

    Returns (x, s_achieved, s_lower_bound, steps); s_achieved < 0 certifies a
    strictly feasible point, s_lower_bound > 0 certifies infeasibility.
    """
    n = eng.n
    s_idx = n
    margin0 = eng.margins(x0)
    s0 = max(-margin0, 0.0) * (1.0 + 1e-9) + 1e-2
    s_floor = -(abs(s0) + 2.0)

    c_lin = np.zeros(n + 1)
    c_lin[s_idx] = 1.0
    aug_pieces = []
    for p in eng.pieces:
        D = p.S0.shape[0]
        idx = np.concatenate([p.idx, np.array([s_idx])]).astype(int)
        A = np.concatenate([p.A, np.eye(D)[None]], axis=0) if len(p.A) else np.eye(D)[None]
        aug_pieces.append(_Piece(p.S0, idx, A, 1.0, False, p.nu, p.label, p.expr_dim))
    aug_pieces.append(_Piece(np.array([[-s_floor]]), np.array([s_idx]), np.array([[[1.0]]]), 1.0, False, 1, "_phase1_floor", 1))
    aug = _Engine(aug_pieces, c_lin, n + 1)
    nu = aug.nu

    x = np.concatenate([x0, [s0]])
    steps_total = 0
    t = max(1.0, float(nu))
    # resolve the optimal slack well below the infeasibility threshold
    t_final = nu / (0.1 * opts.feas_slack)
    while True:
        x, steps, _, _ = _newton(aug, x, t, opts.stage_tol, opts.max_newton - steps_total, opts)
        steps_total += steps
        if x[s_idx] <= -opts.feas_exit_margin:
            break
        if x[s_idx] - nu / t > opts.feas_slack:
            break  # certified infeasible
        if t >= t_final or steps_total >= opts.max_newton:
            break
        t *= opts.t_factor
    return x[:n], float(x[s_idx]), float(x[s_idx] - nu / t), steps_total


def _assemble(pb: ConicProblem):
    """(barrier pieces, objective pieces, linear min-objective) of a problem."""
    barrier_pieces = [_build_piece(c.expr if c.kind in ("lmi", "psd") else c.expr * -1.0, 1.0, False, c.label) for c in pb.constraints]
    obj_pieces = [_build_piece(expr, w / LN2, True, f"_obj{j}") for j, (w, expr) in enumerate(pb.obj_logdet)]
    c_lin = np.zeros(pb.n_params)
    for p, c in pb.obj_affine.coeffs.items():
        c_lin[p] -= c  # minimize -objective
    return barrier_pieces, obj_pieces, c_lin


def newton_metric_norm(pb: ConicProblem, point: dict, t: float, r: np.ndarray) -> float:
    """Affine-invariant size of a residual vector r at a point.

    Returns sqrt(r^T H_t^-1 r) with H_t the t-normalized Hessian of the
    barrier-augmented objective; in objective units this bounds the
    first-order objective improvement available along r.
    """
    barrier_pieces, obj_pieces, c_lin = _assemble(pb)
    eng = _Engine(barrier_pieces + obj_pieces, c_lin, pb.n_params)
    x = pb.pack(point)
    _g, H = eng.grad_hess(x, t)
    Ht = H / t
    jitter = 0.0
    base = np.trace(Ht) / max(pb.n_params, 1)
    for _ in range(10):
        try:
            c = cho_factor(Ht + jitter * np.eye(pb.n_params), lower=True) if jitter else cho_factor(Ht, lower=True)
            break
        except np.linalg.LinAlgError:
            jitter = max(jitter * 100.0, 1e-14 * max(base, 1.0))
    else:
        return float(np.linalg.norm(r))
    z = cho_solve(c, r)
    return float(math.sqrt(max(r @ z, 0.0)))


def _path_follow(eng: _Engine, x, t0, opts):
    """Stage loop from t0 to the gap target; returns (x, t, steps, ok, lam2)."""
    t = t0
    t_final = 1.0 / opts.gap_tol
    steps_total = 0
    lam2 = np.inf
    while True:
        last = t >= t_final
        tol = opts.final_tol if last else opts.stage_tol
        x, steps, converged, lam2 = _newton(eng, x, t, tol, opts.max_newton - steps_total, opts)
        steps_total += steps
        if steps_total >= opts.max_newton and not (last and converged):
            return x, t, steps_total, False, lam2
        if last:
            return x, t, steps_total, True, lam2
        t *= opts.t_factor


def solve(pb: ConicProblem, options: SolverOptions | None = None, init: dict | None = None, warm: bool = False) -> ConicSolution:
    """Solve a ConicProblem with the path-following barrier method.

    With warm=True and a strictly interior init, the barrier ramp starts a
    few decades below the final parameter instead of at t0 (cheap when the
    init is near the new optimum, as in consecutive anchored subproblems).
    """
    opts = options or SolverOptions()
    if not (pb.matrix_vars or pb.scalar_vars or pb.cvec_vars):
        raise ValueError("problem has no variables")
    n = pb.n_params

    barrier_pieces, obj_pieces, c_lin = _assemble(pb)
    eng = _Engine(barrier_pieces + obj_pieces, c_lin, n)
    nu = eng.nu
    has_objective = bool(pb.obj_logdet) or bool(pb.obj_affine.coeffs)

    x = pb.pack(init) if init else np.zeros(n)
    steps_total = 0
    phase1_slack = None
    t_final = 1.0 / opts.gap_tol

    warm_ok = False
    lam2 = np.inf
    if warm and has_objective and eng.margins(x) > 0.0:
        # strictly interior warm start: ride a shortened barrier ramp
        t0_warm = max(opts.t0, 1e-4 * t_final)
        x, t, steps, ok, lam2 = _path_follow(eng, x, t0_warm, opts)
        steps_total += steps
        warm_ok = True
        status = "optimal" if ok else "max-iterations"

    if not warm_ok:
        # points hugging the boundary (previous interior solutions) are
        # recentered through phase-I; Newton at small t is ill-posed there
        if eng.margins(x) <= 1e-7:
            x, phase1_slack, slack_lb, steps = _phase1(eng, x, opts)
            steps_total += steps
            if slack_lb > opts.feas_slack:
                return ConicSolution(
                    status="infeasible",
                    values=pb.unpack(x),
                    objective=-np.inf,
                    kkt_residual=np.inf,
                    iterations=steps_total,
                    barrier_nu=nu,
                    phase1_slack=phase1_slack,
                )
            if eng.margins(x) <= 0.0:
                return ConicSolution(
                    status="max-iterations" if phase1_slack <= opts.feas_slack else "infeasible",
                    values=pb.unpack(x),
                    objective=-np.inf,
                    kkt_residual=np.inf,
                    iterations=steps_total,
                    barrier_nu=nu,
                    phase1_slack=phase1_slack,
                )
        if not has_objective:
            values = pb.unpack(x)
            return ConicSolution(
                status="optimal",
                values=values,
                objective=0.0,
                kkt_residual=0.0,
                iterations=steps_total,
                barrier_nu=nu,
                phase1_slack=phase1_slack,
            )
        x, t, steps, ok, lam2 = _path_follow(eng, x, opts.t0, opts)
        steps_total += steps
        status = "optimal" if ok else "max-iterations"

    # centering measure lam2 bounds the objective distance to the t-central
    # point; nu/t bounds the remaining duality gap (both in objective units)
    kkt = max(nu / t, lam2 if np.isfinite(lam2) else np.inf)
    if status == "optimal" and kkt > 1e-5:
        status = "max-iterations"

    duals: dict = {}
    for con in pb.constraints:
        if con.kind in ("lmi", "psd"):
            S = con.expr.value(x)
            if con.expr.dim >= 2:
                duals[con.label] = 2.0 * np.linalg.inv(S) / t
            else:
                duals[con.label] = np.array([[1.0 / (S[0, 0].real * t)]])
        else:
            s = -con.expr.value(x)
            duals[con.label] = 1.0 / (s * t)

    values = pb.unpack(x)
    return ConicSolution(
        status=status,
        values=values,
        objective=pb.eval_objective(values),
        kkt_residual=kkt,
        iterations=steps_total,
        duals=duals,
        barrier_nu=nu,
        t_final=t,
        cert_gap=nu / t,
        phase1_slack=phase1_slack,
    )
