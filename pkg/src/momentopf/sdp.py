"""Dense primal-dual interior-point solver for LMI-form conic programs.

The problem is ``min c.y`` subject to a list of symmetric blocks, each
affine in y, being positive semidefinite, plus entrywise-zero blocks and
pinned variables.  Preparation turns this into a strictly feasible reduced
LMI:

* pinned variables are substituted into every expression,
* zero blocks become linear equalities on y, eliminated by projecting onto
  the affine solution set (null-space parameterization),
* directions on which a block vanishes identically over the reduced space
  are compressed away (the equalities force matching rows/columns of the
  block to zero, so the restriction is exact, not a relaxation).

The iteration is standard path following with Nesterov-Todd scaling and an
adaptive centering parameter from an affine predictor; a Mehrotra
second-order corrector is available behind a setting.  Everything is dense
and deterministic: fixed initialization, no randomized pivoting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse

from .moment import SdpProblem, SymbolicPsdBlock

STATUS_OPTIMAL = "optimal"
STATUS_MAX_ITERATIONS = "max-iterations"
STATUS_NUMERICAL_FAILURE = "numerical-failure"
STATUS_INFEASIBLE = "infeasible-detected"


@dataclass
class SolverSettings:
    """Interior-point tolerances and controls."""

    gap_tol: float = 1e-8
    feas_tol: float = 1e-8
    max_iterations: int = 200
    step_fraction: float = 0.98
    mehrotra: bool = True
    divergence_threshold: float = 1e12
    compress_tol: float = 1e-11
    equality_tol: float = 1e-8
    # tolerance on the internal primal residual; the moment vector lives on
    # the dual side, so its feasibility is governed by feas_tol alone
    primal_feas_tol: float = 1e-5

    def __post_init__(self):
        if not (0 < self.step_fraction < 1):
            raise ValueError("step_fraction must lie in (0, 1)")
        for name in ("gap_tol", "feas_tol", "max_iterations"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class IterationRecord:
    mu: float
    primal_obj: float
    dual_obj: float
    pinf: float
    dinf: float
    sigma: float
    alpha_p: float
    alpha_d: float


@dataclass
class SdpSolution:
    """Result of a solve: moment vector, objective, status and diagnostics."""

    y: np.ndarray
    objective: float
    status: str
    iterations: int
    gap: float
    per_block_min_eig: list[tuple[str, float]]
    message: str = ""
    trace: list[IterationRecord] = field(default_factory=list)


@dataclass
class ResidualReport:
    """Pure diagnostics of a candidate moment vector against a problem."""

    block_min_eig: list[tuple[str, float]]
    zero_block_max_abs: list[tuple[str, float]]
    objective: float


def residuals(prob: SdpProblem, y: np.ndarray) -> ResidualReport:
    """Per-block minimum eigenvalue, zero-block worst entry, objective."""
    block_eigs = []
    for blk in prob.psd_blocks:
        mat = blk.value(y)
        block_eigs.append((blk.label, float(np.linalg.eigvalsh(mat)[0])))
    zero_max = []
    for blk in prob.zero_blocks:
        mat = blk.value(y)
        zero_max.append((blk.label, float(np.abs(mat).max()) if blk.dim else 0.0))
    return ResidualReport(
        block_min_eig=block_eigs,
        zero_block_max_abs=zero_max,
        objective=prob.objective.evaluate(y),
    )


class _LmiBlock:
    """One dense PSD block of the reduced LMI: F0 + sum_j z[j] * F[j] >= 0."""

    __slots__ = ("dim", "F0", "var_idx", "stack", "label")

    def __init__(self, dim, F0, var_idx, stack, label):
        self.dim = dim
        self.F0 = F0
        self.var_idx = var_idx  # reduced-variable indices with nonzero presence
        self.stack = stack      # (len(var_idx), dim, dim)
        self.label = label

    def evaluate(self, z: np.ndarray) -> np.ndarray:
        mat = self.F0.copy()
        if len(self.var_idx):
            mat += np.tensordot(z[self.var_idx], self.stack, axes=1)
        return mat


@dataclass
class _Prepared:
    status: str | None
    message: str
    blocks: list[_LmiBlock]
    c_red: np.ndarray
    num_reduced: int
    free_positions: np.ndarray
    y_part: np.ndarray
    null_basis: np.ndarray | None  # None = identity
    fixed: dict[int, float]
    num_vars: int
    num_all_reduced: int = 0
    active_cols: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def recover(self, z: np.ndarray) -> np.ndarray:
        y = np.zeros(self.num_vars)
        for pos, val in self.fixed.items():
            y[pos] = val
        if self.y_part.size:
            free = self.y_part.copy()
            if z.size:
                full = np.zeros(self.num_all_reduced)
                full[self.active_cols] = z
                if self.null_basis is None:
                    free = free + full
                else:
                    free = free + self.null_basis @ full
            y[self.free_positions] = free
        return y


def _upper_entries(blk: SymbolicPsdBlock):
    """Flattened upper-triangle entry list [(i, j, LinearExpr)]."""
    for i in range(blk.dim):
        for j in range(i, blk.dim):
            yield i, j, blk.entries[i][j]


def _block_coefficient_matrix(blk, fixed, free_of, m_free):
    """Sparse (n_upper_entries, m_free) coefficient matrix plus constants."""
    rows, cols, vals = [], [], []
    consts = []
    iu, ju = [], []
    for ent, (i, j, expr) in enumerate(_upper_entries(blk)):
        iu.append(i)
        ju.append(j)
        const = 0.0
        for pos, coef in expr.coeffs.items():
            if pos in fixed:
                const += coef * fixed[pos]
            else:
                rows.append(ent)
                cols.append(free_of[pos])
                vals.append(coef)
        consts.append(const)
    n_ent = len(consts)
    T = scipy.sparse.coo_matrix(
        (vals, (rows, cols)), shape=(n_ent, m_free)
    ).tocsr()
    return T, np.array(consts), np.array(iu), np.array(ju)


def _prepare(prob: SdpProblem, settings: SolverSettings) -> _Prepared:
    fixed = dict(prob.fixed_vars)
    free_positions = np.array(
        [p for p in range(prob.num_vars) if p not in fixed], dtype=np.int64
    )
    free_of = {int(p): i for i, p in enumerate(free_positions)}
    m_free = len(free_positions)

    # zero blocks -> linear equalities  row . y_free = -const
    eq_rows: list[dict[int, float]] = []
    eq_rhs: list[float] = []
    seen: set = set()
    for blk in prob.zero_blocks:
        for _, _, expr in _upper_entries(blk):
            const = 0.0
            row: dict[int, float] = {}
            for pos, coef in expr.coeffs.items():
                if pos in fixed:
                    const += coef * fixed[pos]
                else:
                    row[free_of[pos]] = row.get(free_of[pos], 0.0) + coef
            row = {k: v for k, v in row.items() if v != 0.0}
            if not row:
                if abs(const) > settings.equality_tol:
                    return _Prepared(
                        STATUS_INFEASIBLE,
                        f"zero block {blk.label!r} forces the nonzero constant {const:.3e} to vanish",
                        [], np.zeros(0), 0, free_positions, np.zeros(m_free),
                        None, fixed, prob.num_vars,
                    )
                continue
            scale = max(abs(v) for v in row.values())
            key = (
                tuple(sorted((k, v / scale) for k, v in row.items())),
                const / scale,
            )
            if key in seen:
                continue
            seen.add(key)
            eq_rows.append(row)
            eq_rhs.append(-const)

    if eq_rows:
        E = np.zeros((len(eq_rows), m_free))
        for r, row in enumerate(eq_rows):
            for cidx, v in row.items():
                E[r, cidx] = v
        rhs = np.array(eq_rhs)
        row_scale = np.abs(E).max(axis=1)
        E /= row_scale[:, None]
        rhs = rhs / row_scale
        y_part, _, _, _ = np.linalg.lstsq(E, rhs, rcond=None)
        if np.linalg.norm(E @ y_part - rhs) > settings.equality_tol * (
            1.0 + np.linalg.norm(rhs)
        ):
            return _Prepared(
                STATUS_INFEASIBLE,
                "zero-block equalities are inconsistent",
                [], np.zeros(0), 0, free_positions, y_part, None, fixed, prob.num_vars,
            )
        _, sv, vt = np.linalg.svd(E, full_matrices=True)
        rank = int(np.sum(sv > max(E.shape) * np.finfo(float).eps * (sv[0] if len(sv) else 0.0)))
        null_basis = vt[rank:].T.copy()  # (m_free, m_red)
        m_red = null_basis.shape[1]
    else:
        y_part = np.zeros(m_free)
        null_basis = None
        m_red = m_free

    # objective over reduced variables
    c_free = np.zeros(m_free)
    for pos, coef in prob.objective.coeffs.items():
        if pos not in fixed:
            c_free[free_of[pos]] = coef
    c_red = c_free if null_basis is None else null_basis.T @ c_free

    blocks: list[_LmiBlock] = []
    touched = np.zeros(m_red, dtype=bool)
    for blk in prob.psd_blocks:
        if blk.dim == 0:
            continue
        T, consts, iu, ju = _block_coefficient_matrix(blk, fixed, free_of, m_free)
        ent_const = consts + T @ y_part
        ENT = np.asarray((T @ null_basis) if null_basis is not None else T.todense())
        k = blk.dim
        F0 = np.zeros((k, k))
        F0[iu, ju] = ent_const
        F0[ju, iu] = ent_const
        col_mask = np.any(ENT != 0.0, axis=0)
        var_idx = np.nonzero(col_mask)[0]
        sub = ENT[:, var_idx]
        stack = np.zeros((len(var_idx), k, k))
        stack[:, iu, ju] = sub.T
        stack[:, ju, iu] = sub.T

        # structural compression: directions annihilated by every coefficient
        # matrix are forced to zero by the equalities; restrict to the rest
        gram = F0 @ F0
        if len(var_idx):
            gram = gram + np.einsum("aij,ajk->ik", stack, stack)
        w, vecs = np.linalg.eigh(gram)
        w_max = w[-1] if k else 0.0
        if w_max <= 0.0:
            continue  # identically zero block
        keep = w > settings.compress_tol * w_max
        if not np.all(keep):
            Q = vecs[:, keep]
            k = Q.shape[1]
            if k == 0:
                continue
            F0 = Q.T @ F0 @ Q
            stack = np.einsum("pi,aij,jq->apq", Q.T, stack, Q) if len(var_idx) else stack[:, :0, :0]

        scale = max(np.abs(F0).max(), np.abs(stack).max() if len(var_idx) else 0.0, 1e-300)
        F0 = F0 / scale
        stack = stack / scale
        blocks.append(_LmiBlock(k, F0, var_idx, stack, blk.label))
        touched[var_idx] = True

    message = ""
    status = None
    active_cols = np.nonzero(touched)[0]
    loose = np.nonzero(~touched)[0]
    if len(loose) and np.any(
        np.abs(c_red[loose]) > 1e-12 * (1.0 + (np.abs(c_red).max() if c_red.size else 0.0))
    ):
        status = STATUS_INFEASIBLE
        message = "objective is unbounded along a direction no block constrains"
    # pin unconstrained directions at zero and renumber the rest
    renumber = -np.ones(m_red, dtype=np.int64)
    renumber[active_cols] = np.arange(len(active_cols))
    for blk in blocks:
        blk.var_idx = renumber[blk.var_idx]
    return _Prepared(
        status, message, blocks, c_red[active_cols], len(active_cols),
        free_positions, y_part, null_basis, fixed, prob.num_vars,
        num_all_reduced=m_red, active_cols=active_cols,
    )


def _all_pd(mats) -> bool:
    for mat in mats:
        try:
            np.linalg.cholesky(mat)
        except np.linalg.LinAlgError:
            return False
    return True


def _max_step(mat_chol: np.ndarray, delta: np.ndarray) -> float:
    """Largest alpha with  M + alpha * delta >= 0,  M = L L^T."""
    rhs = scipy.linalg.solve_triangular(mat_chol, delta, lower=True)
    sym = scipy.linalg.solve_triangular(mat_chol, rhs.T, lower=True)
    lam = np.linalg.eigvalsh(0.5 * (sym + sym.T))[0]
    if lam >= 0.0:
        return math.inf
    return -1.0 / lam


def _nt_scaling(X: np.ndarray, S: np.ndarray):
    """NT scaling point W with W S W = X, via Cholesky of X.

    Eigenvalues of the scaled matrix are clamped away from zero: at extreme
    conditioning roundoff can push them nonpositive, and a slightly
    regularized scaling point is preferable to aborting the iteration.
    """
    L = np.linalg.cholesky(X)
    M = L.T @ S @ L
    lam, U = np.linalg.eigh(0.5 * (M + M.T))
    floor = max(lam[-1], 0.0) * 1e-15
    if lam[-1] <= 0.0:
        raise np.linalg.LinAlgError("scaling matrix not positive definite")
    lam = np.maximum(lam, floor)
    G = L @ (U * lam ** -0.25)  # W = G G^T
    return G @ G.T


def solve(prob: SdpProblem, settings: SolverSettings | None = None) -> SdpSolution:
    """Solve an LMI-form problem; deterministic for identical inputs."""
    if settings is None:
        settings = SolverSettings()
    prep = _prepare(prob, settings)

    def finish(z, status, iterations, gap, message="", trace=None):
        y = prep.recover(z)
        eigs = []
        for blk in prob.psd_blocks:
            mat = blk.value(y)
            eigs.append((blk.label, float(np.linalg.eigvalsh(mat)[0]) if blk.dim else 0.0))
        return SdpSolution(
            y=y,
            objective=prob.objective.evaluate(y),
            status=status,
            iterations=iterations,
            gap=gap,
            per_block_min_eig=eigs,
            message=message,
            trace=trace or [],
        )

    if prep.status is not None:
        return finish(np.zeros(prep.num_reduced), prep.status, 0, math.inf, prep.message)

    m = prep.num_reduced
    blocks = prep.blocks
    if m == 0 or not blocks:
        # fully determined or unconstrained; feasibility decides
        z = np.zeros(m)
        y = prep.recover(z)
        worst = 0.0
        for blk in prob.psd_blocks:
            if blk.dim:
                worst = min(worst, float(np.linalg.eigvalsh(blk.value(y))[0]))
        if worst < -settings.feas_tol * 10:
            return finish(z, STATUS_INFEASIBLE, 0, math.inf,
                          "determined point violates a block")
        return finish(z, STATUS_OPTIMAL, 0, 0.0)

    # objective scaling (undone via recover/evaluate on the original data)
    c_scale = max(np.abs(prep.c_red).max(), 1e-300) if prep.c_red.size else 1.0
    b = prep.c_red / c_scale
    K = sum(blk.dim for blk in blocks)
    norm_b = np.linalg.norm(b)
    norm_C = math.sqrt(sum(np.linalg.norm(blk.F0) ** 2 for blk in blocks))
    a_norms = np.zeros(m)
    for blk in blocks:
        if len(blk.var_idx):
            a_norms[blk.var_idx] += np.sum(blk.stack ** 2, axis=(1, 2))
    a_norms = np.sqrt(a_norms)

    eta_p = max(10.0, math.sqrt(K), K * float(np.max((1.0 + np.abs(b)) / (1.0 + a_norms))))
    eta_d = max(10.0, math.sqrt(K), norm_C, float(a_norms.max()) if m else 1.0)
    X = [eta_p * np.eye(blk.dim) for blk in blocks]
    S = [eta_d * np.eye(blk.dim) for blk in blocks]
    z = np.zeros(m)

    def apply_A(mats) -> np.ndarray:
        out = np.zeros(m)
        for blk, mat in zip(blocks, mats):
            if len(blk.var_idx):
                out[blk.var_idx] += np.tensordot(blk.stack, mat, axes=([1, 2], [0, 1]))
        return out

    trace: list[IterationRecord] = []
    status = STATUS_MAX_ITERATIONS
    message = ""
    it = 0
    gap = math.inf
    best_z = z.copy()
    best_gap = math.inf
    best_merit = math.inf
    since_best = 0
    for it in range(1, settings.max_iterations + 1):
        mu = sum(np.tensordot(Xb, Sb) for Xb, Sb in zip(X, S)) / K
        primal_obj = sum(np.tensordot(blk.F0, Xb) for blk, Xb in zip(blocks, X))
        dual_obj = float(b @ z)
        r_p = b - apply_A(X)
        Rd = [blk.evaluate(z) - Sb for blk, Sb in zip(blocks, S)]
        pinf = np.linalg.norm(r_p) / (1.0 + norm_b)
        dinf = math.sqrt(sum(np.linalg.norm(R) ** 2 for R in Rd)) / (1.0 + norm_C)
        gap_abs = mu * K
        rel_gap = gap_abs / (1.0 + abs(primal_obj) + abs(dual_obj))
        gap = rel_gap
        merit = max(
            rel_gap / settings.gap_tol,
            pinf / settings.primal_feas_tol,
            dinf / settings.feas_tol,
        )
        if merit < best_merit:
            best_merit = merit
            best_z = z.copy()
            best_gap = rel_gap
            since_best = 0
        else:
            since_best += 1
            if since_best >= 12:
                status = STATUS_MAX_ITERATIONS
                message = "stalled: no merit progress over 12 iterations"
                break

        if rel_gap <= settings.gap_tol and pinf <= settings.primal_feas_tol and dinf <= settings.feas_tol:
            status = STATUS_OPTIMAL
            break
        if max(abs(primal_obj), abs(dual_obj)) > settings.divergence_threshold:
            status = STATUS_INFEASIBLE
            message = "objective divergence; problem flagged infeasible or unbounded"
            break

        try:
            W = [_nt_scaling(Xb, Sb) for Xb, Sb in zip(X, S)]
            L_X = [np.linalg.cholesky(Xb) for Xb in X]
            L_S = [np.linalg.cholesky(Sb) for Sb in S]
        except np.linalg.LinAlgError:
            status = STATUS_NUMERICAL_FAILURE
            message = "iterate left the positive definite cone"
            break

        # Schur complement  M[i, j] = sum_blocks <A_i, W A_j W>
        M_sch = np.zeros((m, m))
        WAW_all = []
        for blk, Wb in zip(blocks, W):
            if not len(blk.var_idx):
                WAW_all.append(None)
                continue
            WAW = np.matmul(np.matmul(Wb, blk.stack), Wb)
            WAW_all.append(WAW)
            n_act = len(blk.var_idx)
            flat_A = blk.stack.reshape(n_act, -1)
            flat_W = WAW.reshape(n_act, -1)
            M_sch[np.ix_(blk.var_idx, blk.var_idx)] += flat_A @ flat_W.T

        # symmetric equilibration tames the scale spread across moment orders
        d_eq = np.sqrt(np.maximum(np.diag(M_sch), 1e-300))
        D_inv = 1.0 / d_eq
        M_eq = M_sch * np.outer(D_inv, D_inv)
        L_M = None
        jitter = 0.0
        for attempt in range(5):
            try:
                L_M = np.linalg.cholesky(M_eq + jitter * np.eye(m))
                break
            except np.linalg.LinAlgError:
                jitter = max(jitter * 100.0, 1e-14)
        if L_M is None:
            status = STATUS_NUMERICAL_FAILURE
            message = "Schur complement not positive definite"
            break

        def schur_solve(rhs):
            out = D_inv * scipy.linalg.cho_solve((L_M, True), D_inv * rhs)
            # iterative refinement keeps the primal residual from stalling
            # when the Schur complement turns ill-conditioned
            for _ in range(3):
                resid = rhs - M_sch @ out
                if np.linalg.norm(resid) <= 1e-14 * (1.0 + np.linalg.norm(rhs)):
                    break
                out = out + D_inv * scipy.linalg.cho_solve((L_M, True), D_inv * resid)
            return out

        def newton(Rc):
            rhs = apply_A(Rc) - apply_A([Wb @ R @ Wb for Wb, R in zip(W, Rd)]) - r_p
            dz = schur_solve(rhs)
            dS = []
            dX = []
            for blk, Wb, R, RcB in zip(blocks, W, Rd, Rc):
                dSb = R.copy()
                if len(blk.var_idx):
                    dSb += np.tensordot(dz[blk.var_idx], blk.stack, axes=1)
                dXb = RcB - Wb @ dSb @ Wb
                dS.append(dSb)
                dX.append(0.5 * (dXb + dXb.T))
            return dz, dX, dS

        def step_lengths(dX, dS):
            a_p = a_d = math.inf
            for Lx, Ls, dXb, dSb in zip(L_X, L_S, dX, dS):
                a_p = min(a_p, _max_step(Lx, dXb))
                a_d = min(a_d, _max_step(Ls, dSb))
            return a_p, a_d

        # affine predictor
        Rc_aff = [-Xb for Xb in X]
        dz_a, dX_a, dS_a = newton(Rc_aff)
        a_p, a_d = step_lengths(dX_a, dS_a)
        a_p = min(1.0, settings.step_fraction * a_p)
        a_d = min(1.0, settings.step_fraction * a_d)
        mu_aff = sum(
            np.tensordot(Xb + a_p * dXb, Sb + a_d * dSb)
            for Xb, dXb, Sb, dSb in zip(X, dX_a, S, dS_a)
        ) / K
        sigma = min(1.0, max((max(mu_aff, 0.0) / mu) ** 3, 1e-10))
        # do not let the gap outrun the infeasibility: once complementarity
        # is exhausted there is no centrality left to repair the residuals
        infeas_abs = pinf * (1.0 + norm_b)
        if pinf > settings.primal_feas_tol and infeas_abs > gap_abs:
            sigma = max(sigma, min(0.9, infeas_abs / (infeas_abs + gap_abs)))

        Rc = [
            sigma * mu * scipy.linalg.cho_solve((Ls, True), np.eye(Ls.shape[0])) - Xb
            for Ls, Xb in zip(L_S, X)
        ]
        if settings.mehrotra:
            for i, (Wb, dXb, dSb) in enumerate(zip(W, dX_a, dS_a)):
                lam_w, P = np.linalg.eigh(Wb)
                lam_w = np.maximum(lam_w, 1e-150)
                G = P * np.sqrt(lam_w)
                Gi = P * (1.0 / np.sqrt(lam_w))
                dXh = Gi.T @ dXb @ Gi
                dSh = G.T @ dSb @ G
                V = G.T @ S[i] @ G
                cross = 0.5 * (dXh @ dSh + dSh @ dXh)
                Vi = np.linalg.inv(V)
                corr = 0.5 * (Vi @ cross + cross @ Vi)
                Rc[i] = Rc[i] - G @ (0.5 * (corr + corr.T)) @ G.T

        dz, dX, dS = newton(Rc)
        a_p, a_d = step_lengths(dX, dS)
        a_p = min(1.0, settings.step_fraction * a_p)
        a_d = min(1.0, settings.step_fraction * a_d)
        trace.append(IterationRecord(
            mu=float(mu), primal_obj=float(primal_obj) ,
            dual_obj=float(dual_obj), pinf=float(pinf), dinf=float(dinf),
            sigma=float(sigma), alpha_p=float(a_p), alpha_d=float(a_d),
        ))
        if a_p < 1e-8 and a_d < 1e-8:
            status = STATUS_MAX_ITERATIONS
            message = "step length collapsed; returning best iterate"
            break
        # roundoff can push the exact boundary step outside the cone
        for _ in range(30):
            if _all_pd(Xb + a_p * dXb for Xb, dXb in zip(X, dX)):
                break
            a_p *= 0.5
        for _ in range(30):
            if _all_pd(Sb + a_d * dSb for Sb, dSb in zip(S, dS)):
                break
            a_d *= 0.5
        X = [Xb + a_p * dXb for Xb, dXb in zip(X, dX)]
        S = [Sb + a_d * dSb for Sb, dSb in zip(S, dS)]
        z = z + a_d * dz

    if status in (STATUS_MAX_ITERATIONS, STATUS_NUMERICAL_FAILURE):
        # fall back to the most balanced iterate seen
        z = best_z
        gap = best_gap
        if best_merit <= 1.0:
            # a fully conforming iterate was reached before the breakdown
            status = STATUS_OPTIMAL
            message = ""
    return finish(z, status, it, gap, message, trace)
