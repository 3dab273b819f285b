"""Primal-dual interior-point solver for block-diagonal semidefinite
programs in standard form:

    (P)  min  sum_b <C_b, X_b>   s.t.  sum_b <A_ib, X_b> = b_i,  X_b >= 0
    (D)  max  b.y                s.t.  C_b - sum_i y_i A_ib = S_b >= 0

Nesterov-Todd scaling with a Mehrotra predictor-corrector; the Schur
complement (m x m, m = number of equality constraints) is formed densely
and factorized by Cholesky.  Designed for desk-scale problems (block
dimensions up to a few hundred, m up to a few thousand) at ~1e-9 accuracy.

Constraint data is stored per block as a CSR matrix whose i-th row is
vec(A_ib) in C order; rows must encode symmetric matrices.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

__all__ = ["SdpProblem", "SdpSolution", "SdpConfig", "SdpError",
           "solve", "residuals", "dump_problem", "load_problem"]


class SdpError(RuntimeError):
    pass


@dataclass
class SdpConfig:
    tol: float = 1e-9
    max_iter: int = 200
    step_fraction: float = 0.98
    presolve: bool = True
    verbose: bool = False
    feas_cert_tol: float = 1e-10
    track_history: bool = False


class SdpProblem:
    """Problem data for the standard primal form above."""

    def __init__(self, blocks, objective, constraints, rhs, presolved=False):
        """
        blocks      -- list of (name, dimension)
        objective   -- dict name -> dense symmetric (dim, dim) array
        constraints -- dict name -> sparse (m, dim*dim) matrix of vec'd rows
        rhs         -- length-m array
        presolved   -- set by assemblers whose rows are independent by
                       construction; skips the rank check
        """
        self.blocks = [(str(n), int(d)) for n, d in blocks]
        names = [n for n, _ in self.blocks]
        if len(set(names)) != len(names):
            raise SdpError("duplicate block names")
        self.rhs = np.asarray(rhs, dtype=float).ravel()
        m = len(self.rhs)
        self.objective = {}
        self.constraints = {}
        for name, dim in self.blocks:
            C = np.asarray(objective.get(name, np.zeros((dim, dim))),
                           dtype=float)
            if C.shape != (dim, dim):
                raise SdpError(f"objective block {name} has wrong shape")
            if np.abs(C - C.T).max() > 1e-12 * max(1.0, np.abs(C).max()):
                raise SdpError(f"objective block {name} not symmetric")
            self.objective[name] = 0.5 * (C + C.T)
            A = constraints.get(name)
            if A is None:
                A = sp.csr_matrix((m, dim * dim))
            else:
                A = sp.csr_matrix(A)
                if A.shape != (m, dim * dim):
                    raise SdpError(f"constraint block {name} has shape "
                                   f"{A.shape}, expected {(m, dim * dim)}")
            # symmetrize rows (vec(A) and vec(A^T) averaged)
            perm = _transpose_permutation(dim)
            At = A[:, perm]
            if abs(A - At).max() > 1e-10 * max(1.0, abs(A).max()):
                raise SdpError(f"constraint rows on block {name} are not "
                               "symmetric matrices")
            self.constraints[name] = (0.5 * (A + At)).tocsr()
        self.presolved = presolved

    @property
    def m(self) -> int:
        return len(self.rhs)

    def total_dim(self) -> int:
        return sum(d for _, d in self.blocks)

    # -- linear operators ---------------------------------------------------

    def iter_blocks(self):
        """Blocks in name order: reductions are permutation-invariant."""
        return sorted(self.blocks)

    def apply_A(self, X) -> np.ndarray:
        out = np.zeros(self.m)
        for name, dim in self.iter_blocks():
            out += self.constraints[name] @ X[name].ravel()
        return out

    def apply_At(self, y):
        out = {}
        for name, dim in self.blocks:
            out[name] = (self.constraints[name].T @ y).reshape(dim, dim)
        return out

    def objective_value(self, X) -> float:
        return float(sum(np.sum(self.objective[n] * X[n])
                         for n, _ in self.iter_blocks()))


def _transpose_permutation(dim: int) -> np.ndarray:
    idx = np.arange(dim * dim).reshape(dim, dim)
    return idx.T.ravel()


@dataclass
class SdpSolution:
    X: dict
    y: np.ndarray
    S: dict
    primal_objective: float
    dual_objective: float
    residuals: dict
    iterations: int
    status: str
    dropped_rows: tuple = ()
    history: list = field(default_factory=list)

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


# ---------------------------------------------------------------------------
# presolve
# ---------------------------------------------------------------------------

def _presolve(problem: SdpProblem, tol=1e-12):
    """Drop linearly dependent constraint rows via pivoted Cholesky of the
    Gram matrix.  Raises if a dropped row is inconsistent with the kept ones.
    """
    m = problem.m
    G = np.zeros((m, m))
    for name, _ in problem.iter_blocks():
        A = problem.constraints[name]
        G += (A @ A.T).toarray()
    scale = np.sqrt(np.clip(np.diag(G), 1e-300, None))
    Gn = G / scale[:, None] / scale[None, :]
    # pivoted Cholesky on the normalized Gram matrix
    keep = []
    L = np.zeros((m, m))
    active = Gn.copy()
    diag = np.diag(active).copy()
    order = []
    for k in range(m):
        p = int(np.argmax(diag))
        if diag[p] <= tol:
            break
        order.append(p)
        keep.append(p)
        col = Gn[:, p] - L[:, :k] @ L[p, :k]
        L[:, k] = col / np.sqrt(col[p])
        diag = diag - L[:, k] ** 2
        diag[keep] = 0.0
    keep = sorted(keep)
    if len(keep) == m:
        return problem, ()
    dropped = tuple(i for i in range(m) if i not in set(keep))
    # consistency of dropped rows: solve least squares on the kept rows
    sub = np.ix_(keep, keep)
    Gkk = G[sub]
    for i in dropped:
        coef = la.lstsq(Gkk, G[np.ix_(keep, [i])])[0].ravel()
        pred = coef @ problem.rhs[keep]
        if abs(pred - problem.rhs[i]) > 1e-8 * (1 + abs(problem.rhs[i])):
            raise SdpError(f"constraint row {i} is inconsistent with the "
                           "rows it depends on (infeasible equalities)")
    constraints = {n: problem.constraints[n][keep] for n, _ in problem.blocks}
    reduced = SdpProblem(problem.blocks, problem.objective, constraints,
                         problem.rhs[keep], presolved=True)
    return reduced, dropped


# ---------------------------------------------------------------------------
# solver core
# ---------------------------------------------------------------------------

def _chol_lower(M, name):
    try:
        return la.cholesky(M, lower=True, check_finite=False)
    except la.LinAlgError:
        # re-float slightly indefinite iterates
        w, V = np.linalg.eigh(M)
        floor = max(1e-14, 1e-12 * max(w.max(), 1e-30))
        w = np.clip(w, floor, None)
        return la.cholesky((V * w) @ V.T, lower=True, check_finite=False)


def _nt_factors(X, S):
    """NT scaling per block: R with R^T S R = R^-1 X R^-T = diag(lam)."""
    Lx = _chol_lower(X, "X")
    Ls = _chol_lower(S, "S")
    U, sig, Vt = la.svd(Ls.T @ Lx, check_finite=False)
    lam = sig
    R = Lx @ Vt.T / np.sqrt(sig)[None, :]
    Rinv = (np.sqrt(1.0 / sig)[:, None] * U.T) @ Ls.T
    W = R @ R.T
    return R, Rinv, W, lam


def _max_step(M, dM):
    """Largest alpha with M + alpha*dM >= 0 (M > 0), via Cholesky scaling."""
    Lm = _chol_lower(M, "step")
    T = la.solve_triangular(Lm, dM, lower=True, check_finite=False)
    T = la.solve_triangular(Lm, T.T, lower=True, check_finite=False)
    w = np.linalg.eigvalsh(0.5 * (T + T.T))
    wmin = w.min()
    if wmin >= -1e-14:
        return np.inf
    return -1.0 / wmin


def _schur_cache(problem):
    """Per-block reshaped constraint matrices, built once per solve."""
    cache = {}
    for name, dim in problem.blocks:
        A = problem.constraints[name]
        if A.nnz == 0:
            cache[name] = None
            continue
        stacked = sp.csr_matrix(A.reshape(problem.m * dim, dim))
        cache[name] = stacked
    return cache


def _schur(problem, W, cache, chunk_target=4_000_000):
    m = problem.m
    H = np.zeros((m, m))
    for name, dim in problem.iter_blocks():
        A = problem.constraints[name]
        stacked = cache[name]
        if stacked is None:
            continue
        Wb = W[name]
        chunk = max(1, min(m, chunk_target // (dim * dim)))
        for start in range(0, m, chunk):
            stop = min(m, start + chunk)
            c = stop - start
            # (c, n, n) tensor of A_i W, then W (A_i W)
            T1 = (stacked[start * dim:stop * dim] @ Wb).reshape(c, dim, dim)
            M = np.tensordot(Wb, T1, axes=(1, 1)).transpose(1, 0, 2)
            Hrows = (A @ M.reshape(c, dim * dim).T).T
            H[start:stop, :] += Hrows
    return 0.5 * (H + H.T)


def _solve_schur(Hfac, H, rhs):
    dy = la.cho_solve(Hfac, rhs, check_finite=False)
    # one step of iterative refinement keeps directions accurate late on
    r = rhs - H @ dy
    dy += la.cho_solve(Hfac, r, check_finite=False)
    return dy


def solve(problem: SdpProblem, config: SdpConfig | None = None) -> SdpSolution:
    """Solve the primal-dual pair; see module docstring for the form."""
    cfg = config or SdpConfig()
    dropped = ()
    work = problem
    if cfg.presolve and not problem.presolved:
        work, dropped = _presolve(problem)

    names = [n for n, _ in work.iter_blocks()]
    dims = dict(work.blocks)
    m = work.m
    g = sum(dims.values())

    # identity-scaled strictly interior start
    normC = max(np.abs(work.objective[n]).max() for n in names) or 1.0
    normb = np.abs(work.rhs).max() or 1.0
    X = {n: np.eye(dims[n]) * max(1.0, normb) for n in names}
    S = {n: np.eye(dims[n]) * max(1.0, normC) for n in names}
    y = np.zeros(m)

    status = "max_iterations"
    cache = _schur_cache(work)
    history = []
    it = 0
    for it in range(1, cfg.max_iter + 1):
        rp = work.rhs - work.apply_A(X)
        Aty = work.apply_At(y)
        Rd = {n: work.objective[n] - S[n] - Aty[n] for n in names}
        mu = sum(np.sum(X[n] * S[n]) for n in names) / g

        res = _residual_metrics(work, X, y, S)
        if cfg.track_history:
            history.append(res)
        if cfg.verbose:
            print(f"  iter {it:3d} pobj={res['primal_objective']:+.9e} "
                  f"dobj={res['dual_objective']:+.9e} gap={res['relative_gap']:.2e} "
                  f"pinf={res['primal_residual']:.2e} dinf={res['dual_residual']:.2e}")
        if max(res["primal_residual"], res["dual_residual"],
               res["relative_gap"]) <= cfg.tol:
            status = "optimal"
            break
        cert = _certificates(work, X, y, S, cfg)
        if cert:
            status = cert
            break

        R = {}
        Rinv = {}
        W = {}
        lam = {}
        try:
            for n in names:
                R[n], Rinv[n], W[n], lam[n] = _nt_factors(X[n], S[n])
            H = _schur(work, W, cache)
            Hfac = None
            reg = 0.0
            base = np.trace(H) / max(1, m)
            for attempt in range(6):
                try:
                    Hfac = la.cho_factor(
                        H + reg * np.eye(m) if reg else H,
                        check_finite=False)
                    break
                except la.LinAlgError:
                    reg = max(base * 1e-14, reg * 100 if reg else base * 1e-14)
            if Hfac is None:
                raise la.LinAlgError("Schur complement not positive definite")

            AWRdW = np.zeros(m)
            WRdW = {}
            for n in names:
                WRdW[n] = W[n] @ Rd[n] @ W[n]
                AWRdW += work.constraints[n] @ WRdW[n].ravel()

            # predictor: R3 = -X exactly
            rhs_aff = work.rhs + AWRdW
            dy_a = _solve_schur(Hfac, H, rhs_aff)
            Atdy = work.apply_At(dy_a)
            dS_a = {n: Rd[n] - Atdy[n] for n in names}
            dX_a = {n: -X[n] - W[n] @ dS_a[n] @ W[n] for n in names}

            ap = min(1.0, min(_max_step(X[n], dX_a[n]) for n in names))
            ad = min(1.0, min(_max_step(S[n], dS_a[n]) for n in names))
            mu_aff = sum(np.sum((X[n] + ap * dX_a[n]) * (S[n] + ad * dS_a[n]))
                         for n in names) / g
            sigma = min(1.0, max((mu_aff / mu) ** 3, 1e-10))

            # corrector
            rhs_mat = {}
            for n in names:
                dVx = Rinv[n] @ dX_a[n] @ Rinv[n].T
                dVs = R[n].T @ dS_a[n] @ R[n]
                C2 = 0.5 * (dVx @ dVs + dVs @ dVx)
                Mmat = -C2
                np.fill_diagonal(Mmat, Mmat.diagonal()
                                 + sigma * mu - lam[n] ** 2)
                quot = 2.0 / (lam[n][:, None] + lam[n][None, :])
                rhs_mat[n] = R[n] @ (quot * Mmat) @ R[n].T
            AR3 = np.zeros(m)
            for n in names:
                AR3 += work.constraints[n] @ rhs_mat[n].ravel()
            dy = _solve_schur(Hfac, H, rp - AR3 + AWRdW)
            Atdy = work.apply_At(dy)
            dS = {n: Rd[n] - Atdy[n] for n in names}
            dX = {n: rhs_mat[n] - W[n] @ dS[n] @ W[n] for n in names}
            dX = {n: 0.5 * (dX[n] + dX[n].T) for n in names}

            tau = cfg.step_fraction
            ap = min(1.0, tau * min(_max_step(X[n], dX[n]) for n in names))
            ad = min(1.0, tau * min(_max_step(S[n], dS[n]) for n in names))
            if min(ap, ad) <= 1e-12:
                status = "numerical_failure"
                break
            for n in names:
                X[n] = 0.5 * (X[n] + ap * dX[n] + (X[n] + ap * dX[n]).T)
                S[n] = 0.5 * (S[n] + ad * dS[n] + (S[n] + ad * dS[n]).T)
            y = y + ad * dy
        except la.LinAlgError:
            status = "numerical_failure"
            break

    res = _residual_metrics(work, X, y, S)
    if status == "max_iterations" and max(
            res["primal_residual"], res["dual_residual"],
            res["relative_gap"]) <= cfg.tol:
        status = "optimal"
    yfull = y
    if dropped:
        yfull = np.zeros(problem.m)
        kept = [i for i in range(problem.m) if i not in set(dropped)]
        yfull[kept] = y
        res = _residual_metrics(problem, X, yfull, S)
    return SdpSolution(
        X=X, y=yfull, S=S,
        primal_objective=res["primal_objective"],
        dual_objective=res["dual_objective"],
        residuals=res, iterations=it, status=status, dropped_rows=dropped,
        history=history)


def _certificates(problem, X, y, S, cfg):
    """Detect divergence toward an infeasibility certificate."""
    names = [n for n, _ in problem.iter_blocks()]
    nu_d = max(np.abs(y).max() if len(y) else 0.0,
               max(np.abs(S[n]).max() for n in names))
    if nu_d > 1e7:
        by = problem.rhs @ (y / nu_d)
        lin = problem.apply_At(y / nu_d)
        resid = max(np.abs(lin[n] + S[n] / nu_d).max() for n in names)
        if by > 1e-6 and resid <= cfg.feas_cert_tol * nu_d:
            return "primal_infeasible"
    nu_p = max(np.abs(X[n]).max() for n in names)
    if nu_p > 1e7:
        cx = problem.objective_value({n: X[n] / nu_p for n in names})
        an = np.abs(problem.apply_A({n: X[n] / nu_p for n in names})).max()
        if cx < -1e-6 and an <= cfg.feas_cert_tol * nu_p:
            return "dual_infeasible"
    return None


def _residual_metrics(problem, X, y, S):
    names = [n for n, _ in problem.iter_blocks()]
    pobj = problem.objective_value(X)
    dobj = float(problem.rhs @ y)
    rp = problem.rhs - problem.apply_A(X)
    Aty = problem.apply_At(y)
    dnum = 0.0
    cnorm = 0.0
    for n in names:
        dnum += np.sum((problem.objective[n] - S[n] - Aty[n]) ** 2)
        cnorm += np.sum(problem.objective[n] ** 2)
    return {
        "primal_objective": pobj,
        "dual_objective": dobj,
        "primal_residual": float(np.linalg.norm(rp)
                                 / (1.0 + np.linalg.norm(problem.rhs))),
        "dual_residual": float(np.sqrt(dnum) / (1.0 + np.sqrt(cnorm))),
        "relative_gap": float(abs(pobj - dobj)
                              / (1.0 + abs(pobj) + abs(dobj))),
        "complementarity": float(sum(np.sum(X[n] * S[n]) for n in names)
                                 / max(1, problem.total_dim())),
    }


def residuals(problem: SdpProblem, solution: SdpSolution) -> dict:
    """Residual metrics recomputed from the returned variables."""
    for n, d in problem.blocks:
        if solution.X[n].shape != (d, d) or solution.S[n].shape != (d, d):
            raise SdpError(f"solution block {n} has the wrong dimension")
    if solution.y.shape != (problem.m,):
        raise SdpError("dual vector length mismatch")
    return _residual_metrics(problem, solution.X, solution.y, solution.S)


# ---------------------------------------------------------------------------
# problem file format
# ---------------------------------------------------------------------------
#
#   sdp 1
#   block <name> <dim>          (one per block, in order)
#   rhs <m> values...           (whitespace separated)
#   obj <block> <i> <j> <value>
#   con <row> <block> <i> <j> <value>
#
# Off-diagonal entries are mirrored automatically; '#' comments allowed.

def dump_problem(problem: SdpProblem) -> str:
    out = ["sdp 1"]
    for name, dim in problem.blocks:
        out.append(f"block {name} {dim}")
    out.append("rhs " + " ".join(repr(float(v)) for v in problem.rhs))
    for name, dim in problem.blocks:
        C = problem.objective[name]
        for i in range(dim):
            for j in range(i, dim):
                if C[i, j] != 0.0:
                    out.append(f"obj {name} {i} {j} {float(C[i, j])!r}")
        A = problem.constraints[name].tocoo()
        for r, flat, v in zip(A.row, A.col, A.data):
            i, j = divmod(int(flat), dim)
            if i <= j and v != 0.0:
                out.append(f"con {r} {name} {i} {j} {float(v)!r}")
    return "\n".join(out) + "\n"


def load_problem(text: str) -> SdpProblem:
    blocks = []
    rhs = None
    obj_entries = []
    con_entries = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        try:
            if tok[0] == "sdp":
                continue
            if tok[0] == "block":
                blocks.append((tok[1], int(tok[2])))
            elif tok[0] == "rhs":
                rhs = np.array([float(v) for v in tok[1:]])
            elif tok[0] == "obj":
                obj_entries.append((tok[1], int(tok[2]), int(tok[3]),
                                    float(tok[4])))
            elif tok[0] == "con":
                con_entries.append((int(tok[1]), tok[2], int(tok[3]),
                                    int(tok[4]), float(tok[5])))
            else:
                raise ValueError(f"unknown record {tok[0]!r}")
        except (IndexError, ValueError) as err:
            raise SdpError(f"problem file line {lineno}: {err}")
    if rhs is None:
        raise SdpError("problem file has no rhs record")
    dims = dict(blocks)
    objective = {n: np.zeros((d, d)) for n, d in blocks}
    for name, i, j, v in obj_entries:
        objective[name][i, j] = v
        objective[name][j, i] = v
    m = len(rhs)
    coo = {n: ([], [], []) for n, _ in blocks}
    for r, name, i, j, v in con_entries:
        d = dims[name]
        rows, cols, vals = coo[name]
        rows.append(r), cols.append(i * d + j), vals.append(v)
        if i != j:
            rows.append(r), cols.append(j * d + i), vals.append(v)
    constraints = {}
    for name, d in blocks:
        rows, cols, vals = coo[name]
        constraints[name] = sp.csr_matrix((vals, (rows, cols)),
                                          shape=(m, d * d))
    return SdpProblem(blocks, objective, constraints, rhs)
