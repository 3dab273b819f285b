"""Variational 2-RDM method: minimize tr(K D) over positive semidefinite
condition blocks (D, Q, G, T1, T2, T2') that are affine images of the
compressed 2-RDM.

The semidefinite program is posed so that the free entries of the
compressed D matrix are the dual vector y of a standard-form problem; every
condition block appears as a dual slack block.  This keeps the Schur
complement at the number of free D entries (a few thousand at L = 12)
instead of the number of definitional equality constraints.

For spin-conserving Hamiltonians the blocks can be split into their Sz
sectors (``spin_blocks``), which both shrinks the solve and mirrors the
symmetry reduction used for the reference Hubbard numbers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import itertools

import numpy as np
import scipy.sparse as sp

from . import algebra, wick
from .fock import TwoBodyHamiltonian, reduced_hamiltonian
from .sdp import SdpConfig, SdpProblem, SdpSolution, solve as sdp_solve

__all__ = ["ConditionSet", "VariationalResult", "assemble",
           "t_condition_maps", "variational_ground_state",
           "dump_rdm", "load_rdm"]


@dataclass(frozen=True)
class ConditionSet:
    """Positivity conditions for the variational problem.

    D is always enforced (it is the variable block).  ``spin_blocks=None``
    resolves to True for Hubbard-model Hamiltonians and False otherwise.
    """

    Q: bool = True
    G: bool = True
    T1: bool = True
    T2: bool = True
    T2P: bool = True
    spin_blocks: bool | None = None

    @property
    def D(self) -> bool:
        return True

    def label(self) -> str:
        parts = ["D"] + [n for n in ("Q", "G", "T1", "T2", "T2P")
                         if getattr(self, n)]
        return "+".join(parts)


@dataclass
class VariationalResult:
    E_var: float
    D_var: algebra.Rdm
    G_var: algebra.Rdm
    Q_var: algebra.Rdm
    gamma_var: np.ndarray
    conditions: ConditionSet
    solution: SdpSolution

    @property
    def solver_status(self) -> str:
        return self.solution.status


# ---------------------------------------------------------------------------
# basis matrices
# ---------------------------------------------------------------------------

def _pair_basis_sparse(L: int) -> sp.csr_matrix:
    """(L^2, P) compressed antisymmetric pair basis."""
    pairs = algebra.pair_list(L)
    rows, cols, vals = [], [], []
    inv = 1.0 / np.sqrt(2.0)
    for n, (i, j) in enumerate(pairs):
        rows += [i * L + j, j * L + i]
        cols += [n, n]
        vals += [inv, -inv]
    return sp.csr_matrix((vals, (rows, cols)), shape=(L * L, len(pairs)))


def _triple_basis_sparse(L: int) -> sp.csr_matrix:
    """(L^3, C(L,3)) antisymmetric triple basis (rows i*L^2 + j*L + k)."""
    triples = [(a, b, c) for a in range(L) for b in range(a + 1, L)
               for c in range(b + 1, L)]
    rows, cols, vals = [], [], []
    inv = 1.0 / np.sqrt(6.0)
    even = {(0, 1, 2), (1, 2, 0), (2, 0, 1)}
    for n, t in enumerate(triples):
        for perm in itertools.permutations((0, 1, 2)):
            a, b, c = (t[p] for p in perm)
            rows.append(a * L * L + b * L + c)
            cols.append(n)
            vals.append(inv if perm in even else -inv)
    return sp.csr_matrix((vals, (rows, cols)), shape=(L ** 3, len(triples)))


def _gamma_of_d4_map(L: int, N: int) -> sp.csr_matrix:
    """(L^2, L^4) sparse contraction gamma_ik = sum_j D4[i,j,k,j]/(N-1)."""
    rows, cols, vals = [], [], []
    w = 1.0 / (N - 1)
    for i in range(L):
        for k in range(L):
            for j in range(L):
                rows.append(i * L + k)
                cols.append(((i * L + j) * L + k) * L + j)
                vals.append(w)
    return sp.csr_matrix((vals, (rows, cols)), shape=(L * L, L ** 4))


def _sz(i: int) -> int:
    return 1 if i % 2 == 0 else -1


# ---------------------------------------------------------------------------
# condition block builders
# ---------------------------------------------------------------------------

class _BlockSpec:
    """A condition block as an affine map of (vec(D4), vec(gamma))."""

    def __init__(self, name, dim, map_d, map_g, const, labels):
        self.name = name
        self.dim = dim          # side length of the block
        self.map_d = map_d      # (dim^2, L^4)
        self.map_g = map_g      # (dim^2, L^2)
        self.const = const      # (dim^2,)
        self.labels = labels    # per-index Sz sector label


def _row_compress(map_d, map_g, const, basis_row, basis_col):
    """Compress block rows: out = B_row^T M B_col in vec form."""
    K = sp.kron(basis_row.T, basis_col.T).tocsr()
    return K @ map_d, K @ map_g, K @ const


def _build_blocks(L: int, N: int, conds: ConditionSet):
    B2 = _pair_basis_sparse(L)
    pairs = algebra.pair_list(L)
    P = len(pairs)
    blocks = []

    pair_labels = np.array([_sz(i) + _sz(j) for i, j in pairs])

    # D block: identity on the compressed pair matrix
    eyeP2 = sp.identity(P * P, format="csr")
    expand = sp.kron(B2, B2).tocsr()  # vec(D4) = expand @ vec(Dc)
    # map_d here acts on vec(D4); D block recovers Dc via B^T . B
    d_from_full = sp.kron(B2.T, B2.T).tocsr()
    blocks.append(_BlockSpec("D", P, d_from_full,
                             sp.csr_matrix((P * P, L * L)),
                             np.zeros(P * P), pair_labels))

    if conds.G:
        mD, mg, const = wick.term_maps(wick.g_matrix_terms(), "ijkl", L)
        g_labels = np.array([_sz(i) - _sz(j)
                             for i in range(L) for j in range(L)])
        blocks.append(_BlockSpec("G", L * L, mD.tocsr(), mg.tocsr(), const,
                                 g_labels))

    if conds.Q:
        mD, mg, const = wick.term_maps(wick.q_matrix_terms(), "ijkl", L)
        mD, mg, const = _row_compress(mD, mg, const, B2, B2)
        blocks.append(_BlockSpec("Q", P, mD.tocsr(), mg.tocsr(), const,
                                 pair_labels))

    if conds.T1:
        B3 = _triple_basis_sparse(L)
        mD, mg, const = wick.term_maps(wick.t1_terms(), "lmnijk", L)
        mD, mg, const = _row_compress(mD, mg, const, B3, B3)
        t1_labels = np.array([_sz(a) + _sz(b) + _sz(c)
                              for a in range(L) for b in range(a + 1, L)
                              for c in range(b + 1, L)])
        blocks.append(_BlockSpec("T1", B3.shape[1], mD.tocsr(), mg.tocsr(),
                                 const, t1_labels))

    if conds.T2 or conds.T2P:
        Bt2 = sp.kron(sp.identity(L, format="csr"), B2).tocsr()
        mD, mg, const = wick.term_maps(wick.t2_terms(), "lmnijk", L)
        t2D, t2g, t2c = _row_compress(mD, mg, const, Bt2, Bt2)
        nt2 = Bt2.shape[1]
        t2_labels = np.array([_sz(j) + _sz(k) - _sz(i)
                              for i in range(L) for (j, k) in pairs])
        # T2 is a principal submatrix of T2'; with T2' on, a separate T2
        # block would constrain nothing further, so it is only emitted alone
        if conds.T2 and not conds.T2P:
            blocks.append(_BlockSpec("T2", nt2, t2D, t2g, t2c, t2_labels))
        if conds.T2P:
            xD, xg, xc = wick.term_maps(wick.t2_prime_cross_terms(),
                                        "pijk", L)
            # column-compress the (p, triple) coupling rows
            KX = sp.kron(sp.identity(L, format="csr"), Bt2.T).tocsr()
            xD, xg, xc = KX @ xD, KX @ xg, KX @ xc
            dim = nt2 + L
            mapsD, mapsg, consts = [], [], []

            def place(rows_small, n_rows, n_cols, row_off, col_off,
                      mats):
                mD_s, mg_s, c_s = mats
                r = np.arange(n_rows * n_cols)
                rr, cc = divmod(r, n_cols)
                new_flat = (rr + row_off) * dim + (cc + col_off)
                Pm = sp.csr_matrix(
                    (np.ones(len(r)), (new_flat, r)),
                    shape=(dim * dim, n_rows * n_cols))
                mapsD.append(Pm @ mD_s)
                mapsg.append(Pm @ mg_s)
                consts.append(Pm @ c_s)

            place(None, nt2, nt2, 0, 0, (t2D, t2g, t2c))
            place(None, L, nt2, nt2, 0, (xD, xg, xc))
            # transpose coupling: entry (tau, p) = entry (p, tau)
            r = np.arange(L * nt2)
            pp, tt = divmod(r, nt2)
            new_flat = tt * dim + (nt2 + pp)
            Pm = sp.csr_matrix((np.ones(len(r)), (new_flat, r)),
                               shape=(dim * dim, L * nt2))
            mapsD.append(Pm @ xD)
            mapsg.append(Pm @ xg)
            consts.append(Pm @ xc)
            # corner = gamma
            r = np.arange(L * L)
            pp, qq = divmod(r, L)
            new_flat = (nt2 + pp) * dim + (nt2 + qq)
            Pm = sp.csr_matrix((np.ones(len(r)), (new_flat, r)),
                               shape=(dim * dim, L * L))
            mapsD.append(Pm @ sp.csr_matrix((L * L, L ** 4)))
            mapsg.append(Pm @ sp.identity(L * L, format="csr"))
            consts.append(np.zeros(dim * dim))

            t2p_labels = np.concatenate([t2_labels,
                                         [_sz(p) for p in range(L)]])
            blocks.append(_BlockSpec(
                "T2p", dim,
                sum(mapsD[1:], mapsD[0]).tocsr(),
                sum(mapsg[1:], mapsg[0]).tocsr(),
                sum(consts[1:], consts[0]),
                t2p_labels))
    return blocks, expand


# ---------------------------------------------------------------------------
# assembly
# ---------------------------------------------------------------------------

@dataclass
class AssemblyInfo:
    """Mapping between the SDP and the physical variational problem."""

    L: int
    N: int
    conditions: ConditionSet
    y_entries: list            # (r, s) pair-matrix coordinates per variable
    eliminated: int            # diagonal pair index fixed by the trace
    trace_value: float
    energy_coeff: np.ndarray   # E = energy_coeff . y + energy_offset
    energy_offset: float
    y_expand: sp.csr_matrix    # vec(Dc) = y_expand @ y + d_const
    d_const: np.ndarray
    spin_blocks: bool


def _resolve_spin_blocks(H: TwoBodyHamiltonian, conds: ConditionSet) -> bool:
    if conds.spin_blocks is not None:
        return conds.spin_blocks
    return H.metadata.get("model") == "hubbard"


def _check_sz_conserving(H: TwoBodyHamiltonian):
    L = H.L
    sz = np.array([_sz(i) for i in range(L)])
    hbad = np.abs(H.h[sz[:, None] != sz[None, :]]).max() if L else 0.0
    tot = sz[:, None, None, None] + sz[None, :, None, None]
    tot = tot - sz[None, None, :, None] - sz[None, None, None, :]
    vbad = np.abs(H.V[tot != 0]).max() if np.any(tot != 0) else 0.0
    if max(hbad, vbad) > 1e-12:
        raise ValueError("spin_blocks requested but the Hamiltonian does "
                         "not conserve Sz")


def assemble(H: TwoBodyHamiltonian, N: int, conds: ConditionSet
             ) -> tuple[SdpProblem, AssemblyInfo]:
    """Build the variational SDP for an N-electron sector.

    Returns the standard-form problem together with the bookkeeping needed
    to read the physical D matrix and energy back out of a solution.
    """
    L = H.L
    if not 2 <= N <= L - 2:
        raise ValueError(f"electron count N={N} outside [2, L-2]")
    use_spin = _resolve_spin_blocks(H, conds)
    if use_spin:
        _check_sz_conserving(H)

    pairs = algebra.pair_list(L)
    P = len(pairs)
    pair_labels = np.array([_sz(i) + _sz(j) for i, j in pairs])

    # free variables: upper triangle of the compressed D, optionally
    # restricted to Sz-diagonal sectors, one diagonal eliminated by trace
    if use_spin:
        entries = [(r, s) for r in range(P) for s in range(r, P)
                   if pair_labels[r] == pair_labels[s]]
    else:
        entries = [(r, s) for r in range(P) for s in range(r, P)]
    elim = P - 1
    entries = [(r, s) for (r, s) in entries if not (r == elim and s == elim)]
    ny = len(entries)
    trace_value = float(N * (N - 1))

    rows, cols, vals = [], [], []
    for col, (r, s) in enumerate(entries):
        rows.append(r * P + s)
        cols.append(col)
        vals.append(1.0)
        if r != s:
            rows.append(s * P + r)
            cols.append(col)
            vals.append(1.0)
        else:
            rows.append(elim * P + elim)
            cols.append(col)
            vals.append(-1.0)
    y_expand = sp.csr_matrix((vals, (rows, cols)), shape=(P * P, ny))
    d_const = np.zeros(P * P)
    d_const[elim * P + elim] = trace_value

    blocks, expand = _build_blocks(L, N, conds)
    gamma_map = _gamma_of_d4_map(L, N) @ expand  # vec(gamma) from vec(Dc)

    K = reduced_hamiltonian(H, N)
    Kc = algebra.compress_pair_matrix(K, L).ravel()
    energy_coeff = y_expand.T @ Kc
    energy_offset = float(Kc @ d_const)

    sdp_blocks = []
    objective = {}
    constraints = {}
    for spec in blocks:
        # affine map of the block from y: vec(block) = My @ y + cvec
        m_on_dc = (spec.map_d @ expand + spec.map_g @ gamma_map).tocsr()
        My = (m_on_dc @ y_expand).tocsr()
        cvec = spec.const + m_on_dc @ d_const
        if use_spin:
            sectors = {}
            for idx, lab in enumerate(spec.labels):
                sectors.setdefault(int(lab), []).append(idx)
            covered = np.zeros(spec.dim * spec.dim, dtype=bool)
            for lab in sorted(sectors):
                idx = np.array(sectors[lab])
                nb = len(idx)
                flat = (idx[:, None] * spec.dim + idx[None, :]).ravel()
                covered[flat] = True
                name = f"{spec.name}[{lab:+d}]"
                sdp_blocks.append((name, nb))
                objective[name] = cvec[flat].reshape(nb, nb)
                constraints[name] = (-My[flat]).T.tocsr()
            # cross-sector entries must be identically zero
            rest = ~covered
            leak = 0.0
            if rest.any():
                leak = max(np.abs(cvec[rest]).max() if rest.any() else 0.0,
                           abs(My[rest]).max() if My[rest].nnz else 0.0)
            if leak > 1e-10:
                raise AssertionError(
                    f"block {spec.name} leaks {leak:.1e} across Sz sectors")
        else:
            sdp_blocks.append((spec.name, spec.dim))
            objective[spec.name] = cvec.reshape(spec.dim, spec.dim)
            constraints[spec.name] = (-My).T.tocsr()

    problem = SdpProblem(sdp_blocks, objective, constraints,
                         -energy_coeff, presolved=True)
    info = AssemblyInfo(L, N, conds, entries, elim, trace_value,
                        energy_coeff, energy_offset, y_expand, d_const,
                        use_spin)
    return problem, info


def extract_d(info: AssemblyInfo, solution: SdpSolution) -> algebra.Rdm:
    """Read the compressed variational D matrix off the dual vector."""
    P = info.L * (info.L - 1) // 2
    vec = info.y_expand @ solution.y + info.d_const
    mat = vec.reshape(P, P)
    return algebra.Rdm("D", 0.5 * (mat + mat.T), info.L, info.N)


def variational_energy(info: AssemblyInfo, solution: SdpSolution) -> float:
    return float(info.energy_coeff @ solution.y + info.energy_offset)


def variational_ground_state(H: TwoBodyHamiltonian, N: int,
                             conds: ConditionSet = ConditionSet(),
                             cfg: SdpConfig | None = None
                             ) -> VariationalResult:
    """Solve the variational problem and derive G_var, Q_var from D_var."""
    problem, info = assemble(H, N, conds)
    solution = sdp_solve(problem, cfg or SdpConfig())
    if solution.status not in ("optimal", "max_iterations"):
        raise RuntimeError(f"variational solve failed: {solution.status} "
                           f"(residuals {solution.residuals})")
    D_var = extract_d(info, solution)
    gamma = algebra.one_rdm_from_d(D_var, N)
    G_var = algebra.g_from_d(D_var, gamma)
    Q_var = algebra.q_from_d(D_var, gamma, H.L)
    return VariationalResult(variational_energy(info, solution), D_var,
                             G_var, Q_var, gamma, conds, solution)


# ---------------------------------------------------------------------------
# T-condition evaluation (oracle-facing)
# ---------------------------------------------------------------------------

def t_condition_maps(D: algebra.Rdm, gamma: np.ndarray, L: int, N: int):
    """Evaluate the T1, T2 and T2' blocks at a given (D, gamma).

    Returns compressed dense matrices (antisymmetric triples for T1,
    (i,(j<k)) for T2, T2 plus a one-body row/column block for T2').
    """
    if D.L != L or gamma.shape != (L, L):
        raise ValueError("dimension mismatch")
    if N < 2:
        raise ValueError("need at least two electrons")
    D4 = algebra.expand_pair_matrix(D.matrix, L).reshape(L, L, L, L)
    B3 = _triple_basis_sparse(L).toarray()
    B2 = _pair_basis_sparse(L).toarray()
    Bt2 = np.kron(np.eye(L), B2)
    t1_full = wick.evaluate_terms(wick.t1_terms(), "lmnijk", L, D4, gamma)
    T1 = B3.T @ t1_full.reshape(L ** 3, L ** 3) @ B3
    t2_full = wick.evaluate_terms(wick.t2_terms(), "lmnijk", L, D4, gamma)
    T2 = Bt2.T @ t2_full.reshape(L ** 3, L ** 3) @ Bt2
    x_full = wick.evaluate_terms(wick.t2_prime_cross_terms(), "pijk", L,
                                 D4, gamma)
    X = x_full.reshape(L, L ** 3) @ Bt2
    T2P = np.block([[T2, X.T], [X, gamma]])
    return T1, T2, T2P


# ---------------------------------------------------------------------------
# RDM text format
# ---------------------------------------------------------------------------
#
#   RDM <kind> <L> <N>
#   i j k l value          (full-index convention, '#' comments allowed)

def dump_rdm(rdm: algebra.Rdm) -> str:
    L = rdm.L
    if rdm.kind == "G":
        full = rdm.matrix
    else:
        full = algebra.expand_pair_matrix(rdm.matrix, L)
    out = [f"RDM {rdm.kind} {L} {rdm.N}"]
    tensor = full.reshape(L, L, L, L)
    nz = np.argwhere(np.abs(tensor) > 1e-15)
    for i, j, k, l in nz:
        out.append(f"{i} {j} {k} {l} {float(tensor[i, j, k, l])!r}")
    return "\n".join(out) + "\n"


def load_rdm(text: str) -> algebra.Rdm:
    lines = [ln.split("#", 1)[0].strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln]
    if not lines or not lines[0].startswith("RDM"):
        raise ValueError("missing 'RDM <kind> <L> <N>' header")
    _, kind, L, N = lines[0].split()
    L, N = int(L), int(N)
    tensor = np.zeros((L, L, L, L))
    for ln in lines[1:]:
        tok = ln.split()
        if len(tok) != 5:
            raise ValueError(f"cannot parse RDM record {ln!r}")
        i, j, k, l = (int(t) for t in tok[:4])
        tensor[i, j, k, l] = float(tok[4])
    full = tensor.reshape(L * L, L * L)
    if kind == "G":
        return algebra.Rdm("G", full, L, N)
    comp = algebra.compress_pair_matrix(full, L)
    return algebra.Rdm(kind, comp, L, N)
