"""RDM containers, eigendecomposition, eigenoperators and their commutator
structure coefficients.

Pair-index conventions:

* The particle-particle (D) and hole-hole (Q) matrices are antisymmetric in
  both index pairs; they are stored in the compressed antisymmetric basis
  whose element for the pair p = (i<j) is ``(e_ij - e_ji)/sqrt(2)`` in the
  full L^2 space.  Compressed eigenvectors therefore expand to unit-norm
  antisymmetric L x L coefficient matrices, and the compressed trace equals
  the full-index trace (N(N-1) for D).
* The particle-hole (G) matrix is kept on the full L^2 index, flattened in C
  order (row index i*L + j for the operator pair (i, j)).

Eigenoperators follow the sign conventions

    d_n = sum_ij u^n_ij a_j a_i,   g_n = sum_ij v^n_ij a_j+ a_i,
    q_n = sum_ij w^n_ij a_j+ a_i+,

so that <d_m+ d_n> = lambda^D_m delta_mn for the eigenvectors of D, and
likewise for G and Q.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Rdm",
    "EigenSystem",
    "EigenOperator",
    "CommutatorTensor",
    "pair_list",
    "pair_index_map",
    "compress_pair_matrix",
    "expand_pair_matrix",
    "expand_pair_vector",
    "compress_pair_vector",
    "eigendecompose",
    "eigenoperators",
    "commutator_coefficients",
    "commutator_lengths",
    "commutator_coefficient_matrix",
    "one_rdm_from_d",
    "g_from_d",
    "q_from_d",
]

NUMERICAL_ZERO = 1e-9

# commutator family -> (kind of ops1, kind of ops2, target kind, length name)
FAMILIES = {
    "gg": ("g", "g", "g", "alpha"),
    "qd": ("q", "d", "g", "beta"),
    "gd": ("g", "d", "d", "gamma"),
    "gq": ("g", "q", "q", "zeta"),
}


# ---------------------------------------------------------------------------
# compressed antisymmetric pair basis
# ---------------------------------------------------------------------------

def pair_list(L: int):
    """Ordered (i<j) pairs indexing the compressed antisymmetric basis."""
    return [(i, j) for i in range(L) for j in range(i + 1, L)]

def pair_index_map(L: int):
    return {p: n for n, p in enumerate(pair_list(L))}


def expand_pair_vector(vec, L: int) -> np.ndarray:
    """Compressed pair vector -> antisymmetric L x L coefficient matrix."""
    m = np.zeros((L, L))
    inv = 1.0 / np.sqrt(2.0)
    for n, (i, j) in enumerate(pair_list(L)):
        m[i, j] = vec[n] * inv
        m[j, i] = -vec[n] * inv
    return m


def compress_pair_vector(mat: np.ndarray) -> np.ndarray:
    """Antisymmetric L x L matrix -> compressed pair vector."""
    L = mat.shape[0]
    out = np.empty(L * (L - 1) // 2)
    s = np.sqrt(2.0)
    for n, (i, j) in enumerate(pair_list(L)):
        out[n] = 0.5 * (mat[i, j] - mat[j, i]) * s
    return out


def _pair_basis(L: int) -> np.ndarray:
    """Dense L^2 x P matrix whose columns are the compressed basis vectors."""
    P = L * (L - 1) // 2
    B = np.zeros((L * L, P))
    inv = 1.0 / np.sqrt(2.0)
    for n, (i, j) in enumerate(pair_list(L)):
        B[i * L + j, n] = inv
        B[j * L + i, n] = -inv
    return B


def compress_pair_matrix(full: np.ndarray, L: int) -> np.ndarray:
    """Full L^2 x L^2 antisymmetric-sector matrix -> P x P compressed."""
    B = _pair_basis(L)
    return B.T @ full @ B


def expand_pair_matrix(comp: np.ndarray, L: int) -> np.ndarray:
    """Compressed P x P matrix -> full L^2 x L^2 matrix."""
    B = _pair_basis(L)
    return B @ comp @ B.T


# ---------------------------------------------------------------------------
# containers
# ---------------------------------------------------------------------------

@dataclass
class Rdm:
    """A Hermitian PSD reduced density matrix on pair space.

    ``matrix`` is compressed (P x P) for kinds 'D'/'Q' and full (L^2 x L^2)
    for kind 'G'.
    """

    kind: str
    matrix: np.ndarray
    L: int
    N: int

    def __post_init__(self):
        if self.kind not in ("D", "G", "Q"):
            raise ValueError(f"unknown RDM kind {self.kind!r}")
        self.matrix = np.asarray(self.matrix, dtype=float)
        P = self.L * (self.L - 1) // 2
        want = self.L * self.L if self.kind == "G" else P
        if self.matrix.shape != (want, want):
            raise ValueError(f"{self.kind} matrix has shape "
                             f"{self.matrix.shape}, expected {(want, want)}")
        herm = np.abs(self.matrix - self.matrix.T).max()
        if herm > 1e-12 * max(1.0, np.abs(self.matrix).max()):
            raise ValueError(f"{self.kind} matrix not Hermitian "
                             f"(asymmetry {herm:.2e})")
        self.matrix = 0.5 * (self.matrix + self.matrix.T)

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]


@dataclass
class EigenSystem:
    """Ascending eigenvalues and orthonormal eigenvectors of an Rdm.

    ``vectors[:, n]`` is the n-th eigenvector in the native basis of the
    matrix (compressed for D/Q, full for G).  ``coefficient_matrix(n)``
    returns it as an L x L operator coefficient matrix.
    """

    kind: str
    eigenvalues: np.ndarray
    vectors: np.ndarray
    L: int
    N: int

    def coefficient_matrix(self, n: int) -> np.ndarray:
        v = self.vectors[:, n]
        if self.kind == "G":
            return v.reshape(self.L, self.L)
        return expand_pair_vector(v, self.L)

    def coefficient_matrices(self) -> np.ndarray:
        """All eigenvectors stacked as an (n_eig, L, L) array."""
        n = self.vectors.shape[1]
        return np.stack([self.coefficient_matrix(k) for k in range(n)])

    @property
    def dimension(self) -> int:
        return len(self.eigenvalues)


@dataclass
class EigenOperator:
    """An RDM eigenvector reinterpreted as a pair operator."""

    kind: str  # 'd', 'g' or 'q'
    coeff: np.ndarray  # L x L coefficient matrix
    eigenvalue: float
    index: int

    def __post_init__(self):
        if self.kind not in ("d", "g", "q"):
            raise ValueError(f"unknown eigenoperator kind {self.kind!r}")
        self.coeff = np.asarray(self.coeff, dtype=float)
        if self.kind in ("d", "q"):
            skew = np.abs(self.coeff + self.coeff.T).max()
            if skew > 1e-10:
                raise ValueError(f"{self.kind} coefficients not antisymmetric")

    def operator_terms(self):
        """Nonzero (value, ops) pairs for apply_operator_string."""
        L = self.coeff.shape[0]
        terms = []
        for i in range(L):
            for j in range(L):
                c = self.coeff[i, j]
                if c == 0.0:
                    continue
                if self.kind == "d":
                    ops = (("annihilate", j), ("annihilate", i))
                elif self.kind == "g":
                    ops = (("create", j), ("annihilate", i))
                else:
                    ops = (("create", j), ("create", i))
                terms.append((c, ops))
        return terms


@dataclass
class CommutatorTensor:
    """Structure coefficients of eigenoperator commutators.

    ``values[m, n, t]`` is the coefficient of the t-th target eigenoperator
    in the expansion of the commutator of ops1[m] with ops2[n].
    """

    family: str
    values: np.ndarray

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown commutator family {self.family!r}")

    @property
    def length_name(self) -> str:
        return FAMILIES[self.family][3]


# ---------------------------------------------------------------------------
# eigendecomposition
# ---------------------------------------------------------------------------

def _fix_phases(vectors: np.ndarray) -> np.ndarray:
    """Make the largest-magnitude component of each column real-positive."""
    out = vectors.copy()
    for n in range(out.shape[1]):
        col = out[:, n]
        k = int(np.argmax(np.abs(col)))
        if col[k] < 0:
            out[:, n] = -col
    return out


def eigendecompose(rdm: Rdm) -> EigenSystem:
    """Ascending eigendecomposition with a deterministic phase convention."""
    vals, vecs = np.linalg.eigh(rdm.matrix)
    order = np.argsort(vals, kind="stable")
    vals = vals[order]
    vecs = _fix_phases(vecs[:, order])
    return EigenSystem(rdm.kind, vals, vecs, rdm.L, rdm.N)


def eigenoperators(es: EigenSystem, kind=None):
    """EigenOperator list for an eigensystem (kind inferred when omitted)."""
    want = {"D": "d", "G": "g", "Q": "q"}[es.kind]
    if kind is not None and kind != want:
        raise ValueError(f"eigensystem of kind {es.kind} yields "
                         f"{want!r} operators, not {kind!r}")
    mats = es.coefficient_matrices()
    return [EigenOperator(want, mats[n], float(es.eigenvalues[n]), n)
            for n in range(es.dimension)]


# ---------------------------------------------------------------------------
# commutator structure coefficients
# ---------------------------------------------------------------------------

def commutator_coefficient_matrix(family: str, c1: np.ndarray,
                                  c2: np.ndarray, N=None) -> np.ndarray:
    """Coefficient matrix of the commutator of two pair operators.

    For 'gg' the result multiplies a_j+ a_i, for 'gd' a_j a_i, for 'gq'
    a_j+ a_i+ and for 'qd' a_j+ a_i (valid on the N-electron sector only,
    hence the N argument there).
    """
    if family == "gg":
        return c2 @ c1 - c1 @ c2
    if family == "gd":
        return -2.0 * (c1 @ c2)
    if family == "gq":
        return 2.0 * (c2 @ c1)
    if family == "qd":
        if N is None or N < 1:
            raise ValueError("qd commutators need the electron count N >= 1")
        prod = c2 @ c1
        return 4.0 * (prod - (np.trace(prod) / (2.0 * N)) * np.eye(len(prod)))
    raise ValueError(f"unknown commutator family {family!r}")


def _coeff_stack(ops, kind):
    for op in ops:
        if op.kind != kind:
            raise ValueError(f"expected eigenoperators of kind {kind!r}, "
                             f"got {op.kind!r}")
    return np.stack([op.coeff for op in ops])


def commutator_coefficients(family: str, ops1, ops2, target_basis,
                            N=None) -> CommutatorTensor:
    """Expansion coefficients of [ops1[m], ops2[n]] in a target eigenbasis.

    Families: 'gg' ([g,g] -> g), 'gd' ([g,d] -> d), 'gq' ([g,q] -> q) and
    'qd' ([q,d] -> g, N-electron sector).  ``target_basis`` is a sequence of
    EigenOperators of the family's target kind; when it is a complete basis,
    sum_t |values[m,n,t]|^2 recovers the squared norm of the (projected)
    commutator coefficient matrix.
    """
    if family not in FAMILIES:
        raise ValueError(f"unknown commutator family {family!r}")
    k1, k2, kt, _ = FAMILIES[family]
    A = _coeff_stack(ops1, k1)
    B = _coeff_stack(ops2, k2)
    T = _coeff_stack(target_basis, kt)
    if family == "gg":
        bar = np.einsum("nab,mbc->mnac", B, A, optimize=True) \
            - np.einsum("mab,nbc->mnac", A, B, optimize=True)
    elif family == "gd":
        bar = -2.0 * np.einsum("mab,nbc->mnac", A, B, optimize=True)
    elif family == "gq":
        bar = 2.0 * np.einsum("nab,mbc->mnac", B, A, optimize=True)
    else:  # qd
        if N is None or N < 1:
            raise ValueError("qd commutators need the electron count N >= 1")
        prod = np.einsum("nab,mbc->mnac", B, A, optimize=True)
        tr = np.trace(prod, axis1=2, axis2=3)
        L = A.shape[1]
        bar = 4.0 * (prod - tr[:, :, None, None] * np.eye(L) / (2.0 * N))
    values = np.einsum("mnab,tab->mnt", bar, T, optimize=True)
    return CommutatorTensor(family, values)


def commutator_lengths(tensor: CommutatorTensor,
                       target_eigenvalues) -> np.ndarray:
    """Fock-space norms of the commutators encoded by a tensor.

    ``target_eigenvalues[t]`` belongs to the t-th target eigenoperator.
    Eigenvalues in [-1e-9, 0) are treated as numerical zeros; anything more
    negative is an invalid RDM.
    """
    lam = np.asarray(target_eigenvalues, dtype=float)
    if lam.shape != (tensor.values.shape[2],):
        raise ValueError("eigenvalue list does not match the target basis")
    if lam.min() < -NUMERICAL_ZERO:
        raise ValueError(f"eigenvalue {lam.min():.3e} below the numerical "
                         "zero window; RDM is not PSD")
    lam = np.clip(lam, 0.0, None)
    sq = np.einsum("mnt,t->mn", np.abs(tensor.values) ** 2, lam)
    return np.sqrt(np.clip(sq, 0.0, None))


# ---------------------------------------------------------------------------
# interconversion maps
# ---------------------------------------------------------------------------

def _full_tensor(rdm: Rdm) -> np.ndarray:
    L = rdm.L
    return expand_pair_matrix(rdm.matrix, L).reshape(L, L, L, L)


def one_rdm_from_d(D: Rdm, N: int) -> np.ndarray:
    """Contract the 2-RDM to the 1-RDM: gamma_ik = sum_j D_ijkj / (N-1)."""
    if N < 2:
        raise ValueError("1-RDM contraction undefined for N < 2")
    Dt = _full_tensor(D)
    gamma = np.einsum("ijkj->ik", Dt) / (N - 1)
    return 0.5 * (gamma + gamma.T)


def g_from_d(D: Rdm, gamma: np.ndarray) -> Rdm:
    """Particle-hole matrix from (D, gamma) by normal ordering:
    G_ijkl = delta_jl gamma_ik - D_il,kj."""
    L = D.L
    if gamma.shape != (L, L):
        raise ValueError("gamma dimension mismatch")
    Dt = _full_tensor(D)
    G = np.einsum("ik,jl->ijkl", gamma, np.eye(L)) - Dt.transpose(0, 3, 2, 1)
    return Rdm("G", G.reshape(L * L, L * L), L, D.N)


def q_from_d(D: Rdm, gamma: np.ndarray, L: int) -> Rdm:
    """Hole-hole matrix from (D, gamma) by normal ordering."""
    if gamma.shape != (L, L) or D.L != L:
        raise ValueError("dimension mismatch")
    Dt = _full_tensor(D)
    eye = np.eye(L)
    Q = (np.einsum("ik,jl->ijkl", eye, eye)
         - np.einsum("il,jk->ijkl", eye, eye)
         - np.einsum("jl,ki->ijkl", eye, gamma)
         + np.einsum("jk,li->ijkl", eye, gamma)
         + np.einsum("il,kj->ijkl", eye, gamma)
         - np.einsum("ik,lj->ijkl", eye, gamma)
         + Dt.transpose(2, 3, 0, 1).transpose(1, 0, 3, 2))
    comp = compress_pair_matrix(Q.reshape(L * L, L * L), L)
    return Rdm("Q", comp, L, D.N)
