"""Sparse exact diagonalization (FCI) and exact RDM construction."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import algebra
from .fock import (FockSector, TwoBodyHamiltonian, Wavefunction, annihilate,
                   apply_operator_string, create, occupied_orbitals)

__all__ = [
    "SparseHamiltonian",
    "RdmSet",
    "ConvergenceError",
    "assemble_sector",
    "ground_state",
    "compute_rdms",
    "apply_eigenoperator",
    "expectation",
]

DENSE_CUTOFF = 2000


class ConvergenceError(RuntimeError):
    """Eigensolver failed to reach the residual target."""

    def __init__(self, message, best_residual=None):
        super().__init__(message)
        self.best_residual = best_residual


@dataclass
class SparseHamiltonian:
    sector: FockSector
    matrix: sp.csr_matrix

    @property
    def dimension(self) -> int:
        return self.sector.dimension


def assemble_sector(H: TwoBodyHamiltonian, N: int,
                    sz2=None) -> SparseHamiltonian:
    """Matrix elements <det'|H|det> over an (N, Sz) determinant sector.

    The two-body part is applied in pair form, H2 = sum_{i<j,k<l}
    V[i,j,k,l] a_i+ a_j+ a_l a_k, which is exact for antisymmetrized V.
    """
    L = H.L
    sector = FockSector(L, N, sz2)
    dim = sector.dimension
    if dim == 0:
        raise ValueError(f"empty sector N={N}, sz2={sz2} for L={L}")

    pairs = algebra.pair_list(L)
    # nonzero columns of the pair-compressed V for fast row generation
    Vp = np.zeros((len(pairs), len(pairs)))
    for a, (i, j) in enumerate(pairs):
        for b, (k, l) in enumerate(pairs):
            Vp[a, b] = H.V[i, j, k, l]
    col_entries = [
        [(a, Vp[a, b]) for a in range(len(pairs)) if Vp[a, b] != 0.0]
        for b in range(len(pairs))
    ]
    h_cols = [[(i, H.h[i, k]) for i in range(L) if H.h[i, k] != 0.0]
              for k in range(L)]

    rows, cols, vals = [], [], []
    for col, mask in enumerate(sector.determinants):
        occ = occupied_orbitals(mask, L)
        # one-body moves
        for k in occ:
            s1, m1 = annihilate(mask, k)
            for i, hik in h_cols[k]:
                r = create(m1, i)
                if r is None:
                    continue
                s2, m2 = r
                rows.append(sector.index[m2])
                cols.append(col)
                vals.append(hik * s1 * s2)
        # two-body moves over occupied pairs (k<l)
        for ai in range(len(occ)):
            for bi in range(ai + 1, len(occ)):
                k, l = occ[ai], occ[bi]
                s1, m1 = annihilate(mask, k)
                s2, m2 = annihilate(m1, l)
                for a, v in col_entries[_pair_idx(k, l, L)]:
                    i, j = pairs[a]
                    r = create(m2, j)
                    if r is None:
                        continue
                    s3, m3 = r
                    r = create(m3, i)
                    if r is None:
                        continue
                    s4, m4 = r
                    idx = sector.index.get(m4)
                    if idx is None:
                        continue
                    rows.append(idx)
                    cols.append(col)
                    vals.append(v * s1 * s2 * s3 * s4)
    mat = sp.coo_matrix((vals, (rows, cols)), shape=(dim, dim)).tocsr()
    asym = abs(mat - mat.T).max()
    if asym > 1e-10:
        raise AssertionError(f"sector Hamiltonian not symmetric ({asym:.1e})")
    return SparseHamiltonian(sector, mat)


def _pair_idx(i: int, j: int, L: int) -> int:
    """Index of the (i<j) pair in pair_list order."""
    return i * L - i * (i + 1) // 2 + (j - i - 1)


def ground_state(Hs: SparseHamiltonian, tol: float = 1e-10):
    """Lowest eigenpair of a sector Hamiltonian.

    Dense eigh below DENSE_CUTOFF, otherwise Lanczos (ARPACK) from a fixed
    deterministic start vector.  The returned wavefunction is normalized,
    has its largest-magnitude coefficient positive, and carries the
    degeneracy count of the lowest eigenvalue (gap threshold 1e-8).
    """
    if tol <= 0:
        raise ValueError("tolerance must be positive")
    dim = Hs.dimension
    mat = Hs.matrix
    if dim == 1:
        e = float(mat[0, 0])
        return e, Wavefunction(Hs.sector, np.ones(1))
    if dim <= DENSE_CUTOFF:
        vals, vecs = np.linalg.eigh(mat.toarray())
        e = float(vals[0])
        vec = vecs[:, 0]
        degeneracy = int(np.sum(vals < e + 1e-8))
    else:
        v0 = np.full(dim, 1.0 / np.sqrt(dim))
        k = min(4, dim - 1)
        try:
            vals, vecs = spla.eigsh(mat, k=k, which="SA", v0=v0,
                                    tol=tol, maxiter=5000)
        except spla.ArpackNoConvergence as err:
            best = None
            if err.eigenvalues is not None and len(err.eigenvalues):
                best = float(np.min(np.abs(
                    mat @ err.eigenvectors[:, 0]
                    - err.eigenvalues[0] * err.eigenvectors[:, 0]).max()))
            raise ConvergenceError(
                f"Lanczos failed to converge in sector dim={dim}", best)
        order = np.argsort(vals)
        e = float(vals[order[0]])
        vec = vecs[:, order[0]]
        degeneracy = int(np.sum(vals < e + 1e-8))
    vec = vec / np.linalg.norm(vec)
    if vec[int(np.argmax(np.abs(vec)))] < 0:
        vec = -vec
    resid = float(np.abs(mat @ vec - e * vec).max())
    if resid > max(tol, 1e-9) * max(1.0, abs(e)):
        raise ConvergenceError(f"residual {resid:.2e} above target", resid)
    return e, Wavefunction(Hs.sector, vec, degeneracy=degeneracy)


# ---------------------------------------------------------------------------
# RDMs from a wavefunction
# ---------------------------------------------------------------------------

class RdmSet(NamedTuple):
    D: algebra.Rdm
    G: algebra.Rdm
    Q: algebra.Rdm
    gamma: np.ndarray


def _pair_removal_matrix(psi: Wavefunction):
    """C[p, :] = sqrt(2) * (a_j a_i)|psi> for pair p = (i<j)."""
    L, N = psi.sector.L, psi.sector.N
    pairs = algebra.pair_list(L)
    target = FockSector(L, N - 2)
    C = np.zeros((len(pairs), target.dimension))
    s = np.sqrt(2.0)
    for det, c in zip(psi.sector.determinants, psi.coefficients):
        if c == 0.0:
            continue
        occ = occupied_orbitals(det, L)
        for ai in range(len(occ)):
            for bi in range(ai + 1, len(occ)):
                i, j = occ[ai], occ[bi]
                s1, m1 = annihilate(det, i)
                s2, m2 = annihilate(m1, j)
                # a_j a_i |det>: a_i first, then a_j
                C[_pair_idx(i, j, L), target.index[m2]] += s * s1 * s2 * c
    return C


def _pair_addition_matrix(psi: Wavefunction):
    """E[p, :] = sqrt(2) * (a_j+ a_i+)|psi> for pair p = (i<j)."""
    L, N = psi.sector.L, psi.sector.N
    pairs = algebra.pair_list(L)
    target = FockSector(L, N + 2)
    E = np.zeros((len(pairs), target.dimension))
    s = np.sqrt(2.0)
    for det, c in zip(psi.sector.determinants, psi.coefficients):
        if c == 0.0:
            continue
        for p, (i, j) in enumerate(pairs):
            r = create(det, i)
            if r is None:
                continue
            s1, m1 = r
            r = create(m1, j)
            if r is None:
                continue
            s2, m2 = r
            E[p, target.index[m2]] += s * s1 * s2 * c
    return E


def _particle_hole_matrix(psi: Wavefunction):
    """B[i*L+j, :] = (a_j+ a_i)|psi>."""
    L, N = psi.sector.L, psi.sector.N
    target = FockSector(L, N)
    B = np.zeros((L * L, target.dimension))
    for det, c in zip(psi.sector.determinants, psi.coefficients):
        if c == 0.0:
            continue
        for i in occupied_orbitals(det, L):
            s1, m1 = annihilate(det, i)
            for j in range(L):
                r = create(m1, j)
                if r is None:
                    continue
                s2, m2 = r
                B[i * L + j, target.index[m2]] += s1 * s2 * c
    return B


def compute_rdms(psi: Wavefunction) -> RdmSet:
    """Exact D, G, Q (and the 1-RDM) of a normalized sector state.

    D and Q come back in the compressed antisymmetric pair basis, G on the
    full L^2 index; all are Hermitian PSD up to roundoff.
    """
    if abs(psi.norm - 1.0) > 1e-8:
        raise ValueError(f"wavefunction norm {psi.norm} is not 1")
    L, N = psi.sector.L, psi.sector.N
    C = _pair_removal_matrix(psi)
    D = algebra.Rdm("D", C @ C.T, L, N)
    B = _particle_hole_matrix(psi)
    G = algebra.Rdm("G", B @ B.T, L, N)
    E = _pair_addition_matrix(psi)
    Q = algebra.Rdm("Q", E @ E.T, L, N)
    gamma = np.zeros((L, L))
    for det, c in zip(psi.sector.determinants, psi.coefficients):
        if c == 0.0:
            continue
        for i in occupied_orbitals(det, L):
            s1, m1 = annihilate(det, i)
            for k in range(L):
                r = create(m1, k)
                if r is None:
                    continue
                s2, m2 = r
                idx = psi.sector.index.get(m2)
                if idx is not None:
                    # gamma_ki += <psi| a_k+ a_i |psi> contribution
                    gamma[k, i] += s1 * s2 * c * psi.coefficients[idx]
    gamma = 0.5 * (gamma + gamma.T)
    return RdmSet(D, G, Q, gamma)


# ---------------------------------------------------------------------------
# eigenoperator action (oracle helpers)
# ---------------------------------------------------------------------------

def apply_eigenoperator(op: algebra.EigenOperator,
                        psi: Wavefunction) -> Wavefunction:
    """Apply d_n / g_n / q_n (sum over its coefficient matrix) to a state."""
    out = None
    for c, ops in op.operator_terms():
        term = apply_operator_string(ops, psi)
        if out is None:
            out = Wavefunction(term.sector, c * term.coefficients)
        else:
            out.coefficients += c * term.coefficients
    if out is None:
        delta = {"d": -2, "g": 0, "q": 2}[op.kind]
        sector = FockSector(psi.sector.L,
                            max(0, psi.sector.N + delta))
        out = Wavefunction(sector, np.zeros(sector.dimension))
    return out


def expectation(Hs: SparseHamiltonian, psi: Wavefunction) -> float:
    if psi.sector.determinants != Hs.sector.determinants:
        raise ValueError("state and Hamiltonian live in different sectors")
    return float(psi.coefficients @ (Hs.matrix @ psi.coefficients))
