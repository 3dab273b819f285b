"""Spin-orbital bases, determinant sectors, second-quantized operators and
two-body Hamiltonians.

Conventions used throughout the package:

* Spin orbitals are indexed 0..L-1.  For spin-structured bases the index is
  ``i = 2*spatial + spin`` with spin 0 = up, 1 = down.
* Determinants are occupation bitmasks (``int``); bit ``i`` set means spin
  orbital ``i`` is occupied.  The sign of a creation/annihilation at orbital
  ``i`` is ``(-1)**(number of occupied orbitals below i)``.
* Two-body integrals ``V[i,j,k,l]`` are fully antisymmetrized and enter the
  Hamiltonian as ``H2 = (1/4) sum_{ijkl} V[i,j,k,l] a_i+ a_j+ a_l a_k``,
  equivalently ``sum_{i<j,k<l} V[i,j,k,l] a_i+ a_j+ a_l a_k``.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "SpinOrbitalBasis",
    "FockSector",
    "Wavefunction",
    "TwoBodyHamiltonian",
    "InvalidModelError",
    "IntegralParseError",
    "annihilate",
    "create",
    "occupied_orbitals",
    "build_hubbard",
    "build_random_two_body",
    "load_integrals",
    "dump_integrals",
    "reduced_hamiltonian",
    "apply_operator_string",
]


class InvalidModelError(ValueError):
    """Model parameters outside their domain (e.g. too few sites)."""


class IntegralParseError(ValueError):
    """Malformed integral file; carries the offending line number."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


# ---------------------------------------------------------------------------
# basis / determinants
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SpinOrbitalBasis:
    """A set of L spin orbitals, optionally paired as (spatial, spin)."""

    L: int
    spin_structured: bool = True

    def __post_init__(self):
        if self.L < 2:
            raise ValueError("need at least two spin orbitals")
        if self.spin_structured and self.L % 2:
            raise ValueError("spin-structured basis requires even L")

    @property
    def spatial_count(self) -> int:
        if not self.spin_structured:
            raise ValueError("basis has no spatial structure")
        return self.L // 2

    def spin_label(self, i):
        """'up'/'down' for spin-structured bases, None otherwise."""
        if not self.spin_structured:
            return None
        return "up" if i % 2 == 0 else "down"

    def sz(self, i):
        """Spin projection of orbital i in units of 1/2 (so +1 or -1)."""
        if not self.spin_structured:
            return 0
        return 1 if i % 2 == 0 else -1


def occupied_orbitals(mask: int, L: int):
    """Ascending list of occupied orbital indices."""
    return [i for i in range(L) if (mask >> i) & 1]


def _parity_below(mask: int, i: int) -> int:
    """(-1)**(# occupied orbitals with index < i)."""
    return -1 if bin(mask & ((1 << i) - 1)).count("1") % 2 else 1


def annihilate(mask: int, i: int):
    """Apply a_i to a determinant. Returns (sign, new_mask) or None."""
    if not (mask >> i) & 1:
        return None
    return _parity_below(mask, i), mask & ~(1 << i)


def create(mask: int, i: int):
    """Apply a_i+ to a determinant. Returns (sign, new_mask) or None."""
    if (mask >> i) & 1:
        return None
    return _parity_below(mask, i), mask | (1 << i)


def _sz_of_mask(mask: int, L: int) -> int:
    """Twice the spin projection of a determinant (up = even orbitals)."""
    up = sum(1 for i in range(0, L, 2) if (mask >> i) & 1)
    down = sum(1 for i in range(1, L, 2) if (mask >> i) & 1)
    return up - down


class FockSector:
    """Ordered determinant basis of the (N, Sz) block of Fock space.

    ``sz2`` is twice the spin projection (integer), or None for no
    restriction.  Determinant order is ascending bitmask order.
    """

    def __init__(self, L: int, N: int, sz2=None):
        if not 0 <= N <= L:
            raise ValueError(f"bad electron count N={N} for L={L}")
        self.L = L
        self.N = N
        self.sz2 = sz2
        dets = []
        for occ in itertools.combinations(range(L), N):
            mask = 0
            for i in occ:
                mask |= 1 << i
            if sz2 is None or _sz_of_mask(mask, L) == sz2:
                dets.append(mask)
        dets.sort()
        self.determinants = dets
        self.index = {d: k for k, d in enumerate(dets)}

    @property
    def dimension(self) -> int:
        return len(self.determinants)

    def __repr__(self):
        return (f"FockSector(L={self.L}, N={self.N}, sz2={self.sz2}, "
                f"dim={self.dimension})")


@dataclass
class Wavefunction:
    """Coefficient vector over the determinants of a FockSector."""

    sector: FockSector
    coefficients: np.ndarray
    degeneracy: int = 1

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=float)
        if self.coefficients.shape != (self.sector.dimension,):
            raise ValueError("coefficient vector does not match sector")

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.coefficients))

    def normalized(self) -> "Wavefunction":
        return Wavefunction(self.sector, self.coefficients / self.norm,
                            self.degeneracy)


# ---------------------------------------------------------------------------
# Hamiltonians
# ---------------------------------------------------------------------------

@dataclass
class TwoBodyHamiltonian:
    """One- and two-electron integrals over L spin orbitals.

    ``h`` is L x L Hermitian; ``V`` is the antisymmetrized two-body tensor
    with V[i,j,k,l] = -V[j,i,k,l] = -V[i,j,l,k] = V[k,l,i,j].
    """

    h: np.ndarray
    V: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.h = np.asarray(self.h, dtype=float)
        self.V = np.asarray(self.V, dtype=float)
        L = self.h.shape[0]
        if self.h.shape != (L, L) or self.V.shape != (L, L, L, L):
            raise ValueError("inconsistent integral shapes")
        self.validate()

    @property
    def L(self) -> int:
        return self.h.shape[0]

    def validate(self, tol=1e-10):
        if np.abs(self.h - self.h.T).max() > tol:
            raise ValueError("one-body integrals not Hermitian")
        checks = (
            self.V + self.V.transpose(1, 0, 2, 3),
            self.V + self.V.transpose(0, 1, 3, 2),
            self.V - self.V.transpose(2, 3, 0, 1),
        )
        for c in checks:
            if np.abs(c).max() > tol:
                raise ValueError("two-body integrals violate antisymmetry")


def _antisymmetrize(V: np.ndarray) -> np.ndarray:
    """Project a raw two-body tensor onto the required symmetry class."""
    V = 0.5 * (V + V.transpose(2, 3, 0, 1))
    V = 0.25 * (V - V.transpose(1, 0, 2, 3) - V.transpose(0, 1, 3, 2)
                + V.transpose(1, 0, 3, 2))
    return V


def build_hubbard(sites: int, t: float, U: float,
                  periodic: bool = True) -> TwoBodyHamiltonian:
    """1D Hubbard chain: hopping -t on nearest-neighbour bonds plus onsite U.

    L = 2*sites spin orbitals, orbital 2s = (site s, up), 2s+1 = (site s,
    down).  The ring closes only when ``periodic`` is set.
    """
    if sites < 2:
        raise InvalidModelError("Hubbard model needs at least 2 sites")
    L = 2 * sites
    h = np.zeros((L, L))
    bonds = [(s, s + 1) for s in range(sites - 1)]
    if periodic and sites > 2:
        bonds.append((sites - 1, 0))
    elif periodic and sites == 2:
        bonds = [(0, 1)]  # avoid double-counting the single bond of a 2-ring
    for a, b in bonds:
        for spin in (0, 1):
            i, j = 2 * a + spin, 2 * b + spin
            h[i, j] = h[j, i] = -t
    V = np.zeros((L, L, L, L))
    for s in range(sites):
        up, dn = 2 * s, 2 * s + 1
        V[up, dn, up, dn] = U
        V[dn, up, up, dn] = -U
        V[up, dn, dn, up] = -U
        V[dn, up, dn, up] = U
    meta = {"model": "hubbard", "sites": sites, "t": t, "U": U,
            "periodic": periodic}
    return TwoBodyHamiltonian(h, V, meta)


def build_random_two_body(spatial_count: int, seed: int) -> TwoBodyHamiltonian:
    """Spin-free random Hamiltonian with uniform [0,1) spatial integrals.

    Spatial one-body and chemist-notation two-body elements are drawn
    uniformly, symmetrized to the real-integral symmetry classes, and
    expanded over L = 2*spatial_count spin orbitals.  Deterministic per seed.
    """
    if spatial_count < 1:
        raise InvalidModelError("need at least one spatial orbital")
    M = spatial_count
    rng = np.random.default_rng(seed)
    h0 = rng.random((M, M))
    h0 = 0.5 * (h0 + h0.T)
    g = rng.random((M, M, M, M))  # chemist (pq|rs)
    g = (g + g.transpose(1, 0, 2, 3) + g.transpose(0, 1, 3, 2)
         + g.transpose(1, 0, 3, 2) + g.transpose(2, 3, 0, 1)
         + g.transpose(3, 2, 0, 1) + g.transpose(2, 3, 1, 0)
         + g.transpose(3, 2, 1, 0)) / 8.0

    L = 2 * M
    h = np.zeros((L, L))
    for sp in (0, 1):
        h[sp::2, sp::2] = h0
    # physicist <ij|kl> over spin orbitals, then antisymmetrize
    W = np.zeros((L, L, L, L))
    for si in (0, 1):
        for sj in (0, 1):
            W[si::2, sj::2, si::2, sj::2] = g.transpose(0, 2, 1, 3)
    V = W - W.transpose(0, 1, 3, 2)
    meta = {"model": "random", "spatial_count": M, "seed": seed}
    return TwoBodyHamiltonian(h, _antisymmetrize(V), meta)


# ---------------------------------------------------------------------------
# integral file format
# ---------------------------------------------------------------------------
#
#   header:  L <int> N <int>
#   then:    1B i k value
#            2B i j k l value
#   0-based indices, real decimal values, '#' comments and blank lines
#   ignored.  2B entries are antisymmetrized on ingestion.

def load_integrals(stream) -> TwoBodyHamiltonian:
    """Parse the plain-text integral format into a Hamiltonian."""
    if isinstance(stream, str):
        lines = stream.splitlines()
    else:
        lines = stream.read().splitlines()
    L = N = None
    h = V = None
    for lineno, raw in enumerate(lines, start=1):
        text = raw.split("#", 1)[0].strip()
        if not text:
            continue
        tokens = text.split()
        if L is None:
            m = re.fullmatch(r"L\s+(\d+)\s+N\s+(\d+)", text)
            if not m:
                raise IntegralParseError("expected header 'L <int> N <int>'",
                                         lineno)
            L, N = int(m.group(1)), int(m.group(2))
            if L < 2:
                raise IntegralParseError("L must be at least 2", lineno)
            h = np.zeros((L, L))
            V = np.zeros((L, L, L, L))
            continue
        kind = tokens[0]
        try:
            if kind == "1B":
                if len(tokens) != 4:
                    raise ValueError
                i, k = int(tokens[1]), int(tokens[2])
                h[i, k] += float(tokens[3])
            elif kind == "2B":
                if len(tokens) != 6:
                    raise ValueError
                i, j, k, l = (int(t) for t in tokens[1:5])
                V[i, j, k, l] += float(tokens[5])
            else:
                raise ValueError
        except (ValueError, IndexError):
            raise IntegralParseError(f"cannot parse record {text!r}", lineno)
    if L is None:
        raise IntegralParseError("missing header line")
    if np.abs(h - h.T).max() > 1e-12:
        raise IntegralParseError("one-body integrals not Hermitian "
                                 "(asymmetry beyond 1e-12)")
    sym_err = np.abs(V - V.transpose(2, 3, 0, 1)).max()
    if sym_err > 1e-12:
        raise IntegralParseError("two-body integrals not Hermitian "
                                 f"(asymmetry {sym_err:.2e})")
    h = 0.5 * (h + h.T)
    meta = {"model": "integral-file", "N": N}
    return TwoBodyHamiltonian(h, _antisymmetrize(V), meta)


def dump_integrals(H: TwoBodyHamiltonian, N: int) -> str:
    """Serialize a Hamiltonian in the integral-file format (round-trips)."""
    out = [f"L {H.L} N {N}"]
    for i in range(H.L):
        for k in range(i, H.L):
            if H.h[i, k] != 0.0:
                out.append(f"1B {i} {k} {H.h[i, k]!r}")
                if k != i:
                    out.append(f"1B {k} {i} {H.h[k, i]!r}")
    for i in range(H.L):
        for j in range(H.L):
            for k in range(H.L):
                for l in range(H.L):
                    if H.V[i, j, k, l] != 0.0:
                        out.append(f"2B {i} {j} {k} {l} {H.V[i, j, k, l]!r}")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# reduced Hamiltonian
# ---------------------------------------------------------------------------

def reduced_hamiltonian(H: TwoBodyHamiltonian, N: int) -> np.ndarray:
    """Two-body coefficient matrix K (L^2 x L^2) with tr(K D) = <H>.

    The one-body part is folded with weight 1/(N-1) and antisymmetrized so
    that the identity holds exactly against the full-index D of an
    N-electron state.
    """
    if N < 2:
        raise ValueError("reduced Hamiltonian undefined for N < 2")
    L = H.L
    eye = np.eye(L)
    K = 0.25 * H.V.copy()
    fold = np.einsum("ik,jl->ijkl", H.h, eye)
    fold = 0.25 * (fold - fold.transpose(1, 0, 2, 3)
                   - fold.transpose(0, 1, 3, 2) + fold.transpose(1, 0, 3, 2))
    K += fold / (N - 1)
    return K.reshape(L * L, L * L)


# ---------------------------------------------------------------------------
# operator strings (the brute-force oracle)
# ---------------------------------------------------------------------------

def apply_operator_string(ops, psi: Wavefunction) -> Wavefunction:
    """Apply a product of creation/annihilation operators to a state.

    ``ops`` lists (kind, orbital) pairs in operator order (leftmost factor
    first); the rightmost factor acts on ``psi`` first.  Kinds are 'create'
    and 'annihilate' (abbreviations '+'/'-' accepted).  The result lives in
    the particle-number sector reached by the string; annihilating an empty
    orbital contributes the zero vector.
    """
    L = psi.sector.L
    n_out = psi.sector.N
    parsed = []
    for kind, orb in ops:
        if kind in ("create", "+"):
            is_create = True
        elif kind in ("annihilate", "-"):
            is_create = False
        else:
            raise ValueError(f"unknown operator kind {kind!r}")
        if not 0 <= orb < L:
            raise ValueError(f"orbital index {orb} out of range")
        parsed.append((is_create, orb))
    for is_create, _ in parsed:
        n_out += 1 if is_create else -1

    amp = {d: c for d, c in zip(psi.sector.determinants, psi.coefficients)
           if c != 0.0}
    for is_create, orb in reversed(parsed):
        nxt = {}
        op = create if is_create else annihilate
        for mask, c in amp.items():
            r = op(mask, orb)
            if r is None:
                continue
            sign, new = r
            nxt[new] = nxt.get(new, 0.0) + sign * c
        amp = nxt

    if not 0 <= n_out <= L:
        sector = FockSector(L, max(0, min(L, n_out)))
        return Wavefunction(sector, np.zeros(sector.dimension))
    sector = FockSector(L, n_out)
    vec = np.zeros(sector.dimension)
    for mask, c in amp.items():
        vec[sector.index[mask]] = c
    return Wavefunction(sector, vec)
