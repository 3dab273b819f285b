"""Null-space closure tests, violation descriptors, triangle-inequality
eigenspace conditions and the null-space energy projection.

The equality constraints say: commutators of null eigenoperators must again
annihilate the state, so the commutator lengths (alpha, beta, gamma, zeta)
vanish on null-pair indices for any N-representable RDM family.  The
inequality conditions bound those lengths over the whole eigenspaces using
sector-wise eigenvalue upper bounds.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from . import algebra
from .algebra import FAMILIES, EigenSystem

__all__ = [
    "NullSpace",
    "BoundSet",
    "Descriptors",
    "ViolationReport",
    "null_space",
    "closure_residual",
    "closure_grid",
    "descriptors",
    "length_grid",
    "inequality_conditions",
    "default_bounds",
    "delta_e_null",
    "projection_lengths",
    "build_report",
]

DEFAULT_NULL_TOL = 1e-9

# which null spaces feed each family's (row, col) indices
_FAMILY_NULLS = {"gg": ("G", "G"), "qd": ("Q", "D"),
                 "gd": ("G", "D"), "gq": ("G", "Q")}


@dataclass(frozen=True)
class NullSpace:
    kind: str
    indices: tuple
    tol: float

    @property
    def dimension(self) -> int:
        return len(self.indices)


def null_space(es: EigenSystem, tol: float = DEFAULT_NULL_TOL) -> NullSpace:
    """Indices of eigenvalues inside the numerical-zero window (-tol, tol)."""
    idx = tuple(int(i) for i in np.nonzero(np.abs(es.eigenvalues) < tol)[0])
    return NullSpace(es.kind, idx, tol)


# ---------------------------------------------------------------------------
# eigenvalue bounds
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BoundSet:
    """Sector-wise eigenvalue upper bounds entering the inequalities.

    Names encode the matrix and the electron count of the intermediate
    state the operator acts on, e.g. ``d_np2`` bounds pair-annihilation
    quadratic forms on (N+2)-electron states.
    """

    d_np2: float
    q_nm2: float
    g_n: float
    g_nm2: float
    g_np2: float
    d_n: float
    q_n: float

    def __post_init__(self):
        for name, v in asdict(self).items():
            if v <= 0:
                raise ValueError(f"bound {name} must be positive, got {v}")


def default_bounds(L: int, N: int) -> BoundSet:
    """Default bounds: (N+2)/2 and (L-N+2)/2 for the beta condition
    (tight at half filling), M for the particle-hole sectors, and the
    extreme-pairing values M(L-M+2)/L, (L-M)(M+2)/L for the N-electron
    D/Q sectors.  All overridable by passing an explicit BoundSet.
    """
    if not 2 <= N <= L - 2:
        raise ValueError(f"electron count N={N} outside [2, L-2]")
    return BoundSet(
        d_np2=(N + 2) / 2.0,
        q_nm2=(L - N + 2) / 2.0,
        g_n=float(N),
        g_nm2=float(N - 2) if N > 2 else 1.0,
        g_np2=float(N + 2),
        d_n=N * (L - N + 2) / L,
        q_n=(L - N) * (N + 2) / L,
    )


# ---------------------------------------------------------------------------
# closure residuals on null pairs
# ---------------------------------------------------------------------------

def _ops_subset(es: EigenSystem, indices):
    ops = algebra.eigenoperators(es)
    return [ops[i] for i in indices]


def _target_system(family, systems):
    kt = FAMILIES[family][2].upper()
    return systems[kt]


def length_grid(family: str, systems: dict, rows, cols, N: int) -> np.ndarray:
    """Commutator lengths for arbitrary (row, col) eigenindex subsets.

    ``systems`` maps 'D'/'G'/'Q' to EigenSystems of one consistent RDM set;
    rows and cols index the family's first and second operator kinds.
    """
    k1, k2, kt, _ = FAMILIES[family]
    es1 = systems[k1.upper()]
    es2 = systems[k2.upper()]
    target = _target_system(family, systems)
    ops1 = _ops_subset(es1, rows)
    ops2 = _ops_subset(es2, cols)
    basis = algebra.eigenoperators(target)
    tensor = algebra.commutator_coefficients(family, ops1, ops2, basis, N=N)
    return algebra.commutator_lengths(tensor, target.eigenvalues)


def closure_grid(family: str, systems: dict, nulls: dict,
                 N: int) -> np.ndarray:
    """Null-pair commutator lengths; zero for N-representable families."""
    r_kind, c_kind = _FAMILY_NULLS[family]
    rows = nulls[r_kind].indices
    cols = nulls[c_kind].indices
    if not rows or not cols:
        return np.zeros((len(rows), len(cols)))
    return length_grid(family, systems, rows, cols, N)


def closure_residual(family: str, m: int, n: int, systems: dict,
                     nulls: dict, N: int) -> float:
    """Single null-pair residual; contract error off the null spaces."""
    r_kind, c_kind = _FAMILY_NULLS[family]
    if m not in nulls[r_kind].indices:
        raise ValueError(f"index {m} is not in the {r_kind} null space")
    if n not in nulls[c_kind].indices:
        raise ValueError(f"index {n} is not in the {c_kind} null space")
    return float(length_grid(family, systems, [m], [n], N)[0, 0])


# ---------------------------------------------------------------------------
# descriptors
# ---------------------------------------------------------------------------

@dataclass
class Descriptors:
    I_alpha: float
    I_beta: float
    I_gamma: float
    I_zeta: float
    empty_domain: dict
    # basis-independent suprema over unit vectors in the null spaces
    I_alpha_sup: float = 0.0
    I_beta_sup: float = 0.0
    I_gamma_sup: float = 0.0
    I_zeta_sup: float = 0.0

    def as_tuple(self):
        return (self.I_alpha, self.I_beta, self.I_gamma, self.I_zeta)


def _bilinear_sup(weighted: np.ndarray, iters: int = 60) -> float:
    """sup_{|x|=|y|=1} || sum_mn x_m y_n weighted[m,n,:] ||.

    Alternating singular-vector iteration from the largest grid entry;
    deterministic and exact for rank-one-dominated maps, a certified lower
    bound in general.
    """
    n1, n2, _ = weighted.shape
    if n1 == 0 or n2 == 0:
        return 0.0
    norms = np.linalg.norm(weighted, axis=2)
    m0, n0 = np.unravel_index(np.argmax(norms), norms.shape)
    x = np.zeros(n1)
    x[m0] = 1.0
    best = 0.0
    for _ in range(iters):
        My = np.einsum("m,mnt->nt", x, weighted)
        u, s, _ = np.linalg.svd(My.reshape(n2, -1), full_matrices=False)
        y = u[:, 0]
        Mx = np.einsum("n,mnt->mt", y, weighted)
        u, s, _ = np.linalg.svd(Mx.reshape(n1, -1), full_matrices=False)
        x = u[:, 0]
        if abs(s[0] - best) < 1e-13:
            best = s[0]
            break
        best = s[0]
    return float(best)


def _family_descriptor(family, systems, nulls, N):
    r_kind, c_kind = _FAMILY_NULLS[family]
    rows = nulls[r_kind].indices
    cols = nulls[c_kind].indices
    if not rows or not cols:
        return 0.0, 0.0, True
    k1, k2, kt, _ = FAMILIES[family]
    ops1 = _ops_subset(systems[k1.upper()], rows)
    ops2 = _ops_subset(systems[k2.upper()], cols)
    target = _target_system(family, systems)
    basis = algebra.eigenoperators(target)
    tensor = algebra.commutator_coefficients(family, ops1, ops2, basis, N=N)
    grid = algebra.commutator_lengths(tensor, target.eigenvalues)
    lam = np.sqrt(np.clip(target.eigenvalues, 0.0, None))
    sup = _bilinear_sup(tensor.values * lam[None, None, :])
    return float(grid.max()), sup, False


def descriptors(systems: dict, nulls: dict, N: int) -> Descriptors:
    """Maxima of the four length families over null-pair indices.

    All four must vanish for N-representable RDMs.  Values inside
    degenerate null spaces depend on the eigenbasis convention; the ``_sup``
    variants are invariant under null-space rotations.
    """
    vals = {}
    sups = {}
    empty = {}
    for family, name in (("gg", "alpha"), ("qd", "beta"),
                         ("gd", "gamma"), ("gq", "zeta")):
        v, s, e = _family_descriptor(family, systems, nulls, N)
        vals[name] = v
        sups[name] = s
        empty[name] = e
    return Descriptors(vals["alpha"], vals["beta"], vals["gamma"],
                       vals["zeta"], empty,
                       sups["alpha"], sups["beta"], sups["gamma"],
                       sups["zeta"])


# ---------------------------------------------------------------------------
# inequality conditions over the whole eigenspaces
# ---------------------------------------------------------------------------

def inequality_conditions(systems: dict, bounds: BoundSet,
                          N: int) -> dict:
    """Delta grids (lhs - rhs) of the four eigenspace conditions.

    Positive entries flag violations.  Grid orientations: alpha over
    (G, G); beta over (D, Q) as in the violation-descriptor figure;
    gamma over (G, D); zeta over (G, Q).
    """
    esD, esG, esQ = systems["D"], systems["G"], systems["Q"]
    sqD = np.sqrt(np.clip(esD.eigenvalues, 0.0, None))
    sqG = np.sqrt(np.clip(esG.eigenvalues, 0.0, None))
    sqQ = np.sqrt(np.clip(esQ.eigenvalues, 0.0, None))
    nD, nG, nQ = len(sqD), len(sqG), len(sqQ)

    alpha = length_grid("gg", systems, range(nG), range(nG), N)
    d_alpha = alpha - np.sqrt(bounds.g_n) * (sqG[:, None] + sqG[None, :])

    beta_qd = length_grid("qd", systems, range(nQ), range(nD), N)
    beta = beta_qd.T  # rows: D eigenindices, cols: Q eigenindices
    d_beta = beta - np.sqrt(bounds.q_nm2) * sqD[:, None] \
        - np.sqrt(bounds.d_np2) * sqQ[None, :]

    gamma = length_grid("gd", systems, range(nG), range(nD), N)
    d_gamma = gamma - np.sqrt(bounds.d_n) * sqG[:, None] \
        - np.sqrt(bounds.g_nm2) * sqD[None, :]

    zeta = length_grid("gq", systems, range(nG), range(nQ), N)
    d_zeta = zeta - np.sqrt(bounds.q_n) * sqG[:, None] \
        - np.sqrt(bounds.g_np2) * sqQ[None, :]

    return {"alpha": d_alpha, "beta": d_beta, "gamma": d_gamma,
            "zeta": d_zeta,
            "lengths": {"alpha": alpha, "beta": beta, "gamma": gamma,
                        "zeta": zeta}}


# ---------------------------------------------------------------------------
# null-space energy projection
# ---------------------------------------------------------------------------

def delta_e_null(es_var: EigenSystem, null: NullSpace,
                 D_exact: algebra.Rdm, K: np.ndarray,
                 delta_e: float | None = None):
    """Energy content of the exact D inside the variational null space.

    ``K`` is the full-index reduced Hamiltonian.  Returns (value, ratio,
    reliable); the ratio is flagged unreliable when |delta_e| < 1e-9.
    """
    if es_var.kind != "D":
        raise ValueError("null projection is defined for the D matrix")
    L = es_var.L
    Kc = algebra.compress_pair_matrix(K, L)
    U = es_var.vectors[:, list(null.indices)]
    if U.shape[1] == 0:
        return 0.0, 0.0 if delta_e else None, True
    Pm = U @ U.T
    val = float(np.sum(Kc * (Pm @ D_exact.matrix @ Pm)))
    if delta_e is None:
        return val, None, True
    reliable = abs(delta_e) >= 1e-9
    ratio = val / abs(delta_e) if reliable else float("nan")
    return val, ratio, reliable


def projection_lengths(es_exact: EigenSystem, es_var: EigenSystem,
                       null: NullSpace) -> np.ndarray:
    """|P u_n| for every exact D eigenvector, ascending eigenvalue order."""
    U = es_var.vectors[:, list(null.indices)]
    return np.linalg.norm(U.T @ es_exact.vectors, axis=0)


# ---------------------------------------------------------------------------
# report assembly
# ---------------------------------------------------------------------------

@dataclass
class ViolationReport:
    L: int
    N: int
    tol: float
    null_dims: dict
    descriptors: Descriptors
    closure_grids: dict
    delta_grids: dict
    delta_e_null: float | None = None
    ratio: float | None = None
    ratio_reliable: bool = True
    projection: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        def grid(g, rows, cols):
            return {"rows": rows, "cols": cols,
                    "values": [[float(v) for v in row] for row in g]}

        out = {
            "schema": "rdmgeo.violation-report/1",
            "L": self.L,
            "N": self.N,
            "null_tol": self.tol,
            "null_dims": dict(self.null_dims),
            "I_alpha": self.descriptors.I_alpha,
            "I_beta": self.descriptors.I_beta,
            "I_gamma": self.descriptors.I_gamma,
            "I_zeta": self.descriptors.I_zeta,
            "descriptor_suprema": {
                "I_alpha": self.descriptors.I_alpha_sup,
                "I_beta": self.descriptors.I_beta_sup,
                "I_gamma": self.descriptors.I_gamma_sup,
                "I_zeta": self.descriptors.I_zeta_sup,
            },
            "empty_domains": dict(self.descriptors.empty_domain),
            "closure_grids": {},
            "delta_grids": {},
            "meta": dict(self.meta),
        }
        kinds = {"gg": ("G", "G"), "qd": ("Q", "D"), "gd": ("G", "D"),
                 "gq": ("G", "Q")}
        for fam, g in self.closure_grids.items():
            rk, ck = kinds[fam]
            out["closure_grids"][fam] = grid(
                g, {"kind": rk, "indices": list(self.meta.get(
                    f"null_{rk}", []))},
                {"kind": ck, "indices": list(self.meta.get(
                    f"null_{ck}", []))})
        axes = {"alpha": ("G", "G"), "beta": ("D", "Q"),
                "gamma": ("G", "D"), "zeta": ("G", "Q")}
        for name, g in self.delta_grids.items():
            rk, ck = axes[name]
            out["delta_grids"][name] = grid(
                g, {"kind": rk, "indices": "all"},
                {"kind": ck, "indices": "all"})
        if self.delta_e_null is not None:
            out["delta_e_null"] = self.delta_e_null
            out["ratio"] = (None if self.ratio is None or
                            not np.isfinite(self.ratio) else self.ratio)
            out["ratio_reliable"] = self.ratio_reliable
        if len(self.projection):
            out["projection_lengths"] = [float(v) for v in self.projection]
        return out


def build_report(systems: dict, N: int, tol: float = DEFAULT_NULL_TOL,
                 bounds: BoundSet | None = None,
                 es_exact_D: EigenSystem | None = None,
                 K: np.ndarray | None = None,
                 D_exact: algebra.Rdm | None = None,
                 delta_e: float | None = None,
                 meta: dict | None = None) -> ViolationReport:
    """Full audit of one (D, G, Q) eigensystem triple.

    When the exact D eigensystem, the reduced Hamiltonian and the energy
    deviation are supplied, the null-space energy projection and the
    projection-length profile are included.
    """
    L = systems["D"].L
    nulls = {k: null_space(systems[k], tol) for k in ("D", "G", "Q")}
    desc = descriptors(systems, nulls, N)
    closure = {fam: closure_grid(fam, systems, nulls, N)
               for fam in ("gg", "qd", "gd", "gq")}
    bset = bounds or default_bounds(L, N)
    ineq = inequality_conditions(systems, bset, N)
    delta_grids = {k: ineq[k] for k in ("alpha", "beta", "gamma", "zeta")}
    report = ViolationReport(
        L=L, N=N, tol=tol,
        null_dims={k: nulls[k].dimension for k in ("D", "G", "Q")},
        descriptors=desc,
        closure_grids=closure,
        delta_grids=delta_grids,
        meta=dict(meta or {}))
    for k in ("D", "G", "Q"):
        report.meta[f"null_{k}"] = list(nulls[k].indices)
    if K is not None and D_exact is not None:
        val, ratio, reliable = delta_e_null(systems["D"], nulls["D"],
                                            D_exact, K, delta_e)
        report.delta_e_null = val
        report.ratio = ratio
        report.ratio_reliable = reliable
    if es_exact_D is not None:
        report.projection = projection_lengths(es_exact_D, systems["D"],
                                               nulls["D"]).tolist()
    return report
