"""Normal ordering of fermionic operator strings with symbolic indices.

Used to derive, once and exactly, the linear maps that express the
particle-hole, hole-hole and three-index (T1/T2/T2') positivity blocks
through the 2-RDM and the 1-RDM.  A term list produced here can be
evaluated densely (for oracle-sized checks) or compiled into sparse
matrices acting on the compressed 2-RDM (for the variational assembly).

Expectation values of normal-ordered bodies are mapped as

    <1>                      -> constant
    <a_p+ a_q>               -> gamma[p, q]
    <a_p+ a_q+ a_r a_s>      -> D4[p, q, s, r]

Three-body bodies must cancel symbolically; a surviving one is an error.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

__all__ = ["Term", "normal_ordered_expectation", "evaluate_terms",
           "term_maps"]


@dataclass(frozen=True)
class Term:
    """coeff * prod(delta_ab) * <body> with symbolic single-letter indices."""

    coeff: float
    deltas: tuple  # sorted tuple of sorted 2-tuples of symbols
    body: str      # 'const' | 'gamma' | 'D'
    args: tuple    # () | (p, q) | (p, q, s, r)


def _normal_order(ops):
    """All normal-ordered contractions of a string of (symbol, dagger) ops."""
    work = [(1, frozenset(), tuple(ops))]
    done = []
    while work:
        coeff, deltas, ops = work.pop()
        swap = None
        for idx in range(len(ops) - 1):
            if not ops[idx][1] and ops[idx + 1][1]:
                swap = idx
                break
        if swap is None:
            done.append((coeff, deltas, ops))
            continue
        p, q = ops[swap][0], ops[swap + 1][0]
        rest = ops[:swap] + ops[swap + 2:]
        work.append((coeff, deltas | {frozenset((p, q))}, rest))
        swapped = ops[:swap] + (ops[swap + 1], ops[swap]) + ops[swap + 2:]
        work.append((-coeff, deltas, swapped))
    return done


def _sort_with_parity(symbols):
    symbols = list(symbols)
    sign = 1
    for a in range(len(symbols)):
        for b in range(len(symbols) - 1 - a):
            if symbols[b] > symbols[b + 1]:
                symbols[b], symbols[b + 1] = symbols[b + 1], symbols[b]
                sign = -sign
    for a in range(len(symbols) - 1):
        if symbols[a] == symbols[a + 1]:
            return None, 0
    return tuple(symbols), sign


def _canonicalize(coeff, deltas, ops):
    creators = [s for s, d in ops if d]
    annih = [s for s, d in ops if not d]
    cr, s1 = _sort_with_parity(creators)
    if cr is None:
        return None
    an, s2 = _sort_with_parity(annih)
    if an is None:
        return None
    dl = []
    for d in deltas:
        pair = sorted(d)
        if len(pair) == 1:  # delta_pp == 1
            continue
        dl.append(tuple(pair))
    return (coeff * s1 * s2, tuple(sorted(dl)), cr, an)


def normal_ordered_expectation(strings):
    """Expectation term list for a sum of operator strings.

    ``strings`` is a list of (prefactor, ops) where ops is a sequence of
    (symbol, dagger) pairs, leftmost factor first.  Distinct symbols only.
    """
    collected = {}
    for pref, ops in strings:
        for coeff, deltas, body in _normal_order(ops):
            canon = _canonicalize(pref * coeff, deltas, body)
            if canon is None:
                continue
            c, dl, cr, an = canon
            key = (dl, cr, an)
            collected[key] = collected.get(key, 0.0) + c
    terms = []
    for (dl, cr, an), c in collected.items():
        if c == 0.0:
            continue
        if len(cr) != len(an):
            continue  # particle-number violating: zero in any fixed-N state
        if len(cr) == 0:
            terms.append(Term(c, dl, "const", ()))
        elif len(cr) == 1:
            terms.append(Term(c, dl, "gamma", (cr[0], an[0])))
        elif len(cr) == 2:
            # <a_p+ a_q+ a_r a_s> = D4[p, q, s, r]
            p, q = cr
            r, s = an
            terms.append(Term(c, dl, "D", (p, q, s, r)))
        else:
            raise AssertionError(
                "three-body term survived normal ordering: "
                f"coeff={c}, deltas={dl}, creators={cr}, annihilators={an}")
    return terms


# ---------------------------------------------------------------------------
# dense evaluation
# ---------------------------------------------------------------------------

def evaluate_terms(terms, out_symbols, L, D4, gamma):
    """Dense tensor over ``out_symbols`` axes from a term list."""
    shape = (L,) * len(out_symbols)
    out = np.zeros(shape)
    eye = np.eye(L)
    ones = np.ones(L)
    out_sub = "".join(out_symbols)
    for t in terms:
        operands = []
        subs = []
        used = set()
        for a, b in t.deltas:
            operands.append(eye)
            subs.append(a + b)
            used.update((a, b))
        if t.body == "gamma":
            operands.append(gamma)
            subs.append("".join(t.args))
            used.update(t.args)
        elif t.body == "D":
            operands.append(D4)
            subs.append("".join(t.args))
            used.update(t.args)
        for s in out_symbols:
            if s not in used:
                operands.append(ones)
                subs.append(s)
        spec = ",".join(subs) + "->" + out_sub
        out += t.coeff * np.einsum(spec, *operands, optimize=True)
    return out


# ---------------------------------------------------------------------------
# sparse linear maps
# ---------------------------------------------------------------------------

def term_maps(terms, out_symbols, L):
    """Compile a term list into sparse maps on vec(D4) and vec(gamma).

    Returns (map_D, map_gamma, const) where the maps have shapes
    (L**n_out, L**4) and (L**n_out, L**2); ``const`` is the dense constant
    vector of length L**n_out.
    """
    n_out = len(out_symbols)
    n_rows = L ** n_out
    const = np.zeros(n_rows)
    d_rows, d_cols, d_vals = [], [], []
    g_rows, g_cols, g_vals = [], [], []
    for t in terms:
        classes = {s: s for s in out_symbols}
        for a, b in t.deltas:
            ra, rb = classes[a], classes[b]
            for s, r in classes.items():
                if r == rb:
                    classes[s] = ra
        reps = sorted(set(classes.values()))
        grids = np.meshgrid(*[np.arange(L)] * len(reps), indexing="ij")
        value = {rep: g.ravel() for rep, g in zip(reps, grids)}
        sym_val = {s: value[classes[s]] for s in out_symbols}
        row = np.zeros(len(grids[0].ravel()) if grids else 1, dtype=np.int64)
        for s in out_symbols:
            row = row * L + sym_val[s]
        if t.body == "const":
            np.add.at(const, row, t.coeff)
        elif t.body == "gamma":
            col = sym_val[t.args[0]] * L + sym_val[t.args[1]]
            g_rows.append(row)
            g_cols.append(col)
            g_vals.append(np.full(len(row), t.coeff))
        else:
            col = np.zeros(len(row), dtype=np.int64)
            for s in t.args:
                col = col * L + sym_val[s]
            d_rows.append(row)
            d_cols.append(col)
            d_vals.append(np.full(len(row), t.coeff))

    def build(rows, cols, vals, n_cols):
        if not rows:
            return sp.csr_matrix((n_rows, n_cols))
        return sp.csr_matrix(
            (np.concatenate(vals),
             (np.concatenate(rows), np.concatenate(cols))),
            shape=(n_rows, n_cols))

    return build(d_rows, d_cols, d_vals, L ** 4), \
        build(g_rows, g_cols, g_vals, L ** 2), const


# ---------------------------------------------------------------------------
# the strings this package needs
# ---------------------------------------------------------------------------

def _ops(spec):
    """'i+ j- k-' -> ((i,True),(j,False),(k,False))."""
    out = []
    for tok in spec.split():
        out.append((tok[0], tok[1] == "+"))
    return tuple(out)


def g_matrix_terms():
    """G[(i,j),(k,l)] = <a_i+ a_j a_l+ a_k>; axes (i, j, k, l)."""
    return normal_ordered_expectation([(1.0, _ops("i+ j- l+ k-"))])


def q_matrix_terms():
    """Q[(i,j),(k,l)] = <a_i a_j a_l+ a_k+>; axes (i, j, k, l)."""
    return normal_ordered_expectation([(1.0, _ops("i- j- l+ k+"))])


def t1_terms():
    """T1[(l,m,n),(i,j,k)] = <{a_i a_j a_k, a_n+ a_m+ a_l+}>."""
    return normal_ordered_expectation([
        (1.0, _ops("i- j- k- n+ m+ l+")),
        (1.0, _ops("n+ m+ l+ i- j- k-")),
    ])


def t2_terms():
    """T2[(l,m,n),(i,j,k)] = <{a_i+ a_j a_k, a_n+ a_m+ a_l}>."""
    return normal_ordered_expectation([
        (1.0, _ops("i+ j- k- n+ m+ l-")),
        (1.0, _ops("n+ m+ l- i+ j- k-")),
    ])


def t2_prime_cross_terms():
    """Coupling row <a_p+ a_i+ a_j a_k>; axes (p, i, j, k)."""
    return normal_ordered_expectation([(1.0, _ops("p+ i+ j- k-"))])
