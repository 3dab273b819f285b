import io
import math

import numpy as np
import pytest

from rdmgeo import exact, fock
from conftest import random_state


def hubbard_u0_energy(sites, N):
    """Analytic tight-binding filling of the periodic dispersion."""
    eps = sorted(-2.0 * math.cos(2 * math.pi * k / sites)
                 for k in range(sites))
    per_spin = N // 2
    return 2 * sum(eps[:per_spin])


def test_hubbard_u0_matches_dispersion_sum():
    H = fock.build_hubbard(6, 1.0, 0.0, periodic=True)
    E, _ = exact.ground_state(exact.assemble_sector(H, 6, sz2=0))
    assert abs(E - hubbard_u0_energy(6, 6)) < 1e-10
    assert abs(E - (-8.0)) < 1e-10


def test_hubbard_u10_ground_energy():
    H = fock.build_hubbard(6, 1.0, 10.0, periodic=True)
    E, _ = exact.ground_state(exact.assemble_sector(H, 6, sz2=0))
    assert abs(E - (-1.664362733287)) < 1e-9


def test_dimer_singlet_energy():
    H = fock.build_hubbard(2, 1.0, 0.0, periodic=False)
    E, _ = exact.ground_state(exact.assemble_sector(H, 2, sz2=0))
    assert abs(E - (-2.0)) < 1e-12


def test_hubbard_rejects_single_site():
    with pytest.raises(fock.InvalidModelError):
        fock.build_hubbard(1, 1.0, 4.0)


def test_random_two_body_deterministic():
    a = fock.build_random_two_body(4, 123)
    b = fock.build_random_two_body(4, 123)
    c = fock.build_random_two_body(4, 124)
    assert np.array_equal(a.h, b.h) and np.array_equal(a.V, b.V)
    assert not np.array_equal(a.h, c.h)


def test_random_two_body_antisymmetrized():
    H = fock.build_random_two_body(3, 5)
    assert np.abs(H.V + H.V.transpose(1, 0, 2, 3)).max() == 0.0
    assert np.abs(H.V + H.V.transpose(0, 1, 3, 2)).max() == 0.0
    assert np.abs(H.V - H.V.transpose(2, 3, 0, 1)).max() == 0.0


def test_random_two_body_singlet_spin_nulls(random_system):
    # spin-free construction: the FCI ground state is a singlet, so the
    # particle-hole matrix carries exactly the three spin-generator zeros
    vals = random_system.systems["G"].eigenvalues
    assert int(np.sum(np.abs(vals) < 1e-9)) == 3


# -- integral files ---------------------------------------------------------

def test_integral_roundtrip_hubbard():
    H = fock.build_hubbard(6, 1.0, 10.0, periodic=True)
    text = fock.dump_integrals(H, 6)
    H2 = fock.load_integrals(text)
    assert np.abs(H.h - H2.h).max() < 1e-15
    assert np.abs(H.V - H2.V).max() < 1e-15
    assert H2.metadata["N"] == 6


def test_integral_empty_body():
    H = fock.load_integrals("L 4 N 2\n")
    assert H.L == 4
    assert np.all(H.h == 0) and np.all(H.V == 0)
    E, _ = exact.ground_state(exact.assemble_sector(H, 2))
    assert abs(E) < 1e-12


def test_integral_toy_molecule_against_dense_oracle():
    # hydrogen-molecule-style two-orbital toy: bonding/antibonding levels
    # plus on-site style repulsion, 4 spin orbitals
    lines = ["L 4 N 2"]
    for i, e in ((0, -1.2), (1, -1.2), (2, -0.3), (3, -0.3)):
        lines.append(f"1B {i} {i} {e}")
    lines += ["1B 0 2 -0.05", "1B 2 0 -0.05", "1B 1 3 -0.05", "1B 3 1 -0.05",
              "2B 0 1 0 1 0.45", "2B 2 3 2 3 0.42", "2B 0 3 0 3 0.30",
              "2B 0 1 2 3 0.12", "2B 2 3 0 1 0.12"]
    H = fock.load_integrals("\n".join(lines))
    Hs = exact.assemble_sector(H, 2)
    assert Hs.dimension == 6
    E, _ = exact.ground_state(Hs)
    dense = np.linalg.eigvalsh(Hs.matrix.toarray())
    assert abs(E - dense[0]) < 1e-12


def test_integral_parse_error_carries_line_number():
    with pytest.raises(fock.IntegralParseError) as err:
        fock.load_integrals("L 4 N 2\n1B 0 zero 1.0\n")
    assert err.value.line == 2
    with pytest.raises(fock.IntegralParseError):
        fock.load_integrals("bogus header\n")


def test_integral_hermiticity_validation():
    text = "L 4 N 2\n1B 0 1 0.5\n"  # missing the (1,0) partner
    with pytest.raises(fock.IntegralParseError):
        fock.load_integrals(text)


# -- reduced Hamiltonian ----------------------------------------------------

def test_reduced_hamiltonian_energy_identity():
    H = fock.build_random_two_body(3, 7)
    L, N = H.L, 3
    K = fock.reduced_hamiltonian(H, N)
    Hs = exact.assemble_sector(H, N)
    worst = 0.0
    for trial in range(100):
        psi = random_state(L, N, seed=trial)
        rdms = exact.compute_rdms(psi)
        from rdmgeo import algebra
        Kc = algebra.compress_pair_matrix(K, L)
        e_rdm = float(np.sum(Kc * rdms.D.matrix))
        e_direct = exact.expectation(Hs, psi)
        worst = max(worst, abs(e_rdm - e_direct))
    assert worst < 1e-12


def test_reduced_hamiltonian_zero_and_errors():
    H = fock.load_integrals("L 4 N 2\n")
    assert np.abs(fock.reduced_hamiltonian(H, 2)).max() == 0.0
    with pytest.raises(ValueError):
        fock.reduced_hamiltonian(H, 1)


def test_reduced_hamiltonian_hubbard_energy():
    H = fock.build_hubbard(6, 1.0, 10.0, periodic=True)
    E, psi = exact.ground_state(exact.assemble_sector(H, 6, sz2=0))
    rdms = exact.compute_rdms(psi)
    from rdmgeo import algebra
    Kc = algebra.compress_pair_matrix(fock.reduced_hamiltonian(H, 6), 12)
    assert abs(float(np.sum(Kc * rdms.D.matrix)) - E) < 1e-10


# -- operator strings -------------------------------------------------------

def test_number_operator_leaves_determinant():
    sector = fock.FockSector(4, 2)
    mask = 0b0101
    vec = np.zeros(sector.dimension)
    vec[sector.index[mask]] = 1.0
    psi = fock.Wavefunction(sector, vec)
    out = fock.apply_operator_string(
        [("create", 0), ("annihilate", 0)], psi)
    assert np.abs(out.coefficients - psi.coefficients).max() < 1e-15


@pytest.mark.parametrize("i", range(4))
@pytest.mark.parametrize("j", range(4))
def test_canonical_anticommutator(i, j):
    psi = random_state(4, 2, seed=i * 4 + j)
    t1 = fock.apply_operator_string(
        [("annihilate", i), ("create", j)], psi)
    t2 = fock.apply_operator_string(
        [("create", j), ("annihilate", i)], psi)
    total = t1.coefficients + t2.coefficients
    expect = (1.0 if i == j else 0.0) * psi.coefficients
    assert np.abs(total - expect).max() < 1e-14


def test_pair_number_sign_consistency():
    L = 6
    sector = fock.FockSector(L, 3)
    for mask in sector.determinants[:10]:
        vec = np.zeros(sector.dimension)
        vec[sector.index[mask]] = 1.0
        psi = fock.Wavefunction(sector, vec)
        for i in range(L):
            for j in range(L):
                if i == j:
                    continue
                out = fock.apply_operator_string(
                    [("create", i), ("create", j),
                     ("annihilate", j), ("annihilate", i)], psi)
                ni = (mask >> i) & 1
                nj = (mask >> j) & 1
                assert np.abs(out.coefficients
                              - ni * nj * psi.coefficients).max() < 1e-15


def test_rdm_assembled_from_operator_strings():
    L, N = 6, 3
    psi = random_state(L, N, seed=2)
    rdms = exact.compute_rdms(psi)
    from rdmgeo import algebra
    D4 = algebra.expand_pair_matrix(rdms.D.matrix, L).reshape(L, L, L, L)
    rng = np.random.default_rng(0)
    for _ in range(25):
        i, j, k, l = rng.integers(0, L, 4)
        out = fock.apply_operator_string(
            [("create", i), ("create", j),
             ("annihilate", l), ("annihilate", k)], psi)
        val = float(psi.coefficients @ out.coefficients)
        assert abs(val - D4[i, j, k, l]) < 1e-12


def test_annihilating_empty_orbital_gives_zero_vector():
    sector = fock.FockSector(4, 2)
    vec = np.zeros(sector.dimension)
    vec[sector.index[0b0011]] = 1.0
    psi = fock.Wavefunction(sector, vec)
    out = fock.apply_operator_string([("annihilate", 3)], psi)
    assert np.all(out.coefficients == 0.0)


def test_sector_dimensions():
    assert fock.FockSector(12, 6, sz2=0).dimension == 400
    assert fock.FockSector(12, 6).dimension == 924
    assert fock.FockSector(4, 2).dimension == 6


def test_basis_labels():
    basis = fock.SpinOrbitalBasis(6)
    assert basis.spatial_count == 3
    assert basis.spin_label(0) == "up" and basis.spin_label(1) == "down"
    with pytest.raises(ValueError):
        fock.SpinOrbitalBasis(3)
