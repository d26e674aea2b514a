import json
from fractions import Fraction

import numpy as np
import pytest

from symlab.groups import build_group, regular_representation, sector_decomposition
from symlab.moments import (
    CommutantBasis,
    cycle_trace,
    weingarten_table,
    exact_symmetric_haar_choi,
    approx_symmetric_haar_choi,
    relative_error,
    monte_carlo_twirl,
    approx_twirl_error_bound,
)
from symlab.tensor_core import random_hermitian, random_density
from conftest import sector_haar_sampler


# ---------------------------------------------------------------------------
# Weingarten
# ---------------------------------------------------------------------------

def test_weingarten_k1():
    t = weingarten_table(1, 5)
    assert t.value_exact((0,)) == Fraction(1, 5)


def test_weingarten_k2_closed_form():
    for D in (2, 3, 5, 8):
        t = weingarten_table(2, D)
        assert t.value_exact((0, 1)) == Fraction(1, D * D - 1)
        assert t.value_exact((1, 0)) == Fraction(-1, D * (D * D - 1))


def test_weingarten_k2_d2_values():
    t = weingarten_table(2, 2)
    assert t.value_exact((0, 1)) == Fraction(1, 3)
    assert t.value_exact((1, 0)) == Fraction(-1, 6)


def test_weingarten_inverts_gram():
    for k in (1, 2, 3, 4):
        for D in range(k, 9):
            t = weingarten_table(k, D)
            G = t.gram_matrix()
            W = t.as_matrix()
            err = np.abs(G @ W - np.eye(G.shape[0])).max()
            assert err < 1e-10, (k, D, err)


def test_weingarten_rejects_out_of_regime():
    with pytest.raises(ValueError):
        weingarten_table(3, 2)
    with pytest.raises(ValueError):
        weingarten_table(6, 10)


# ---------------------------------------------------------------------------
# cycle traces and the commutant Gram
# ---------------------------------------------------------------------------

def test_cycle_trace_orthonormality():
    g = build_group("Z2")
    lab = ((0, 0), (0, 1))
    assert cycle_trace(lab, lab, g, [2, 2]) == 16  # D^k with D=4, k=2


def test_cycle_trace_swap_single_cycle():
    g = build_group("Z2")
    a = ((0, 0), (0, 1))
    b = ((0, 0), (1, 0))  # swap
    # single 2-cycle, identity elements: trace = D = 4
    assert cycle_trace(a, b, g, [2, 2]) == 4


def test_cycle_trace_regular_orthogonality():
    g = build_group("Z2")
    a = ((0, 0), (0, 1))
    b = ((1, 0), (0, 1))
    assert cycle_trace(a, b, g, [2, 2]) == 0


def test_cycle_trace_matches_dense(rng):
    # brute-force check: trace of dense label products, non-Abelian case
    g = build_group("S3")
    rep = regular_representation(g)
    basis = CommutantBasis.global_basis(rep, 1, 2)
    part = basis.partition
    G = part.gram()
    for i in range(0, part.size, 7):
        for j in range(0, part.size, 11):
            A = part.dense_matrix(i)
            B = part.dense_matrix(j)
            assert abs(np.trace(A.conj().T @ B).real - G[i, j]) < 1e-9


def test_commutant_gram_psd_and_diagonal():
    rep = regular_representation(build_group("Z3"))
    basis = CommutantBasis.global_basis(rep, 2, 2)
    G = basis.gram()
    D = 9
    assert np.allclose(np.diag(G), D**2)
    assert np.linalg.eigvalsh((G + G.T) / 2).min() > -1e-9


# ---------------------------------------------------------------------------
# exact twirl
# ---------------------------------------------------------------------------

def test_exact_twirl_trivial_group_k1(rng):
    # trivial regular rep = 1-dim sites; use Z2 with n=1, k=1 as the smallest case:
    # twirl of any traceless operator is 0 within each sector
    rep = regular_representation(build_group("Z2"))
    dec = sector_decomposition(rep, 1)
    choi = exact_symmetric_haar_choi(dec, 1)
    Z = np.diag([1.0, -1.0]).astype(complex)
    out = choi.apply(Z)
    # Z is diagonal in the charge basis: each 1-dim sector keeps its value
    assert np.allclose(out, choi.apply(out))


def test_exact_twirl_z2_n2_k1_hand_values():
    rep = regular_representation(build_group("Z2"))
    dec = sector_decomposition(rep, 2)
    choi = exact_symmetric_haar_choi(dec, 1)
    X = np.array([[0, 1], [1, 0]], dtype=complex)
    Z = np.diag([1, -1]).astype(complex)
    assert np.abs(choi.apply(np.kron(Z, np.eye(2)))).max() < 1e-12
    XX = np.kron(X, X)
    assert np.allclose(choi.apply(XX), XX)


def test_exact_twirl_monte_carlo_oracle(rng):
    rep = regular_representation(build_group("Z2"))
    dec = sector_decomposition(rep, 3)
    choi = exact_symmetric_haar_choi(dec, 2)
    A = random_hermitian(64, rng)
    mean, stderr = monte_carlo_twirl(sector_haar_sampler(dec), A, 2, 20000, rng)
    exact = choi.apply(A)
    z = np.abs(mean - exact) / np.maximum(stderr, 1e-12)
    assert z.max() < 5.0


def test_exact_twirl_idempotent():
    for name, n, k in (("Z2", 3, 2), ("Z3", 2, 1), ("Z2xZ2", 2, 2)):
        rep = regular_representation(build_group(name))
        dec = sector_decomposition(rep, n)
        choi = exact_symmetric_haar_choi(dec, k)
        sq = choi.compose_self()
        assert np.abs(sq.coeff - choi.coeff).max() < 1e-9


def test_exact_twirl_rejects_small_sectors():
    rep = regular_representation(build_group("Z2"))
    dec = sector_decomposition(rep, 1)  # multiplicities 1
    with pytest.raises(ValueError):
        exact_symmetric_haar_choi(dec, 2)


def test_twirl_preserves_density(rng):
    rep = regular_representation(build_group("Z2"))
    dec = sector_decomposition(rep, 2)
    choi = exact_symmetric_haar_choi(dec, 2)
    rho = random_density(16, rng)
    out = choi.apply(rho)
    assert abs(np.trace(out) - 1) < 1e-10
    assert np.abs(out - out.conj().T).max() < 1e-10


# ---------------------------------------------------------------------------
# approximate twirl and relative error
# ---------------------------------------------------------------------------

def test_approx_twirl_uniform_coefficients():
    rep = regular_representation(build_group("Z2"))
    choi = approx_symmetric_haar_choi(rep, 3, 1)
    D = 8
    assert np.allclose(choi.coeff, np.eye(choi.coeff.shape[0]) / D)
    assert choi.bound_valid


def test_approx_choi_flat_eigenvalue():
    # nonzero Choi eigenvalue = k! |G|^k / D^2k on its support
    import math
    from symlab.commutant import algebra_matrix
    rep = regular_representation(build_group("Z2"))
    n, k = 3, 2
    D = 8
    choi = approx_symmetric_haar_choi(rep, n, k)
    basis = choi.channel.out_basis
    (M,) = algebra_matrix([choi.coeff / D**k], basis, basis)
    w = np.linalg.eigvalsh(M)
    lam = math.factorial(k) * 2**k / D ** (2 * k)
    nonzero = w[np.abs(w) > 1e-14]
    assert np.allclose(nonzero, lam, rtol=1e-8)


def test_relative_error_trivial_cases():
    rep = regular_representation(build_group("Z2"))
    dec = sector_decomposition(rep, 3)
    choiH = exact_symmetric_haar_choi(dec, 2)
    assert relative_error(choiH, choiH) < 1e-12
    # scalar scaling: eps = x exactly
    import copy
    scaled = copy.deepcopy(choiH)
    scaled.channel.coeff = scaled.channel.coeff * 1.25
    assert abs(relative_error(scaled, choiH) - 0.25) < 1e-9


def test_relative_error_dense_cross_check(rng):
    # algebra pencil against the dense Choi pencil at D=4, k=2 (side 256)
    rep = regular_representation(build_group("Z2"))
    dec = sector_decomposition(rep, 2)
    choiH = exact_symmetric_haar_choi(dec, 2)
    choiA = approx_symmetric_haar_choi(rep, 2, 2)
    eps_alg = relative_error(choiA, choiH)
    rhoH = choiH.choi_matrix()
    rhoA = choiA.choi_matrix()
    w, V = np.linalg.eigh(rhoH)
    sup = w > 1e-10 * w[-1]
    inv = V[:, sup] / np.sqrt(w[sup])
    T = inv.conj().T @ (rhoA - rhoH) @ inv
    eps_dense = np.abs(np.linalg.eigvalsh((T + T.conj().T) / 2)).max()
    assert abs(eps_alg - eps_dense) < 1e-9


@pytest.mark.parametrize("name", ["Z2", "Z3", "Z2xZ2"])
def test_approx_error_bound(name):
    group = build_group(name)
    rep = regular_representation(group)
    for n in (3, 4):
        if rep.site_dim**n > 4096:
            continue
        for k in (1, 2):
            D = rep.site_dim**n
            if k * k > D / group.order:
                continue
            dec = sector_decomposition(rep, n)
            eps = relative_error(approx_symmetric_haar_choi(rep, n, k),
                                 exact_symmetric_haar_choi(dec, k))
            assert eps <= approx_twirl_error_bound(group.order, k, D) + 1e-9


def test_monte_carlo_twirl_deterministic_ensemble(rng):
    A = random_hermitian(4, rng)
    mean, stderr = monte_carlo_twirl(lambda r: np.eye(4, dtype=complex), A, 1, 100, rng)
    assert np.allclose(mean, A)
    assert stderr.max() < 1e-7  # float cancellation noise only


def test_monte_carlo_twirl_commutant_fixed_point(rng):
    # k=1 twirl leaves R_g unchanged (commutant element)
    rep = regular_representation(build_group("Z2"))
    dec = sector_decomposition(rep, 2)
    from symlab.groups import global_symmetry_operator
    Rg = global_symmetry_operator(rep, 2, 1)
    mean, stderr = monte_carlo_twirl(sector_haar_sampler(dec), Rg, 1, 4000, rng)
    z = np.abs(mean - Rg) / np.maximum(stderr, 1e-12)
    assert z.max() < 5.0


def test_choi_json_roundtrip():
    rep = regular_representation(build_group("Z2"))
    choi = approx_symmetric_haar_choi(rep, 2, 1)
    blob = json.loads(choi.to_json())
    assert blob["k"] == 1
    assert len(blob["coefficients"]) == choi.coeff.shape[0]  # diagonal channel
    for val in blob["coefficients"].values():
        assert abs(val[0] - 1 / 4) < 1e-12 and abs(val[1]) < 1e-15


def test_choi_json_golden():
    # frozen golden dump for the smallest nontrivial twirl
    rep = regular_representation(build_group("Z2"))
    dec = sector_decomposition(rep, 2)
    choi = exact_symmetric_haar_choi(dec, 1)
    blob = json.loads(choi.to_json())
    # projection channel onto span{1, R1}: orthogonal labels at D=4
    assert blob["coefficients"] == {
        "g0s0|g0s0": [0.25, 0.0],
        "g1s0|g1s0": [0.25, 0.0],
    }
