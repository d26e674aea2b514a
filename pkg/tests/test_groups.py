import itertools

import numpy as np
import pytest
import scipy.linalg

from symlab.groups import (
    build_group,
    regular_representation,
    sector_decomposition,
    check_sector_decomposition,
    charge_of,
    global_symmetry_operator,
    is_symmetric,
    GroupError,
    CapacityError,
)


def test_z2_table():
    g = build_group("Z2")
    assert g.order == 2
    assert g.mult[1][1] == 0


def test_klein_group_self_inverse():
    g = build_group("Z2xZ2")
    assert g.order == 4
    assert np.all(g.inv == np.arange(4))


def test_s3_from_permutation_composition():
    g = build_group("S3")
    assert g.order == 6
    assert not g.abelian
    # independent oracle: recompose the table from scratch
    perms = list(itertools.permutations(range(3)))
    lookup = {p: i for i, p in enumerate(perms)}
    for i, p in enumerate(perms):
        for j, q in enumerate(perms):
            comp = tuple(p[q[x]] for x in range(3))
            assert g.mult[i, j] == lookup[comp]


def test_group_axioms_exhaustive():
    for name in ("Z2", "Z3", "Z4", "Z2xZ2", "Z3xZ2", "S3"):
        build_group(name).check_axioms()


def test_bad_descriptors():
    for bad in ("", "Z1", "Q8", "Z2x", "ZX3"):
        with pytest.raises(GroupError):
            build_group(bad)


def test_regular_representation_z2_is_bitflip():
    rep = regular_representation(build_group("Z2"))
    X = np.array([[0, 1], [1, 0]])
    assert np.allclose(rep.matrix(1), X)
    rep.check()


def test_regular_representation_z3_cycle():
    rep = regular_representation(build_group("Z3"))
    R1 = rep.matrix(1)
    want = np.zeros((3, 3))
    for h in range(3):
        want[(1 + h) % 3, h] = 1
    assert np.allclose(R1, want)
    rep.check()


def test_regular_representation_with_ancilla():
    rep = regular_representation(build_group("Z2"), ancilla_dim=2)
    assert rep.site_dim == 4
    X = np.array([[0, 1], [1, 0]])
    assert np.allclose(rep.matrix(1), np.kron(X, np.eye(2)))
    rep.check()


@pytest.mark.parametrize("name,n", [("Z2", 1), ("Z2", 2), ("Z2", 3), ("Z3", 2),
                                    ("Z2xZ2", 2), ("S3", 1), ("S3", 2)])
def test_sector_decomposition_invariants(name, n):
    rep = regular_representation(build_group(name))
    dec = sector_decomposition(rep, n)
    check_sector_decomposition(dec)


def test_sector_decomposition_z2_n2_dimensions():
    rep = regular_representation(build_group("Z2"))
    dec = sector_decomposition(rep, 2)
    assert [s.multiplicity for s in dec.sectors] == [2, 2]
    # oracle: eigenspaces of X (x) X
    XX = np.kron(rep.matrix(1), rep.matrix(1))
    w = np.linalg.eigvalsh(XX.real)
    assert sorted(np.round(w).astype(int).tolist()) == [-1, -1, 1, 1]


def test_sector_decomposition_s3_single_site():
    rep = regular_representation(build_group("S3"))
    dec = sector_decomposition(rep, 1)
    dims = sorted(s.irrep_dim for s in dec.sectors)
    mults = sorted(s.multiplicity for s in dec.sectors)
    assert dims == [1, 1, 2]
    assert mults == [1, 1, 2]
    assert sum(d * d for d in dims) == 6  # sum of squared irrep dims = |G|


def test_capacity_error():
    rep = regular_representation(build_group("Z2"))
    with pytest.raises(CapacityError):
        sector_decomposition(rep, 13)  # 2^13 > 4096


def test_charge_of_parity_and_mod3():
    z2 = build_group("Z2")
    assert charge_of((0, 1, 0, 1), z2) == 0
    assert charge_of((0, 1, 1, 1), z2) == 1
    z3 = build_group("Z3")
    assert charge_of((1, 2, 1), z3) == 1
    with pytest.raises(GroupError):
        charge_of((0,), build_group("S3"))


def test_charge_of_is_homomorphism():
    g = build_group("Z3")
    rng = np.random.default_rng(0)
    for _ in range(50):
        a = rng.integers(3, size=4)
        b = rng.integers(3, size=4)
        combined = [g.op(x, y) for x, y in zip(a, b)]
        assert charge_of(combined, g) == g.op(charge_of(a, g), charge_of(b, g))


def test_global_symmetry_operator():
    rep = regular_representation(build_group("Z2"))
    X = np.array([[0, 1], [1, 0]])
    R = global_symmetry_operator(rep, 3, 1)
    assert np.allclose(R, np.kron(np.kron(X, X), X))
    assert np.allclose(global_symmetry_operator(rep, 2, 0), np.eye(4))
    # orthogonality tr(R_g R_h^-1) = D delta
    R1 = global_symmetry_operator(rep, 2, 1)
    assert abs(np.trace(R1 @ R1.conj().T) - 4) < 1e-12
    assert abs(np.trace(R1)) < 1e-12


def test_is_symmetric():
    rep = regular_representation(build_group("Z2"))
    n = 2
    X = np.array([[0, 1], [1, 0]]).astype(complex)
    Z = np.diag([1, -1]).astype(complex)
    assert is_symmetric(np.eye(4, dtype=complex), rep, n)
    assert is_symmetric(np.kron(X, np.eye(2)), rep, n)
    assert not is_symmetric(np.kron(Z, np.eye(2)), rep, n)


def test_block_scalar_schur_form():
    # conjugated symmetry operators are exactly block scalar on each sector
    for name, n in (("Z2", 3), ("Z3", 2), ("S3", 2)):
        rep = regular_representation(build_group(name))
        dec = sector_decomposition(rep, n)
        B = dec.basis_change
        for g in range(rep.group.order):
            rot = B.conj().T @ global_symmetry_operator(rep, n, g) @ B
            mask = np.ones_like(rot)
            for s in dec.sectors:
                sl = dec.sector_slice(s)
                mask[sl, sl] = 0.0
            assert scipy.linalg.norm(rot * mask) < 1e-9
