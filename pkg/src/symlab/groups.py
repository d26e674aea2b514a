"""Finite groups, regular representations, and charge-sector decompositions.

Groups are stored as explicit multiplication tables (|G| <= 8 in practice),
which makes every axiom exhaustively checkable and removes any ambiguity
about generator conventions.  Supported descriptors: cyclic groups "Zp",
direct products "Zp1xZp2x...", and "S3" as the minimal non-Abelian case.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

__all__ = [
    "FiniteGroup",
    "SiteRepresentation",
    "SectorDecomposition",
    "build_group",
    "regular_representation",
    "sector_decomposition",
    "charge_of",
    "global_symmetry_operator",
    "is_symmetric",
    "GroupError",
    "CapacityError",
]

# Dense-simulation budget: total Hilbert space dimension for anything that
# materializes D x D arrays.
DENSE_DIM_BUDGET = 4096


class GroupError(ValueError):
    """Malformed group descriptor or unsupported group operation."""


class CapacityError(RuntimeError):
    """Requested object exceeds the dense-simulation budget."""


@dataclass(frozen=True)
class FiniteGroup:
    """A finite group given by its multiplication table.

    ``mult[g, h]`` is the index of the product g*h, ``inv[g]`` the inverse
    of g, and element 0 is always the identity.
    """

    name: str
    order: int
    mult: np.ndarray
    inv: np.ndarray
    abelian: bool
    identity: int = 0

    def __post_init__(self):
        self.mult.setflags(write=False)
        self.inv.setflags(write=False)

    def op(self, g: int, h: int) -> int:
        return int(self.mult[g, h])

    def product(self, elements) -> int:
        acc = self.identity
        for g in elements:
            acc = int(self.mult[acc, g])
        return acc

    def check_axioms(self) -> None:
        """Exhaustive associativity/identity/inverse check (cheap for |G| <= 8)."""
        n = self.order
        m = self.mult
        if m.shape != (n, n) or self.inv.shape != (n,):
            raise GroupError("table shapes inconsistent with group order")
        if not (np.all(m[0, :] == np.arange(n)) and np.all(m[:, 0] == np.arange(n))):
            raise GroupError("element 0 is not a two-sided identity")
        for g in range(n):
            if m[g, self.inv[g]] != 0 or m[self.inv[g], g] != 0:
                raise GroupError(f"inverse table wrong at element {g}")
        for g in range(n):
            for h in range(n):
                if not np.all(m[m[g, h], :] == m[g, m[h, :]]):
                    raise GroupError(f"associativity fails at ({g},{h})")
        if self.abelian != bool(np.all(m == m.T)):
            raise GroupError("abelian flag does not match multiplication table")

    def __repr__(self):
        return f"FiniteGroup({self.name}, order={self.order})"


def _cyclic_table(p: int) -> np.ndarray:
    idx = np.arange(p)
    return (idx[:, None] + idx[None, :]) % p


def _product_group(name: str, factors: list[int]) -> FiniteGroup:
    order = int(np.prod(factors))
    # element index <-> mixed-radix digit tuple, last factor fastest
    digits = np.array(list(itertools.product(*[range(p) for p in factors])), dtype=np.int64)
    lookup = {tuple(d): i for i, d in enumerate(digits)}
    mult = np.empty((order, order), dtype=np.int64)
    for i in range(order):
        summed = (digits[i][None, :] + digits) % np.array(factors)
        mult[i, :] = [lookup[tuple(row)] for row in summed]
    inv = np.array([lookup[tuple((-d) % np.array(factors))] for d in digits], dtype=np.int64)
    return FiniteGroup(name=name, order=order, mult=mult, inv=inv, abelian=True)


def _s3_group() -> FiniteGroup:
    perms = list(itertools.permutations(range(3)))  # identity first in lex order
    lookup = {p: i for i, p in enumerate(perms)}
    order = 6
    mult = np.empty((order, order), dtype=np.int64)
    for i, p in enumerate(perms):
        for j, q in enumerate(perms):
            comp = tuple(p[q[x]] for x in range(3))  # (p*q)(x) = p(q(x))
            mult[i, j] = lookup[comp]
    inv = np.empty(order, dtype=np.int64)
    for i, p in enumerate(perms):
        pinv = tuple(np.argsort(p))
        inv[i] = lookup[pinv]
    return FiniteGroup(name="S3", order=order, mult=mult, inv=inv, abelian=False)


def build_group(spec: str) -> FiniteGroup:
    """Build a group from a descriptor like "Z2", "Z3xZ2", or "S3"."""
    if not isinstance(spec, str) or not spec.strip():
        raise GroupError(f"bad group descriptor: {spec!r}")
    s = spec.strip()
    if s.upper() == "S3":
        g = _s3_group()
        g.check_axioms()
        return g
    factors = []
    for tok in s.split("x"):
        m = re.fullmatch(r"[Zz](\d+)", tok.strip())
        if not m:
            raise GroupError(f"bad group descriptor: {spec!r} (token {tok!r})")
        p = int(m.group(1))
        if p < 2:
            raise GroupError(f"cyclic factor must have p >= 2, got {p}")
        factors.append(p)
    g = _product_group(s, factors)
    g.check_axioms()
    return g


@dataclass(frozen=True)
class SiteRepresentation:
    """Single-site unitary representation: regular part tensor an inert ancilla."""

    group: FiniteGroup
    ancilla_dim: int
    site_dim: int
    matrices: np.ndarray  # (|G|, site_dim, site_dim)

    def matrix(self, g: int) -> np.ndarray:
        return self.matrices[g]

    def check(self, tol: float = 1e-10) -> None:
        G = self.group
        for g in range(G.order):
            U = self.matrices[g]
            if scipy.linalg.norm(U @ U.conj().T - np.eye(self.site_dim)) > tol:
                raise GroupError(f"matrix for element {g} is not unitary")
            for h in range(G.order):
                if scipy.linalg.norm(U @ self.matrices[h] - self.matrices[G.op(g, h)]) > tol:
                    raise GroupError(f"homomorphism fails at ({g},{h})")
        # regular-part orthogonality tr(R_g R_h^dag)/(|G| d') = delta_{g,h}
        tr = np.einsum("gij,hij->gh", self.matrices, self.matrices.conj()) / self.site_dim
        if scipy.linalg.norm(tr - np.eye(G.order)) > tol:
            raise GroupError("regular-part orthogonality fails")


def regular_representation(group: FiniteGroup, ancilla_dim: int = 1) -> SiteRepresentation:
    """Left-translation permutation matrices R_g|h> = |gh>, tensored with 1 on the ancilla."""
    if ancilla_dim < 1:
        raise GroupError("ancilla_dim must be >= 1")
    n = group.order
    mats = np.zeros((n, n, n))
    for g in range(n):
        for h in range(n):
            mats[g, group.op(g, h), h] = 1.0
    if ancilla_dim > 1:
        eye = np.eye(ancilla_dim)
        mats = np.stack([np.kron(m, eye) for m in mats])
    return SiteRepresentation(
        group=group,
        ancilla_dim=ancilla_dim,
        site_dim=n * ancilla_dim,
        matrices=mats.astype(complex),
    )


@dataclass(frozen=True)
class Sector:
    label: int            # irrep index
    irrep_dim: int        # d_lambda
    multiplicity: int     # D_lambda
    start: int            # first column of this sector in the rotated basis
    irrep_matrices: np.ndarray  # (|G|, d, d) unitary irrep


@dataclass(frozen=True)
class SectorDecomposition:
    """Block decomposition of n regular-representation sites.

    ``basis_change`` maps the computational product basis to the block basis,
    columns ordered by (sector ascending, multiplicity index, irrep index),
    so that  basis_change^dag R_g basis_change = sum_sectors 1_mult (x) irrep(g).
    """

    rep: SiteRepresentation
    n_sites: int
    total_dim: int
    sectors: tuple[Sector, ...]
    basis_change: np.ndarray

    @property
    def group(self) -> FiniteGroup:
        return self.rep.group

    def min_multiplicity(self) -> int:
        return min(s.multiplicity for s in self.sectors)

    def sector_slice(self, s: Sector) -> slice:
        return slice(s.start, s.start + s.irrep_dim * s.multiplicity)


def _abelian_characters(group: FiniteGroup) -> np.ndarray:
    """Character table chi[x, g] of an Abelian group, one row per irrep."""
    # Factor structure is recoverable from the descriptor; fall back to
    # simultaneous diagonalization for tables built by hand.
    m = re.fullmatch(r"(?:[Zz]\d+)(?:x[Zz]\d+)*", group.name.strip())
    if m:
        factors = [int(t[1:]) for t in group.name.strip().split("x")]
        digits = np.array(list(itertools.product(*[range(p) for p in factors])))
        chi = np.ones((group.order, group.order), dtype=complex)
        for x in range(group.order):
            for g in range(group.order):
                phase = sum(digits[x][j] * digits[g][j] / factors[j] for j in range(len(factors)))
                chi[x, g] = np.exp(2j * np.pi * phase)
        return chi
    raise GroupError(f"no character data for abelian group {group.name!r}")


_S3_IRREPS: dict[int, np.ndarray] | None = None


def _s3_irreps(group: FiniteGroup) -> list[np.ndarray]:
    """Unitary irreps of S3: trivial, sign, and the real 2-dim standard rep."""
    perms = list(itertools.permutations(range(3)))
    trivial = np.ones((6, 1, 1), dtype=complex)
    sign = np.array(
        [[[float(np.linalg.det(np.eye(3)[list(p)]))]] for p in perms], dtype=complex
    )
    # standard rep: action on the plane x+y+z=0, orthonormal basis
    basis = np.array([[1, -1, 0], [1, 1, -2]]).T / np.array([np.sqrt(2), np.sqrt(6)])
    std = np.empty((6, 2, 2), dtype=complex)
    for i, p in enumerate(perms):
        P = np.eye(3)[list(p)].T  # permutation matrix e_j -> e_{p(j)}
        std[i] = basis.T @ P @ basis
    return [trivial, sign, std]


def _abelian_decomposition(rep: SiteRepresentation, n: int) -> SectorDecomposition:
    group = rep.group
    q = rep.site_dim
    D = q**n
    # per-site Fourier: |x> = |G|^{-1/2} sum_g conj(chi_x(g)) |g>, so R_g|x> = chi_x(g)|x>
    chi = _abelian_characters(group)
    F = chi.conj().T / np.sqrt(group.order)  # columns indexed by charge x
    if rep.ancilla_dim > 1:
        F = np.kron(F, np.eye(rep.ancilla_dim))
    F_all = _kron_power(F, n)
    # cumulative-charge ladder on the charge labels: (x_1..x_n) -> (x_1, x_1+x_2, ...)
    ladder = _charge_ladder_permutation(group, n, rep.ancilla_dim)
    B = F_all[:, ladder]
    # group columns by total charge = charge digit of the last site
    order = []
    sectors = []
    start = 0
    radix = _site_radix(group, n, rep.ancilla_dim)
    last_charge = _last_site_charge_digits(group, n, rep.ancilla_dim)
    for lam in range(group.order):
        cols = np.nonzero(last_charge == lam)[0]
        order.extend(cols.tolist())
        mult = len(cols)
        irrep = chi[lam][:, None, None].astype(complex)  # 1-dim irrep matrices
        sectors.append(Sector(label=lam, irrep_dim=1, multiplicity=mult, start=start, irrep_matrices=irrep))
        start += mult
    B = B[:, order]
    return SectorDecomposition(rep=rep, n_sites=n, total_dim=D, sectors=tuple(sectors), basis_change=B)


def _site_radix(group: FiniteGroup, n: int, ancilla_dim: int) -> list[int]:
    return [group.order * ancilla_dim] * n


def _basis_digits(group: FiniteGroup, n: int, ancilla_dim: int) -> np.ndarray:
    """(D, n, 2) array of (charge digit, ancilla digit) per site, site 0 slowest."""
    q = group.order * ancilla_dim
    idx = np.arange(q**n)
    out = np.empty((q**n, n, 2), dtype=np.int64)
    for i in range(n - 1, -1, -1):
        out[:, i, 1] = idx % ancilla_dim
        out[:, i, 0] = (idx // ancilla_dim) % group.order
        idx = idx // q
    return out


def _pack_digits(digits: np.ndarray, group: FiniteGroup, ancilla_dim: int) -> np.ndarray:
    q = group.order * ancilla_dim
    n = digits.shape[1]
    idx = np.zeros(digits.shape[0], dtype=np.int64)
    for i in range(n):
        idx = idx * q + digits[:, i, 0] * ancilla_dim + digits[:, i, 1]
    return idx


def _charge_ladder_permutation(group: FiniteGroup, n: int, ancilla_dim: int) -> np.ndarray:
    """Permutation p with L|v> = |w>, w[p] = v: basis map x_i -> x_1+...+x_i on charge digits."""
    digits = _basis_digits(group, n, ancilla_dim)
    out = digits.copy()
    acc = digits[:, 0, 0].copy()
    for i in range(1, n):
        acc = group.mult[acc, digits[:, i, 0]]
        out[:, i, 0] = acc
    packed = _pack_digits(out, group, ancilla_dim)
    # column permutation for the matrix with entries <packed(x)|L|x>: L[:, x] = e_{packed(x)}
    perm = np.empty_like(packed)
    perm[packed] = np.arange(len(packed))
    return perm


def _last_site_charge_digits(group: FiniteGroup, n: int, ancilla_dim: int) -> np.ndarray:
    return _basis_digits(group, n, ancilla_dim)[:, n - 1, 0]


def _kron_power(M: np.ndarray, n: int) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    for _ in range(n):
        out = np.kron(out, M)
    return out


def _nonabelian_decomposition(rep: SiteRepresentation, n: int) -> SectorDecomposition:
    """Numerical isotypic decomposition via transition-operator projectors.

    Works for any group whose unitary irreps are available (here: S3).  The
    basis inside each sector is fixed by QR with column pivoting on the
    first-row projector, which makes the column order deterministic.
    """
    group = rep.group
    if group.name != "S3":
        raise GroupError(f"non-Abelian decomposition only wired for S3, got {group.name}")
    irreps = _s3_irreps(group)
    D = rep.site_dim**n
    Rg = [global_symmetry_operator(rep, n, g) for g in range(group.order)]
    sectors = []
    columns = []
    start = 0
    for lam, irrep in enumerate(irreps):
        d = irrep.shape[1]
        # P^lam_{kl} = (d/|G|) sum_g conj(irrep(g)_{kl}) R_g
        P = np.zeros((d, d, D, D), dtype=complex)
        for g in range(group.order):
            P += (d / group.order) * irrep[g].conj()[:, :, None, None] * Rg[g][None, None]
        q, r, piv = scipy.linalg.qr(P[0, 0], pivoting=True)
        rank = int(np.sum(np.abs(np.diag(r)) > 1e-9 * max(1.0, abs(r[0, 0]))))
        base = q[:, :rank]  # orthonormal basis of the (lam, row 0) subspace
        mult = rank
        block_cols = np.zeros((D, mult * d), dtype=complex)
        for mcol in range(mult):
            v = base[:, mcol]
            for kk in range(d):
                block_cols[:, mcol * d + kk] = P[kk, 0] @ v
        columns.append(block_cols)
        sectors.append(
            Sector(label=lam, irrep_dim=d, multiplicity=mult, start=start, irrep_matrices=irrep)
        )
        start += mult * d
    B = np.hstack(columns)
    return SectorDecomposition(rep=rep, n_sites=n, total_dim=D, sectors=tuple(sectors), basis_change=B)


def sector_decomposition(rep: SiteRepresentation, n: int) -> SectorDecomposition:
    """Decompose n sites into irrep sectors; dense dimension must fit the budget."""
    if n < 1:
        raise GroupError("need n >= 1 sites")
    D = rep.site_dim**n
    if D > DENSE_DIM_BUDGET:
        raise CapacityError(f"total dimension {D} exceeds dense budget {DENSE_DIM_BUDGET}")
    if rep.group.abelian:
        dec = _abelian_decomposition(rep, n)
    else:
        dec = _nonabelian_decomposition(rep, n)
    return dec


def check_sector_decomposition(dec: SectorDecomposition, tol: float = 1e-10) -> None:
    """Verify dimensions, the regular-rep multiplicity formula, and block structure."""
    D = dec.total_dim
    if sum(s.irrep_dim * s.multiplicity for s in dec.sectors) != D:
        raise GroupError("sector dimensions do not sum to the total dimension")
    G = dec.group
    for s in dec.sectors:
        expected = s.irrep_dim * D // G.order
        if s.multiplicity != expected:
            raise GroupError(
                f"sector {s.label}: multiplicity {s.multiplicity} != d*D/|G| = {expected}"
            )
    B = dec.basis_change
    if scipy.linalg.norm(B @ B.conj().T - np.eye(D)) > tol * D:
        raise GroupError("basis change is not unitary")
    for g in range(G.order):
        R = global_symmetry_operator(dec.rep, dec.n_sites, g)
        rot = B.conj().T @ R @ B
        for s in dec.sectors:
            blk = rot[dec.sector_slice(s), dec.sector_slice(s)]
            want = np.kron(np.eye(s.multiplicity), s.irrep_matrices[g])
            if scipy.linalg.norm(blk - want) > tol * D:
                raise GroupError(f"sector {s.label} not block-scalar for element {g}")
        mask = np.ones_like(rot)
        for s in dec.sectors:
            mask[dec.sector_slice(s), dec.sector_slice(s)] = 0.0
        if scipy.linalg.norm(rot * mask) > tol * D:
            raise GroupError(f"off-block mass for element {g}")


def charge_of(x, group: FiniteGroup) -> int:
    """Total charge (group-element sum) of a tuple of per-site charges; Abelian only."""
    if not group.abelian:
        raise GroupError("charge_of is defined for Abelian groups only")
    return group.product(int(v) for v in x)


def global_symmetry_operator(rep: SiteRepresentation, n: int, g: int) -> np.ndarray:
    """n-fold tensor power of the site matrix for element g."""
    D = rep.site_dim**n
    if D > DENSE_DIM_BUDGET:
        raise CapacityError(f"total dimension {D} exceeds dense budget {DENSE_DIM_BUDGET}")
    return _kron_power(rep.matrix(g), n)


def is_symmetric(U: np.ndarray, rep: SiteRepresentation, n: int, tol: float = 1e-9) -> bool:
    """True iff U commutes with every global symmetry operator to tolerance tol."""
    D = rep.site_dim**n
    if U.shape != (D, D):
        raise GroupError(f"operator shape {U.shape} does not match dimension {D}")
    for g in range(rep.group.order):
        R = global_symmetry_operator(rep, n, g)
        if scipy.linalg.norm(U @ R - R @ U) > tol:
            return False
    return True
