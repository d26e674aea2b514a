"""Exact and approximate twirls of symmetric Haar ensembles.

The k-th moment of a symmetric random-unitary ensemble is stored as Choi
coefficients over the commutant label basis {R_gvec * sigma}; see
``symlab.commutant`` for the machinery.  This module provides the
user-facing operations: Weingarten tables, the exact symmetric twirl
(an orthogonal projection onto the commutant), its uniform-coefficient
approximation, relative design error, and Monte Carlo twirls.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .groups import FiniteGroup, SiteRepresentation, SectorDecomposition, CapacityError
from .commutant import (
    PartitionBasis,
    CoeffChannel,
    all_perms,
    perm_compose,
    perm_inverse,
    perm_cycles,
    exact_twirl_channel,
    uniform_twirl_channel,
    embed_coefficients,
    relative_error_pencil,
)

__all__ = [
    "CommutantBasis",
    "ChoiCoefficients",
    "WeingartenTable",
    "cycle_trace",
    "weingarten_table",
    "exact_symmetric_haar_choi",
    "approx_symmetric_haar_choi",
    "relative_error",
    "monte_carlo_twirl",
    "approx_twirl_error_bound",
]


def approx_twirl_error_bound(group_order: int, k: int, D: int) -> float:
    """Relative error |G| k^2 / D of the uniform-coefficient twirl formula."""
    return group_order * k**2 / D


# ---------------------------------------------------------------------------
# Weingarten tables
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WeingartenTable:
    """Inverse of the S_k permutation Gram matrix G[s,t] = D^{#cycles(s t^-1)}.

    Values depend only on the cycle type of the permutation and are exact
    rationals whenever D^k fits in 64 bits.
    """

    k: int
    D: int
    values: dict[tuple[int, ...], Fraction]
    exact: bool

    def value(self, perm) -> float:
        return float(self.values[cycle_type(perm)])

    def value_exact(self, perm) -> Fraction:
        return self.values[cycle_type(perm)]

    def as_matrix(self) -> np.ndarray:
        perms = all_perms(self.k)
        W = np.empty((len(perms), len(perms)))
        for i, s in enumerate(perms):
            for j, t in enumerate(perms):
                W[i, j] = float(self.values[cycle_type(perm_compose(s, perm_inverse(t)))])
        return W

    def gram_matrix(self) -> np.ndarray:
        perms = all_perms(self.k)
        G = np.empty((len(perms), len(perms)))
        for i, s in enumerate(perms):
            for j, t in enumerate(perms):
                G[i, j] = float(self.D ** len(perm_cycles(perm_compose(s, perm_inverse(t)))))
        return G


def cycle_type(perm) -> tuple[int, ...]:
    return tuple(sorted((len(c) for c in perm_cycles(tuple(perm))), reverse=True))


def weingarten_table(k: int, D: int) -> WeingartenTable:
    """Weingarten values for S_k at dimension D, by exact class-algebra inversion.

    The Gram matrix is convolution by the central element f(pi) = D^#cycles(pi),
    so its inverse is the central element solving (f * w)(pi) = delta_{pi,e};
    that collapses to a #classes x #classes rational system.
    """
    if k < 1 or k > 5:
        raise ValueError("k must be in 1..5")
    if k > D:
        raise ValueError(f"Weingarten inverse undefined for k={k} > D={D} with this method")
    perms = all_perms(k)
    classes: dict[tuple[int, ...], int] = {}
    reps: list[tuple] = []
    for p in perms:
        ct = cycle_type(p)
        if ct not in classes:
            classes[ct] = len(reps)
            reps.append(p)
    nc = len(reps)
    exact = D**k < 2**63
    f = {p: Fraction(D) ** len(perm_cycles(p)) for p in perms}
    A = [[Fraction(0)] * nc for _ in range(nc)]
    for ci, pc in enumerate(reps):
        for u in perms:
            cj = classes[cycle_type(perm_compose(perm_inverse(u), pc))]
            A[ci][cj] += f[u]
    rhs = [Fraction(1) if cycle_type(reps[c]) == (1,) * k else Fraction(0) for c in range(nc)]
    sol = _solve_rational(A, rhs)
    values = {ct: sol[idx] for ct, idx in classes.items()}
    if not exact:
        values = {ct: Fraction(float(v)) for ct, v in values.items()}
    return WeingartenTable(k=k, D=D, values=values, exact=exact)


def _solve_rational(A, b):
    n = len(A)
    M = [row[:] + [b[i]] for i, row in enumerate(A)]
    for col in range(n):
        piv = next(r for r in range(col, n) if M[r][col] != 0)
        M[col], M[piv] = M[piv], M[col]
        inv = Fraction(1, 1) / M[col][col]
        M[col] = [v * inv for v in M[col]]
        for r in range(n):
            if r != col and M[r][col] != 0:
                factor = M[r][col]
                M[r] = [vr - factor * vc for vr, vc in zip(M[r], M[col])]
    return [M[r][n] for r in range(n)]


# ---------------------------------------------------------------------------
# commutant basis and Choi coefficients
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CommutantBasis:
    """Labels {R_gvec * sigma} over a site partition, with their Gram matrix."""

    partition: PartitionBasis

    @staticmethod
    def global_basis(rep: SiteRepresentation, n: int, k: int) -> "CommutantBasis":
        return CommutantBasis(PartitionBasis.build(rep, k, [tuple(range(n))]))

    @property
    def k(self) -> int:
        return self.partition.k

    @property
    def group(self) -> FiniteGroup:
        return self.partition.rep.group

    @property
    def size(self) -> int:
        return self.partition.size

    def labels(self) -> list[tuple]:
        """One (gvec, sigma) pair per block, per label."""
        out = []
        for idx in range(self.partition.size):
            out.append(
                tuple(self.partition.block_labels.decode(b) for b in self.partition.decode(idx))
            )
        return out

    def gram(self) -> np.ndarray:
        return self.partition.gram()


@dataclass
class ChoiCoefficients:
    """A twirl channel in coefficient form over commutant label bases.

    ``coeff[i, j]`` multiplies O_i tr(I_j^dag A) in the channel, equivalently
    O_i (x) conj(I_j) / D^k in the Choi state.  For the uniform (approximate)
    twirl the matrix is diagonal.
    """

    channel: CoeffChannel
    kind: str
    bound_valid: bool = True
    meta: dict = field(default_factory=dict)

    @property
    def k(self) -> int:
        return self.channel.k

    @property
    def coeff(self) -> np.ndarray:
        return self.channel.coeff

    @property
    def dim(self) -> int:
        return self.channel.dim

    @property
    def op_dim(self) -> int:
        return self.channel.op_dim

    def apply(self, A: np.ndarray) -> np.ndarray:
        return self.channel.apply(A)

    def choi_matrix(self) -> np.ndarray:
        return self.channel.choi_matrix()

    def compose_self(self) -> "ChoiCoefficients":
        return ChoiCoefficients(self.channel.compose_self(), kind=f"({self.kind})^2")

    def to_json(self) -> str:
        """Label-pair keyed dump of the nonzero coefficients."""
        entries = {}
        ob, ib = self.channel.out_basis, self.channel.in_basis
        for i in range(ob.size):
            for j in range(ib.size):
                c = self.channel.coeff[i, j]
                if abs(c) > 1e-15:
                    key = f"{_label_str(ob, i)}|{_label_str(ib, j)}"
                    entries[key] = [float(np.real(c)), float(np.imag(c))]
        return json.dumps(
            {
                "kind": self.kind,
                "k": self.k,
                "out_blocks": [list(b) for b in ob.blocks],
                "in_blocks": [list(b) for b in ib.blocks],
                "coefficients": entries,
            },
            sort_keys=True,
        )


def _label_str(basis: PartitionBasis, idx: int) -> str:
    parts = []
    for b in basis.decode(idx):
        gvec, perm = basis.block_labels.decode(b)
        parts.append("g" + "".join(map(str, gvec)) + "s" + "".join(map(str, perm)))
    return ",".join(parts)


def cycle_trace(label_a, label_b, group: FiniteGroup, site_dims) -> complex:
    """tr(sigma^-1 R_ga^-1 R_gb tau) evaluated by cycle counting.

    Labels are (gvec, sigma) pairs; ``site_dims`` lists the per-site dimension
    of each regular-representation site the labels act on.  Each cycle of
    sigma^-1 tau contributes the site dimension when its ordered product of
    ga^-1 gb elements is the identity, and zero otherwise.
    """
    (ga, sa), (gb, sb) = label_a, label_b
    k = len(sa)
    if len(sb) != k or len(ga) != k or len(gb) != k:
        raise ValueError("labels have inconsistent copy counts")
    m = [group.op(group.inv[ga[j]], gb[j]) for j in range(k)]
    mt = [m[sa[j]] for j in range(k)]
    pi = perm_compose(perm_inverse(tuple(sa)), tuple(sb))
    total = 1.0
    for cyc in perm_cycles(pi):
        prod = mt[cyc[0]]
        for j in reversed(cyc[1:]):
            prod = group.op(prod, mt[j])
        if prod != group.identity:
            return 0.0 + 0.0j
        for q in site_dims:
            total *= q
    return complex(total)


# ---------------------------------------------------------------------------
# exact and approximate symmetric Haar twirls
# ---------------------------------------------------------------------------

def exact_symmetric_haar_choi(decomp: SectorDecomposition, k: int) -> ChoiCoefficients:
    """k-th moment of the symmetric Haar ensemble on ``decomp``'s space.

    Computed as the orthogonal projection onto the commutant span
    {R_gvec * sigma}; rejected when any sector multiplicity is below k,
    where the Weingarten-regime formula stops being defined.
    """
    for s in decomp.sectors:
        if k > s.multiplicity:
            raise ValueError(
                f"sector {s.label} has multiplicity {s.multiplicity} < k={k}; "
                "twirl formula undefined in this regime"
            )
    basis = CommutantBasis.global_basis(decomp.rep, decomp.n_sites, k)
    ch = exact_twirl_channel(basis.partition)
    return ChoiCoefficients(ch, kind="exact_symmetric_haar",
                            meta={"group": decomp.group.name, "n": decomp.n_sites, "k": k})


def approx_symmetric_haar_choi(
    rep: SiteRepresentation, n: int, k: int
) -> ChoiCoefficients:
    """Uniform-coefficient twirl: weight 1/D^k on every commutant label.

    Valid as an eps = |G| k^2 / D relative-error approximation whenever
    k^2 <= D / |G|; outside that regime the coefficients are still returned
    but flagged, since the error bound is not guaranteed.
    """
    basis = CommutantBasis.global_basis(rep, n, k)
    D = rep.site_dim**n
    ok = k**2 <= D / rep.group.order
    ch = uniform_twirl_channel(basis.partition)
    return ChoiCoefficients(
        ch,
        kind="approx_symmetric_haar",
        bound_valid=bool(ok),
        meta={"group": rep.group.name, "n": n, "k": k,
              "bound": approx_twirl_error_bound(rep.group.order, k, D)},
    )


def relative_error(choi_E: ChoiCoefficients, choi_H: ChoiCoefficients) -> float:
    """Smallest eps with (1-eps) Phi_H <= Phi_E <= (1+eps) Phi_H in CP order.

    Both moments must be supported on compatible commutant bases; the finer
    partition hosts the computation and the coarser one is embedded into it.
    """
    ce, ch = choi_E.channel, choi_H.channel
    dk = float(ce.op_dim)
    same_blocks = (
        getattr(ce.out_basis, "blocks", None) == getattr(ch.out_basis, "blocks", ())
        and getattr(ce.in_basis, "blocks", None) == getattr(ch.in_basis, "blocks", ())
    )
    if ce.out_basis is ch.out_basis and ce.in_basis is ch.in_basis or same_blocks:
        return relative_error_pencil(ce.coeff / dk, ch.coeff / dk, ce.out_basis, ce.in_basis)
    coeff_H = embed_coefficients(ch.coeff, ch.out_basis, ch.in_basis, ce.out_basis, ce.in_basis)
    return relative_error_pencil(ce.coeff / dk, coeff_H / dk, ce.out_basis, ce.in_basis)


def monte_carlo_twirl(
    sampler, A: np.ndarray, k: int, N: int, rng: np.random.Generator, chunk: int = 64
):
    """Sample mean of U^(x)k A U^(x)k-dagger with per-entry standard errors.

    ``sampler(rng)`` draws one unitary on the base space; the k-fold tensor
    power is applied to A.  Returns (mean, stderr) with the elementwise
    standard error of the mean over the N draws.
    """
    if N < 2:
        raise ValueError("need at least two samples for an error estimate")
    dim_k = A.shape[0]
    total = np.zeros((dim_k, dim_k), dtype=complex)
    sumsq = np.zeros((dim_k, dim_k))
    done = 0
    while done < N:
        B = min(chunk, N - done)
        Uks = np.empty((B, dim_k, dim_k), dtype=complex)
        for b in range(B):
            U = sampler(rng)
            Uk = U
            for _ in range(k - 1):
                Uk = np.kron(Uk, U)
            if Uk.shape != (dim_k, dim_k):
                raise ValueError("sampler dimension inconsistent with operand")
            Uks[b] = Uk
        X = np.matmul(np.matmul(Uks, A), Uks.conj().transpose(0, 2, 1))
        total += X.sum(axis=0)
        sumsq += (np.abs(X) ** 2).sum(axis=0)
        done += B
    mean = total / N
    var = np.maximum(sumsq - N * np.abs(mean) ** 2, 0.0) / (N - 1)
    stderr = np.sqrt(var / N)
    return mean, stderr
