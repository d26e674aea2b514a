"""Commutant-label machinery shared by the moment and ensemble modules.

Twirl channels are represented by coefficients over finite sets of unitary
"labels".  A label is a permutation of the (site x copy) slot grid together
with a group element per slot; all labels used here (symmetry operators
tensored with copy permutations, brickwork patch labels, translation
operators) are of this form and multiply like a finite group.  Traces of
label products reduce to cycle counting, so Gram matrices are exact
integers, and spectra of channel differences can be computed inside the
label algebra without ever materializing a D^k-dimensional operator.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .groups import FiniteGroup, SiteRepresentation, CapacityError

__all__ = [
    "Perm",
    "all_perms",
    "perm_compose",
    "perm_inverse",
    "perm_cycles",
    "perm_distance",
    "BlockLabels",
    "PartitionBasis",
    "CoeffChannel",
    "exact_twirl_channel",
    "uniform_twirl_channel",
    "compose_channels",
    "two_layer_channel",
    "embed_coefficients",
    "relative_error_pencil",
    "AlgebraBudgetError",
    "SupportLeakageError",
]

Perm = tuple[int, ...]

# Cap on |out labels| * |in labels| for pencil computations; above this the
# left-regular matrices of the label algebra no longer fit in memory.
ALGEBRA_DIM_CAP = 4608
GRAM_TRUNCATION = 1e-12
SUPPORT_CUTOFF = 1e-10
LEAKAGE_TOL = 1e-8


class AlgebraBudgetError(CapacityError):
    """Label algebra too large for an exact spectral computation."""


class SupportLeakageError(RuntimeError):
    """Channel has weight outside the reference twirl's support."""


# ---------------------------------------------------------------------------
# permutations
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def all_perms(k: int) -> tuple[Perm, ...]:
    return tuple(itertools.permutations(range(k)))


def perm_compose(p: Perm, q: Perm) -> Perm:
    """(p o q)(x) = p(q(x))."""
    return tuple(p[q[x]] for x in range(len(p)))


def perm_inverse(p: Perm) -> Perm:
    out = [0] * len(p)
    for i, v in enumerate(p):
        out[v] = i
    return tuple(out)


def perm_cycles(p: Perm) -> list[list[int]]:
    seen = [False] * len(p)
    cycles = []
    for start in range(len(p)):
        if seen[start]:
            continue
        cyc = [start]
        seen[start] = True
        j = p[start]
        while j != start:
            cyc.append(j)
            seen[j] = True
            j = p[j]
        cycles.append(cyc)
    return cycles


def perm_distance(p: Perm) -> int:
    """|p| = (number of points) - (number of cycles); minimal transposition count."""
    return len(p) - len(perm_cycles(p))


# ---------------------------------------------------------------------------
# block labels: (g-vector in G^k, copy permutation in S_k) on one site block
# ---------------------------------------------------------------------------

class BlockLabels:
    """The label group {R_gvec * sigma} restricted to one block of sites.

    Multiplication: (g, s)(h, t) = (g * s(h), s o t) with s(h)_j = h_{s^-1(j)}.
    """

    def __init__(self, group: FiniteGroup, k: int):
        self.group = group
        self.k = k
        self.perms = all_perms(k)
        self.gvecs = tuple(itertools.product(range(group.order), repeat=k))
        self.n_g = len(self.gvecs)
        self.size = len(self.perms) * self.n_g
        self._g_index = {g: i for i, g in enumerate(self.gvecs)}
        self._p_index = {p: i for i, p in enumerate(self.perms)}
        self._mult: np.ndarray | None = None
        self._inv: np.ndarray | None = None

    def encode(self, gvec, perm: Perm) -> int:
        return self._p_index[tuple(perm)] * self.n_g + self._g_index[tuple(gvec)]

    def decode(self, idx: int) -> tuple[tuple[int, ...], Perm]:
        return self.gvecs[idx % self.n_g], self.perms[idx // self.n_g]

    @property
    def identity(self) -> int:
        return self.encode((0,) * self.k, tuple(range(self.k)))

    def mult_table(self) -> np.ndarray:
        if self._mult is None:
            size = self.size
            table = np.empty((size, size), dtype=np.int32)
            for a in range(size):
                ga, pa = self.decode(a)
                for b in range(size):
                    gb, pb = self.decode(b)
                    pa_inv = perm_inverse(pa)
                    gprod = tuple(self.group.op(ga[j], gb[pa_inv[j]]) for j in range(self.k))
                    table[a, b] = self.encode(gprod, perm_compose(pa, pb))
            self._mult = table
        return self._mult

    def inverse_table(self) -> np.ndarray:
        if self._inv is None:
            table = self.mult_table()
            ident = self.identity
            inv = np.empty(self.size, dtype=np.int32)
            for a in range(self.size):
                inv[a] = int(np.nonzero(table[a] == ident)[0][0])
            self._inv = inv
        return self._inv

    def site_trace_table(self, q: int) -> np.ndarray:
        """T[a, b] = single-site trace of (label_a)^dag (label_b) on k copies.

        Equals q per cycle of sa^-1 sb whose ordered product of
        (ga^-1 gb)_{sa(.)} elements is the identity, zero otherwise.
        """
        G = self.group
        T = np.zeros((self.size, self.size), dtype=np.int64)
        for a in range(self.size):
            ga, pa = self.decode(a)
            pa_inv = perm_inverse(pa)
            for b in range(self.size):
                gb, pb = self.decode(b)
                m = [G.op(G.inv[ga[j]], gb[j]) for j in range(self.k)]
                mt = [m[pa[j]] for j in range(self.k)]  # conjugated by sa^-1
                pi = perm_compose(pa_inv, pb)
                val = 1
                for cyc in perm_cycles(pi):
                    # trace over cycle (j1 -> j2 -> ...) is q iff
                    # mt[j1] * mt[jm] * ... * mt[j2] is the identity
                    prod = mt[cyc[0]]
                    for j in reversed(cyc[1:]):
                        prod = G.op(prod, mt[j])
                    if prod != 0:
                        val = 0
                        break
                    val *= q
                T[a, b] = val
        return T


# ---------------------------------------------------------------------------
# partition bases: product labels over a partition of the sites
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PartitionBasis:
    """All product labels over a partition of ``n_sites`` into blocks.

    Label index is mixed-radix over per-block label indices, block 0 slowest.
    """

    rep: SiteRepresentation
    k: int
    n_sites: int
    blocks: tuple[tuple[int, ...], ...]
    block_labels: BlockLabels

    def __post_init__(self):
        covered = sorted(s for blk in self.blocks for s in blk)
        if covered != list(range(self.n_sites)):
            raise ValueError("blocks must partition the sites exactly")

    @staticmethod
    def build(rep: SiteRepresentation, k: int, blocks) -> "PartitionBasis":
        blocks = tuple(tuple(int(s) for s in blk) for blk in blocks)
        return PartitionBasis(
            rep=rep,
            k=k,
            n_sites=sum(len(b) for b in blocks),
            blocks=blocks,
            block_labels=_block_labels_for(rep.group, k),
        )

    @property
    def size(self) -> int:
        return self.block_labels.size ** len(self.blocks)

    @property
    def q(self) -> int:
        return self.rep.site_dim

    @property
    def total_dim(self) -> int:
        return self.q ** (self.n_sites * self.k)

    @property
    def op_dim(self) -> int:
        """Dimension of the space the label operators act on."""
        return self.q ** (self.n_sites * self.k)

    def decode(self, idx: int) -> tuple[int, ...]:
        out = []
        for _ in self.blocks:
            out.append(idx % self.block_labels.size)
            idx //= self.block_labels.size
        return tuple(reversed(out))

    def encode(self, per_block) -> int:
        idx = 0
        for b in per_block:
            idx = idx * self.block_labels.size + int(b)
        return idx

    def block_of_site(self) -> np.ndarray:
        out = np.empty(self.n_sites, dtype=np.int64)
        for bi, blk in enumerate(self.blocks):
            for s in blk:
                out[s] = bi
        return out

    def global_embedding(self) -> np.ndarray:
        """Indices of the globally-constant labels (same block label everywhere)."""
        L = self.block_labels.size
        nb = len(self.blocks)
        idx = np.zeros(L, dtype=np.int64)
        for b in range(L):
            v = 0
            for _ in range(nb):
                v = v * L + b
            idx[b] = v
        return idx

    def mult_table(self) -> np.ndarray:
        if self.size > ALGEBRA_DIM_CAP:
            raise AlgebraBudgetError(f"partition basis of size {self.size} over cap")
        bt = self.block_labels.mult_table().astype(np.int64)
        L = self.block_labels.size
        nb = len(self.blocks)
        table = np.zeros((self.size, self.size), dtype=np.int32)
        idx = np.arange(self.size)
        for a in range(self.size):
            da = self.decode(a)
            row = np.zeros(self.size, dtype=np.int64)
            for bi in range(nb):
                digits = (idx // (L ** (nb - 1 - bi))) % L
                row = row * L + bt[da[bi]][digits]
            table[a] = row
        return table

    def gram(self, other: "PartitionBasis | None" = None) -> np.ndarray:
        """Cross-Gram tr(A_i^dag B_j), exact integer-valued, as float array."""
        other = other if other is not None else self
        if self.rep is not other.rep or self.k != other.k or self.n_sites != other.n_sites:
            raise ValueError("bases live on different spaces")
        T = self.block_labels.site_trace_table(self.q).astype(float)
        La, Lb = self.block_labels.size, other.block_labels.size
        na, nb = len(self.blocks), len(other.blocks)
        if La**na * Lb**nb > ALGEBRA_DIM_CAP**2:
            raise AlgebraBudgetError("cross-Gram over budget")
        cells: dict[tuple[int, int], int] = {}
        mine = self.block_of_site()
        theirs = other.block_of_site()
        for s in range(self.n_sites):
            key = (int(mine[s]), int(theirs[s]))
            cells[key] = cells.get(key, 0) + 1
        out = np.ones((La,) * na + (Lb,) * nb)
        for (bi, bj), cnt in cells.items():
            shape = [1] * (na + nb)
            shape[bi] = La
            shape[na + bj] = Lb
            out = out * (T**cnt).reshape(shape)
        return out.reshape(La**na, Lb**nb)

    # dense realization -----------------------------------------------------

    def dense_permutation(self, idx: int) -> np.ndarray:
        """Basis permutation p with  B|x> = |p(x)>  for label ``idx``."""
        q, n, k = self.q, self.n_sites, self.k
        dim = q ** (n * k)
        if dim > 1 << 24:
            raise CapacityError(f"dense label realization of dim {dim} refused")
        G = self.rep.group
        anc = self.rep.ancilla_dim
        digits = np.arange(dim, dtype=np.int64)
        # slot order: copy slowest, then site, digit fastest
        slot_digits = np.empty((dim, k, n), dtype=np.int64)
        rem = digits
        for c in range(k - 1, -1, -1):
            for s in range(n - 1, -1, -1):
                slot_digits[:, c, s] = rem % q
                rem = rem // q
        per_block = self.decode(idx)
        out_digits = np.empty_like(slot_digits)
        for s in range(n):
            bi = None
            for j, blk in enumerate(self.blocks):
                if s in blk:
                    bi = j
                    break
            gvec, perm = self.block_labels.decode(per_block[bi])
            pinv = perm_inverse(perm)
            for c in range(k):
                src = slot_digits[:, pinv[c], s]
                charge, ancd = src // anc, src % anc
                out_digits[:, c, s] = G.mult[gvec[c], charge] * anc + ancd
        out = np.zeros(dim, dtype=np.int64)
        for c in range(k):
            for s in range(n):
                out = out * q + out_digits[:, c, s]
        return out

    def dense_matrix(self, idx: int) -> np.ndarray:
        p = self.dense_permutation(idx)
        dim = len(p)
        M = np.zeros((dim, dim), dtype=complex)
        M[p, np.arange(dim)] = 1.0
        return M


# ---------------------------------------------------------------------------
# slot-permutation bases (labels that move whole cells, e.g. translations)
# ---------------------------------------------------------------------------

class SlotBasis:
    """Labels acting on an (n_slots)-fold product of q-dim cells.

    A label is a permutation p of the slots plus a group element per slot:
    |x_1..x_N>  ->  |y>,  y_{p(s)} = g_s * x_s, with the group acting by
    left translation on a regular-representation factor of each cell.  The
    identity group (order 1) gives plain slot permutations.  Closure under
    products and adjoints is required (checked when the mult table is built).
    """

    def __init__(self, group: FiniteGroup, q_slot: int, perms: np.ndarray, internals: np.ndarray):
        self.group = group
        self.q = int(q_slot)
        self.perms = np.asarray(perms, dtype=np.int64)
        self.internals = np.asarray(internals, dtype=np.int64)
        if self.perms.shape != self.internals.shape:
            raise ValueError("perms and internals must have matching shapes")
        self.size = self.perms.shape[0]
        self.n_slots = self.perms.shape[1]
        self._index = {self._key(i): i for i in range(self.size)}
        self._mult: np.ndarray | None = None

    def _key(self, i: int) -> bytes:
        return self.perms[i].tobytes() + self.internals[i].tobytes()

    def index_of(self, perm, internal) -> int:
        key = np.asarray(perm, dtype=np.int64).tobytes() + np.asarray(
            internal, dtype=np.int64
        ).tobytes()
        return self._index[key]

    def _compose(self, i: int, j: int) -> tuple[np.ndarray, np.ndarray]:
        # (p2,g2)(p1,g1) = (p2 o p1, h) with h_s = g2[p1(s)] * g1[s]
        p2, g2 = self.perms[i], self.internals[i]
        p1, g1 = self.perms[j], self.internals[j]
        return p2[p1], self.group.mult[g2[p1], g1]

    def mult_table(self) -> np.ndarray:
        if self._mult is None:
            if self.size > ALGEBRA_DIM_CAP:
                raise AlgebraBudgetError(f"slot basis of size {self.size} over cap")
            table = np.empty((self.size, self.size), dtype=np.int32)
            for i in range(self.size):
                for j in range(self.size):
                    p, g = self._compose(i, j)
                    key = p.tobytes() + g.tobytes()
                    if key not in self._index:
                        raise ValueError("label set is not closed under products")
                    table[i, j] = self._index[key]
            self._mult = table
        return self._mult

    def gram(self, other: "SlotBasis | None" = None) -> np.ndarray:
        """tr(A_i^dag B_j) by cycle counting over the composed slot permutation."""
        other = other if other is not None else self
        if other.n_slots != self.n_slots or other.q != self.q:
            raise ValueError("bases live on different slot grids")
        G = self.group
        out = np.zeros((self.size, other.size))
        for i in range(self.size):
            pi_inv = perm_inverse(tuple(self.perms[i]))
            gi = self.internals[i]
            for j in range(other.size):
                # A_i^dag B_j = (pi^-1 o pj, h), h_s = gi[pj(s)]^-1 * gj[s]
                pj, gj = other.perms[j], other.internals[j]
                comp = tuple(pi_inv[p] for p in pj)
                h = [int(G.mult[G.inv[gi[pj[s]]], gj[s]]) for s in range(self.n_slots)]
                val = 1.0
                for cyc in perm_cycles(comp):
                    prod = h[cyc[0]]
                    for s in reversed(cyc[1:]):
                        prod = G.op(prod, h[s])
                    if prod != 0:
                        val = 0.0
                        break
                    val *= self.q
                out[i, j] = val
        return out

    def dense_permutation(self, idx: int) -> np.ndarray:
        dim = self.q**self.n_slots
        if dim > 1 << 24:
            raise CapacityError(f"dense slot-label realization of dim {dim} refused")
        N = self.n_slots
        digits = np.empty((dim, N), dtype=np.int64)
        rem = np.arange(dim)
        for s in range(N - 1, -1, -1):
            digits[:, s] = rem % self.q
            rem = rem // self.q
        p, g = self.perms[idx], self.internals[idx]
        out_digits = np.empty_like(digits)
        if self.group.order == 1:
            for s in range(N):
                out_digits[:, p[s]] = digits[:, s]
        else:
            anc = self.q // self.group.order
            for s in range(N):
                charge, ancd = digits[:, s] // anc, digits[:, s] % anc
                out_digits[:, p[s]] = self.group.mult[g[s], charge] * anc + ancd
        out = np.zeros(dim, dtype=np.int64)
        for s in range(N):
            out = out * self.q + out_digits[:, s]
        return out

    def dense_matrix(self, idx: int) -> np.ndarray:
        p = self.dense_permutation(idx)
        dim = len(p)
        M = np.zeros((dim, dim), dtype=complex)
        M[p, np.arange(dim)] = 1.0
        return M

    @property
    def op_dim(self) -> int:
        return self.q**self.n_slots


_BLOCK_LABEL_CACHE: dict[tuple[str, int, int], BlockLabels] = {}


def _block_labels_for(group: FiniteGroup, k: int) -> BlockLabels:
    key = (group.name, group.order, k)
    if key not in _BLOCK_LABEL_CACHE:
        _BLOCK_LABEL_CACHE[key] = BlockLabels(group, k)
    return _BLOCK_LABEL_CACHE[key]


# ---------------------------------------------------------------------------
# coefficient channels
# ---------------------------------------------------------------------------

@dataclass
class CoeffChannel:
    """Channel  Phi(A) = sum_ij C[i, j] * O_i * tr(I_j^dag A).

    Its Choi state is (1/op_dim) sum_ij C[i,j] O_i (x) conj(I_j); both the
    channel and the Choi are fully determined by (out_basis, in_basis, C).
    Bases may be PartitionBasis or SlotBasis instances.
    """

    out_basis: object
    in_basis: object
    coeff: np.ndarray

    def __post_init__(self):
        if self.coeff.shape != (self.out_basis.size, self.in_basis.size):
            raise ValueError("coefficient shape does not match bases")

    @property
    def k(self) -> int:
        return self.out_basis.k

    @property
    def dim(self) -> int:
        return self.out_basis.q ** self.out_basis.n_sites

    @property
    def op_dim(self) -> int:
        return self.out_basis.op_dim

    def apply(self, A: np.ndarray) -> np.ndarray:
        """Dense action on an operator over H^(x)k; dense-budget limited."""
        dkk = self.op_dim
        if A.shape != (dkk, dkk):
            raise ValueError(f"operand shape {A.shape}, expected {(dkk, dkk)}")
        traces = np.empty(self.in_basis.size, dtype=complex)
        cols = np.arange(dkk)
        for j in range(self.in_basis.size):
            p = self.in_basis.dense_permutation(j)
            traces[j] = A[p, cols].sum()
        weights = self.coeff @ traces
        out = np.zeros_like(A)
        for i in range(self.out_basis.size):
            if abs(weights[i]) < 1e-300:
                continue
            p = self.out_basis.dense_permutation(i)
            out[p, cols] += weights[i]
        return out

    def choi_matrix(self) -> np.ndarray:
        """Dense Choi state [Phi (x) 1](P_EPR); only for tiny dimensions."""
        dkk = self.op_dim
        if dkk > 64:
            raise CapacityError(f"dense Choi of side {dkk**2} refused")
        out = np.zeros((dkk * dkk, dkk * dkk), dtype=complex)
        for i in range(self.out_basis.size):
            Oi = self.out_basis.dense_matrix(i)
            for j in range(self.in_basis.size):
                c = self.coeff[i, j]
                if abs(c) < 1e-300:
                    continue
                Ij = self.in_basis.dense_matrix(j)
                out += (c / dkk) * np.kron(Oi, Ij.conj())
        return out

    def compose_self(self) -> "CoeffChannel":
        """Phi o Phi in coefficient space (same in/out bases required)."""
        X = self.in_basis.gram(self.out_basis)
        return CoeffChannel(self.out_basis, self.in_basis, self.coeff @ X @ self.coeff)


def _pinv_psd(G: np.ndarray, rcond: float = GRAM_TRUNCATION) -> np.ndarray:
    w, V = np.linalg.eigh((G + G.conj().T) / 2)
    cut = rcond * max(w[-1], 0.0)
    inv = np.where(w > cut, 1.0 / np.where(w > cut, w, 1.0), 0.0)
    return (V * inv) @ V.conj().T


def exact_twirl_channel(basis: PartitionBasis) -> CoeffChannel:
    """Orthogonal projection onto the span of the basis labels.

    For the full commutant of a tensor-power symmetric unitary this is the
    exact average over the corresponding Haar ensemble.
    """
    W = _pinv_psd(basis.gram())
    return CoeffChannel(basis, basis, W)


def uniform_twirl_channel(basis: PartitionBasis) -> CoeffChannel:
    """Diagonal channel with weight 1/D^k per label (the large-D twirl formula)."""
    C = np.eye(basis.size) / float(basis.q ** (basis.n_sites * basis.k))
    return CoeffChannel(basis, basis, C)


def compose_channels(second: CoeffChannel, first: CoeffChannel) -> CoeffChannel:
    """Second o first; both must be full coefficient channels on the same space."""
    X = second.in_basis.gram(first.out_basis)
    return CoeffChannel(second.out_basis, first.in_basis, second.coeff @ X @ first.coeff)


# ---------------------------------------------------------------------------
# two-layer composition with partial coverage
# ---------------------------------------------------------------------------

def _refine_cells(patches, block_of_site, n_sites, covered):
    """Group the sites NOT covered by ``patches`` by the other layer's blocks."""
    cells: dict[int, list[int]] = {}
    for s in range(n_sites):
        if s in covered:
            continue
        cells.setdefault(int(block_of_site[s]), []).append(s)
    return [tuple(v) for _, v in sorted(cells.items())]


def two_layer_channel(
    rep: SiteRepresentation,
    k: int,
    layer1_patches,
    layer2_patches,
) -> CoeffChannel:
    """Exact moment of (layer-2 patch twirls) o (layer-1 patch twirls).

    Each patch is twirled by an independent symmetric Haar unitary; sites
    not covered by a layer pass through it.  Together the two layers must
    cover every site.  Output labels live on the layer-2 patches plus the
    layer-1 remainder cells; input labels dually.
    """
    layer1 = [tuple(p) for p in layer1_patches]
    layer2 = [tuple(p) for p in layer2_patches]
    if not layer1 or not layer2:
        raise ValueError("both layers need at least one patch")
    n = _n_sites_of(layer1, layer2)
    cov1 = set(s for p in layer1 for s in p)
    cov2 = set(s for p in layer2 for s in p)
    if cov1 | cov2 != set(range(n)):
        raise ValueError("layers must jointly cover every site")

    bl = _block_labels_for(rep.group, k)
    L = bl.size
    q = rep.site_dim

    # cells of layer-1-only sites grouped by the layer-1 patch they belong to
    b1_of_site = np.full(n, -1, dtype=np.int64)
    for bi, p in enumerate(layer1):
        for s in p:
            b1_of_site[s] = bi
    s1_cells = _refine_cells(layer2, b1_of_site, n, cov2)
    b2_of_site = np.full(n, -1, dtype=np.int64)
    for bi, p in enumerate(layer2):
        for s in p:
            b2_of_site[s] = bi
    s2_cells = _refine_cells(layer1, b2_of_site, n, cov1)

    out_basis = PartitionBasis.build(rep, k, list(layer2) + s1_cells)
    in_basis = PartitionBasis.build(rep, k, list(layer1) + s2_cells)

    if out_basis.size > ALGEBRA_DIM_CAP or in_basis.size > ALGEBRA_DIM_CAP:
        raise AlgebraBudgetError(
            f"two-layer bases of sizes {out_basis.size} x {in_basis.size} over cap"
        )

    T = bl.site_trace_table(q).astype(float)
    n1, n2 = len(layer1), len(layer2)
    # per-patch Weingarten weights
    W1 = [_pinv_psd(T ** len(p)) for p in layer1]
    W2 = [_pinv_psd(T ** len(p)) for p in layer2]

    # a-index: labels on layer-1 patches (L^n1); b'-index: labels on layer-2
    # patches (L^n2).  Cross factor X[bprime, a] over the doubly covered sites.
    X = np.ones((L,) * n2 + (L,) * n1)
    for s in range(n):
        if b1_of_site[s] >= 0 and b2_of_site[s] >= 0:
            shape = [1] * (n2 + n1)
            shape[int(b2_of_site[s])] = L
            shape[n2 + int(b1_of_site[s])] = L
            X = X * T.reshape(shape)
    X = X.reshape(L**n2, L**n1)

    # sum over a with weights W1[a, a'] and over b' with weights W2[b, b']
    W1k = _kron_list(W1) if n1 else np.ones((1, 1))
    W2k = _kron_list(W2) if n2 else np.ones((1, 1))
    M = W2k @ X @ W1k  # [b, a'] with the S12 contraction inside

    # expand to the full out/in bases: out = (b, a|s1cells), in = (a', b'|s2cells).
    # The cell parts tie to the same a (resp. b') summed above, so redo the sum
    # keeping those restrictions explicit.
    C = np.zeros((out_basis.size, in_basis.size))
    a_cells = [_cell_parent(s1_cells, layer1) if s1_cells else []][0]
    b_cells = [_cell_parent(s2_cells, layer2) if s2_cells else []][0]
    if not s1_cells and not s2_cells:
        C = M
    else:
        La = L**n1
        Lb = L**n2
        a_digits = _digit_table(La, L, n1)
        b_digits = _digit_table(Lb, L, n2)
        # out label = (b-digits, a-cell-digits); in label = (a'-digits, b'-cell-digits)
        for b in range(Lb):
            Wrow = W2k[b]  # over b'
            for aprime in range(La):
                col = W1k[:, aprime]  # over a
                acc = np.einsum("p,a,pa->pa", Wrow, col, X)  # [b', a] weights
                # scatter into C with cell restrictions
                for bp in range(Lb):
                    for a in range(La):
                        w = acc[bp, a]
                        if w == 0.0:
                            continue
                        out_digits = list(b_digits[b]) + [
                            a_digits[a][parent] for parent in a_cells
                        ]
                        in_digits = list(a_digits[aprime]) + [
                            b_digits[bp][parent] for parent in b_cells
                        ]
                        C[out_basis.encode(out_digits), in_basis.encode(in_digits)] += w
    return CoeffChannel(out_basis, in_basis, C)


def _cell_parent(cells, patches):
    """For each remainder cell, the index of the patch its sites belong to."""
    parents = []
    for cell in cells:
        s0 = cell[0]
        for pi, p in enumerate(patches):
            if s0 in p:
                parents.append(pi)
                break
        else:
            raise ValueError("cell does not belong to any patch")
    return parents


def _digit_table(size, L, nblocks):
    table = np.empty((size, nblocks), dtype=np.int64)
    for v in range(size):
        x = v
        for bi in range(nblocks - 1, -1, -1):
            table[v, bi] = x % L
            x //= L
    return table


def _kron_list(mats):
    out = np.ones((1, 1))
    for m in mats:
        out = np.kron(out, m)
    return out


def _n_sites_of(layer1, layer2) -> int:
    return max(s for p in itertools.chain(layer1, layer2) for s in p) + 1


# ---------------------------------------------------------------------------
# spectra inside the label algebra
# ---------------------------------------------------------------------------

def _left_translation_sandwiches(basis: PartitionBasis, S: np.ndarray, G: np.ndarray):
    """S^dag G P_a S for every left-translation P_a of the basis group.

    P_a sends basis vector e_m to e_{a*m}, so (P_a S)[a*m, :] = S[m, :].
    """
    table = basis.mult_table()
    size = basis.size
    B = S.conj().T @ G  # (r, size)
    r = S.shape[1]
    out = np.empty((size, r, r), dtype=complex)
    PaS = np.empty_like(S)
    for a in range(size):
        PaS[table[a]] = S
        out[a] = B @ PaS
    return out


def _orthonormalize(G: np.ndarray):
    w, V = np.linalg.eigh((G + G.conj().T) / 2)
    cut = GRAM_TRUNCATION * max(w[-1], 0.0)
    keep = w > cut
    S = V[:, keep] / np.sqrt(w[keep])
    return S


def algebra_matrix(channel_coeffs, out_basis: PartitionBasis, in_basis: PartitionBasis):
    """Matrices of Choi states in an orthonormalized label-pair algebra.

    Each entry of ``channel_coeffs`` is an (|O| x |I|) Choi coefficient array
    over labels O_i (x) conj(I_j).  Returns the Hermitian matrices of the
    corresponding operators in a faithful representation of the algebra, so
    eigenvalues (hence PSD order and operator norms) match the dense objects.
    """
    if out_basis.size * in_basis.size > ALGEBRA_DIM_CAP:
        raise AlgebraBudgetError(
            f"algebra dimension {out_basis.size * in_basis.size} over cap {ALGEBRA_DIM_CAP}"
        )
    G_O = out_basis.gram()
    G_I = in_basis.gram()
    S_O = _orthonormalize(G_O)
    S_I = _orthonormalize(G_I.conj())
    A_hat = _left_translation_sandwiches(out_basis, S_O, G_O)
    B_hat = _left_translation_sandwiches(in_basis, S_I, G_I.conj())
    rO, rI = S_O.shape[1], S_I.shape[1]
    results = []
    for C in channel_coeffs:
        M1 = np.tensordot(C, B_hat, axes=([1], [0]))  # [a, kI, lI]
        Xh = np.tensordot(A_hat, M1, axes=([0], [0]))  # [iO, jO, kI, lI]
        Xh = Xh.transpose(0, 2, 1, 3).reshape(rO * rI, rO * rI)
        results.append((Xh + Xh.conj().T) / 2)
    return results


def embed_coefficients(
    coeff: np.ndarray,
    coarse_out: PartitionBasis,
    coarse_in: PartitionBasis,
    fine_out: PartitionBasis,
    fine_in: PartitionBasis,
) -> np.ndarray:
    """Re-express channel coefficients over finer partition bases.

    Every fine block must be contained in a coarse block; a coarse label then
    maps to the fine product label that repeats it on each contained block.
    """
    def embedding(coarse: PartitionBasis, fine: PartitionBasis) -> np.ndarray:
        parent = []
        for blk in fine.blocks:
            hits = [ci for ci, cb in enumerate(coarse.blocks) if set(blk) <= set(cb)]
            if len(hits) != 1:
                raise ValueError(f"fine block {blk} not nested in the coarse partition")
            parent.append(hits[0])
        E = np.zeros((fine.size, coarse.size))
        for c in range(coarse.size):
            digits = coarse.decode(c)
            E[fine.encode([digits[p] for p in parent]), c] = 1.0
        return E

    E_out = embedding(coarse_out, fine_out)
    E_in = embedding(coarse_in, fine_in)
    return E_out @ coeff @ E_in.T


def relative_error_pencil(
    choi_E: np.ndarray,
    choi_H: np.ndarray,
    out_basis: PartitionBasis,
    in_basis: PartitionBasis,
) -> float:
    """Smallest eps with (1-eps) Phi_H <= Phi_E <= (1+eps) Phi_H (CP order).

    Inputs are Choi coefficient arrays over the given label bases.  The
    computation runs in the label algebra: functional calculus there agrees
    exactly with the dense operators because the representation is faithful.
    """
    Eh, Hh = algebra_matrix([choi_E, choi_H], out_basis, in_basis)
    w, V = np.linalg.eigh(Hh)
    scale = max(w[-1], 0.0)
    if scale <= 0.0:
        raise SupportLeakageError("reference twirl Choi state is zero")
    if w[0] < -SUPPORT_CUTOFF * scale:
        raise SupportLeakageError("reference twirl Choi state is not PSD")
    support = w > SUPPORT_CUTOFF * scale
    Vs = V[:, support]
    Vn = V[:, ~support]
    if Vn.shape[1]:
        leak = np.linalg.norm(Vn.conj().T @ Eh @ Vn) + np.linalg.norm(Vs.conj().T @ Eh @ Vn)
        if leak > LEAKAGE_TOL * max(np.linalg.norm(Eh), 1e-300):
            raise SupportLeakageError(
                f"channel has weight outside the reference support (leak {leak:.3e})"
            )
    inv_sqrt = Vs / np.sqrt(w[support])
    T = inv_sqrt.conj().T @ (Eh - Hh) @ inv_sqrt
    T = (T + T.conj().T) / 2
    vals = np.linalg.eigvalsh(T)
    return float(max(abs(vals[0]), abs(vals[-1])))
