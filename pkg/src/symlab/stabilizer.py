"""GF(2) stabilizer engine: tableaux, symmetric Clifford sampling, and the
order-parameter / entropy diagnostics used in the phase-recognition scans.

Pauli strings are (x-mask, z-mask, phase) triples with phase a power of i;
states are full-rank stabilizer groups given by n generator rows.  Entropies
come from GF(2) ranks, expectation values from symplectic solves.
"""

from __future__ import annotations


from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "PauliString",
    "CliffordMap",
    "StabilizerTableau",
    "prepare_fixed_point",
    "toric_code_state",
    "random_clifford",
    "sample_symmetric_clifford",
    "scramble",
    "pauli_expectation",
    "entropy",
    "mutual_information",
    "conditional_mutual_information",
    "tee_kitaev_preskill",
    "toric_snake_order",
    "inflate_chain_region",
    "clifford_to_unitary",
    "random_clifford_unitary",
]


# ---------------------------------------------------------------------------
# Pauli strings
# ---------------------------------------------------------------------------

@dataclass
class PauliString:
    """A Pauli operator i^phase * X^x * Z^z (bitwise over qubits)."""

    x: np.ndarray
    z: np.ndarray
    phase: int = 0  # power of i, mod 4

    @staticmethod
    def identity(n: int) -> "PauliString":
        return PauliString(np.zeros(n, dtype=np.uint8), np.zeros(n, dtype=np.uint8), 0)

    @staticmethod
    def from_label(label: str, n: int, phase: int = 0) -> "PauliString":
        """Build from a site map like "Z0 Z3" or "X1 Y2" (0-indexed qubits)."""
        p = PauliString.identity(n)
        p.phase = phase
        for tok in label.split():
            kind, idx = tok[0].upper(), int(tok[1:])
            if kind in ("X", "Y"):
                p.x[idx] ^= 1
            if kind in ("Z", "Y"):
                p.z[idx] ^= 1
            if kind == "Y":
                p.phase = (p.phase + 1) % 4
        return p

    @property
    def n(self) -> int:
        return len(self.x)

    def copy(self) -> "PauliString":
        return PauliString(self.x.copy(), self.z.copy(), self.phase)

    def mul(self, other: "PauliString") -> "PauliString":
        """Product self * other with exact phase tracking."""
        # X^x Z^z * X^x' Z^z' = i^{2 z.x'} X^{x+x'} Z^{z+z'} (Z past X gives -1)
        phase = (self.phase + other.phase + 2 * int(np.dot(self.z, other.x) % 2)) % 4
        return PauliString(self.x ^ other.x, self.z ^ other.z, phase)

    def commutes(self, other: "PauliString") -> bool:
        s = (np.dot(self.x, other.z) + np.dot(self.z, other.x)) % 2
        return s == 0

    def support(self) -> np.ndarray:
        return np.nonzero(self.x | self.z)[0]

    def label(self) -> str:
        chars = {(0, 0): "I", (1, 0): "X", (0, 1): "Z", (1, 1): "Y"}
        body = "".join(chars[(int(a), int(b))] for a, b in zip(self.x, self.z))
        pre = {0: "+", 1: "+i", 2: "-", 3: "-i"}[self.phase % 4]
        return pre + body

    def dense(self) -> np.ndarray:
        X = np.array([[0, 1], [1, 0]], dtype=complex)
        Z = np.diag([1, -1]).astype(complex)
        out = np.ones((1, 1), dtype=complex)
        for a, b in zip(self.x, self.z):
            m = np.eye(2, dtype=complex)
            if a:
                m = m @ X
            if b:
                m = m @ Z
            out = np.kron(out, m)
        return (1j**self.phase) * out

    def apply_to_vector(self, v: np.ndarray) -> np.ndarray:
        """P|v> without materializing the dense matrix (site 0 = leftmost bit)."""
        n = self.n
        dim = len(v)
        idx = np.arange(dim)
        xmask = 0
        zmask = 0
        for i in range(n):
            if self.x[i]:
                xmask |= 1 << (n - 1 - i)
            if self.z[i]:
                zmask |= 1 << (n - 1 - i)
        # Z phases act on the input labels after X flips: X^x Z^z |b> = (-1)^{z.b} |b ^ x>
        signs = 1 - 2 * (_popcount(idx & zmask) % 2)
        out = np.empty_like(v)
        out[idx ^ xmask] = signs * v
        return (1j**self.phase) * out


def _popcount(a: np.ndarray) -> np.ndarray:
    return np.bitwise_count(a.astype(np.uint64)).astype(np.int64)


# ---------------------------------------------------------------------------
# GF(2) helpers
# ---------------------------------------------------------------------------

def gf2_rank(M: np.ndarray) -> int:
    A = M.copy().astype(np.uint8)
    rows, cols = A.shape
    r = 0
    for c in range(cols):
        piv = None
        for i in range(r, rows):
            if A[i, c]:
                piv = i
                break
        if piv is None:
            continue
        A[[r, piv]] = A[[piv, r]]
        mask = A[:, c].astype(bool)
        mask[r] = False
        A[mask] ^= A[r]
        r += 1
        if r == rows:
            break
    return r


def gf2_solve(A: np.ndarray, b: np.ndarray):
    """One solution x of A x = b over GF(2), or None."""
    rows, cols = A.shape
    M = np.concatenate([A.astype(np.uint8), b.reshape(-1, 1).astype(np.uint8)], axis=1)
    pivots = []
    r = 0
    for c in range(cols):
        piv = None
        for i in range(r, rows):
            if M[i, c]:
                piv = i
                break
        if piv is None:
            continue
        M[[r, piv]] = M[[piv, r]]
        mask = M[:, c].astype(bool)
        mask[r] = False
        M[mask] ^= M[r]
        pivots.append(c)
        r += 1
    for i in range(r, rows):
        if M[i, cols]:
            return None
    x = np.zeros(cols, dtype=np.uint8)
    for row in range(r - 1, -1, -1):
        c = pivots[row]
        x[c] = M[row, cols] ^ (int(np.dot(M[row, c + 1:cols], x[c + 1:])) % 2)
    return x


def gf2_solve_affine(A: np.ndarray, b: np.ndarray, rng: np.random.Generator):
    """Uniform random solution of A x = b over GF(2), or None if inconsistent."""
    cols = A.shape[1]
    x0 = gf2_solve(A, b)
    if x0 is None:
        return None
    basis = gf2_nullspace(A)
    x = x0.copy()
    for v in basis:
        if rng.integers(2):
            x ^= v
    return x


def gf2_nullspace(A: np.ndarray) -> list[np.ndarray]:
    rows, cols = A.shape
    M = A.copy().astype(np.uint8)
    pivots = {}
    r = 0
    for c in range(cols):
        piv = None
        for i in range(r, rows):
            if M[i, c]:
                piv = i
                break
        if piv is None:
            continue
        M[[r, piv]] = M[[piv, r]]
        mask = M[:, c].astype(bool)
        mask[r] = False
        M[mask] ^= M[r]
        pivots[c] = r
        r += 1
    free = [c for c in range(cols) if c not in pivots]
    basis = []
    for f in free:
        v = np.zeros(cols, dtype=np.uint8)
        v[f] = 1
        for c, row in pivots.items():
            v[c] = M[row, f]
        basis.append(v)
    return basis


# ---------------------------------------------------------------------------
# Clifford maps (symplectic + phase data)
# ---------------------------------------------------------------------------

@dataclass
class CliffordMap:
    """Images of X_i and Z_i under conjugation, as Pauli strings."""

    x_images: list
    z_images: list

    @property
    def n(self) -> int:
        return len(self.x_images)

    @staticmethod
    def identity(n: int) -> "CliffordMap":
        xs = []
        zs = []
        for i in range(n):
            p = PauliString.identity(n)
            p.x[i] = 1
            xs.append(p)
            q = PauliString.identity(n)
            q.z[i] = 1
            zs.append(q)
        return CliffordMap(xs, zs)

    def apply(self, p: PauliString) -> PauliString:
        """Image C p C^dag, multiplying generator images in canonical order."""
        out = PauliString.identity(self.n)
        out.phase = p.phase
        # p = i^phase * prod_i X_i^{x_i} * prod_i Z_i^{z_i}; images multiply in
        # the same order, with the (-1)^{z.x} from commuting Z_i past X_i absorbed
        # in the mul() bookkeeping below.
        for i in range(self.n):
            if p.x[i]:
                out = out.mul(self.x_images[i])
        for i in range(self.n):
            if p.z[i]:
                out = out.mul(self.z_images[i])
        return out

    def compose(self, inner: "CliffordMap") -> "CliffordMap":
        """self o inner (inner applied first)."""
        return CliffordMap(
            [self.apply(p) for p in inner.x_images],
            [self.apply(p) for p in inner.z_images],
        )

    def check(self) -> None:
        for i in range(self.n):
            for j in range(self.n):
                if self.x_images[i].commutes(self.z_images[j]) != (i != j):
                    raise ValueError(f"symplectic condition fails at X{i}, Z{j}")
                if not self.x_images[i].commutes(self.x_images[j]):
                    raise ValueError(f"X images {i},{j} anticommute")
                if not self.z_images[i].commutes(self.z_images[j]):
                    raise ValueError(f"Z images {i},{j} anticommute")


# ---------------------------------------------------------------------------
# stabilizer tableaux
# ---------------------------------------------------------------------------

@dataclass
class StabilizerTableau:
    """n independent commuting stabilizer generators with +-1 signs."""

    n: int
    rows: list = field(default_factory=list)  # list of PauliString, length n

    @staticmethod
    def from_generators(gens) -> "StabilizerTableau":
        gens = [g.copy() for g in gens]
        n = gens[0].n
        if len(gens) != n:
            raise ValueError(f"need {n} generators, got {len(gens)}")
        t = StabilizerTableau(n=n, rows=gens)
        t.check()
        return t

    def copy(self) -> "StabilizerTableau":
        return StabilizerTableau(self.n, [r.copy() for r in self.rows])

    def check(self) -> None:
        for i, a in enumerate(self.rows):
            if (a.phase - int(np.dot(a.x, a.z))) % 2 != 0:
                raise ValueError(f"generator {i} is not Hermitian")
            for b in self.rows[i + 1:]:
                if not a.commutes(b):
                    raise ValueError("generators do not commute")
        M = self.check_matrix()
        if gf2_rank(M) != self.n:
            raise ValueError("generators are not independent")

    def check_matrix(self) -> np.ndarray:
        return np.array([np.concatenate([r.x, r.z]) for r in self.rows], dtype=np.uint8)

    def apply_clifford(self, c: CliffordMap, sites=None) -> None:
        """Conjugate the state by a Clifford supported on ``sites`` (default all)."""
        if sites is None:
            self.rows = [c.apply(r) for r in self.rows]
            return
        sites = list(sites)
        idx = {s: i for i, s in enumerate(sites)}
        for r in self.rows:
            sub = PauliString(r.x[sites].copy(), r.z[sites].copy(), 0)
            img = c.apply(sub)
            r.x[sites] = img.x
            r.z[sites] = img.z
            r.phase = (r.phase + img.phase) % 4

    def statevector(self) -> np.ndarray:
        """Dense state for n <= 14 qubits (projector product on a seed state)."""
        if self.n > 14:
            raise ValueError("statevector only for small n")
        dim = 2**self.n
        rng = np.random.default_rng(12345)
        for _ in range(20):
            v = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
            for r in self.rows:
                v = (v + r.apply_to_vector(v)) / 2
            nrm = np.linalg.norm(v)
            if nrm > 1e-8:
                return v / nrm
        raise RuntimeError("failed to materialize the stabilizer state")


def pauli_expectation(state: StabilizerTableau, p: PauliString) -> int:
    """<P> in {-1, 0, +1}: membership of +-P in the stabilizer group by GF(2) solve."""
    for r in state.rows:
        if not r.commutes(p):
            return 0
    A = state.check_matrix().T  # (2n, n): columns are generators
    b = np.concatenate([p.x, p.z])
    x = gf2_solve(A, b)
    if x is None:
        return 0
    acc = PauliString.identity(state.n)
    for i in np.nonzero(x)[0]:
        acc = acc.mul(state.rows[i])
    diff = (acc.phase - p.phase) % 4
    if diff == 0:
        return 1
    if diff == 2:
        return -1
    raise RuntimeError("solved Pauli differs by an imaginary phase "
                       f"({acc.label()} vs {p.label()})")


# ---------------------------------------------------------------------------
# fixed-point states
# ---------------------------------------------------------------------------

def prepare_fixed_point(kind: str, n: int = 0, Lx: int = 0, Ly: int = 0) -> StabilizerTableau:
    """Canonical fixed-point states: product, ghz, cluster, toric(Lx, Ly).

    product: |+>^n (symmetric under any product-X symmetry).
    ghz: Z_i Z_{i+1} plus the global X string.
    cluster: bulk Z X Z stabilizers plus both sublattice X strings, i.e. the
    symmetric eigenstate of the even/odd flip operators (n even).
    toric: qubits on the edges of an Lx x Ly torus; vertex X stars,
    plaquette Z loops, and the two horizontal/vertical Z cycles.
    """
    if kind == "product":
        gens = []
        for i in range(n):
            p = PauliString.identity(n)
            p.x[i] = 1
            gens.append(p)
        return StabilizerTableau.from_generators(gens)
    if kind == "ghz":
        gens = []
        for i in range(n - 1):
            gens.append(PauliString.from_label(f"Z{i} Z{i+1}", n))
        allx = PauliString.identity(n)
        allx.x[:] = 1
        gens.append(allx)
        return StabilizerTableau.from_generators(gens)
    if kind == "cluster":
        if n % 2 != 0:
            raise ValueError("cluster fixed point needs even n")
        gens = []
        for i in range(1, n - 1):
            gens.append(PauliString.from_label(f"Z{i-1} X{i} Z{i+1}", n))
        even = PauliString.identity(n)
        even.x[0::2] = 1
        odd = PauliString.identity(n)
        odd.x[1::2] = 1
        gens.extend([even, odd])
        return StabilizerTableau.from_generators(gens)
    if kind == "toric":
        return toric_code_state(Lx, Ly)
    raise ValueError(f"unknown fixed point kind {kind!r}")


def toric_edges(Lx: int, Ly: int):
    """Edge indexing: horizontal edge (x,y) then vertical edge (x,y)."""
    def h(x, y):
        return (y % Ly) * Lx + (x % Lx)

    def v(x, y):
        return Lx * Ly + (y % Ly) * Lx + (x % Lx)

    return h, v


def toric_code_state(Lx: int, Ly: int) -> StabilizerTableau:
    if Lx < 2 or Ly < 2:
        raise ValueError("torus needs Lx, Ly >= 2")
    n = 2 * Lx * Ly
    h, v = toric_edges(Lx, Ly)
    gens = []
    # vertex stars (all but one; the product of all is identity)
    vertices = [(x, y) for y in range(Ly) for x in range(Lx)][:-1]
    for (x, y) in vertices:
        p = PauliString.identity(n)
        for e in (h(x, y), h(x - 1, y), v(x, y), v(x, y - 1)):
            p.x[e] ^= 1
        gens.append(p)
    # plaquettes (all but one)
    plaqs = [(x, y) for y in range(Ly) for x in range(Lx)][:-1]
    for (x, y) in plaqs:
        p = PauliString.identity(n)
        for e in (h(x, y), h(x, y + 1), v(x, y), v(x + 1, y)):
            p.z[e] ^= 1
        gens.append(p)
    # logical Z cycles fix the ground state reached from |0...0>
    zh = PauliString.identity(n)
    for x in range(Lx):
        zh.z[h(x, 0)] ^= 1
    zv = PauliString.identity(n)
    for y in range(Ly):
        zv.z[v(0, y)] ^= 1
    gens.extend([zh, zv])
    return StabilizerTableau.from_generators(gens)


# ---------------------------------------------------------------------------
# random and symmetric-random Cliffords
# ---------------------------------------------------------------------------

class _IncrementalGF2System:
    """Constraint system A x = b over GF(2) with incremental RREF.

    Constraints are added once; solving for different right-hand sides reuses
    the accumulated elimination (tracked in a transformation matrix), and
    solutions draw free coordinates uniformly, giving uniform samples of the
    affine solution set.
    """

    def __init__(self, m: int, max_constraints: int):
        self.m = m
        self.cap = max_constraints
        self.R = np.zeros((self.cap, m), dtype=np.uint8)
        self.T = np.zeros((self.cap, self.cap), dtype=np.uint8)
        self.rank = 0
        self.pivots: list[int] = []
        self.count = 0

    def add(self, a: np.ndarray) -> None:
        row = a.astype(np.uint8).copy()
        coeff = np.zeros(self.cap, dtype=np.uint8)
        coeff[self.count] = 1
        R, T = self.R, self.T
        for idx, pc in enumerate(self.pivots):
            if row[pc]:
                row ^= R[idx]
                coeff ^= T[idx]
        self.count += 1
        nz = np.nonzero(row)[0]
        if len(nz) == 0:
            return  # dependent constraint
        pc = int(nz[0])
        r = self.rank
        if r:
            mask = R[:r, pc].astype(bool)
            if mask.any():
                R[:r][mask] ^= row
                T[:r][mask] ^= coeff
        R[r] = row
        T[r] = coeff
        self.pivots.append(pc)
        self.rank = r + 1

    def sample_solution(self, b: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        r = self.rank
        if r:
            bb = np.zeros(self.cap, dtype=np.uint8)
            bb[: len(b)] = b
            rhs = (self.T[:r] @ bb) & 1
        else:
            rhs = np.zeros(0, dtype=np.uint8)
        x = np.zeros(self.m, dtype=np.uint8)
        free = np.ones(self.m, dtype=bool)
        free[self.pivots] = False
        x[free] = rng.integers(2, size=int(free.sum()), dtype=np.uint8)
        for idx in range(r - 1, -1, -1):
            pc = self.pivots[idx]
            row = self.R[idx]
            val = int(rhs[idx]) ^ (int(row @ x) & 1) ^ (int(row[pc]) & int(x[pc]))
            x[pc] = val
        return x


def _random_symplectic_rows(n: int, fixed_z: list, rng: np.random.Generator):
    """Uniform row completion of a symplectic basis over GF(2).

    ``fixed_z`` maps qubit index -> the (2n)-bit row its Z image is pinned to
    (used for symmetry-stabilizing Cliffords); remaining rows are sampled
    uniformly from the affine solution sets of their symplectic constraints,
    which yields the uniform distribution over valid completions.
    """
    rows_x: list = [None] * n
    rows_z: list = [None] * n
    m = 2 * n

    def swap_halves(v: np.ndarray) -> np.ndarray:
        return np.concatenate([v[n:], v[:n]])

    system = _IncrementalGF2System(m, 2 * n)
    placed: list[tuple[str, int]] = []  # constraint order
    functionals: list[np.ndarray] = []

    def register(kind: str, i: int, row: np.ndarray) -> None:
        if kind == "x":
            rows_x[i] = row
        else:
            rows_z[i] = row
        func = swap_halves(row)
        system.add(func)
        placed.append((kind, i))
        functionals.append(func)

    for i, row in fixed_z:
        register("z", i, np.asarray(row, dtype=np.uint8))

    for i in range(n):
        for kind in ("z", "x"):
            if kind == "z" and rows_z[i] is not None:
                continue
            b = np.array(
                [1 if (pk != kind and pj == i) else 0 for pk, pj in placed],
                dtype=np.uint8,
            )
            F = np.array(functionals, dtype=np.uint8) if functionals else None
            while True:
                x = system.sample_solution(b, rng)
                if not x.any():
                    continue
                if F is not None and not np.array_equal((F @ x) & 1, b):
                    raise RuntimeError("symplectic completion infeasible")
                break
            register(kind, i, x)

    return rows_x, rows_z


def _rows_to_clifford(rows_x, rows_z, signs_x, signs_z, n: int) -> CliffordMap:
    def mk(row, sign):
        x, z = row[:n].copy(), row[n:].copy()
        # Hermitian representative: i^{x.z} X^x Z^z times the chosen sign
        phase = (int(np.dot(x, z)) + 2 * int(sign)) % 4
        return PauliString(x, z, phase)

    xs = [mk(r, s) for r, s in zip(rows_x, signs_x)]
    zs = [mk(r, s) for r, s in zip(rows_z, signs_z)]
    return CliffordMap(xs, zs)


def random_clifford(n: int, rng: np.random.Generator) -> CliffordMap:
    """Uniformly random n-qubit Clifford (mod global phase)."""
    rows_x, rows_z = _random_symplectic_rows(n, [], rng)
    c = _rows_to_clifford(rows_x, rows_z, rng.integers(2, size=n), rng.integers(2, size=n), n)
    return c


def sample_symmetric_clifford(patch_qubits: int, symmetry: str,
                              rng: np.random.Generator) -> CliffordMap:
    """Uniform Clifford on the patch commuting with the patch symmetry.

    symmetry: "none" | "Z2_X" (product of X on all patch qubits) |
    "Z2xZ2_even_odd" (product of X on even / odd patch qubits separately).
    The generators are conjugated to single-qubit Z's by a fixed Clifford V,
    the Z-stabilizing Cliffords are sampled by constrained row completion
    (exactly uniform over the subgroup), and V is undone.
    """
    n = patch_qubits
    if symmetry == "none":
        return random_clifford(n, rng)
    if symmetry == "Z2_X":
        groups = [list(range(n))]
    elif symmetry == "Z2xZ2_even_odd":
        groups = [list(range(0, n, 2)), list(range(1, n, 2))]
        if n < 2:
            raise ValueError("even/odd symmetry needs at least 2 patch qubits")
    else:
        raise ValueError(f"unknown symmetry {symmetry!r}")
    if any(not g for g in groups):
        raise ValueError("symmetry generator has empty support on the patch")

    # V maps prod_{i in g} X_i -> Z_{g[0]}: Hadamard everywhere turns the X
    # string into a Z string; CNOT(control=a, target=g0) conjugation sends
    # Z_{g0} -> Z_a Z_{g0}, so each fold removes one Z_a from the string.
    V = CliffordMap.identity(n)
    V = _hadamard_all(n).compose(V)
    for g in groups:
        for a in g[1:]:
            V = _cnot(n, a, g[0]).compose(V)
    # after V, the symmetry generators are single-qubit Z on each g[0]:
    fixed = []
    for g in groups:
        row = np.zeros(2 * n, dtype=np.uint8)
        row[n + g[0]] = 1
        fixed.append((g[0], row))
    # sanity: V(conjugated symmetry) is the pinned Z
    for g in groups:
        s = PauliString.identity(n)
        s.x[g] = 1
        img = V.apply(s)
        want = np.zeros(n, dtype=np.uint8)
        want[g[0]] = 1
        if img.phase % 4 != 0 or img.x.any() or not np.array_equal(img.z, want):
            raise RuntimeError("symmetry conjugation to Z failed")
    rows_x, rows_z = _random_symplectic_rows(n, fixed, rng)
    signs_z = rng.integers(2, size=n)
    signs_x = rng.integers(2, size=n)
    for g in groups:
        signs_z[g[0]] = 0  # pinned rows keep their sign
    core = _rows_to_clifford(rows_x, rows_z, signs_x, signs_z, n)
    Vinv = _invert_clifford(V)
    return Vinv.compose(core.compose(V))


def _hadamard_all(n: int) -> CliffordMap:
    xs, zs = [], []
    for i in range(n):
        p = PauliString.identity(n)
        p.z[i] = 1
        xs.append(p)  # X -> Z
        q = PauliString.identity(n)
        q.x[i] = 1
        zs.append(q)  # Z -> X
    return CliffordMap(xs, zs)


def _cnot(n: int, control: int, target: int) -> CliffordMap:
    c = CliffordMap.identity(n)
    # X_c -> X_c X_t, Z_t -> Z_c Z_t
    c.x_images[control].x[target] = 1
    c.z_images[target].z[control] = 1
    return c


def _invert_clifford(c: CliffordMap) -> CliffordMap:
    """Inverse map via GF(2) inversion of the symplectic action plus sign fixing."""
    n = c.n
    M = np.zeros((2 * n, 2 * n), dtype=np.uint8)
    for i in range(n):
        M[i] = np.concatenate([c.x_images[i].x, c.x_images[i].z])
        M[n + i] = np.concatenate([c.z_images[i].x, c.z_images[i].z])
    inv_imgs = []
    for col in range(2 * n):
        b = np.zeros(2 * n, dtype=np.uint8)
        b[col] = 1
        sol = gf2_solve(M.T, b)
        if sol is None:
            raise ValueError("clifford map is not invertible")
        inv_imgs.append(sol)
    xs = [PauliString(s[:n].copy(), s[n:].copy(), 0) for s in inv_imgs[:n]]
    zs = [PauliString(s[:n].copy(), s[n:].copy(), 0) for s in inv_imgs[n:]]
    inv0 = CliffordMap(xs, zs)
    # inv0 o c is the identity on bit vectors with residual signs on each
    # generator; cancel them with a sign-flip map composed on the outside,
    # where the corrections decouple.
    F = CliffordMap.identity(n)
    for i in range(n):
        p = PauliString.identity(n)
        p.x[i] = 1
        F.x_images[i].phase = (-inv0.apply(c.apply(p)).phase) % 4
        q = PauliString.identity(n)
        q.z[i] = 1
        F.z_images[i].phase = (-inv0.apply(c.apply(q)).phase) % 4
    return F.compose(inv0)


# ---------------------------------------------------------------------------
# scrambling and diagnostics
# ---------------------------------------------------------------------------

def scramble(state: StabilizerTableau, xi: int, symmetry: str,
             rng: np.random.Generator, layers: int = 2, order=None,
             boundary: str = "periodic", stagger: bool = True) -> StabilizerTableau:
    """Two-layer brickwork of symmetric Cliffords along a chain ordering.

    ``order`` maps chain position to qubit index (default identity); 2D
    states are scrambled along a snaked ordering of their qubits.  With
    ``boundary="open"`` the offset layer skips the wrap-around patch, which
    keeps the two chain ends causally separated.  ``stagger=False`` aligns
    both layers on the same patches; the light cone is then exactly one
    patch, which is what the 2D topological-entropy scans need at desk
    sizes (the staggered cone of ~3*xi leaves no room for inflated regions
    on a 72-qubit torus).
    """
    out = state.copy()
    n = state.n
    if xi == 0:
        return out
    if n % (2 * xi) != 0:
        raise ValueError("2*xi must divide the number of qubits")
    order = list(range(n)) if order is None else list(order)
    for layer in range(layers):
        offset = 0 if (layer % 2 == 0 or not stagger) else xi
        for a in range(0, n, 2 * xi):
            if boundary == "open" and a + offset + 2 * xi > n:
                continue
            sites = [order[(a + offset + s) % n] for s in range(2 * xi)]
            # The patch restriction of the even/odd flip strings is always the
            # pair (product over even offsets, product over odd offsets); the
            # stabilized subgroup is the same whichever global sublattice the
            # patch starts on.
            c = sample_symmetric_clifford(2 * xi, symmetry, rng)
            out.apply_clifford(c, sites)
    return out


def toric_snake_order(Lx: int, Ly: int) -> list[int]:
    """Serpentine 1D ordering of the torus edges, interleaving h and v edges."""
    h, v = toric_edges(Lx, Ly)
    order = []
    for y in range(Ly):
        xs = range(Lx) if y % 2 == 0 else range(Lx - 1, -1, -1)
        for x in xs:
            order.extend([h(x, y), v(x, y)])
    return order


def inflate_chain_region(region, d: int, n: int, order=None) -> set[int]:
    """Dilate a qubit region by d steps along the scrambling chain order."""
    order = list(range(n)) if order is None else list(order)
    pos = {q: i for i, q in enumerate(order)}
    out = set()
    for q in region:
        for o in range(-d, d + 1):
            out.add(order[(pos[q] + o) % n])
    return out


def entropy(state: StabilizerTableau, region) -> int:
    """S(region) in bits = |region| - #(independent stabilizers inside region)."""
    region = sorted(set(int(s) for s in region))
    comp = [s for s in range(state.n) if s not in region]
    M = state.check_matrix()
    comp_cols = [c for c in comp] + [state.n + c for c in comp]
    if comp_cols:
        rank_outside = gf2_rank(M[:, comp_cols])
    else:
        rank_outside = 0
    inside = state.n - rank_outside
    return len(region) - inside


def mutual_information(state: StabilizerTableau, A, B) -> int:
    A, B = set(A), set(B)
    if A & B:
        raise ValueError("regions overlap")
    return entropy(state, A) + entropy(state, B) - entropy(state, A | B)


def conditional_mutual_information(state: StabilizerTableau, A, B, C) -> int:
    A, B, C = set(A), set(B), set(C)
    if A & B or A & C or B & C:
        raise ValueError("regions overlap")
    return (
        entropy(state, A | C) + entropy(state, B | C) - entropy(state, C)
        - entropy(state, A | B | C)
    )


def tee_kitaev_preskill(state: StabilizerTableau, A, B, C) -> int:
    A, B, C = set(A), set(B), set(C)
    if A & B or A & C or B & C:
        raise ValueError("regions overlap")
    return (
        entropy(state, A | B) + entropy(state, B | C) + entropy(state, A | C)
        - entropy(state, A) - entropy(state, B) - entropy(state, C)
        - entropy(state, A | B | C)
    )


# ---------------------------------------------------------------------------
# dense conversion (for the controlled-ensemble experiments)
# ---------------------------------------------------------------------------

def clifford_to_unitary(c: CliffordMap) -> np.ndarray:
    """Dense unitary of a Clifford map (n <= 10 qubits), fixed global phase.

    The first column is the stabilizer state fixed by the Z images; the
    remaining columns follow by applying X-image products along a Gray-code
    walk (X images mutually commute, so the order is immaterial).
    """
    n = c.n
    if n > 10:
        raise ValueError("dense conversion limited to 10 qubits")
    dim = 1 << n
    state = StabilizerTableau(n=n, rows=[p.copy() for p in c.z_images])
    psi0 = state.statevector()
    # each X image as a gather + phase: (P v)[j] = phases[j] * v[j ^ xmask]
    idx = np.arange(dim)
    gathers = []
    phases = []
    for q in range(n):
        img = c.x_images[q]
        xmask = 0
        zmask = 0
        for i in range(n):
            if img.x[i]:
                xmask |= 1 << (n - 1 - i)
            if img.z[i]:
                zmask |= 1 << (n - 1 - i)
        src = idx ^ xmask
        sign = 1 - 2 * (_popcount(src & zmask) % 2)
        gathers.append(src)
        phases.append((1j ** img.phase) * sign)
    U = np.empty((dim, dim), dtype=complex)
    U[:, 0] = psi0
    # recursive doubling: columns [2^j, 2^{j+1}) apply one more X image to the
    # first 2^j columns (images commute, so the order is immaterial)
    half = 1
    for j in range(n):
        q = n - 1 - j
        U[:, half:2 * half] = phases[q][:, None] * U[gathers[q], :half]
        half *= 2
    return U


def random_clifford_unitary(n: int, rng: np.random.Generator,
                            random_phase: bool = True) -> np.ndarray:
    """Dense uniformly random Clifford, with a uniform global phase by default.

    The random phase matters only for statistics that are not balanced in
    U and U*; with it, unbalanced moments vanish exactly as they do for Haar.
    """
    U = clifford_to_unitary(random_clifford(n, rng))
    if random_phase:
        U = np.exp(2j * np.pi * rng.random()) * U
    return U
