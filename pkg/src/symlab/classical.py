"""Classical one-layer scrambling with flip-covariant permutations.

A width-w covariant permutation commutes with the global bit flip:
P(~x) = ~P(x).  Sampling pairs the 2^(w-1) flip-orbits by a uniform random
bijection plus an independent flip per orbit, which is exactly uniform over
the covariant subgroup.  The scrambled distribution draws a fixed-point
sample, appends uniform ancilla bits patchwise, and applies an independent
covariant permutation per 2*xi-bit patch.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "SymmetricPermutation",
    "ScrambledDistribution",
    "sample_symmetric_permutation",
    "feistel_symmetric_permutation",
    "fixed_point_distribution",
    "scramble_distribution",
    "scrambled_order_parameter",
    "patchwise_distinct_defect",
    "distinguishability_experiment",
    "patch_pattern",
]


def _flip(x: int, w: int) -> int:
    return x ^ ((1 << w) - 1)


@dataclass(frozen=True)
class SymmetricPermutation:
    """Bijection on w-bit strings with P(~x) = ~P(x)."""

    width: int
    table: np.ndarray

    def __call__(self, x):
        return self.table[x]

    def inverse(self) -> "SymmetricPermutation":
        inv = np.empty_like(self.table)
        inv[self.table] = np.arange(len(self.table))
        return SymmetricPermutation(self.width, inv)

    def check_covariance(self) -> bool:
        size = 1 << self.width
        idx = np.arange(size)
        flipped = idx ^ (size - 1)
        return bool(np.array_equal(self.table[flipped], self.table[idx] ^ (size - 1)))


def sample_symmetric_permutation(w: int, rng: np.random.Generator) -> SymmetricPermutation:
    """Uniform covariant permutation via the orbit-pairing construction."""
    if w < 1 or w > 24:
        raise ValueError("width must be in 1..24 for explicit tables")
    size = 1 << w
    half = size >> 1  # orbit representatives: strings with top bit 0
    perm = rng.permutation(half)
    flips = rng.integers(2, size=half)
    table = np.empty(size, dtype=np.int64)
    reps = np.arange(half)  # top bit 0
    images = perm ^ (flips * (size - 1))
    table[reps] = images
    table[reps ^ (size - 1)] = images ^ (size - 1)
    return SymmetricPermutation(w, table)


def feistel_symmetric_permutation(w: int, key: int, rounds: int = 8) -> SymmetricPermutation:
    """Keyed covariant permutation for widths where explicit tables are too big.

    Runs a Feistel network on the (w-1)-bit orbit representative and XOR-masks
    the flip bit with a keyed bit per orbit; covariance is exact by
    construction.  Only a toy mixing function: not cryptography.
    """
    if w < 2 or w > 32:
        raise ValueError("width must be in 2..32")
    wr = w - 1
    lw = wr // 2
    rw = wr - lw

    def f(r: int, round_key: int) -> int:
        v = (r * 0x9E3779B1 + round_key) & 0xFFFFFFFF
        v ^= v >> 13
        v = (v * 0x85EBCA6B) & 0xFFFFFFFF
        v ^= v >> 16
        return v & ((1 << lw) - 1)

    mask_r = (1 << wr) - 1

    def rep_perm(rep: int) -> int:
        # unbalanced Feistel: XOR the top lw bits with f(bottom rw bits),
        # then rotate by rw so every bit gets mixed; each step is bijective.
        x = rep
        for rd in range(rounds):
            R = x & ((1 << rw) - 1)
            L = (x >> rw) ^ f(R, key + rd)
            x = (L << rw) | R
            if wr > 1:
                x = ((x << rw) & mask_r) | (x >> lw)
        return x & mask_r

    size = 1 << w
    table = np.empty(size, dtype=np.int64)
    mask = size - 1
    for rep in range(size >> 1):
        img_rep = rep_perm(rep)
        fb = (img_rep * 0x45D9F3B ^ key) >> 3 & 1
        img = img_rep ^ (fb * mask)
        table[rep] = img
        table[rep ^ mask] = img ^ mask
    out = SymmetricPermutation(w, table)
    if len(np.unique(table)) != size:
        raise RuntimeError("keyed permutation is not a bijection")
    return out


def fixed_point_distribution(kind: str, n: int):
    """Support/probability pairs of the fixed-point distribution on n bits."""
    if kind == "z2_ssb":
        return [(0, 0.5), ((1 << n) - 1, 0.5)]
    if kind == "trivial_uniform":
        return [(x, 1.0 / (1 << n)) for x in range(1 << n)]
    raise ValueError(f"unknown fixed point kind {kind!r}")


@dataclass
class ScrambledDistribution:
    """One-layer scramble: per patch, xi system bits + xi ancilla bits permuted.

    Patch alpha holds system bits [alpha*xi, (alpha+1)*xi); its 2*xi-bit input
    is (system bits << xi) | ancilla bits, and output strings concatenate the
    per-patch outputs (patch 0 most significant).
    """

    kind: str
    n: int
    xi: int
    perms: list = field(default_factory=list)

    @property
    def m(self) -> int:
        return self.n // self.xi

    def sample(self, rng: np.random.Generator, batch: int = 1) -> np.ndarray:
        if self.kind == "z2_ssb":
            sysbits = -(rng.integers(2, size=batch).astype(np.int64))  # 0 or all-ones
            system = sysbits & ((1 << self.n) - 1)
        elif self.kind == "trivial_uniform":
            system = rng.integers(1 << self.n, size=batch, dtype=np.int64)
        else:
            raise ValueError(self.kind)
        out = np.zeros(batch, dtype=np.int64)
        for a in range(self.m):
            shift = self.n - (a + 1) * self.xi
            sys_a = (system >> shift) & ((1 << self.xi) - 1)
            anc_a = rng.integers(1 << self.xi, size=batch, dtype=np.int64)
            z = self.perms[a]((sys_a << self.xi) | anc_a)
            out = (out << (2 * self.xi)) | z
        return out

    def patch_outputs(self, strings: np.ndarray) -> list[np.ndarray]:
        """Split 2n-bit output strings into per-patch 2*xi-bit words."""
        words = []
        for a in range(self.m):
            shift = 2 * self.xi * (self.m - 1 - a)
            words.append((strings >> shift) & ((1 << (2 * self.xi)) - 1))
        return words


def scramble_distribution(kind: str, n: int, xi: int, rng: np.random.Generator,
                          keyed: bool = False) -> ScrambledDistribution:
    if n % xi != 0:
        raise ValueError("xi must divide n")
    if 2 * xi > 24 and not keyed:
        raise ValueError("patch width over table budget; use keyed=True")
    m = n // xi
    if keyed:
        perms = [feistel_symmetric_permutation(2 * xi, int(rng.integers(1 << 30)))
                 for _ in range(m)]
    else:
        perms = [sample_symmetric_permutation(2 * xi, rng) for _ in range(m)]
    return ScrambledDistribution(kind=kind, n=n, xi=xi, perms=perms)


def scrambled_order_parameter(dist: ScrambledDistribution, alpha: int, bit: int) -> np.ndarray:
    """Truth table of f'(y) = (-1)^(bit i of P_alpha^-1(y)) over 2*xi-bit words.

    ``bit`` indexes the system bits of the patch (0 = most significant system
    bit); returns +-1 per word.
    """
    w = 2 * dist.xi
    if not (0 <= bit < dist.xi):
        raise ValueError("bit index outside the patch's system bits")
    inv = dist.perms[alpha].inverse()
    pre = inv(np.arange(1 << w))
    bitpos = w - 1 - bit  # system bits occupy the top xi positions
    return 1 - 2 * ((pre >> bitpos) & 1).astype(np.int64)


def patch_pattern(words: np.ndarray, w: int) -> tuple:
    """Coincidence pattern of k patch words up to the flip symmetry.

    Encodes, for each pair (i, j), whether word_i == word_j, word_i == ~word_j,
    or neither; this is the complete invariant of the diagonal covariant
    action, so distributions of scrambled outputs are determined by it.
    """
    k = len(words)
    mask = (1 << w) - 1
    out = []
    for i in range(k):
        for j in range(i + 1, k):
            if words[i] == words[j]:
                out.append(1)
            elif words[i] == (words[j] ^ mask):
                out.append(2)
            else:
                out.append(0)
    return tuple(out)


def patchwise_distinct_defect(k: int, xi: int, m: int, N: int,
                              rng: np.random.Generator, kind: str = "z2_ssb"):
    """Empirical probability that a k-batch fails patchwise flip-distinctness.

    Compared against the union bound m*k*(k-1)/2^xi.  Covariant permutations
    preserve flip-coincidences exactly, so the defect is evaluated on the
    pre-permutation patch inputs, which is equivalent and faster.
    """
    if k < 1:
        raise ValueError("k must be positive")
    n = m * xi
    bound = m * k * (k - 1) / 2.0**xi
    if k == 1:
        return 0.0, 0.0, bound
    fails = 0
    mask_full = (1 << (2 * xi)) - 1
    mask_sys = (1 << xi) - 1
    for _ in range(N):
        if kind == "z2_ssb":
            svals = rng.integers(2, size=k) * mask_sys
            sys_words = np.tile(svals, (m, 1))
        else:
            sys_words = rng.integers(1 << xi, size=(m, k))
        ancs = rng.integers(1 << xi, size=(m, k))
        words = (sys_words << xi) | ancs
        bad = False
        for a in range(m):
            seen = set()
            for word in words[a]:
                word = int(word)
                if word in seen or (word ^ mask_full) in seen:
                    bad = True
                    break
                seen.add(word)
            if bad:
                break
        fails += bad
    defect = fails / N
    stderr = math.sqrt(max(defect * (1 - defect), 1e-12) / N)
    return defect, stderr, bound


def _pattern_distribution_exact(kind: str, n: int, xi: int, k: int):
    """Exact joint distribution of per-patch coincidence patterns.

    Each of the k queries draws its own fixed-point sample (patchwise system
    words) plus independent ancillas; conditional on the per-query system
    words, patches are independent, so the joint pattern distribution is a
    mixture over system configurations of per-patch products.
    """
    m = n // xi
    w = 2 * xi
    mask = (1 << xi) - 1

    def patch_dist(sys_words_per_query):
        """Pattern distribution of k words on one patch, given system parts."""
        out: dict[tuple, float] = {}
        anc = range(1 << xi)
        p_each = 1.0 / (1 << xi) ** k
        for ancs in itertools.product(anc, repeat=k):
            words = [(sys_words_per_query[j] << xi) | ancs[j] for j in range(k)]
            pat = patch_pattern(words, w)
            out[pat] = out.get(pat, 0.0) + p_each
        return out

    def product_dist(dists):
        out = {(): 1.0}
        for d in dists:
            new = {}
            for key, p in out.items():
                for pat, q in d.items():
                    new[key + (pat,)] = new.get(key + (pat,), 0.0) + p * q
            out = new
        return out

    total: dict[tuple, float] = {}
    if kind == "z2_ssb":
        # every patch sees the same per-query system words s_j * mask
        for svec in itertools.product((0, mask), repeat=k):
            weight = 0.5**k
            d = patch_dist(svec)
            for key, p in product_dist([d] * m).items():
                total[key] = total.get(key, 0.0) + weight * p
    elif kind == "trivial_uniform":
        # patch system words are independent uniform per query and per patch
        out: dict[tuple, float] = {}
        p_sys = 1.0 / (1 << xi) ** k
        acc: dict[tuple, float] = {}
        for svec in itertools.product(range(1 << xi), repeat=k):
            for pat, q in patch_dist(svec).items():
                acc[pat] = acc.get(pat, 0.0) + p_sys * q
        total = product_dist([acc] * m)
    else:
        raise ValueError(kind)
    return total


def distinguishability_experiment(kind_a: str, kind_b: str, k: int, xi: int, n: int,
                                  N: int, rng: np.random.Generator, mode: str = "auto"):
    """Total-variation distance between the two scrambled k-batch ensembles.

    Covariant permutations make the output distribution uniform within each
    orbit of the diagonal flip-covariant action, and the orbit label of a
    batch is its tuple of per-patch coincidence patterns, which the
    permutations preserve.  The TV distance therefore equals the TV distance
    between the pattern distributions, computed exactly for small systems
    (n <= 6, xi <= 3, k <= 3) or estimated from N sampled batches otherwise.
    Returns (tv, stderr, bound) with bound = 4*m*k*(k-1)/2^xi.
    """
    if n % xi != 0:
        raise ValueError("xi must divide n")
    m = n // xi
    bound = 4.0 * m * k * (k - 1) / 2.0**xi
    if mode == "auto":
        mode = "exact" if (n <= 6 and xi <= 3 and k <= 3) else "sampling"
    if kind_a == kind_b:
        return 0.0, 0.0, bound
    if mode == "exact":
        da = _pattern_distribution_exact(kind_a, n, xi, k)
        db = _pattern_distribution_exact(kind_b, n, xi, k)
        keys = set(da) | set(db)
        tv = 0.5 * sum(abs(da.get(kk, 0.0) - db.get(kk, 0.0)) for kk in keys)
        return tv, 0.0, bound
    if mode != "sampling":
        raise ValueError(f"unknown mode {mode!r}")

    # Covariant permutations preserve coincidence patterns, so the pattern of
    # the *input* batch already has the output-orbit distribution; sampling
    # needs no permutation tables.
    counts_a: dict[tuple, int] = {}
    counts_b: dict[tuple, int] = {}
    mask = (1 << xi) - 1
    for counts, kind in ((counts_a, kind_a), (counts_b, kind_b)):
        for _ in range(N):
            if kind == "z2_ssb":
                svals = rng.integers(2, size=k) * mask
                sys_words = np.tile(svals, (m, 1))  # per patch x query
            elif kind == "trivial_uniform":
                sys_words = rng.integers(1 << xi, size=(m, k))
            else:
                raise ValueError(kind)
            ancs = rng.integers(1 << xi, size=(m, k))
            words = (sys_words << xi) | ancs
            key = tuple(patch_pattern(list(words[a]), 2 * xi) for a in range(m))
            counts[key] = counts.get(key, 0) + 1
    keys = set(counts_a) | set(counts_b)
    tv = 0.5 * sum(abs(counts_a.get(kk, 0) - counts_b.get(kk, 0)) / N for kk in keys)
    stderr = math.sqrt(len(keys) / N)  # coarse multinomial scale
    return tv, stderr, bound
