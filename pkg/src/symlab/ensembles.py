"""Random-unitary ensembles and their exact moments and error bounds.

Covers sector-Haar sampling, two-layer brickwork circuits (open or periodic),
translation-invariant two-layer circuits, composed ensembles, the gluing
bound for overlapping patch designs, design squaring, and brute-force
verification of the permutation-sum estimates behind the translation-
invariant analysis.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
import scipy.linalg

from .groups import (
    FiniteGroup,
    SiteRepresentation,
    SectorDecomposition,
    build_group,
    regular_representation,
    sector_decomposition,
    CapacityError,
    DENSE_DIM_BUDGET,
)
from .tensor_core import haar_unitary
from .commutant import (
    PartitionBasis,
    SlotBasis,
    CoeffChannel,
    all_perms,
    perm_compose,
    perm_inverse,
    perm_distance,
    exact_twirl_channel,
    two_layer_channel,
    relative_error_pencil,
    algebra_matrix,
    _pinv_psd,
)
from .moments import ChoiCoefficients, CommutantBasis, relative_error

__all__ = [
    "EnsembleSpec",
    "PermutationGroupSum",
    "sample_unitary",
    "brickwork_layers",
    "brickwork_choi_exact",
    "gluing_bound",
    "iterated_gluing_bound",
    "two_layer_threshold",
    "compose_and_square_check",
    "ti_choi_exact",
    "ti_relative_error",
    "ti_gluing_threshold",
    "perm_sum_bruteforce",
    "embed_on_sites",
]


# ---------------------------------------------------------------------------
# ensemble specification and sampling
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EnsembleSpec:
    """Declarative description of a random-unitary ensemble.

    kind: sector_haar | brickwork | ti_brickwork | composed
    For brickwork kinds, ``xi`` is half the patch size (gates act on 2*xi
    contiguous sites) and boundary is "periodic" or "open".  For composed,
    ``parts`` lists sub-specs applied right to left.
    """

    kind: str
    group: str | None = None
    n_sites: int = 0
    xi: int = 0
    boundary: str = "periodic"
    ancilla_dim: int = 1
    parts: tuple = ()

    def rep(self) -> SiteRepresentation:
        name = self.group if self.group is not None else "Z1"
        return regular_representation(build_group(name) if name != "Z1" else _trivial_group(),
                                      self.ancilla_dim)


def _trivial_group() -> FiniteGroup:
    return FiniteGroup(name="Z1", order=1, mult=np.zeros((1, 1), dtype=np.int64),
                       inv=np.zeros(1, dtype=np.int64), abelian=True)


def sample_sector_haar(dec: SectorDecomposition, rng: np.random.Generator) -> np.ndarray:
    """One draw: independent Haar block per sector multiplicity space."""
    B = dec.basis_change
    blocks = [
        np.kron(haar_unitary(s.multiplicity, rng), np.eye(s.irrep_dim)) for s in dec.sectors
    ]
    return B @ scipy.linalg.block_diag(*blocks) @ B.conj().T


def embed_on_sites(U: np.ndarray, sites, n: int, q: int) -> np.ndarray:
    """Embed a patch operator onto the listed sites of an n-site chain."""
    sites = list(sites)
    others = [s for s in range(n) if s not in sites]
    dim = q**n
    if dim > DENSE_DIM_BUDGET:
        raise CapacityError(f"embedding into dim {dim} over the dense budget")
    order = sites + others
    # permutation matrix sending site s to position order.index(s)
    src = np.arange(dim)
    digits = np.empty((dim, n), dtype=np.int64)
    rem = src
    for i in range(n - 1, -1, -1):
        digits[:, i] = rem % q
        rem = rem // q
    permuted = np.zeros(dim, dtype=np.int64)
    for pos, s in enumerate(order):
        permuted = permuted * q + digits[:, s]
    P = np.zeros((dim, dim))
    P[permuted, src] = 1.0
    big = np.kron(U, np.eye(q ** len(others)))
    return P.T @ big @ P


def brickwork_layers(n: int, xi: int, boundary: str = "periodic"):
    """Site lists for the two brickwork layers: patches of 2*xi sites, offset xi."""
    if xi == 0:
        return [], []
    if n % (2 * xi) != 0:
        raise ValueError(f"2*xi = {2*xi} must divide n = {n}")
    layer1 = [tuple(range(a, a + 2 * xi)) for a in range(0, n, 2 * xi)]
    if boundary == "periodic":
        layer2 = [
            tuple((a + s) % n for s in range(2 * xi)) for a in range(xi, n + xi, 2 * xi)
        ]
        if n == 2 * xi:
            layer2 = [tuple(range(n))]  # a single patch already covers everything
    elif boundary == "open":
        layer2 = [tuple(range(a, a + 2 * xi)) for a in range(xi, n - 2 * xi + 1, 2 * xi)]
    else:
        raise ValueError(f"unknown boundary {boundary!r}")
    return layer1, layer2


def sample_unitary(spec: EnsembleSpec, rng: np.random.Generator) -> np.ndarray:
    """Draw one dense unitary from the ensemble; always symmetric for its group."""
    if spec.kind == "sector_haar":
        rep = spec.rep()
        dec = sector_decomposition(rep, spec.n_sites)
        return sample_sector_haar(dec, rng)
    if spec.kind in ("brickwork", "ti_brickwork"):
        rep = spec.rep()
        q = rep.site_dim
        n = spec.n_sites
        if spec.xi == 0:
            return np.eye(q**n, dtype=complex)
        layer1, layer2 = brickwork_layers(n, spec.xi, spec.boundary)
        dec_patch = sector_decomposition(rep, 2 * spec.xi)
        U = np.eye(q**n, dtype=complex)
        for layer in (layer1, layer2):
            shared = sample_sector_haar(dec_patch, rng) if spec.kind == "ti_brickwork" else None
            L = np.eye(q**n, dtype=complex)
            for patch in layer:
                g = shared if shared is not None else sample_sector_haar(dec_patch, rng)
                L = embed_on_sites(g, patch, n, q) @ L
            U = L @ U
        return U
    if spec.kind == "composed":
        U = None
        for part in reversed(spec.parts):
            V = sample_unitary(part, rng)
            U = V if U is None else V @ U
        if U is None:
            raise ValueError("composed ensemble needs at least one part")
        return U
    raise ValueError(f"unknown ensemble kind {spec.kind!r}")


# ---------------------------------------------------------------------------
# exact brickwork moments
# ---------------------------------------------------------------------------

def brickwork_choi_exact(spec: EnsembleSpec, k: int) -> ChoiCoefficients:
    """Exact k-th moment of a two-layer brickwork of symmetric Haar patches."""
    rep = spec.rep()
    layer1, layer2 = brickwork_layers(spec.n_sites, spec.xi, spec.boundary)
    patch_dec = sector_decomposition(rep, 2 * spec.xi)
    bad = [s.label for s in patch_dec.sectors if s.multiplicity < k]
    if bad:
        raise ValueError(
            f"patch sectors {bad} have multiplicity below k={k}; twirl formula undefined"
        )
    if len(layer2) == 0:
        basis = PartitionBasis.build(rep, k, layer1)
        ch = exact_twirl_channel(basis)
    else:
        ch = two_layer_channel(rep, k, layer1, layer2)
    return ChoiCoefficients(
        ch,
        kind="brickwork",
        meta={"group": rep.group.name, "n": spec.n_sites, "xi": spec.xi,
              "boundary": spec.boundary, "k": k},
    )


def glued_pair_choi(rep: SiteRepresentation, k: int, first_patch, second_patch) -> ChoiCoefficients:
    """Moment of U_second * U_first with overlapping symmetric Haar patches."""
    ch = two_layer_channel(rep, k, [tuple(first_patch)], [tuple(second_patch)])
    return ChoiCoefficients(ch, kind="glued_pair")


def haar_choi_on(rep: SiteRepresentation, n: int, k: int) -> ChoiCoefficients:
    basis = CommutantBasis.global_basis(rep, n, k)
    return ChoiCoefficients(exact_twirl_channel(basis.partition), kind="exact_symmetric_haar")


# ---------------------------------------------------------------------------
# gluing and squaring bounds
# ---------------------------------------------------------------------------

def gluing_bound(eps_ab: float, eps_bc: float, k: int, order: int,
                 D_ab: int, D_bc: int, D_b: int, D_abc: int) -> tuple[float, bool]:
    """Design error of U_AB U_BC from the errors of its two halves.

    Returns (eps, vacuous).  The bound is vacuous when a pole factor fires
    (k^2 |G| >= 2 D_AB or 2 D_BC) or the overlap condition k^2 <= D_B/|G|
    fails.
    """
    kk = k * k * order
    if kk > D_b or kk >= 2 * D_ab or kk >= 2 * D_bc:
        return float("inf"), True
    one_plus = (
        (1.0 + eps_ab)
        * (1.0 + eps_bc)
        / (1.0 - kk / (2.0 * D_ab))
        / (1.0 - kk / (2.0 * D_bc))
        * math.exp(k * (k - 1) * order / (2.0 * D_b))
        * (1.0 + kk / D_abc)
    )
    return one_plus - 1.0, False


def iterated_gluing_bound(n: int, xi: int, k: int, order: int, q: int,
                          patch_eps: float = 0.0):
    """Accumulated design error of the two-layer brickwork, glued patch by patch.

    Gates are glued left to right; each step's gate overlaps the prefix on
    xi sites and extends it by xi, so there are n/xi - 2 steps.  Returns
    (eps_total, vacuous, per_step) with per_step a list of
    (covered_sites, step_eps_bound).
    """
    if xi <= 0 or n % (2 * xi) != 0:
        raise ValueError("2*xi must divide n")
    steps = []
    covered = 2 * xi
    eps = patch_eps
    vacuous = False
    while covered < n:
        # A = prefix minus overlap, B = overlap (xi sites), C = xi new sites
        D_ab = q**covered
        D_b = q**xi
        D_bc = q ** (2 * xi)
        D_abc = q ** (covered + xi)
        step_eps, step_vac = gluing_bound(eps, patch_eps, k, order, D_ab, D_bc, D_b, D_abc)
        vacuous = vacuous or step_vac
        covered += xi
        steps.append((covered, step_eps))
        eps = step_eps
        if vacuous:
            break
    return eps, vacuous, steps


def two_layer_threshold(n: int, k: int, order: int, eps: float) -> dict:
    """Minimal patch half-sizes xi for the two-layer circuit to reach error eps.

    Two conventions circulate: a log-base-2 threshold and a log-base-|G|
    threshold.  Both are returned; they coincide for |G| = 2.
    """
    if not (0 < eps <= 1):
        raise ValueError("eps must lie in (0, 1]")
    arg = n * k * k * order / eps
    out = {"log2": max(0.0, math.log2(arg))}
    out["logG"] = max(0.0, math.log(arg) / math.log(order)) if order >= 2 else None
    return out


def compose_and_square_check(choi_E: ChoiCoefficients, choi_H: ChoiCoefficients,
                             tol: float = 1e-9):
    """Verify that self-composition squares the design error (eps' <= 2 eps^2)."""
    eps = relative_error(choi_E, choi_H)
    squared = choi_E.compose_self()
    eps2 = relative_error(squared, choi_H)
    return eps, eps2, bool(eps2 <= 2.0 * eps * eps + tol)


# ---------------------------------------------------------------------------
# translation-invariant two-layer circuits
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PermutationGroupSum:
    """Weights over S_K (or S_K x S_K) term labels with the transposition metric."""

    K: int
    weights: np.ndarray  # (K!,) or (K!, K!)
    description: str = ""

    def distance(self, perm) -> int:
        return perm_distance(tuple(perm))


def _ti_frames(m: int, xi: int, k: int, q_site: int):
    """Slot bases for the even and odd gate frames of the TI two-layer circuit.

    The chain has n = 2*m*xi sites; gates act on cells of 2*xi sites.  Even
    cells start at 0, odd cells at xi (wrapping).  Labels are all S_K
    permutations of the (cell, copy) slots, realized as site-slot
    permutations so that cross-frame traces can be cycle-counted.
    """
    n = 2 * m * xi
    K = m * k
    perms = all_perms(K)
    trivial = _trivial_group()

    def frame(offset: int) -> SlotBasis:
        site_perms = np.empty((len(perms), n * k), dtype=np.int64)
        for li, p in enumerate(perms):
            sp = np.empty(n * k, dtype=np.int64)
            for c in range(k):
                for s in range(n):
                    slot = c * n + s
                    cell = ((s - offset) % n) // (2 * xi)
                    within = (s - offset) % (2 * xi)
                    gate_slot = c * m + cell
                    tgt = p[gate_slot]
                    tc, tcell = divmod(tgt, m)
                    tsite = (tcell * 2 * xi + within + offset) % n
                    sp[slot] = tc * n + tsite
            site_perms[li] = sp
        internals = np.zeros_like(site_perms)
        return SlotBasis(trivial, q_site, site_perms, internals)

    return frame(0), frame(xi), perms


def ti_choi_exact(m: int, xi: int, k: int, group: FiniteGroup | None = None,
                  q_site: int = 2) -> ChoiCoefficients:
    """Exact k-th moment of the translation-invariant two-layer circuit.

    Each layer repeats one Haar-random gate on all m cells, so its twirl is
    the Weingarten projection onto S_K slot permutations with K = m*k.  The
    moment is the composition of the two frames' projections, stored over
    S_K x S_K term labels.  On-site symmetric gates are out of scope here;
    the plain translation-invariant case has trivial group.
    """
    if group is not None and group.order > 1:
        raise NotImplementedError(
            "symmetric translation-invariant moments are not implemented; "
            "use the plain translation-invariant circuit"
        )
    K = m * k
    if K > 7:
        raise CapacityError(f"K = m*k = {K} exceeds the factorial sum budget of 7")
    even, odd, perms = _ti_frames(m, xi, k, q_site)
    W_even = _pinv_psd(even.gram())
    W_odd = _pinv_psd(odd.gram())
    X = odd.gram(even)  # tr(odd_i^dag even_j)
    C = W_odd @ X @ W_even
    ch = CoeffChannel(odd, even, C)
    return ChoiCoefficients(
        ch, kind="ti_brickwork",
        meta={"m": m, "xi": xi, "k": k, "q_site": q_site, "K": K},
    )


def ti_commutant_basis(m: int, xi: int, k: int, q_site: int = 2) -> SlotBasis:
    """Labels T^tvec * pi (cell translations per copy times copy permutations)."""
    n = 2 * m * xi
    trivial = _trivial_group()
    labels = []
    for pi in all_perms(k):
        for tvec in itertools.product(range(m), repeat=k):
            sp = np.empty(n * k, dtype=np.int64)
            for c in range(k):
                tc = pi[c]
                shift = 2 * xi * tvec[tc]
                for s in range(n):
                    sp[c * n + s] = tc * n + (s + shift) % n
            labels.append(sp)
    site_perms = np.stack(labels)
    return SlotBasis(trivial, q_site, site_perms, np.zeros_like(site_perms))


def ti_relative_error(choi_ti: ChoiCoefficients, safety: float = 3.0):
    """Design error of a TI moment against the exact translation-invariant twirl.

    Returns a dict with the additive-to-relative conversion: the spectral
    norm of the difference to the uniform-coefficient TI twirl on the EPR
    state, the flat eigenvalue of that twirl, the converted bound
    eps = safety * norm / eigenvalue, and (when affordable) the exact
    pencil value against the projection onto the TI commutant.
    """
    meta = choi_ti.meta
    m, xi, k, q_site = meta["m"], meta["xi"], meta["k"], meta["q_site"]
    ch = choi_ti.channel
    odd, even = ch.out_basis, ch.in_basis
    comm = ti_commutant_basis(m, xi, k, q_site)
    dk = float(ch.op_dim)

    # embed the commutant labels into both frames by matching site permutations
    odd_index = {odd.perms[i].tobytes(): i for i in range(odd.size)}
    even_index = {even.perms[i].tobytes(): i for i in range(even.size)}
    rows, cols = [], []
    for i in range(comm.size):
        key = comm.perms[i].tobytes()
        if key not in odd_index or key not in even_index:
            raise RuntimeError("TI commutant label missing from a gate frame")
        rows.append(odd_index[key])
        cols.append(even_index[key])

    # uniform-coefficient TI twirl: channel weight 1/D^k per commutant label
    C_unif = np.zeros((odd.size, even.size))
    for r, c in zip(rows, cols):
        C_unif[r, c] += 1.0 / dk
    # Choi coefficients are channel coefficients scaled by 1/D^k
    delta = (ch.coeff - C_unif) / dk
    Dm, Um = algebra_matrix([delta, C_unif / dk], odd, even)
    norm_delta = float(np.max(np.abs(np.linalg.eigvalsh(Dm))))
    evals = np.linalg.eigvalsh(Um)
    lam_flat = float(evals[-1])
    # the uniform twirl's Choi is proportional to a projector; verify flatness
    nonzero = evals[np.abs(evals) > 1e-9 * lam_flat]
    flat = bool(np.allclose(nonzero, lam_flat, rtol=1e-6))
    out = {
        "additive_norm": norm_delta,
        "flat_eigenvalue": lam_flat,
        "flat_spectrum": flat,
        "eps_bound": safety * norm_delta / lam_flat,
        "eps_exact": None,
    }
    # exact pencil against the projection onto the TI commutant span
    try:
        W = _pinv_psd(comm.gram())
        C_H = np.zeros((odd.size, even.size))
        for a in range(comm.size):
            for b in range(comm.size):
                if W[a, b] != 0.0:
                    C_H[rows[a], cols[b]] += W[a, b]
        out["eps_exact"] = relative_error_pencil(ch.coeff / dk, C_H / dk, odd, even)
    except CapacityError:
        pass
    return out


def ti_gluing_threshold(n: int, k: int, eps: float) -> float:
    """Patch half-size needed by the TI gluing analysis: log2(32 n^6 k^6 / eps)."""
    if not (0 < eps <= 1):
        raise ValueError("eps must lie in (0, 1]")
    return math.log2(32.0 * n**6 * k**6 / eps)


# ---------------------------------------------------------------------------
# brute-force permutation-sum verification
# ---------------------------------------------------------------------------

def perm_sum_bruteforce(K: int, D: int) -> dict:
    """Exhaustively verify the two permutation-sum estimates at size K.

    (1) For every tau in S_K:  sum_Delta D^-|Delta| D^-|Delta^-1 tau|
        <= 8 (K^2/2D)^|tau|.  The exponent on the right follows the
        concluding inequality of the derivation (positive |tau|), not the
        sign printed in the statement; see the decisions ledger.
    (2) For every factorization K = m*k and T = k disjoint m-cycles, the
        number of sigma at distance |sigma^-1 T^-1 sigma T| = r is exactly
        m^k k! at r = 0 (the centralizer) and at most m^k k! K^{4r} for all r.

    All comparisons are exact integer/rational arithmetic.
    """
    if K > 7:
        raise CapacityError("K > 7 not enumerable in the budget")
    perms = all_perms(K)
    dist = np.array([perm_distance(p) for p in perms], dtype=np.int64)
    inv = [perm_inverse(p) for p in perms]
    report = {"K": K, "D": D, "bound1_violations": [], "bound2": [], "bound1_max_ratio": 0.0}

    # bound (1)
    for ti, tau in enumerate(perms):
        lhs = Fraction(0)
        for di, delta in enumerate(perms):
            d2 = perm_distance(perm_compose(inv[di], tau))
            lhs += Fraction(1, D ** (int(dist[di]) + d2))
        rhs = Fraction(8) * (Fraction(K * K, 2 * D) ** int(dist[ti]))
        ratio = float(lhs / rhs)
        report["bound1_max_ratio"] = max(report["bound1_max_ratio"], ratio)
        if lhs > rhs:
            report["bound1_violations"].append({"tau": tau, "lhs": float(lhs), "rhs": float(rhs)})

    # bound (2): every divisor split K = m*k
    for k in range(1, K + 1):
        if K % k != 0:
            continue
        m = K // k
        T = tuple((c * m + (i + 1) % m) for c in range(k) for i in range(m))
        Tinv = perm_inverse(T)
        counts: dict[int, int] = {}
        for si, sigma in enumerate(perms):
            conj = perm_compose(perm_compose(inv[si], Tinv), perm_compose(sigma, T))
            r = perm_distance(conj)
            counts[r] = counts.get(r, 0) + 1
        centralizer = m**k * math.factorial(k)
        entry = {"m": m, "k": k, "centralizer": centralizer, "counts": counts, "ok": True}
        if counts.get(0, 0) != centralizer:
            entry["ok"] = False
        for r, c in counts.items():
            if c > centralizer * K ** (4 * r):
                entry["ok"] = False
        report["bound2"].append(entry)

    report["ok"] = not report["bound1_violations"] and all(e["ok"] for e in report["bound2"])
    return report
