import math

import numpy as np
import pytest
from scipy import stats

from symlab.classical import (
    SymmetricPermutation,
    sample_symmetric_permutation,
    feistel_symmetric_permutation,
    fixed_point_distribution,
    scramble_distribution,
    scrambled_order_parameter,
    patchwise_distinct_defect,
    distinguishability_experiment,
    patch_pattern,
)


def test_covariance_holds_exactly(rng):
    for w in (1, 2, 3, 6, 10):
        for _ in range(40):
            P = sample_symmetric_permutation(w, rng)
            assert P.check_covariance()


def test_w1_only_two_permutations(rng):
    counts = {0: 0, 1: 0}
    N = 10000
    for _ in range(N):
        counts[int(sample_symmetric_permutation(1, rng).table[0])] += 1
    # identity (0 -> 0) and flip (0 -> 1) each about half the time
    assert abs(counts[0] / N - 0.5) < 3 * 0.5 / math.sqrt(N)


def test_orbit_count():
    # no fixed points of the global flip: 2^(w-1) orbits
    for w in (1, 2, 5):
        size = 1 << w
        orbits = {frozenset({x, x ^ (size - 1)}) for x in range(size)}
        assert len(orbits) == size // 2


def test_uniformity_over_covariant_group(rng):
    # w=2: 2 orbits -> 2! * 2^2 = 8 covariant permutations, all equally likely
    from collections import Counter
    counts = Counter()
    N = 16000
    for _ in range(N):
        P = sample_symmetric_permutation(2, rng)
        counts[tuple(P.table.tolist())] += 1
    assert len(counts) == 8
    chi2 = sum((c - N / 8) ** 2 / (N / 8) for c in counts.values())
    assert chi2 < stats.chi2.ppf(0.999, df=7)


def test_feistel_covariant_bijection():
    for w in (2, 4, 9, 16):
        for key in (0, 1, 987654):
            P = feistel_symmetric_permutation(w, key)
            assert P.check_covariance()
            assert len(np.unique(P.table)) == 1 << w


def test_fixed_point_distributions():
    ssb = dict(fixed_point_distribution("z2_ssb", 3))
    assert ssb == {0: 0.5, 7: 0.5}
    unif = fixed_point_distribution("trivial_uniform", 3)
    assert len(unif) == 8 and all(abs(p - 1 / 8) < 1e-15 for _, p in unif)
    # symmetric under global flip
    assert ssb[0] == ssb[7]


def test_identity_permutation_scramble_is_product(rng):
    d = scramble_distribution("z2_ssb", 4, 2, rng)
    d.perms = [SymmetricPermutation(4, np.arange(16))] * 2
    draws = d.sample(rng, batch=4000)
    # system bits (top two of each patch word) all-equal; ancilla uniform
    words = d.patch_outputs(draws)
    sys0 = words[0] >> 2
    sys1 = words[1] >> 2
    assert set(np.unique(sys0)) <= {0, 3}
    assert np.array_equal(sys0, sys1)
    anc = np.concatenate([words[0] & 3, words[1] & 3])
    _, counts = np.unique(anc, return_counts=True)
    chi2 = ((counts - counts.mean()) ** 2 / counts.mean()).sum()
    assert chi2 < stats.chi2.ppf(0.999, df=3)


def test_ancilla_marginal_uniform_enumeration(rng):
    # construction property: reversible map of a uniform input
    d = scramble_distribution("z2_ssb", 4, 2, rng)
    probs = np.zeros(16)
    for s in (0, 0b11):
        for a in range(4):
            z = d.perms[0]((s << 2) | a)
            probs[z] += 0.5 * 0.25
    # P_0 output marginal need not be uniform, but pulling back through the
    # bijection, ancilla labels occur uniformly: check preimage mass of each
    inv = d.perms[0].inverse()
    mass = {}
    for z in range(16):
        pre = int(inv(z))
        mass[pre & 3] = mass.get(pre & 3, 0.0) + probs[z]
    assert all(abs(v - 0.25) < 1e-12 for v in mass.values())


def test_scrambled_order_parameter_identity():
    rngl = np.random.default_rng(1)
    d = scramble_distribution("z2_ssb", 4, 2, rngl)
    d.perms = [SymmetricPermutation(4, np.arange(16))] * 2
    tab = scrambled_order_parameter(d, 0, 0)
    want = 1 - 2 * ((np.arange(16) >> 3) & 1)
    assert np.array_equal(tab, want)


def test_ssb_long_range_correlator_exact(rng):
    # E[f'_a f'_b] = 1 exactly across patches for the symmetry-broken input
    for _ in range(10):
        d = scramble_distribution("z2_ssb", 4, 2, rng)
        fa = scrambled_order_parameter(d, 0, 0)
        fb = scrambled_order_parameter(d, 1, 0)
        tot = 0.0
        for s in (0, 0b11):
            for a0 in range(4):
                for a1 in range(4):
                    tot += 0.5 / 16 * fa[d.perms[0]((s << 2) | a0)] * fb[d.perms[1]((s << 2) | a1)]
        assert abs(tot - 1.0) < 1e-12


def test_uniform_long_range_correlator_zero(rng):
    for _ in range(5):
        d = scramble_distribution("trivial_uniform", 4, 2, rng)
        fa = scrambled_order_parameter(d, 0, 0)
        fb = scrambled_order_parameter(d, 1, 0)
        tot = 0.0
        for sa in range(4):
            for sb in range(4):
                for a0 in range(4):
                    for a1 in range(4):
                        tot += (1 / 256) * fa[d.perms[0]((sa << 2) | a0)] * fb[d.perms[1]((sb << 2) | a1)]
        assert abs(tot) < 1e-12


def test_defect_zero_for_single_sample(rng):
    defect, se, bound = patchwise_distinct_defect(1, 8, 2, 100, rng)
    assert defect == 0.0


def test_defect_below_bound(rng):
    defect, se, bound = patchwise_distinct_defect(10, 12, 2, 4000, rng)
    assert abs(bound - 2 * 90 / 4096) < 1e-12
    assert defect <= bound + 3 * se


def test_defect_monotone_in_xi(rng):
    vals = []
    for xi in (8, 10, 12):
        defect, _, _ = patchwise_distinct_defect(10, xi, 2, 6000, rng)
        vals.append(defect)
    assert vals[0] >= vals[1] >= vals[2]


def test_advantage_same_kind_zero(rng):
    tv, se, bound = distinguishability_experiment("z2_ssb", "z2_ssb", 2, 2, 4, 100, rng)
    assert tv == 0.0


def test_exact_vs_sampling_agreement(rng):
    tv_e, _, bound = distinguishability_experiment(
        "z2_ssb", "trivial_uniform", 2, 2, 4, 0, rng, mode="exact")
    tv_s, se, _ = distinguishability_experiment(
        "z2_ssb", "trivial_uniform", 2, 2, 4, 60000, rng, mode="sampling")
    assert bound == 4.0  # vacuous at this size; record only
    assert tv_e > 0
    assert abs(tv_e - tv_s) < 0.02


def test_advantage_below_bound_sampling(rng):
    tv, se, bound = distinguishability_experiment(
        "z2_ssb", "trivial_uniform", 10, 12, 24, 20000, rng, mode="sampling")
    assert abs(bound - 4 * 2 * 90 / 4096) < 1e-12
    assert tv <= bound + 3 * max(se, 1e-6)


def test_advantage_monotone_decreasing(rng):
    vals = []
    for xi in (8, 10, 12):
        tv, _, _ = distinguishability_experiment(
            "z2_ssb", "trivial_uniform", 10, xi, 2 * xi, 20000, rng, mode="sampling")
        vals.append(tv)
    assert vals[0] > vals[1] > vals[2]


def test_conditional_uniformity_chi2(rng):
    # conditioned on patchwise flip-distinctness, all distinct batches are
    # equally likely: chi-square on the per-patch joint outcome
    n, xi, k = 4, 2, 2
    N = 60000
    counts = {}
    accepted = 0
    for _ in range(N):
        d = scramble_distribution("z2_ssb", n, xi, rng)
        batch = d.sample(rng, batch=k)
        words = d.patch_outputs(batch)
        ok = all(patch_pattern(list(w), 2 * xi) == (0,) for w in words)
        if not ok:
            continue
        accepted += 1
        key = tuple(int(w[0]) * 16 + int(w[1]) for w in words)
        counts[key] = counts.get(key, 0) + 1
    # uniform over (16*14)^2 ordered distinct-pair outcomes per two patches
    cells = (16 * 14) ** 2
    exp = accepted / cells
    assert exp > 0.5  # enough statistics per cell in aggregate terms
    chi2 = sum((c - exp) ** 2 / exp for c in counts.values())
    chi2 += (cells - len(counts)) * exp  # unobserved cells
    dof = cells - 1
    assert chi2 < stats.chi2.ppf(0.999, df=dof)
