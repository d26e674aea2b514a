"""Phase-recognition experiment harness.

Runs scans over the light-cone parameter: prepare a fixed point, scramble it
with a symmetric Clifford brickwork, evaluate a recognition strategy (bare
order parameter, string order, MI, CMI, TEE), and record the measured value
together with a modeled sample cost.  All stabilizer quantities are exact;
the cost model is the closed-form variance of a purity (swap-test) estimator,
so curves are noiseless and reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict, field

import numpy as np

from .stabilizer import (
    StabilizerTableau,
    PauliString,
    prepare_fixed_point,
    scramble,
    pauli_expectation,
    entropy,
    mutual_information,
    conditional_mutual_information,
    tee_kitaev_preskill,
    toric_snake_order,
    toric_edges,
    inflate_chain_region,
)

__all__ = [
    "ExperimentRecord",
    "PhaseScanConfig",
    "run_phase_scan",
    "entropy_sample_cost",
    "recognition_summary",
    "default_regions",
]

PHASE_SYMMETRY = {"ghz": "Z2_X", "cluster": "Z2xZ2_even_odd", "toric": "none",
                  "product": "Z2_X"}


@dataclass(frozen=True)
class ExperimentRecord:
    experiment: str
    phase: str
    strategy: str
    n: int
    xi: int
    regions: str
    value: float
    sample_cost: float
    draws: int
    seed: int

    def row(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class PhaseScanConfig:
    phase: str                      # ghz | cluster | toric | product
    n: int                          # qubits (toric: must equal 2*L*L)
    xi_grid: tuple[int, ...]
    draws: int
    strategy: str                   # order_parameter | string_order | mi | cmi | tee
    inflate: bool = True
    seed: int = 0
    target_stderr: float = 0.1
    regions: dict = field(default_factory=dict)


def entropy_sample_cost(S2_bits: float, target_stderr: float) -> int:
    """Shots for a swap-test purity estimate at the requested precision.

    The estimator variance is ~ 1/purity^2 per shot with purity 2^-S2 for a
    stabilizer state, giving shots = ceil(2^S2 / stderr^2); monotone in S2.
    """
    if target_stderr <= 0:
        raise ValueError("target_stderr must be positive")
    if S2_bits < 0:
        raise ValueError("entropy must be nonnegative")
    return int(math.ceil(2.0**S2_bits / target_stderr**2))


def default_regions(phase: str, n: int) -> dict:
    """Canonical region layout per phase (site lists; toric uses cell wedges)."""
    if phase in ("ghz", "product"):
        quarter = n // 4
        return {"A": list(range(0, max(2, n // 12))),
                "B": list(range(2 * quarter, 2 * quarter + max(2, n // 12))),
                "op_sites": (0, n // 2)}
    if phase == "cluster":
        w = max(2, n // 24 * 2)
        return {"A": list(range(0, 2)),
                "B": list(range(n - 2, n)),
                "C": list(range(2, 2 + w)) + list(range(n - 2 - w, n - 2)),
                "string": (2, n - 4)}  # separation must be even
    if phase == "toric":
        L = int(round(math.sqrt(n / 2)))
        if 2 * L * L != n:
            raise ValueError(f"toric scan needs n = 2*L^2, got n={n}")
        A = {(x, y) for x in range(0, 2) for y in range(1, 3)}
        B = {(x, y) for x in range(2, 4) for y in range(1, 3)}
        C = {(x, 0) for x in range(0, 4)}
        return {"A_cells": A, "B_cells": B, "C_cells": C, "L": L}
    raise ValueError(f"unknown phase {phase!r}")


def _cell_edges(cells, L):
    h, v = toric_edges(L, L)
    out = set()
    for (x, y) in cells:
        out |= {h(x, y), h(x, y + 1), v(x, y), v(x + 1, y)}
    return out


def _round_to_patches(region, xi, n, order):
    pos = {q: i for i, q in enumerate(order)}
    out = set()
    for q in region:
        blk = pos[q] // (2 * xi)
        out |= {order[(blk * 2 * xi + s) % n] for s in range(2 * xi)}
    return out


def _string_order(n: int, i: int, j: int) -> PauliString:
    """Z_i X_{i+1} X_{i+3} ... X_{j-1} Z_j (j - i even)."""
    p = PauliString.identity(n)
    p.z[i] ^= 1
    p.z[j] ^= 1
    for s in range(i + 1, j, 2):
        p.x[s] ^= 1
    return p


def run_phase_scan(config: PhaseScanConfig) -> list[ExperimentRecord]:
    """Scan the strategy over the xi grid; deterministic under the seed."""
    regions = config.regions or default_regions(config.phase, config.n)
    records = []
    for gi, xi in enumerate(config.xi_grid):
        rng = np.random.default_rng(np.random.SeedSequence(entropy=config.seed, spawn_key=(gi,)))
        records.extend(_run_grid_point(config, xi, regions, rng))
    return records


def _prepare(config: PhaseScanConfig):
    if config.phase == "toric":
        L = default_regions("toric", config.n)["L"]
        return prepare_fixed_point("toric", Lx=L, Ly=L), toric_snake_order(L, L)
    return prepare_fixed_point(config.phase, n=config.n), None


def _run_grid_point(config, xi, regions, rng) -> list[ExperimentRecord]:
    phase, n, strat = config.phase, config.n, config.strategy
    base, order = _prepare(config)
    symmetry = PHASE_SYMMETRY[phase]
    out = []
    draws = config.draws if xi > 0 else 1
    boundary = "open" if phase == "cluster" else "periodic"
    stagger = phase != "toric"

    for d in range(draws):
        state = base if xi == 0 else scramble(
            base, xi, symmetry, rng, order=order, boundary=boundary, stagger=stagger
        )
        if strat == "order_parameter":
            i, j = regions.get("op_sites", (0, n // 2))
            p = PauliString.identity(n)
            p.z[i] ^= 1
            p.z[j] ^= 1
            value = float(pauli_expectation(state, p))
            cost = 1.0 / config.target_stderr**2
        elif strat == "string_order":
            i, j = regions.get("string", (2, n - 3))
            value = float(pauli_expectation(state, _string_order(n, i, j)))
            cost = 1.0 / config.target_stderr**2
        elif strat in ("mi", "cmi", "tee"):
            value, cost = _entropy_strategy(state, strat, regions, xi, n, order, config)
        else:
            raise ValueError(f"unknown strategy {strat!r}")
        out.append(ExperimentRecord(
            experiment=f"{phase}-{strat}", phase=phase, strategy=strat, n=n, xi=xi,
            regions=_region_tag(regions, config.inflate, xi), value=value,
            sample_cost=cost, draws=draws, seed=config.seed,
        ))
    return out


def _entropy_strategy(state, strat, regions, xi, n, order, config):
    inflate = config.inflate
    if state.n != n:
        raise ValueError("state size mismatch")
    if strat == "tee":
        L = regions["L"]
        A = _cell_edges(regions["A_cells"], L)
        B = _cell_edges(regions["B_cells"], L) - A
        C = _cell_edges(regions["C_cells"], L) - A - B
        if inflate and xi > 0:
            snake = order
            A = _round_to_patches(inflate_chain_region(A, 2 * xi, n, snake), xi, n, snake)
            B = _round_to_patches(inflate_chain_region(B, 2 * xi, n, snake), xi, n, snake) - A
            C = _round_to_patches(inflate_chain_region(C, 2 * xi, n, snake), xi, n, snake) - A - B
        value = float(tee_kitaev_preskill(state, A, B, C))
        probe = entropy(state, A | B)
    elif strat == "mi":
        A, B = set(regions["A"]), set(regions["B"])
        if inflate and xi > 0:
            A = inflate_chain_region(A, 2 * xi, n)
            B = inflate_chain_region(B, 2 * xi, n) - A
        value = float(mutual_information(state, A, B))
        probe = entropy(state, A | B)
    else:  # cmi
        A, B, C = set(regions["A"]), set(regions["B"]), set(regions["C"])
        if inflate and xi > 0:
            clip = lambda R: {min(max(q, 0), n - 1) for r in R for q in range(r - 2 * xi, r + 2 * xi + 1)}
            A, B = clip(A), clip(B)
            C = clip(C) - A - B
        value = float(conditional_mutual_information(state, A, B, C))
        probe = entropy(state, A | B | C)
    cost = float(entropy_sample_cost(probe, config.target_stderr))
    return value, cost


def _region_tag(regions, inflate, xi) -> str:
    mode = "inflated" if inflate else "fixed"
    return f"{mode}:2xi={2*xi}"


def recognition_summary(records) -> list[dict]:
    """Aggregate mean/stderr of the measured value per (phase, strategy, xi)."""
    if not records:
        raise ValueError("no records to summarize")
    keys = {}
    for r in records:
        keys.setdefault((r.phase, r.strategy, r.n, r.xi), []).append(r)
    out = []
    for (phase, strategy, n, xi), rs in sorted(keys.items()):
        vals = np.array([r.value for r in rs], dtype=float)
        stderr = float(vals.std(ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else 0.0
        out.append({
            "phase": phase, "strategy": strategy, "n": n, "xi": xi,
            "mean_value": float(vals.mean()), "stderr": stderr,
            "mean_cost": float(np.mean([r.sample_cost for r in rs])),
            "draws": len(vals),
        })
    return out
