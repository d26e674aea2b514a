"""Dense complex linear algebra substrate.

Operators are plain complex ndarrays; this module adds the handful of
operations the rest of the lab leans on: Haar sampling, partial traces over
named subsystem layouts, the three norms, and PSD-order checks.  Everything
is float64-per-component with a global default tolerance of 1e-9.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

__all__ = [
    "DEFAULT_TOL",
    "SubsystemLayout",
    "haar_unitary",
    "partial_trace",
    "norms",
    "psd_order_check",
    "kron_all",
    "epr_state",
    "random_hermitian",
    "random_density",
]

DEFAULT_TOL = 1e-9


@dataclass(frozen=True)
class SubsystemLayout:
    """Site dimensions plus named regions (index sets into the site list)."""

    site_dims: tuple[int, ...]
    regions: dict[str, tuple[int, ...]] = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return int(np.prod(self.site_dims))

    def region(self, name: str) -> tuple[int, ...]:
        return self.regions[name]

    def validate(self) -> None:
        n = len(self.site_dims)
        for name, sites in self.regions.items():
            if len(set(sites)) != len(sites):
                raise ValueError(f"region {name!r} has duplicate sites")
            if any(s < 0 or s >= n for s in sites):
                raise ValueError(f"region {name!r} has out-of-range sites")


def haar_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random unitary via QR of a complex Gaussian with phase-fixed R diagonal."""
    if dim < 1:
        raise ValueError("dim must be >= 1")
    z = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    q, r = np.linalg.qr(z)
    d = np.diagonal(r)
    return q * (d / np.abs(d))


def kron_all(ops) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    for op in ops:
        out = np.kron(out, op)
    return out


def partial_trace(op: np.ndarray, site_dims, keep) -> np.ndarray:
    """Trace out every site not in ``keep`` (keep is an iterable of site indices)."""
    site_dims = tuple(int(d) for d in site_dims)
    n = len(site_dims)
    keep = tuple(sorted(int(s) for s in keep))
    if any(s < 0 or s >= n for s in keep):
        raise ValueError(f"keep indices {keep} out of range for {n} sites")
    dim = int(np.prod(site_dims))
    if op.shape != (dim, dim):
        raise ValueError(f"operator shape {op.shape} does not match layout dim {dim}")
    tensor = op.reshape(site_dims + site_dims)
    traced = [s for s in range(n) if s not in keep]
    for offset, s in enumerate(traced):
        ax = s - offset  # earlier traces shrink the index list
        tensor = np.trace(tensor, axis1=ax, axis2=ax + (n - offset))
    kept_dim = int(np.prod([site_dims[s] for s in keep])) if keep else 1
    return tensor.reshape(kept_dim, kept_dim)


def norms(op: np.ndarray) -> dict[str, float]:
    """Trace, spectral, and Frobenius norms from a single SVD."""
    sv = np.linalg.svd(op, compute_uv=False)
    return {
        "trace_norm": float(np.sum(sv)),
        "spectral_norm": float(sv[0]) if len(sv) else 0.0,
        "frobenius": float(np.sqrt(np.sum(sv**2))),
    }


def psd_order_check(A: np.ndarray, B: np.ndarray, tol: float = DEFAULT_TOL) -> bool:
    """True iff A <= B in the PSD order, i.e. min eig(B - A) >= -tol."""
    for name, M in (("A", A), ("B", B)):
        if scipy.linalg.norm(M - M.conj().T) > np.sqrt(tol):
            raise ValueError(f"{name} is not Hermitian")
    diff = B - A
    diff = (diff + diff.conj().T) / 2
    return bool(np.linalg.eigvalsh(diff)[0] >= -tol)


def epr_state(dim: int) -> np.ndarray:
    """Normalized maximally entangled vector on C^dim (x) C^dim."""
    v = np.eye(dim, dtype=complex).reshape(dim * dim)
    return v / np.sqrt(dim)


def random_hermitian(dim: int, rng: np.random.Generator) -> np.ndarray:
    z = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    return (z + z.conj().T) / 2


def random_density(dim: int, rng: np.random.Generator) -> np.ndarray:
    z = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    rho = z @ z.conj().T
    return rho / np.trace(rho).real
