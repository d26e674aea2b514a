import numpy as np
import pytest
import scipy.linalg

from symlab.groups import build_group, regular_representation, sector_decomposition
from symlab.tensor_core import haar_unitary


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def sector_haar_sampler(dec):
    """Closure drawing one symmetric Haar unitary from a decomposition."""
    def sample(rng):
        blocks = [
            np.kron(haar_unitary(s.multiplicity, rng), np.eye(s.irrep_dim))
            for s in dec.sectors
        ]
        return dec.basis_change @ scipy.linalg.block_diag(*blocks) @ dec.basis_change.conj().T
    return sample


def z2_rep():
    return regular_representation(build_group("Z2"))
