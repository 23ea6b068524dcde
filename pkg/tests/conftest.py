import numpy as np
import pytest

from dlm_opt.core import LossSpec, ProblemSpec, RegularizerSpec


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def subspace_spec():
    def build(alpha=0.5, k=2, averaged=False, s=1.0):
        l2 = RegularizerSpec.squared_l2()
        return ProblemSpec(LossSpec(), l2, l2, alpha=alpha, k=k, s=s, averaged=averaged)

    return build


@pytest.fixture
def shrinkage_data():
    """X whose subspace optimum at alpha = 0.5 is diag(1.5, 0.5) with objective 1.25."""
    return np.array([[2.0, 0.0], [0.0, 1.0]])
