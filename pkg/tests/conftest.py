import numpy as np
import pytest

from egbench import FeatureVector, FixtureSpec, init_model, make_synthetic, train_fixture
from egbench.models import Layer, ModelHandle


@pytest.fixture
def logistic_model():
    """2-class model with logits [0, 2*x0 - x1]: class-1 probability is
    sigmoid(2*x0 - x1)."""
    return ModelHandle((Layer(np.array([[0.0, 0.0], [2.0, -1.0]]), np.zeros(2), "identity"),))


@pytest.fixture
def margin_model():
    """2-feature model with logits [0, 4*x0 - 1.2]; feature 1 is dead
    weight and the label flips at x0 = 0.3."""
    return ModelHandle((Layer(np.array([[0.0, 0.0], [4.0, 0.0]]), np.array([0.0, -1.2]),
                              "identity"),))


@pytest.fixture
def center_sample():
    return FeatureVector([0.5, 0.5])


@pytest.fixture
def constant_model():
    return ModelHandle((Layer(np.zeros((3, 4)), np.zeros(3), "identity"),))


def small_net(d, num_classes, seed, hidden=(8, 8)) -> ModelHandle:
    return init_model(FixtureSpec(d, num_classes, hidden), seed)


@pytest.fixture(scope="session")
def blob_task():
    """Small trained classification task shared across attack/boost tests."""
    ds = make_synthetic(seed=3, d=6, n_per_class=30, classes=3, separation=6.0)
    model = train_fixture(FixtureSpec(6, 3, (8, 8)), ds, epochs=200, lr=0.3, seed=2)
    return model, ds
