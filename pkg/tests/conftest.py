import numpy as np
import pytest

from fedchain.network import LayerShape, ModelParams


def random_model(rng, num_inputs, num_outputs, width_const=1):
    shape = LayerShape.from_dims(num_inputs, num_outputs, width_const)
    n, m, k = shape.num_hidden, shape.num_inputs, shape.num_outputs
    return ModelParams(
        shape,
        rng.normal(scale=0.7, size=(n, m)),
        rng.normal(scale=0.3, size=n),
        rng.normal(scale=0.7, size=(k, n)),
        rng.normal(scale=0.3, size=k),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
