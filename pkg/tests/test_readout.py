import numpy as np
import pytest

from tensorpole.dynamics import ReadoutError, ReadoutModel, three_readout_solve


def test_round_trip_example():
    model = ReadoutModel(2.0, 3.0, 1.0)
    truth = np.array([0.2, 0.5, 0.3])
    np.testing.assert_allclose(three_readout_solve(*model.forward(truth), model), truth, atol=1e-12)


def test_reference_matrix_rows():
    np.testing.assert_array_equal(ReadoutModel(2.0, 3.0, 1.0).matrix(),
                                  [[2, 3, 1], [2, 1, 3], [3, 2, 1]])


def test_equal_references_are_singular():
    model = ReadoutModel(1.0, 1.0, 1.0)
    with pytest.raises(ReadoutError, match="condition"):
        three_readout_solve(1.0, 1.0, 1.0, model)


def test_vectorized_solve():
    model = ReadoutModel(0.7, 1.0, 0.75)
    pops = np.random.default_rng(2).dirichlet([1, 1, 1], size=50)
    s = model.forward(pops)
    np.testing.assert_allclose(three_readout_solve(s[:, 0], s[:, 1], s[:, 2], model), pops, atol=1e-12)


def test_noise_is_seeded():
    model = ReadoutModel(2.0, 3.0, 1.0, sigma=0.1, seed=4)
    a = model.forward([0.2, 0.5, 0.3])
    b = model.forward([0.2, 0.5, 0.3])
    np.testing.assert_array_equal(a, b)
    assert not np.allclose(a, ReadoutModel(2.0, 3.0, 1.0).forward([0.2, 0.5, 0.3]))
