import numpy as np
import pytest

from cminverse.tensors import ImageTensor, as_chw, as_vector


def test_from_array_2d_gets_channel_axis():
    img = ImageTensor.from_array(np.arange(6.0).reshape(2, 3))
    assert img.shape == (1, 2, 3)
    assert img.n == 6
    assert np.array_equal(img.as_array()[0], np.arange(6.0).reshape(2, 3))


def test_data_is_row_major_flat():
    arr = np.arange(24.0).reshape(2, 3, 4)
    img = ImageTensor.from_array(arr)
    assert np.array_equal(img.data, arr.ravel())


def test_rejects_size_mismatch_and_nonfinite():
    with pytest.raises(ValueError):
        ImageTensor(shape=(1, 2, 2), data=np.zeros(5))
    with pytest.raises(ValueError):
        ImageTensor(shape=(1, 1, 2), data=np.array([1.0, np.nan]))
    with pytest.raises(ValueError):
        ImageTensor(shape=(0, 2, 2), data=np.zeros(0))


def test_as_vector_and_as_chw_roundtrip():
    img = ImageTensor.from_array(np.ones((3, 4, 5)))
    assert as_vector(img).shape == (60,)
    assert as_chw(img).shape == (3, 4, 5)
    assert as_chw(np.zeros((4, 5))).shape == (1, 4, 5)
