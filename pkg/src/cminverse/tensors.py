"""Dense image tensors with explicit (channels, height, width) shape."""

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class ImageTensor:
    """A finite, real-valued image stored as a flat float64 vector.

    ``shape`` is (channels, height, width); ``data`` holds the row-major
    flattening of that array.  Values are nominally in [0, 1] but this is
    informational only and never enforced.
    """

    shape: tuple[int, int, int]
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        c, h, w = self.shape
        if c <= 0 or h <= 0 or w <= 0:
            raise ValueError(f"shape entries must be positive, got {self.shape}")
        data = np.ascontiguousarray(self.data, dtype=np.float64).ravel()
        if data.size != c * h * w:
            raise ValueError(
                f"data has {data.size} entries, shape {self.shape} needs {c * h * w}"
            )
        if not np.all(np.isfinite(data)):
            raise ValueError("image data contains NaN or Inf")
        object.__setattr__(self, "data", data)

    @classmethod
    def from_array(cls, arr) -> "ImageTensor":
        """Wrap a (c, h, w) or (h, w) array; 2-D input becomes single-channel."""
        arr = np.asarray(arr, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[None, :, :]
        if arr.ndim != 3:
            raise ValueError(f"expected 2-D or 3-D array, got ndim={arr.ndim}")
        return cls(shape=tuple(arr.shape), data=arr.ravel())

    @property
    def n(self) -> int:
        c, h, w = self.shape
        return c * h * w

    def as_array(self) -> np.ndarray:
        """Return a (c, h, w) view of the data."""
        return self.data.reshape(self.shape)


def as_vector(x) -> np.ndarray:
    """Flatten an ImageTensor or array-like into a float64 vector."""
    if isinstance(x, ImageTensor):
        return x.data
    return np.asarray(x, dtype=np.float64).ravel()


def as_chw(x) -> np.ndarray:
    """Return a (c, h, w) float64 array from an ImageTensor or array-like."""
    if isinstance(x, ImageTensor):
        return x.as_array()
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[None, :, :]
    if arr.ndim != 3:
        raise ValueError(f"expected (c, h, w) or (h, w) image, got shape {arr.shape}")
    return arr
