"""
Flat parameter vectors, the unit of exchange, aggregation and serialization of every model in a federation.
"""
import struct
from pathlib import Path
from typing import Iterable, Sequence, Tuple, Union

import numpy as np

_DIM = struct.Struct('<Q')
_FLOAT = np.dtype('<f8')

Buffer = Union[bytes, bytearray, memoryview]


class ParameterError(ValueError):
    """
    Raised on invalid parameter vectors: dim mismatches, empty or zero-weight aggregations, non-finite values in checked
    mode and malformed encodings.
    """


class ParameterVector:
    """
    Immutable vector of 64-bit floats. The backing array is read-only, so instances can be shared freely between
    threads; arithmetic always builds new vectors.
    """
    __slots__ = ('_values',)

    def __init__(self, values: Union[Sequence[float], np.ndarray], checked: bool = False):
        array = np.array(values, dtype=np.float64).reshape(-1)
        if checked:
            check_finite(array)
        array.setflags(write=False)
        self._values = array

    @classmethod
    def zeros(cls, dim: int) -> 'ParameterVector':
        return cls(np.zeros(dim, dtype=np.float64))

    @property
    def values(self) -> np.ndarray:
        return self._values

    @property
    def dim(self) -> int:
        return int(self._values.shape[0])

    def to_numpy(self) -> np.ndarray:
        """
        Writable copy of the values.
        """
        return np.array(self._values)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self._values)))

    def __len__(self) -> int:
        return self.dim

    def __eq__(self, other) -> bool:
        # Bit-level equality: distinguishes signed zeros and compares NaN payloads.
        if not isinstance(other, ParameterVector):
            return NotImplemented
        return self.dim == other.dim and self._values.tobytes() == other._values.tobytes()

    def __hash__(self) -> int:
        return hash(self._values.tobytes())

    def __repr__(self) -> str:
        if self.dim <= 6:
            return f'ParameterVector({self._values.tolist()})'
        return f'ParameterVector(dim={self.dim}, head={self._values[:3].tolist()})'


def check_finite(values: np.ndarray) -> None:
    if not np.all(np.isfinite(values)):
        raise ParameterError('parameter vector contains non-finite values')


def _check_dims(*vectors: ParameterVector) -> int:
    dim = vectors[0].dim
    for vector in vectors[1:]:
        if vector.dim != dim:
            raise ParameterError(f'dim mismatch: {dim} != {vector.dim}')
    return dim


def weighted_mean(entries: Iterable[Tuple[ParameterVector, float]], checked: bool = True) -> ParameterVector:
    """
    Weighted mean of parameter vectors. Products are accumulated in input order and divided once by the total weight,
    so identical inputs always give bit-identical output. The result is clipped to the per-coordinate envelope of the
    positively weighted inputs, which only removes rounding excursions.
    @param entries: Pairs of vector and nonnegative weight.
    @type entries: Iterable[Tuple[ParameterVector, float]]
    @param checked: Reject non-finite inputs.
    @type checked: bool
    @return: The weighted mean.
    @rtype: ParameterVector
    """
    entries = list(entries)
    if not entries:
        raise ParameterError('weighted_mean of an empty list')
    dim = _check_dims(*(vector for vector, _ in entries))
    accumulator = np.zeros(dim, dtype=np.float64)
    total = 0.0
    lower = upper = None
    for vector, weight in entries:
        weight = float(weight)
        if checked:
            check_finite(vector.values)
            if not np.isfinite(weight):
                raise ParameterError(f'non-finite weight {weight}')
        if weight < 0:
            raise ParameterError(f'negative weight {weight}')
        if weight == 0:
            continue
        accumulator += weight * vector.values
        total += weight
        lower = vector.values if lower is None else np.minimum(lower, vector.values)
        upper = vector.values if upper is None else np.maximum(upper, vector.values)
    if total == 0:
        raise ParameterError('all weights are zero')
    return ParameterVector(np.clip(accumulator / total, lower, upper))


def l2_distance_squared(a: ParameterVector, b: ParameterVector) -> float:
    _check_dims(a, b)
    difference = a.values - b.values
    return float(np.dot(difference, difference))


def axpy(alpha: float, x: ParameterVector, y: ParameterVector) -> ParameterVector:
    """
    alpha * x + y, element-wise.
    """
    _check_dims(x, y)
    return ParameterVector(alpha * x.values + y.values)


def encode_params(vector: ParameterVector, checked: bool = True) -> bytes:
    """
    Encode a vector as its dim (unsigned 64-bit little-endian) followed by dim little-endian IEEE-754 doubles.
    @param vector: Vector to encode.
    @type vector: ParameterVector
    @param checked: Reject non-finite values.
    @type checked: bool
    @return: Encoded bytes, 8 + 8 * dim long.
    @rtype: bytes
    """
    if checked:
        check_finite(vector.values)
    return _DIM.pack(vector.dim) + vector.values.astype(_FLOAT, copy=False).tobytes()


def decode_params_from(buffer: Buffer, offset: int = 0, checked: bool = True) -> Tuple[ParameterVector, int]:
    """
    Decode one vector embedded in a larger buffer.
    @return: The vector and the offset just past its encoding.
    @rtype: Tuple[ParameterVector, int]
    """
    view = memoryview(buffer)
    remaining = len(view) - offset
    if remaining < _DIM.size:
        raise ParameterError(f'truncated parameter encoding: {remaining} bytes, need at least {_DIM.size}')
    (dim,) = _DIM.unpack_from(view, offset)
    offset += _DIM.size
    # Checked before allocating, so a corrupt dim never triggers a large allocation.
    if dim > (len(view) - offset) // _FLOAT.itemsize:
        raise ParameterError(f'declared dim {dim} exceeds the {len(view) - offset} remaining bytes')
    if dim == 0:
        return ParameterVector(np.zeros(0)), offset
    values = np.frombuffer(view, dtype=_FLOAT, count=dim, offset=offset).astype(np.float64)
    offset += dim * _FLOAT.itemsize
    return ParameterVector(values, checked=checked), offset


def decode_params(buffer: Buffer, checked: bool = True) -> ParameterVector:
    vector, offset = decode_params_from(buffer, 0, checked)
    if offset != len(buffer):
        raise ParameterError(f'declared dim {vector.dim} inconsistent with {len(buffer)} byte buffer')
    return vector


def save_checkpoint(path: Union[str, Path], vector: ParameterVector) -> Path:
    """
    Write a checkpoint file: exactly one encoded vector, no header.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_params(vector))
    return path


def load_checkpoint(path: Union[str, Path]) -> ParameterVector:
    return decode_params(Path(path).read_bytes())
