"""Raster IO, quality metrics and validation shared by every module.

A scalar field is a float64 numpy array whose shape is its dims (row-major,
axis 0 first). A vector field is a float64 array of shape ``(d, *dims)``.
"""
import csv
import logging
import math
import struct
from pathlib import Path
from typing import Iterable, Sequence, Union

import numpy as np

from .errors import FieldFormatError, ValidationError

__all__ = (
    'MAGIC', 'FORMAT_VERSION', 'read_field', 'write_field', 'export_pgm',
    'snr_db', 'check_field', 'check_same_dims', 'write_csv',
)

log = logging.getLogger(__name__)

PathLike = Union[str, Path]

MAGIC = b'MAEC'
FORMAT_VERSION = 1
_HEADER = struct.Struct('<4sII')
_EXTENT = struct.Struct('<I')


def check_field(
        x, name: str = 'field', *,
        nonneg: bool = False, integral: bool = False,
        finite: bool = True) -> np.ndarray:
    """Convert x to a float64 field and validate it.

    Args:
        x (array_like): The values to check.
        name (str): The name used in error messages.
        nonneg (bool): Require every entry to be >= 0.
        integral (bool): Require every entry to be a whole number.
        finite (bool): Require every entry to be finite.

    Returns:
        numpy.ndarray: The field as a float64 array.

    Raises:
        ValidationError: A requirement is violated.

    """
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 0 or arr.ndim > 3 or arr.size == 0:
        raise ValidationError(f'{name} must have 1 to 3 non-empty dims, got shape {arr.shape}')
    if finite and not np.all(np.isfinite(arr)):
        raise ValidationError(f'{name} contains NaN or infinite entries')
    if nonneg and np.any(arr < 0):
        raise ValidationError(f'{name} must be nonnegative')
    if integral and np.any(arr != np.round(arr)):
        raise ValidationError(f'{name} must hold integral counts')
    return arr


def check_same_dims(*fields: np.ndarray, names: Sequence[str] = ()):
    """Raise ValidationError unless all fields share the same dims."""
    shapes = [np.shape(f) for f in fields]
    if any(s != shapes[0] for s in shapes[1:]):
        label = ', '.join(names) if names else 'fields'
        raise ValidationError(f'dims mismatch between {label}: {shapes}')


def write_field(field, path: PathLike):
    """Write a field in the MAEC binary format.

    The layout is the ASCII magic "MAEC", the format version, the number
    of dims and each extent as little-endian uint32, followed by the
    row-major values as little-endian binary64.

    Raises:
        ValidationError: The field does not have 1 to 3 non-empty dims.
        OSError: The file could not be written.

    """
    arr = np.asarray(field, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    arr = check_field(arr, 'field', finite=False)
    header = _HEADER.pack(MAGIC, FORMAT_VERSION, arr.ndim)
    header += b''.join(_EXTENT.pack(n) for n in arr.shape)
    with open(path, 'wb') as f:
        f.write(header)
        f.write(np.ascontiguousarray(arr, dtype='<f8').tobytes())
    log.debug('Wrote %s field to %s', 'x'.join(map(str, arr.shape)), path)


def read_field(path: PathLike) -> np.ndarray:
    """Read a field written by write_field().

    Returns:
        numpy.ndarray: The stored field with its exact dims and data.

    Raises:
        FieldFormatError: The magic, version or dims are malformed,
            or the payload length does not match the dims.
        OSError: The file could not be read.

    """
    with open(path, 'rb') as f:
        raw = f.read()

    if len(raw) < _HEADER.size:
        raise FieldFormatError(path, 'truncated header')
    magic, version, ndim = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FieldFormatError(path, f'bad magic {magic!r}')
    if version != FORMAT_VERSION:
        raise FieldFormatError(path, f'unsupported version {version}')
    if not 1 <= ndim <= 3:
        raise FieldFormatError(path, f'unsupported number of dims {ndim}')

    offset = _HEADER.size
    if len(raw) < offset + ndim * _EXTENT.size:
        raise FieldFormatError(path, 'truncated extents')
    dims = tuple(
        _EXTENT.unpack_from(raw, offset + k * _EXTENT.size)[0]
        for k in range(ndim)
    )
    if any(n == 0 for n in dims):
        raise FieldFormatError(path, f'zero extent in dims {dims}')
    offset += ndim * _EXTENT.size

    n = math.prod(dims)
    if len(raw) - offset != 8 * n:
        raise FieldFormatError(
            path, f'expected {8 * n} bytes of data for dims {dims}, got {len(raw) - offset}')

    data = np.frombuffer(raw, dtype='<f8', count=n, offset=offset)
    return data.astype(np.float64).reshape(dims)


def export_pgm(field, path: PathLike, lo: float, hi: float):
    """Export a 2D field as a 16-bit binary PGM image.

    Each value v is mapped to round(clamp((v - lo)/(hi - lo), 0, 1) * 65535)
    with halves rounded up. Rows of the image are indexed by axis 0.

    Raises:
        ValidationError: The field is not 2D, holds non-finite values,
            or lo >= hi.

    """
    arr = np.asarray(field, dtype=np.float64)
    if arr.ndim != 2:
        raise ValidationError(f'PGM export needs a 2D field, got {arr.ndim}D')
    if not np.all(np.isfinite(arr)):
        raise ValidationError('PGM export needs finite values')
    if not lo < hi:
        raise ValidationError(f'PGM range needs lo < hi, got [{lo}, {hi}]')

    scaled = np.clip((arr - lo) / (hi - lo), 0.0, 1.0) * 65535.0
    pixels = np.floor(scaled + 0.5).astype('>u2')
    height, width = arr.shape
    with open(path, 'wb') as f:
        f.write(f'P5\n{width} {height}\n65535\n'.encode('ascii'))
        f.write(pixels.tobytes())


def snr_db(estimate, reference) -> float:
    """Signal to noise ratio of an estimate in decibels.

    Defined as 10*log10(||reference||^2 / ||estimate - reference||^2).

    Returns:
        float: The SNR, or +inf if the estimate is exact.

    Raises:
        ValidationError: Dims differ or the reference is identically zero.

    """
    est = np.asarray(estimate, dtype=np.float64)
    ref = np.asarray(reference, dtype=np.float64)
    check_same_dims(est, ref, names=('estimate', 'reference'))

    signal = float(np.sum(ref * ref))
    if signal == 0:
        raise ValidationError('SNR is undefined for a zero reference')
    noise = float(np.sum((est - ref) ** 2))
    if noise == 0:
        return math.inf
    return 10.0 * math.log10(signal / noise)


def write_csv(rows: Iterable[Sequence], header: Sequence[str], path: PathLike):
    """Write rows as comma separated values with a header row and LF endings."""
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
