import math
import struct

import numpy as np
import pytest

from maec.errors import FieldFormatError, ValidationError
from maec.fields import (
    FORMAT_VERSION, MAGIC, check_field, check_same_dims, export_pgm,
    read_field, snr_db, write_csv, write_field,
)


@pytest.mark.parametrize('shape', [(32, 32), (3,), (1,), (2, 3, 4)])
def test_field_file_keeps_dims_and_data(tmp_path, rng, shape):
    field = rng.standard_normal(shape) * 1e3
    path = tmp_path / 'f.maec'
    write_field(field, path)
    back = read_field(path)
    assert back.dtype == np.float64
    assert back.shape == shape
    assert np.array_equal(back, field)


def test_field_file_layout(tmp_path):
    path = tmp_path / 'f.maec'
    write_field(np.array([1.0, 2.0, 3.0]), path)
    raw = path.read_bytes()
    assert raw[:4] == MAGIC
    assert struct.unpack('<III', raw[4:16]) == (FORMAT_VERSION, 1, 3)
    assert struct.unpack('<3d', raw[16:]) == (1.0, 2.0, 3.0)


def _header(ndim, dims, magic=MAGIC, version=FORMAT_VERSION):
    return struct.pack('<4sII', magic, version, ndim) + b''.join(struct.pack('<I', n) for n in dims)


@pytest.mark.parametrize('raw', [
    b'MAE',
    _header(1, [2], magic=b'XXXX') + bytes(16),
    _header(1, [2], version=2) + bytes(16),
    _header(4, [1, 1, 1, 1]) + bytes(8),
    _header(0, []),
    _header(2, [2, 0]),
    _header(2, [2]),
    _header(2, [2, 2]) + bytes(24),
    _header(1, [2]) + bytes(24),
])
def test_malformed_field_files(tmp_path, raw):
    path = tmp_path / 'bad.maec'
    path.write_bytes(raw)
    with pytest.raises(FieldFormatError) as excinfo:
        read_field(path)
    assert str(path) in str(excinfo.value)


def test_unwritable_path(tmp_path):
    with pytest.raises(OSError):
        write_field(np.zeros(2), tmp_path / 'missing' / 'f.maec')


@pytest.mark.parametrize('shape', [(2, 2, 2, 2), (0,), (3, 0)])
def test_write_rejects_unreadable_dims(tmp_path, shape):
    path = tmp_path / 'f.maec'
    with pytest.raises(ValidationError):
        write_field(np.zeros(shape), path)
    assert not path.exists()


def _read_pgm(path):
    raw = path.read_bytes()
    magic, size, maxval, payload = raw.split(b'\n', 3)
    width, height = map(int, size.split())
    assert magic == b'P5' and maxval == b'65535'
    return np.frombuffer(payload, dtype='>u2').reshape(height, width)


def test_pgm_export(tmp_path):
    path = tmp_path / 'img.pgm'
    export_pgm(np.array([[0.0, 0.5], [1.0, 2.0]]), path, 0.0, 1.0)
    assert _read_pgm(path).tolist() == [[0, 32768], [65535, 65535]]


def test_pgm_constant_fields(tmp_path):
    path = tmp_path / 'img.pgm'
    export_pgm(np.full((3, 5), -1.0), path, 0.0, 1.0)
    pixels = _read_pgm(path)
    assert pixels.shape == (3, 5)
    assert not pixels.any()
    export_pgm(np.full((3, 5), 7.0), path, 0.0, 1.0)
    assert (_read_pgm(path) == 65535).all()


def test_pgm_rejects_bad_arguments(tmp_path):
    with pytest.raises(ValidationError):
        export_pgm(np.zeros(4), tmp_path / 'a.pgm', 0.0, 1.0)
    with pytest.raises(ValidationError):
        export_pgm(np.zeros((2, 2)), tmp_path / 'a.pgm', 1.0, 1.0)
    with pytest.raises(ValidationError):
        export_pgm(np.array([[0.0, np.nan], [1.0, 2.0]]), tmp_path / 'a.pgm', 0.0, 1.0)
    assert not (tmp_path / 'a.pgm').exists()


def test_snr_examples():
    assert snr_db([1.0, 2.0], [1.0, 2.0]) == math.inf
    assert snr_db([0.0, 0.0, 0.0, 0.0], [1.0, 0.0, 0.0, 0.0]) == pytest.approx(0.0)
    assert snr_db([11.0, 9.0], [10.0, 10.0]) == pytest.approx(20.0)


@pytest.mark.parametrize('t', [1e-3, 2.0, 1e6])
def test_snr_is_scale_invariant(rng, t):
    ref = rng.standard_normal(50)
    est = ref + 0.1 * rng.standard_normal(50)
    assert snr_db(t * est, t * ref) == pytest.approx(snr_db(est, ref), abs=1e-9)


def test_snr_is_permutation_invariant(rng):
    ref = rng.standard_normal(40)
    est = ref + rng.standard_normal(40)
    perm = rng.permutation(40)
    assert snr_db(est[perm], ref[perm]) == pytest.approx(snr_db(est, ref), abs=1e-12)


def test_snr_errors():
    with pytest.raises(ValidationError):
        snr_db([1.0], [0.0])
    with pytest.raises(ValidationError):
        snr_db([1.0, 2.0], [1.0])


def test_check_field():
    assert check_field([1, 2]).dtype == np.float64
    with pytest.raises(ValidationError):
        check_field([-1.0], nonneg=True)
    with pytest.raises(ValidationError):
        check_field([0.5], integral=True)
    with pytest.raises(ValidationError):
        check_field([np.nan])
    with pytest.raises(ValidationError):
        check_field(np.zeros((1, 1, 1, 1)))
    with pytest.raises(ValidationError):
        check_field(3.0)
    with pytest.raises(ValidationError):
        check_same_dims(np.zeros(2), np.zeros(3))


def test_csv_writes_floats_exactly(tmp_path):
    path = tmp_path / 'rows.csv'
    write_csv([('a', 0.1, 3), ('b', np.float64(1e-20), 4)], ('name', 'value', 'count'), path)
    assert path.read_bytes() == b'name,value,count\na,0.1,3\nb,1e-20,4\n'
