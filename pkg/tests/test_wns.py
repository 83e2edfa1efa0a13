import numpy as np
import pytest

from sdsmlab import NoiseGrid, read_path, sample_path, write_path
from sdsmlab.errors import ChecksumMismatch, FormatVersionMismatch


@pytest.fixture
def stored_path(tmp_path):
    grid = NoiseGrid(t1=0.4, dt=0.1, half_width=1.5, dy=0.25)
    path = sample_path(grid, 123)
    target = tmp_path / "sample.wns"
    write_path(path, target)
    return path, target


def test_round_trip_is_bit_exact(stored_path):
    path, target = stored_path
    loaded = read_path(target)
    np.testing.assert_array_equal(loaded.increments, path.increments)
    assert loaded.seed == 123
    assert loaded.grid == path.grid


def test_expected_file_size(stored_path):
    path, target = stored_path
    assert target.stat().st_size == 32 + path.increments.size * 8 + 16


def test_anonymous_paths_round_trip_with_no_seed(tmp_path):
    from sdsmlab import NoisePath
    grid = NoiseGrid(t1=0.2, dt=0.1, half_width=1.0, dy=0.5)
    path = NoisePath(grid=grid, increments=np.zeros((2, 4)), seed=None)
    target = tmp_path / "anon.wns"
    write_path(path, target)
    assert read_path(target).seed is None


def test_truncated_file_is_rejected(stored_path):
    _, target = stored_path
    raw = target.read_bytes()
    target.write_bytes(raw[:-20])
    with pytest.raises(ChecksumMismatch):
        read_path(target)


def test_tiny_file_is_rejected(tmp_path):
    target = tmp_path / "stub.wns"
    target.write_bytes(b"WNS1")
    with pytest.raises(ChecksumMismatch):
        read_path(target)


def test_bad_magic_is_a_format_error(stored_path):
    _, target = stored_path
    raw = bytearray(target.read_bytes())
    raw[:4] = b"XXXX"
    target.write_bytes(bytes(raw))
    with pytest.raises(FormatVersionMismatch):
        read_path(target)


def test_future_version_is_a_format_error(stored_path):
    _, target = stored_path
    raw = bytearray(target.read_bytes())
    raw[4:6] = (2).to_bytes(2, "little")
    target.write_bytes(bytes(raw))
    with pytest.raises(FormatVersionMismatch):
        read_path(target)


def test_payload_corruption_trips_the_checksum(stored_path):
    _, target = stored_path
    raw = bytearray(target.read_bytes())
    raw[40] ^= 0xFF
    target.write_bytes(bytes(raw))
    with pytest.raises(ChecksumMismatch):
        read_path(target)
