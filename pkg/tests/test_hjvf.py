import struct

import numpy as np
import pytest

from reach.gridfield import sdf_ball
from utils.hjvf import (
    MAGIC,
    HjvfFormatError,
    decode_field,
    encode_field,
    read_sequence,
    write_sequence,
)


def test_header_layout(grid3d):
    field = sdf_ball(grid3d, [0.0, 0.0], 0.5, dims=(0, 1))
    blob = encode_field(field, -2.5)
    assert blob[:4] == MAGIC
    assert struct.unpack_from("<II", blob, 4) == (1, 3)
    assert struct.unpack_from("<3I", blob, 12) == (21, 21, 12)
    assert len(blob) == 12 + 21 * 3 + 8 + 8 * grid3d.size


def test_decode_restores_grid_and_values(grid3d):
    field = sdf_ball(grid3d, [0.2, -0.1], 0.5, dims=(0, 1))
    decoded, t = decode_field(encode_field(field, 3.25))
    assert t == 3.25
    assert decoded.grid == grid3d
    np.testing.assert_array_equal(decoded.values, field.values)


@pytest.mark.parametrize("mutate", [
    lambda b: b"XXXX" + b[4:],
    lambda b: b[:4] + struct.pack("<I", 7) + b[8:],
    lambda b: b[:-8],
    lambda b: b[:10],
])
def test_corrupt_blobs_raise(grid2d, mutate):
    blob = encode_field(sdf_ball(grid2d, [0.0, 0.0], 0.3), 0.0)
    with pytest.raises(HjvfFormatError):
        decode_field(mutate(blob))


def test_sequence_manifest(tmp_path, grid2d):
    fields = [sdf_ball(grid2d, [0.0, 0.0], r) for r in (0.2, 0.4)]
    entries = write_sequence(tmp_path, "V", [0.0, 1.0], fields)
    assert [e["file"] for e in entries] == ["V_0000.hjvf", "V_0001.hjvf"]
    times, loaded = read_sequence(tmp_path, entries)
    np.testing.assert_allclose(times, [0.0, 1.0])
    np.testing.assert_array_equal(loaded[1].values, fields[1].values)
