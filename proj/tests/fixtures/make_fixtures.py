"""Writes the NIfTI-1 fixtures used by the reader tests.

Built directly with `struct` so the files do not depend on the C++ writer.
"""
import struct
from pathlib import Path

HERE = Path(__file__).parent


def header(dims, datatype, bitpix, pixdim, slope, inter, srow):
    h = bytearray(348)
    struct.pack_into("<i", h, 0, 348)
    struct.pack_into("<8h", h, 40, 3, *dims, 1, 1, 1, 1)
    struct.pack_into("<h", h, 70, datatype)
    struct.pack_into("<h", h, 72, bitpix)
    struct.pack_into("<8f", h, 76, 1.0, *pixdim, 1.0, 1.0, 1.0, 1.0)
    struct.pack_into("<f", h, 108, 352.0)
    struct.pack_into("<f", h, 112, slope)
    struct.pack_into("<f", h, 116, inter)
    struct.pack_into("<h", h, 254, 1)  # sform_code
    for r in range(3):
        struct.pack_into("<4f", h, 280 + 16 * r, *srow[r])
    h[344:348] = b"n+1\0"
    return bytes(h) + b"\0\0\0\0"


def scaled_int16():
    dims = (4, 3, 2)
    n = dims[0] * dims[1] * dims[2]
    raw = [i - 5 for i in range(n)]
    srow = [(1.5, 0, 0, -10.0), (0, 2.0, 0, 20.0), (0, 0, 2.5, 30.0)]
    data = struct.pack("<%dh" % n, *raw)
    (HERE / "scaled_int16.nii").write_bytes(
        header(dims, 4, 16, (1.5, 2.0, 2.5), 2.0, 1.0, srow) + data)


def swapped_axes_uint16():
    # Voxel axis i runs along world y, j along -x, k along z.
    dims = (3, 2, 2)
    n = dims[0] * dims[1] * dims[2]
    raw = [100 * i for i in range(n)]
    srow = [(0, -1.0, 0, 5.0), (1.0, 0, 0, -3.0), (0, 0, 1.0, 7.0)]
    data = struct.pack("<%dH" % n, *raw)
    (HERE / "swapped_uint16.nii").write_bytes(
        header(dims, 512, 16, (1.0, 1.0, 1.0), 0.0, 0.0, srow) + data)


if __name__ == "__main__":
    scaled_int16()
    swapped_axes_uint16()
