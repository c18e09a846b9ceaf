"""Read image dimensions from PNG / JPEG headers without decoding pixels."""

from __future__ import annotations

import os
import struct
from typing import BinaryIO

from .errors import TruncatedFileError, UnsupportedFormatError
from .taxonomy import ImageDims

PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"
JPEG_SOI = b"\xff\xd8"

# SOFn markers carrying frame dimensions. C4 (DHT), C8 (JPG) and CC (DAC)
# share the range but are not frame headers.
SOF_MARKERS = frozenset(range(0xC0, 0xD0)) - {0xC4, 0xC8, 0xCC}
# Markers that stand alone with no length field.
STANDALONE_MARKERS = frozenset(range(0xD0, 0xD8)) | {0x01, 0xD8}


def _read_exact(fh: BinaryIO, n: int, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise TruncatedFileError(f"truncated while reading {what}")
    return data


def _png_dims(fh: BinaryIO) -> ImageDims:
    # signature(8) | length(4) | b"IHDR"(4) | width(4) | height(4) ...
    head = _read_exact(fh, 16, "PNG IHDR header")
    if head[12:16] != b"IHDR":
        raise UnsupportedFormatError("PNG without leading IHDR chunk")
    width, height = struct.unpack(">II", _read_exact(fh, 8, "PNG IHDR dimensions"))
    return ImageDims(width, height)


def _jpeg_dims(fh: BinaryIO) -> ImageDims:
    _read_exact(fh, 2, "JPEG SOI")
    while True:
        byte = _read_exact(fh, 1, "JPEG marker")
        if byte != b"\xff":
            raise UnsupportedFormatError(f"expected JPEG marker, got 0x{byte[0]:02x}")
        marker = _read_exact(fh, 1, "JPEG marker")[0]
        while marker == 0xFF:  # fill bytes
            marker = _read_exact(fh, 1, "JPEG marker")[0]
        if marker in STANDALONE_MARKERS:
            continue
        if marker == 0xD9:
            raise UnsupportedFormatError("JPEG ended before any SOF segment")
        (length,) = struct.unpack(">H", _read_exact(fh, 2, "JPEG segment length"))
        if length < 2:
            raise UnsupportedFormatError(f"bad JPEG segment length {length}")
        if marker in SOF_MARKERS:
            # precision(1) | height(2) | width(2)
            seg = _read_exact(fh, 5, "JPEG SOF segment")
            height, width = struct.unpack(">HH", seg[1:5])
            if width == 0 or height == 0:
                raise UnsupportedFormatError("JPEG SOF with zero dimension (DNL not supported)")
            return ImageDims(width, height)
        _read_exact(fh, length - 2, "JPEG segment body")


def probe_dims(path: str | os.PathLike[str]) -> ImageDims:
    """Return the pixel dimensions stored in a PNG or JPEG file header.

    Raises:
        UnsupportedFormatError: the file is neither PNG nor JPEG.
        TruncatedFileError: the header ends before the dimensions.
    """
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic[:4] == PNG_SIGNATURE[:4]:
            if magic != PNG_SIGNATURE:
                raise TruncatedFileError("truncated or corrupt PNG signature")
            fh.seek(0)
            return _png_dims(fh)
        if magic[:2] == JPEG_SOI:
            fh.seek(0)
            return _jpeg_dims(fh)
    raise UnsupportedFormatError(f"{os.fspath(path)}: not a PNG or JPEG file")
