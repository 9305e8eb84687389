"""Image input/output.

Inputs are binary PPM (P6, 8-bit) or PNG; pixel values are normalized
to [0, 1] on load.  Masks are written as binary PGM (P5), 0 background
and 255 foreground; overlays as PPM.  All writes are atomic (temp file
plus rename).
"""

from __future__ import annotations

import os
import tempfile

import numpy as np

from .errors import ImageFormatError
from .tensor import DTYPE, freeze


def _atomic_write(path: str, blob: bytes) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".img-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _read_netpbm(path: str, magic: bytes, channels: int) -> np.ndarray:
    with open(path, "rb") as fh:
        blob = fh.read()
    if not blob.startswith(magic):
        raise ImageFormatError(f"{path!r} is not a {magic.decode()} file")

    # header: magic, width, height, maxval as whitespace/comment-separated tokens
    pos = 2
    tokens: list[int] = []
    while len(tokens) < 3:
        if pos >= len(blob):
            raise ImageFormatError(f"truncated header in {path!r}")
        ch = blob[pos: pos + 1]
        if ch == b"#":
            while pos < len(blob) and blob[pos: pos + 1] != b"\n":
                pos += 1
        elif ch.isspace():
            pos += 1
        elif ch.isdigit():
            start = pos
            while pos < len(blob) and blob[pos: pos + 1].isdigit():
                pos += 1
            tokens.append(int(blob[start:pos]))
        else:
            raise ImageFormatError(f"malformed header in {path!r}")
    pos += 1  # single whitespace byte after maxval
    width, height, maxval = tokens
    if maxval != 255:
        raise ImageFormatError(f"{path!r}: only 8-bit (maxval 255) images are supported")
    need = width * height * channels
    payload = blob[pos: pos + need]
    if len(payload) != need:
        raise ImageFormatError(f"truncated pixel data in {path!r}")
    arr = np.frombuffer(payload, dtype=np.uint8)
    if channels == 1:
        return arr.reshape(height, width)
    return arr.reshape(height, width, channels)


def read_ppm(path: str) -> np.ndarray:
    """(h, w, 3) uint8."""
    return _read_netpbm(path, b"P6", 3)


def read_pgm(path: str) -> np.ndarray:
    """(h, w) uint8."""
    return _read_netpbm(path, b"P5", 1)


def write_ppm(rgb: np.ndarray, path: str) -> None:
    rgb = np.ascontiguousarray(rgb, dtype=np.uint8)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ImageFormatError(f"PPM payload must be (h, w, 3), got {rgb.shape}")
    h, w = rgb.shape[:2]
    _atomic_write(path, b"P6\n%d %d\n255\n" % (w, h) + rgb.tobytes())


def write_pgm(gray: np.ndarray, path: str) -> None:
    gray = np.ascontiguousarray(gray, dtype=np.uint8)
    if gray.ndim != 2:
        raise ImageFormatError(f"PGM payload must be (h, w), got {gray.shape}")
    h, w = gray.shape
    _atomic_write(path, b"P5\n%d %d\n255\n" % (w, h) + gray.tobytes())


def _read_png(path: str) -> np.ndarray:
    try:
        from PIL import Image, UnidentifiedImageError
    except ImportError as exc:  # pragma: no cover
        raise ImageFormatError("PNG support requires pillow") from exc
    try:
        with Image.open(path) as im:
            return np.asarray(im.convert("RGB"), dtype=np.uint8)
    except UnidentifiedImageError as exc:
        raise ImageFormatError(f"{path!r} could not be decoded as PNG") from exc


def read_image(path: str) -> np.ndarray:
    """Read PPM or PNG into a frozen (1, 3, h, w) float32 tensor in [0, 1]."""
    with open(path, "rb") as fh:
        head = fh.read(8)
    if head.startswith(b"P6"):
        rgb = read_ppm(path)
    elif head.startswith(b"\x89PNG"):
        rgb = _read_png(path)
    else:
        raise ImageFormatError(f"{path!r}: unsupported image format (want P6 PPM or PNG)")
    x = rgb.astype(DTYPE) / np.float32(255.0)
    return freeze(np.ascontiguousarray(x.transpose(2, 0, 1)[None]))


def read_mask(path: str) -> np.ndarray:
    """Read a PGM mask as binary {0, 1}; any non-zero pixel is foreground."""
    return (read_pgm(path) != 0).astype(np.uint8)


def write_mask(mask01: np.ndarray, path: str) -> None:
    """Write a binary mask as PGM, foreground at 255."""
    write_pgm(np.where(np.asarray(mask01) != 0, 255, 0).astype(np.uint8), path)


def resize_bilinear(x: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """General bilinear resize of an NCHW tensor with half-pixel centers."""
    n, c, h, w = x.shape
    if (h, w) == (out_h, out_w):
        return x

    def coords(size_in: int, size_out: int):
        s = (np.arange(size_out, dtype=np.float64) + 0.5) * (size_in / size_out) - 0.5
        s = np.clip(s, 0.0, size_in - 1)
        lo = np.floor(s).astype(np.intp)
        hi = np.minimum(lo + 1, size_in - 1)
        return lo, hi, s - lo

    i0, i1, fi = coords(h, out_h)
    j0, j1, fj = coords(w, out_w)
    x64 = x.astype(np.float64)
    top = x64[:, :, i0, :]
    bot = x64[:, :, i1, :]
    rows = top + fi[None, None, :, None] * (bot - top)
    out = rows[:, :, :, j0] + fj[None, None, None, :] * (rows[:, :, :, j1] - rows[:, :, :, j0])
    return freeze(out.astype(DTYPE))


def overlay_masks(image: np.ndarray, drivable: np.ndarray, lane: np.ndarray) -> np.ndarray:
    """Blend masks over the image: drivable green, lane red (lane on top).

    ``image`` is (1, 3, h, w) in [0, 1]; masks are (h, w) binary.
    Returns (h, w, 3) uint8.
    """
    rgb = np.clip(image[0].transpose(1, 2, 0) * 255.0, 0, 255).astype(np.float64)
    out = rgb.copy()
    for mask, color in ((drivable, (0.0, 255.0, 0.0)), (lane, (255.0, 0.0, 0.0))):
        m = np.asarray(mask) != 0
        blended = 0.5 * rgb + 0.5 * np.array(color)
        out[m] = blended[m]
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)
