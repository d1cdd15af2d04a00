"""Readers and writers for the narrow set of trusted numeric formats.

Scientific values move through 16-bit binary PPM (the linear output of
common RAW developers) and PFM (IEEE float, used for both images and depth
maps). Display exports go to 8-bit PNG, written from scratch so the encoder
is deterministic and can watermark itself as non-scientific.
"""

from __future__ import annotations

import hashlib
import struct
import zlib
from pathlib import Path

import numpy as np

from .errors import FileFormatError, ValidationError

PFM_LITTLE_ENDIAN_SCALE = -1.0


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


# ---------------------------------------------------------------------------
# PPM (P6, 16-bit big-endian samples)
# ---------------------------------------------------------------------------

def _read_pnm_token(f) -> bytes:
    """Read one whitespace-delimited header token, skipping '#' comments."""
    token = b""
    while True:
        ch = f.read(1)
        if ch == b"":
            raise FileFormatError("unexpected end of PNM header")
        if ch == b"#":
            while ch not in (b"\n", b""):
                ch = f.read(1)
            continue
        if ch.isspace():
            if token:
                return token
            continue
        token += ch


def read_ppm16(path: str | Path) -> np.ndarray:
    """Read a 16-bit binary PPM into float64 in [0, 1] (shape H, W, 3).

    8-bit files are rejected outright: by the time a camera or converter has
    emitted 8-bit data, photofinishing has been applied and pixel intensities
    are no longer linearly related to scene radiance, so the values cannot be
    calibrated. Re-develop the RAW capture to 16-bit PPM or PFM.
    """
    path = Path(path)
    with open(path, "rb") as f:
        magic = f.read(2)
        if magic != b"P6":
            raise FileFormatError(f"{path}: not a binary PPM (magic {magic!r})")
        try:
            width = int(_read_pnm_token(f))
            height = int(_read_pnm_token(f))
            maxval = int(_read_pnm_token(f))
        except ValueError as exc:
            raise FileFormatError(f"{path}: malformed PPM header") from exc
        if width <= 0 or height <= 0 or not 0 < maxval < 65536:
            raise FileFormatError(f"{path}: invalid PPM dimensions or maxval")
        if maxval < 256:
            raise ValidationError(
                f"{path}: 8-bit PPM rejected. 8-bit images carry in-camera "
                "processing, so pixel intensities are not linearly related to "
                "scene radiance and cannot be used as calibrated data; "
                "convert the RAW capture to a 16-bit linear format instead."
            )
        count = width * height * 3
        buf = f.read(count * 2)
        if len(buf) != count * 2:
            raise FileFormatError(f"{path}: truncated PPM pixel data")
    # PNM multi-byte samples are big-endian
    data = np.frombuffer(buf, dtype=">u2").astype(np.float64) / float(maxval)
    return data.reshape(height, width, 3)


def write_ppm16(path: str | Path, img: np.ndarray, maxval: int = 65535) -> None:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValidationError("PPM writer expects (H, W, 3)")
    if not 255 < maxval < 65536:
        raise ValidationError("16-bit PPM maxval must lie in [256, 65535]")
    q = np.clip(np.round(img * maxval), 0, maxval).astype(">u2")
    with open(path, "wb") as f:
        f.write(f"P6\n{img.shape[1]} {img.shape[0]}\n{maxval}\n".encode("ascii"))
        f.write(q.tobytes())


# ---------------------------------------------------------------------------
# PFM (float maps; images and depth)
# ---------------------------------------------------------------------------

def read_pfm(path: str | Path) -> np.ndarray:
    """Read a PFM file; returns (H, W, 3) for 'PF' or (H, W) for 'Pf'.

    Rows are stored bottom-up per convention; the sign of the scale line
    gives byte order (negative = little-endian).
    """
    path = Path(path)
    with open(path, "rb") as f:
        magic = f.readline().strip()
        if magic not in (b"PF", b"Pf"):
            raise FileFormatError(f"{path}: not a PFM file (magic {magic!r})")
        try:
            dims = f.readline().split()
            width, height = int(dims[0]), int(dims[1])
            scale = float(f.readline().strip())
        except (ValueError, IndexError) as exc:
            raise FileFormatError(f"{path}: malformed PFM header") from exc
        channels = 3 if magic == b"PF" else 1
        count = width * height * channels
        buf = f.read(count * 4)
        if len(buf) != count * 4:
            raise FileFormatError(f"{path}: truncated PFM pixel data")
    dtype = "<f4" if scale < 0 else ">f4"
    data = np.frombuffer(buf, dtype=dtype).astype(np.float64)
    data = data.reshape(height, width, channels)
    data = np.flipud(data)
    return data[:, :, 0] if channels == 1 else data


def write_pfm(path: str | Path, data: np.ndarray) -> None:
    """Write float data as little-endian PFM ('Pf' for 2-D, 'PF' for H,W,3)."""
    data = np.asarray(data, dtype=np.float64)
    if data.ndim == 2:
        magic, payload = b"Pf", data[:, :, None]
    elif data.ndim == 3 and data.shape[2] == 3:
        magic, payload = b"PF", data
    else:
        raise ValidationError("PFM writer expects (H, W) or (H, W, 3)")
    h, w = payload.shape[:2]
    with open(path, "wb") as f:
        f.write(magic + b"\n")
        f.write(f"{w} {h}\n".encode("ascii"))
        f.write(f"{PFM_LITTLE_ENDIAN_SCALE}\n".encode("ascii"))
        f.write(np.flipud(payload).astype("<f4").tobytes())


# ---------------------------------------------------------------------------
# Depth maps
# ---------------------------------------------------------------------------

def read_depth(path: str | Path, width: int | None = None, height: int | None = None):
    """Load a depth map: PFM (dense, meters) or CSV of x,y,z annotations.

    The sparse CSV form needs target dimensions; unlisted pixels are invalid.
    Non-positive values mark invalid pixels in either form.
    """
    from .water import DepthMap

    path = Path(path)
    if path.suffix.lower() == ".pfm":
        z = read_pfm(path)
        if z.ndim != 2:
            raise FileFormatError(f"{path}: depth PFM must be single channel")
        return DepthMap.from_array(z)
    if path.suffix.lower() == ".csv":
        if width is None or height is None:
            raise ValidationError("sparse depth CSV needs explicit width and height")
        z = np.zeros((height, width))
        with open(path, newline="", encoding="utf-8") as f:
            header = f.readline().strip().lower().replace(" ", "")
            if header not in ("x,y,z",):
                raise FileFormatError(f"{path}: expected header 'x,y,z'")
            for line in f:
                line = line.strip()
                if not line:
                    continue
                try:
                    xs, ys, zs = line.split(",")
                    x, y, zval = int(xs), int(ys), float(zs)
                except ValueError as exc:
                    raise FileFormatError(f"{path}: bad depth row {line!r}") from exc
                if not (0 <= x < width and 0 <= y < height):
                    raise ValidationError(f"{path}: depth annotation ({x},{y}) out of bounds")
                z[y, x] = zval
        return DepthMap.from_array(z)
    raise FileFormatError(f"{path}: unsupported depth format (use .pfm or .csv)")


# ---------------------------------------------------------------------------
# PNG display export (8-bit, watermarked non-scientific)
# ---------------------------------------------------------------------------

DISPLAY_NOTE = "uwcolor display export; tone-encoded for viewing, not for quantitative use"


def _png_chunk(tag: bytes, payload: bytes) -> bytes:
    return (struct.pack(">I", len(payload)) + tag + payload
            + struct.pack(">I", zlib.crc32(tag + payload) & 0xFFFFFFFF))


def write_png8(path: str | Path, img: np.ndarray, note: str = DISPLAY_NOTE) -> None:
    """Write an (H, W, 3) array in [0, 1] as an 8-bit RGB PNG.

    A tEXt chunk marks the file as a display-only export.
    """
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValidationError("PNG writer expects (H, W, 3)")
    q = np.clip(np.round(img * 255.0), 0, 255).astype(np.uint8)
    h, w = q.shape[:2]
    raw = b"".join(b"\x00" + q[row].tobytes() for row in range(h))
    out = bytearray(b"\x89PNG\r\n\x1a\n")
    out += _png_chunk(b"IHDR", struct.pack(">IIBBBBB", w, h, 8, 2, 0, 0, 0))
    out += _png_chunk(b"tEXt", b"Comment\x00" + note.encode("latin-1", "replace"))
    out += _png_chunk(b"IDAT", zlib.compress(raw, 9))
    out += _png_chunk(b"IEND", b"")
    Path(path).write_bytes(bytes(out))
