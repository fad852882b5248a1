"""File formats: ATNS tensors, ATNS directory manifests and binary PPM images.

ATNS layout (all little-endian)::

    b"ATNS" | u8 version=1 | u8 dtype (0=f32, 1=f64) | u8 rank | rank x u32 dims | data
"""
from __future__ import annotations

import json
import re
import struct
from pathlib import Path

import numpy as np

MAGIC = b"ATNS"
VERSION = 1
_DTYPE_CODES = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}
_CODE_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
MANIFEST_NAME = "manifest.json"


class FormatError(ValueError):
    pass


def encode_atns(x: np.ndarray) -> bytes:
    x = np.asarray(x)
    if x.dtype not in _DTYPE_CODES:
        raise FormatError(f"ATNS stores float32/float64 only, got {x.dtype}")
    if x.ndim > 255:
        raise FormatError("rank too large for ATNS")
    code = _DTYPE_CODES[x.dtype]
    header = MAGIC + struct.pack("<BBB", VERSION, code, x.ndim)
    header += struct.pack(f"<{x.ndim}I", *x.shape)
    return header + np.ascontiguousarray(x, dtype=_CODE_DTYPES[code]).tobytes()


def decode_atns(buf: bytes) -> np.ndarray:
    if len(buf) < 7 or buf[:4] != MAGIC:
        raise FormatError("not an ATNS tensor (bad magic)")
    version, code, rank = struct.unpack_from("<BBB", buf, 4)
    if version != VERSION:
        raise FormatError(f"unsupported ATNS version {version}")
    if code not in _CODE_DTYPES:
        raise FormatError(f"unknown ATNS dtype code {code}")
    offset = 7 + 4 * rank
    if len(buf) < offset:
        raise FormatError("truncated ATNS header")
    shape = struct.unpack_from(f"<{rank}I", buf, 7)
    dtype = _CODE_DTYPES[code]
    count = int(np.prod(shape)) if rank else 1
    if len(buf) != offset + count * dtype.itemsize:
        raise FormatError(f"ATNS payload size mismatch for shape {shape}")
    data = np.frombuffer(buf, dtype=dtype, count=count, offset=offset)
    return data.reshape(shape).astype(dtype.newbyteorder("="))


def save_atns(path, x: np.ndarray) -> None:
    Path(path).write_bytes(encode_atns(x))


def load_atns(path) -> np.ndarray:
    return decode_atns(Path(path).read_bytes())


def _file_name(role: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]", "_", role) + ".atns"


def save_manifest(directory, tensors: dict[str, np.ndarray], meta: dict | None = None) -> Path:
    """Write each tensor as an ATNS file plus a JSON manifest listing them by role."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    files = {}
    for role in sorted(tensors):
        name = _file_name(role)
        save_atns(d / name, tensors[role])
        files[role] = name
    manifest = {"format": "atns-manifest", "version": VERSION, "meta": meta or {}, "tensors": files}
    path = d / MANIFEST_NAME
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def load_manifest(directory) -> tuple[dict[str, np.ndarray], dict]:
    d = Path(directory)
    manifest = json.loads((d / MANIFEST_NAME).read_text())
    if manifest.get("format") != "atns-manifest":
        raise FormatError(f"{d / MANIFEST_NAME} is not an ATNS manifest")
    tensors = {role: load_atns(d / name) for role, name in manifest["tensors"].items()}
    return tensors, manifest.get("meta", {})


# ---------------------------------------------------------------- PPM

def _ppm_tokens(buf: bytes, count: int) -> tuple[list[int], int]:
    """Read ``count`` whitespace-separated header integers, skipping comments."""
    pos, out = 0, []
    while len(out) < count:
        while pos < len(buf) and buf[pos:pos + 1].isspace():
            pos += 1
        if pos < len(buf) and buf[pos:pos + 1] == b"#":
            while pos < len(buf) and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(buf) and not buf[pos:pos + 1].isspace() and buf[pos:pos + 1] != b"#":
            pos += 1
        tok = buf[start:pos]
        if not tok:
            raise FormatError(f"PPM header ended early at byte {start}")
        if not out and count == 4:
            if tok != b"P6":
                raise FormatError(f"PPM magic must be P6, got {tok!r} at byte {start}")
            out.append(6)
            continue
        if not tok.isdigit():
            raise FormatError(f"PPM header expected an integer at byte {start}, got {tok!r}")
        out.append(int(tok))
    return out, pos


def decode_ppm(buf: bytes) -> np.ndarray:
    (_, width, height, maxval), pos = _ppm_tokens(buf, 4)
    if maxval != 255:
        raise FormatError(f"only 8-bit PPM supported (maxval 255), got {maxval}")
    if width < 1 or height < 1:
        raise FormatError(f"PPM dimensions must be positive, got {width}x{height}")
    if pos >= len(buf) or not buf[pos:pos + 1].isspace():
        raise FormatError(f"PPM header must end with one whitespace byte at byte {pos}")
    pos += 1
    n = width * height * 3
    if len(buf) - pos < n:
        raise FormatError(f"PPM pixel data truncated: need {n} bytes from byte {pos}, have {len(buf) - pos}")
    pix = np.frombuffer(buf, dtype=np.uint8, count=n, offset=pos).reshape(height, width, 3)
    return (pix.transpose(2, 0, 1)[None].astype(np.float64) / 127.5) - 1.0


def encode_ppm(t: np.ndarray) -> bytes:
    t = np.asarray(t, dtype=np.float64)
    if t.ndim == 4:
        if t.shape[0] != 1:
            raise FormatError("encode_ppm takes a single image")
        t = t[0]
    if t.ndim != 3 or t.shape[0] != 3:
        raise FormatError(f"expected (1, 3, H, W) or (3, H, W) image, got {t.shape}")
    pix = np.clip(np.rint((t + 1.0) * 127.5), 0, 255).astype(np.uint8)
    _, h, w = pix.shape
    return f"P6\n{w} {h}\n255\n".encode() + pix.transpose(1, 2, 0).tobytes()


def load_image_ppm(path) -> np.ndarray:
    """Read a binary P6 PPM into a ``(1, 3, H, W)`` tensor in ``[-1, 1]``."""
    return decode_ppm(Path(path).read_bytes())


def save_image_ppm(path, t: np.ndarray) -> None:
    Path(path).write_bytes(encode_ppm(t))
