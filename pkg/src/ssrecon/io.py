"""Container files, PGM export and CSV tables.

Container layout (all integers little-endian)::

    b"SSRC"  u16 version
    repeated: tag (4 ASCII bytes)  u64 payload length  payload

Array payloads: u8 kind (0 float64, 1 complex128, 2 bool, 3 int64), u32 ndim,
ndim x u64 dims, then float64 values row-major with complex numbers stored as
interleaved (re, im). Bool and int arrays are stored as float64 and restored to
their dtype on load. ``META`` is UTF-8 ``key=value`` lines. ``PARM`` and
``SCHD`` hold named arrays: u32 count, then per entry u16 name length, UTF-8
name and an array payload (with its own u64 length prefix). ``PARM`` starts
with the architecture fingerprint as a u16-length-prefixed string.
"""

from __future__ import annotations

import csv
import hashlib
import struct
import warnings
from collections import OrderedDict

import numpy as np

from .autodiff import NetworkParams

MAGIC = b"SSRC"
VERSION = 1
ARRAY_TAGS = ("KSPC", "MASK", "MAPS", "IMAG", "SUPP")
NAMED_TAGS = ("PARM", "SCHD")
KNOWN_TAGS = ARRAY_TAGS + NAMED_TAGS + ("META",)

_KINDS = {0: np.float64, 1: np.complex128, 2: np.bool_, 3: np.int64}


class ContainerError(ValueError):
    pass


# ---
# array payloads

def encode_array(a) -> bytes:
    a = np.asarray(a)
    if np.iscomplexobj(a):
        kind, flat = 1, np.ascontiguousarray(a, np.complex128).view(np.float64)
    elif a.dtype == np.bool_:
        kind, flat = 2, a.astype(np.float64)
    elif np.issubdtype(a.dtype, np.integer):
        if a.size and np.abs(a).max() > 2 ** 53:
            raise ContainerError("integer values too large for float64 storage")
        kind, flat = 3, a.astype(np.float64)
    else:
        kind, flat = 0, np.asarray(a, np.float64)
    head = struct.pack("<BI", kind, a.ndim) + struct.pack(f"<{a.ndim}Q", *a.shape)
    return head + np.ascontiguousarray(flat, "<f8").tobytes()


def decode_array(buf: bytes, tag="array") -> np.ndarray:
    if len(buf) < 5:
        raise ContainerError(f"truncated section {tag!r}: array header")
    kind, ndim = struct.unpack_from("<BI", buf, 0)
    if kind not in _KINDS:
        raise ContainerError(f"section {tag!r}: unknown array kind {kind}")
    off = 5 + 8 * ndim
    if len(buf) < off:
        raise ContainerError(f"truncated section {tag!r}: array dims")
    shape = struct.unpack_from(f"<{ndim}Q", buf, 5)
    count = int(np.prod(shape, dtype=np.int64)) * (2 if kind == 1 else 1)
    if len(buf) != off + 8 * count:
        raise ContainerError(f"section {tag!r}: payload size {len(buf) - off} does not match shape {shape}")
    data = np.frombuffer(buf, "<f8", count, off).astype(np.float64)
    if kind == 1:
        data = data.view(np.complex128)
    return data.reshape(shape).astype(_KINDS[kind])


def _encode_str(s: str) -> bytes:
    b = s.encode("utf-8")
    return struct.pack("<H", len(b)) + b


def _decode_str(buf, off, tag):
    if off + 2 > len(buf):
        raise ContainerError(f"truncated section {tag!r}")
    (n,) = struct.unpack_from("<H", buf, off)
    if off + 2 + n > len(buf):
        raise ContainerError(f"truncated section {tag!r}")
    return buf[off + 2:off + 2 + n].decode("utf-8"), off + 2 + n


def encode_named(items) -> bytes:
    items = list(items.items() if isinstance(items, dict) else items)
    out = [struct.pack("<I", len(items))]
    for name, arr in items:
        body = encode_array(arr)
        out += [_encode_str(name), struct.pack("<Q", len(body)), body]
    return b"".join(out)


def decode_named(buf: bytes, off=0, tag="named"):
    if off + 4 > len(buf):
        raise ContainerError(f"truncated section {tag!r}")
    (count,) = struct.unpack_from("<I", buf, off)
    off += 4
    items = OrderedDict()
    for _ in range(count):
        name, off = _decode_str(buf, off, tag)
        if off + 8 > len(buf):
            raise ContainerError(f"truncated section {tag!r}")
        (n,) = struct.unpack_from("<Q", buf, off)
        off += 8
        if off + n > len(buf):
            raise ContainerError(f"truncated section {tag!r}")
        items[name] = decode_array(buf[off:off + n], tag)
        off += n
    return items, off


# ---
# META

def _escape(s):
    return str(s).replace("\\", "\\\\").replace("\n", "\\n")


def _unescape(s):
    out, i = [], 0
    while i < len(s):
        if s[i] == "\\" and i + 1 < len(s):
            out.append("\n" if s[i + 1] == "n" else s[i + 1])
            i += 2
        else:
            out.append(s[i])
            i += 1
    return "".join(out)


def encode_meta(meta: dict) -> bytes:
    lines = []
    for k, v in meta.items():
        k = str(k)
        if not k or "=" in k or "\n" in k:
            raise ContainerError(f"invalid META key {k!r}")
        lines.append(f"{k}={_escape(v)}")
    return "\n".join(lines).encode("utf-8")


def decode_meta(buf: bytes) -> dict:
    meta = OrderedDict()
    for line in buf.decode("utf-8").split("\n"):
        if line:
            k, _, v = line.partition("=")
            meta[k] = _unescape(v)
    return meta


# ---
# container

def _encode_section(tag, value):
    if tag == "META":
        return encode_meta(value)
    if tag == "PARM":
        if not isinstance(value, NetworkParams):
            raise ContainerError("PARM section needs NetworkParams")
        return _encode_str(value.fingerprint) + encode_named((n, value[n].data) for n in value.names())
    if tag == "SCHD":
        return encode_named(value)
    if tag in ARRAY_TAGS:
        return encode_array(value)
    raise ContainerError(f"cannot encode unknown section tag {tag!r}")


def _decode_section(tag, payload):
    if tag == "META":
        return decode_meta(payload)
    if tag == "PARM":
        fp, off = _decode_str(payload, 0, tag)
        items, end = decode_named(payload, off, tag)
        if end != len(payload):
            raise ContainerError(f"section {tag!r}: trailing bytes")
        return NetworkParams(list(items.items()), fp)
    if tag == "SCHD":
        items, end = decode_named(payload, 0, tag)
        if end != len(payload):
            raise ContainerError(f"section {tag!r}: trailing bytes")
        return items
    return decode_array(payload, tag)


def dumps(sections) -> bytes:
    out = [MAGIC, struct.pack("<H", VERSION)]
    for tag, value in sections.items():
        t = tag.encode("ascii")
        if len(t) != 4:
            raise ContainerError(f"section tag must be 4 ASCII bytes, got {tag!r}")
        body = _encode_section(tag, value)
        out += [t, struct.pack("<Q", len(body)), body]
    return b"".join(out)


def loads(buf: bytes):
    if len(buf) < 6 or buf[:4] != MAGIC:
        raise ContainerError("bad magic: not an SSRC container")
    (version,) = struct.unpack_from("<H", buf, 4)
    if version > VERSION:
        raise ContainerError(f"container version {version} is newer than this reader ({VERSION})")
    off, sections = 6, OrderedDict()
    while off < len(buf):
        if off + 12 > len(buf):
            tag = buf[off:off + 4].decode("ascii", "replace")
            raise ContainerError(f"truncated section {tag!r}: incomplete header")
        tag = buf[off:off + 4].decode("ascii", "replace")
        (n,) = struct.unpack_from("<Q", buf, off + 4)
        off += 12
        if off + n > len(buf):
            raise ContainerError(f"truncated section {tag!r}: expected {n} bytes, found {len(buf) - off}")
        payload = buf[off:off + n]
        off += n
        if tag not in KNOWN_TAGS:
            warnings.warn(f"skipping unknown section {tag!r}", stacklevel=2)
            continue
        sections[tag] = _decode_section(tag, payload)
    return sections


def save(path, sections):
    data = dumps(sections)
    with open(path, "wb") as f:
        f.write(data)
    return hashlib.sha256(data).hexdigest()


def load(path):
    with open(path, "rb") as f:
        return loads(f.read())


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


# ---
# images and tables

def pgm_values(img, window):
    lo, hi = window
    if not lo < hi:
        raise ValueError(f"window must satisfy lo < hi, got {window}")
    x = np.clip((np.abs(np.asarray(img, dtype=complex)) - lo) / (hi - lo), 0.0, 1.0)
    return np.rint(x * 65535).astype(np.uint16)


def export_pgm(img, path, window=None):
    """16-bit binary PGM with linear windowing (default: 0 to the image max)."""
    img = np.asarray(img)
    if img.ndim != 2:
        raise ValueError(f"expected a 2D image, got shape {img.shape}")
    if window is None:
        peak = float(np.abs(img).max())
        window = (0.0, peak if peak > 0 else 1.0)
    v = pgm_values(img, window)
    h, w = v.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n65535\n".encode("ascii"))
        f.write(v.astype(">u2").tobytes())


def read_pgm(path):
    with open(path, "rb") as f:
        data = f.read()
    magic, size, maxval, body = data.split(b"\n", 3)  # header as written by export_pgm
    if magic != b"P5":
        raise ValueError("not a binary PGM")
    w, h = map(int, size.split())
    dtype = ">u2" if int(maxval) > 255 else "u1"
    return np.frombuffer(body, dtype, w * h).reshape(h, w)


def write_csv(path, header, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        w.writerows(rows)


def read_csv(path):
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    return rows[0], rows[1:]
