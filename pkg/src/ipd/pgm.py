"""Minimal PGM (P2 / P5) image reader and P5 writer.

Values are normalized to [0, 1] on read by dividing by maxval; writing
clamps to [0, 1] and quantizes to 8 bits with round-half-up.
"""

from __future__ import annotations

import numpy as np


class PGMError(ValueError):
    """Malformed or truncated PGM data; the message carries a byte offset."""


def _tokens(buf: bytes):
    """Yield (token, offset) for whitespace-separated header tokens,
    skipping '#' comments."""
    i = 0
    n = len(buf)
    while i < n:
        c = buf[i : i + 1]
        if c.isspace():
            i += 1
        elif c == b"#":
            while i < n and buf[i : i + 1] != b"\n":
                i += 1
        else:
            start = i
            while i < n and not buf[i : i + 1].isspace() and buf[i : i + 1] != b"#":
                i += 1
            yield buf[start:i], start, i


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        buf = fh.read()
    tok = _tokens(buf)

    def next_token(what):
        try:
            return next(tok)
        except StopIteration:
            raise PGMError(f"truncated header: missing {what} at byte {len(buf)}")

    magic, off, _ = next_token("magic number")
    if magic not in (b"P2", b"P5"):
        raise PGMError(f"bad magic {magic!r} at byte {off}")
    fields = []
    for what in ("width", "height", "maxval"):
        t, off, end = next_token(what)
        try:
            fields.append((int(t), off, end))
        except ValueError:
            raise PGMError(f"bad {what} {t!r} at byte {off}")
    (width, _, _), (height, _, _), (maxval, _, end) = fields
    if width <= 0 or height <= 0:
        raise PGMError(f"nonpositive dimensions at byte {fields[0][1]}")
    if not (0 < maxval <= 65535):
        raise PGMError(f"maxval {maxval} out of range at byte {fields[2][1]}")

    count = width * height
    if magic == b"P2":
        vals = []
        for t, off, _ in tok:
            try:
                v = int(t)
            except ValueError:
                raise PGMError(f"bad sample {t!r} at byte {off}")
            if not (0 <= v <= maxval):
                raise PGMError(f"sample {v} exceeds maxval at byte {off}")
            vals.append(v)
            if len(vals) == count:
                break
        if len(vals) < count:
            raise PGMError(
                f"truncated payload: {len(vals)}/{count} samples, ends at byte "
                f"{len(buf)}"
            )
        data = np.array(vals, dtype=np.float64)
    else:
        # binary payload starts one whitespace byte after maxval
        start = end + 1
        width_bytes = 1 if maxval < 256 else 2
        need = count * width_bytes
        payload = buf[start : start + need]
        if len(payload) < need:
            raise PGMError(
                f"truncated payload: need {need} bytes from byte {start}, "
                f"have {len(payload)}"
            )
        dtype = np.uint8 if width_bytes == 1 else ">u2"
        data = np.frombuffer(payload, dtype=dtype, count=count).astype(np.float64)
        if np.any(data > maxval):
            raise PGMError(f"sample exceeds maxval in payload at byte {start}")
    return (data / maxval).reshape(height, width)


def write_pgm(grid: np.ndarray, path) -> None:
    """Write a [0, 1] grid as binary P5 with maxval 255 (round half-up)."""
    g = np.clip(np.asarray(grid, dtype=np.float64), 0.0, 1.0)
    q = np.floor(g * 255.0 + 0.5).astype(np.uint8)
    rows, cols = q.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{cols} {rows}\n255\n".encode("ascii"))
        fh.write(q.tobytes())
