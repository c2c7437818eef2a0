"""Image output. Binary portable pixmap is the bit-exact golden format:
header "P6\\n<w> <h>\\n255\\n" followed by raw rgb rows, top to bottom.
"""

from __future__ import annotations

import numpy as np


def ppm_bytes(rgb: np.ndarray) -> bytes:
    if rgb.ndim != 3 or rgb.shape[2] != 3 or rgb.dtype != np.uint8:
        raise ValueError(f"expected (h, w, 3) uint8 image, got {rgb.shape} {rgb.dtype}")
    h, w = rgb.shape[:2]
    return b"P6\n%d %d\n255\n" % (w, h) + rgb.tobytes()


def write_image(rgb: np.ndarray, path, fmt: str = "ppm") -> None:
    if fmt == "ppm":
        with open(path, "wb") as fh:
            fh.write(ppm_bytes(rgb))
    elif fmt == "png":
        # optional convenience output; excluded from golden-image tests
        from PIL import Image

        Image.fromarray(rgb, "RGB").save(path, "PNG")
    else:
        raise ValueError(f"unsupported image format {fmt!r}")


def read_ppm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    if not data.startswith(b"P6"):
        raise ValueError("not a binary portable pixmap")
    fields: list[bytes] = []
    pos = 2
    while len(fields) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        fields.append(data[start:pos])
    pos += 1  # single whitespace after maxval
    w, h, maxval = (int(f) for f in fields)
    if maxval != 255:
        raise ValueError(f"unsupported maxval {maxval}")
    pixels = np.frombuffer(data, np.uint8, count=w * h * 3, offset=pos)
    return pixels.reshape(h, w, 3).copy()
