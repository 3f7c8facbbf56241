"""File outputs: CSV tables, summary records and PGM images.

All writers are deterministic functions of their inputs: fixed column
names, fixed row order, shortest round-trip float formatting and no
timestamps.  Two runs with equal (master_seed, config hash, version)
therefore produce byte-identical files regardless of worker count.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

SERIES_COLUMNS = ("n", "chsh", "chsh_stderr", "ch", "ch_stderr",
                  "negative_fraction")
GAIN_SWEEP_COLUMNS = ("gain", "chsh", "chsh_stderr", "chsh_analytic",
                      "ch", "ch_stderr", "ch_analytic", "negative_fraction")
ETA_SWEEP_COLUMNS = ("eta", "chsh", "chsh_stderr", "ch", "ch_stderr",
                     "ch_analytic", "negative_fraction")
IMAGE_COLUMNS = ("ix", "iy", "mean_total_uncorrected", "mean_h_corrected",
                 "mean_v_corrected", "partner_covariance")


def format_value(value) -> str:
    """Shortest exact decimal form for floats; str() for the rest."""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def write_csv(path, columns, rows) -> Path:
    path = Path(path)
    lines = [",".join(columns)]
    for row in rows:
        if len(row) != len(columns):
            raise ValueError(f"row has {len(row)} fields, expected "
                             f"{len(columns)}: {row!r}")
        lines.append(",".join(format_value(v) for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def write_series_csv(path, series_rows) -> Path:
    rows = [(r["n"], r["chsh"], r["chsh_stderr"], r["ch"], r["ch_stderr"],
             r["negative_fraction"]) for r in series_rows]
    return write_csv(path, SERIES_COLUMNS, rows)


def write_summary(path, record: dict) -> Path:
    path = Path(path)
    path.write_text(json.dumps(record, indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")
    return path


def write_image_csv(path, maps: dict[str, np.ndarray]) -> Path:
    """Long-format dump of per-pixel image statistics.

    ``maps`` must contain the IMAGE_COLUMNS beyond ix/iy, each a 2-D
    array indexed [ix, iy].
    """
    arrays = [np.asarray(maps[name]) for name in IMAGE_COLUMNS[2:]]
    nx, ny = arrays[0].shape
    rows = []
    for ix in range(nx):
        for iy in range(ny):
            rows.append((ix, iy) + tuple(a[ix, iy] for a in arrays))
    return write_csv(path, IMAGE_COLUMNS, rows)


def write_pgm(path, image: np.ndarray, maxval: int = 65535) -> Path:
    """Binary PGM (P5) with linear scaling over [0, image max].

    The image is indexed [ix, iy]; rasters run top row = iy 0, left
    column = ix 0.  A sidecar '<path>.txt' records the scaling so pixel
    values can be mapped back to intensities.
    """
    if maxval not in (255, 65535):
        raise ValueError(f"maxval must be 255 or 65535, got {maxval}")
    path = Path(path)
    image = np.asarray(image, dtype=float)
    peak = float(image.max())
    scale = peak if peak > 0 else 1.0
    levels = np.clip(np.rint(image / scale * maxval), 0, maxval)
    raster = levels.T.astype(">u2" if maxval == 65535 else "u1")
    header = f"P5\n{image.shape[0]} {image.shape[1]}\n{maxval}\n"
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(raster.tobytes())
    sidecar = Path(str(path) + ".txt")
    sidecar.write_text(
        "linear intensity scaling: gray = round(intensity / scale * maxval)\n"
        f"scale = {format_value(scale)}\n"
        f"maxval = {maxval}\n"
        f"width (ix) = {image.shape[0]}\nheight (iy) = {image.shape[1]}\n"
        "row 0 is iy = 0; column 0 is ix = 0\n",
        encoding="utf-8")
    return path


def read_pgm(path):
    """Inverse of write_pgm: (levels[ix, iy], maxval, scale).

    The intensity scale comes from the sidecar written alongside the
    image; it defaults to 1.0 when the sidecar is absent.
    """
    data = Path(path).read_bytes()
    magic, dims, maxval_raw, raster = data.split(b"\n", 3)
    if magic != b"P5":
        raise ValueError(f"not a binary PGM file: {path}")
    width, height = (int(v) for v in dims.split())
    maxval = int(maxval_raw)
    dtype = ">u2" if maxval > 255 else "u1"
    levels = np.frombuffer(raster, dtype=dtype, count=width * height)
    scale = 1.0
    sidecar = Path(str(path) + ".txt")
    if sidecar.exists():
        for line in sidecar.read_text(encoding="utf-8").splitlines():
            if line.startswith("scale ="):
                scale = float(line.partition("=")[2])
    return levels.reshape(height, width).T.astype(int), maxval, scale
