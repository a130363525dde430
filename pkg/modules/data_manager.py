# modules/data_manager.py

import io
import logging
import re
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd

from modules.errors import CovkernError, ParseError
from modules.geom import PointPattern, RasterCovariate, Window

logger = logging.getLogger(__name__)

RASTER_HEADER_KEYS = ("ncols", "nrows", "xmin", "ymin", "xmax", "ymax")
RASTER_FORMATS = ("ascii",)
VALUE_FORMAT = "{:.9g}"
PARSER_LINE = re.compile(r"line (\d+)")


def _read_text(path) -> str:
    raw = Path(path).read_bytes()
    try:
        return raw.decode("utf-8")
    except UnicodeDecodeError as e:
        raise ParseError(f"not valid UTF-8 text (byte {e.start})", line=raw.count(b"\n", 0, e.start) + 1)


def load_raster(path, format: str = "ascii") -> RasterCovariate:
    """
    Reads an ASCII-grid covariate raster.

    Args:
        path: File with six `key value` header lines (ncols, nrows, xmin, ymin,
            xmax, ymax) followed by nrows rows of ncols space-separated reals,
            top row first.
        format (str): Raster format tag; only "ascii" is supported.

    Returns:
        RasterCovariate with the parsed window and values.
    """
    if format not in RASTER_FORMATS:
        raise ParseError(f"Unsupported raster format '{format}'")
    lines = _read_text(path).splitlines()

    header = {}
    for lineno in range(1, len(RASTER_HEADER_KEYS) + 1):
        if lineno > len(lines):
            raise ParseError("truncated header", line=lineno)
        parts = lines[lineno - 1].split()
        if len(parts) != 2 or parts[0].lower() not in RASTER_HEADER_KEYS:
            raise ParseError(f"malformed header line '{lines[lineno - 1]}'", line=lineno)
        key = parts[0].lower()
        if key in header:
            raise ParseError(f"duplicate header key '{key}'", line=lineno)
        try:
            header[key] = int(parts[1]) if key in ("ncols", "nrows") else float(parts[1])
        except ValueError:
            raise ParseError(f"non-numeric header value '{parts[1]}'", line=lineno)

    ncols, nrows = header["ncols"], header["nrows"]
    if ncols <= 0 or nrows <= 0:
        raise ParseError(f"grid dims must be positive, got ncols={ncols} nrows={nrows}", line=1)

    rows = []
    body_start = len(RASTER_HEADER_KEYS) + 1
    for offset, text in enumerate(lines[body_start - 1:]):
        lineno = body_start + offset
        if not text.strip():
            continue
        parts = text.split()
        if len(parts) != ncols:
            raise ParseError(f"expected {ncols} values, found {len(parts)}", line=lineno)
        try:
            row = [float(p) for p in parts]
        except ValueError:
            raise ParseError("non-numeric cell value", line=lineno)
        if not all(np.isfinite(row)):
            raise ParseError("non-finite cell value", line=lineno)
        rows.append(row)
    if len(rows) != nrows:
        raise ParseError(f"expected {nrows} rows, found {len(rows)}", line=len(lines))

    try:
        window = Window(header["xmin"], header["xmax"], header["ymin"], header["ymax"])
    except CovkernError as e:
        raise ParseError(str(e), line=3)
    logger.info(f"Loaded {ncols}x{nrows} raster from {path}")
    return RasterCovariate(window, np.array(rows))


def save_raster(raster: RasterCovariate, path) -> None:
    w = raster.window
    out = [
        f"ncols {raster.ncols}",
        f"nrows {raster.nrows}",
        f"xmin {w.xmin!r}",
        f"ymin {w.ymin!r}",
        f"xmax {w.xmax!r}",
        f"ymax {w.ymax!r}",
    ]
    for row in raster.values:
        out.append(" ".join(VALUE_FORMAT.format(v) for v in row))
    Path(path).write_text("\n".join(out) + "\n")


def load_pattern(path, window: Optional[Window] = None) -> PointPattern:
    """
    Reads a point pattern CSV with header `x,y`.

    The window comes from the `window` argument or, failing that, from a leading
    `# window xmin ymin xmax ymax` comment line as written by save_pattern.
    """
    text = _read_text(path)
    first = text.split("\n", 1)[0].strip()
    if first.startswith("#"):
        parts = first.lstrip("#").split()
        if window is None:
            if len(parts) != 5 or parts[0] != "window":
                raise ParseError(f"malformed window comment '{first}'", line=1)
            try:
                xmin, ymin, xmax, ymax = (float(p) for p in parts[1:])
                window = Window(xmin, xmax, ymin, ymax)
            except (ValueError, CovkernError) as e:
                raise ParseError(f"bad window comment: {e}", line=1)
    if window is None:
        raise ParseError(f"no window declared for pattern {path}")

    try:
        df = pd.read_csv(io.StringIO(text), comment="#", dtype=str, skip_blank_lines=True)
    except pd.errors.EmptyDataError:
        raise ParseError("missing header `x,y`", line=1)
    except pd.errors.ParserError as e:
        found = PARSER_LINE.search(str(e))
        raise ParseError(f"malformed CSV row: {e}", line=int(found.group(1)) if found else None)
    if [c.strip() for c in df.columns] != ["x", "y"]:
        raise ParseError(f"expected header `x,y`, found `{','.join(df.columns)}`", line=1)
    df.columns = ["x", "y"]
    if df.empty:
        logger.info(f"Loaded an empty pattern from {path}")
        return PointPattern(np.zeros((0, 2)), window)

    coords = df.apply(pd.to_numeric, errors="coerce")
    bad = coords.isna().any(axis=1) | ~np.isfinite(coords.to_numpy(dtype=float)).all(axis=1)
    if bad.any():
        rows = ", ".join(str(i) for i in np.flatnonzero(bad.to_numpy())[:10])
        raise ParseError(f"non-numeric or NaN coordinates in data row(s) {rows}")

    pattern = PointPattern(coords.to_numpy(dtype=float), window)
    logger.info(f"Loaded {pattern.n} event(s) from {path}")
    return pattern


def save_pattern(pattern: PointPattern, path) -> None:
    w = pattern.window
    df = pd.DataFrame({"x": pattern.x, "y": pattern.y})
    with open(path, "w", newline="\n") as fh:
        fh.write(f"# window {w.xmin!r} {w.ymin!r} {w.xmax!r} {w.ymax!r}\n")
        df.to_csv(fh, index=False, float_format="%.17g", lineterminator="\n")


def save_curve(path, **columns) -> None:
    """Writes equal-length numeric columns to CSV in keyword order."""
    pd.DataFrame({k: np.asarray(v) for k, v in columns.items()}).to_csv(
        path, index=False, float_format="%.17g", lineterminator="\n"
    )
