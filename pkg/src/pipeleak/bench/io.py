import csv
import math

from .._io import open_target


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return str(v)


def emit_csv(result, path, timing=False):
    """Write ``result.rows`` under ``result.COLUMNS``.

    Rows come out in the result's canonical order. Wall-clock columns are
    left blank unless ``timing`` is set, so that identical seeds give
    byte-identical files.
    """
    with open_target(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(result.COLUMNS)
        for row in result.sorted_rows():
            cells = [_cell(getattr(row, col)) for col in result.COLUMNS]
            if not timing:
                cells = ["" if col in result.TIMING_COLUMNS else c
                         for col, c in zip(result.COLUMNS, cells)]
            w.writerow(cells)
    return path
