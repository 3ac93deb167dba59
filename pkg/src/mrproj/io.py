"""Atomic text output and the ``x1,...,xd,y`` data format."""
import csv
import io
import os
import tempfile

import numpy as np

from .lattice import DesignSample

__all__ = ["atomic_write", "csv_text", "write_csv", "read_data_csv", "write_data_csv", "fmt"]


def fmt(v):
    """Round-trip text for a number."""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def atomic_write(path, text):
    """Write UTF-8 ``text`` to a temporary file in the target directory, then rename."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([v if isinstance(v, str) else fmt(v) for v in row])
    return buf.getvalue()


def write_csv(path, header, rows):
    atomic_write(path, csv_text(header, rows))


def read_data_csv(path, responses=True):
    """
    Read a sample from a CSV with header ``x1,...,xd,y``.

    Raises
    ------
    ValueError
        On a malformed header or non-numeric entries.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    d = len(header) - 1 if responses else len(header)
    expected = [f"x{i + 1}" for i in range(d)] + (["y"] if responses else [])
    if d < 1 or header != expected:
        raise ValueError(f"{path}: header must be {','.join(expected) if d >= 1 else 'x1,...,xd,y'}, got {','.join(header)}")
    try:
        data = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float).reshape(-1, len(header))
    except ValueError as exc:
        raise ValueError(f"{path}: {exc}") from exc
    if responses:
        return DesignSample(data[:, :d], data[:, d])
    return DesignSample(data)


def write_data_csv(path, sample):
    header = [f"x{i + 1}" for i in range(sample.d)] + (["y"] if sample.Y is not None else [])
    rows = sample.X if sample.Y is None else np.column_stack([sample.X, sample.Y])
    write_csv(path, header, rows.tolist())
