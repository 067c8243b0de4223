"""Atomic file output and the plain-text parameter snapshot.

Snapshot format (UTF-8, one item per line)::

    pgce-params 1
    layout 5 16 16 3
    <value 0>
    <value 1>
    ...

Values are ``repr`` floats, so a snapshot round-trips exactly. Their order is
the flat parameter order: per layer the weight matrix row-major, then the
bias vector.
"""
from __future__ import annotations

import json
import os
import tempfile

import numpy as np

from .errors import DataError, ParseError
from .numerics import ParamSet

SNAPSHOT_MAGIC = "pgce-params"
SNAPSHOT_VERSION = 1


def atomic_write_text(path, text):
    """Write via a temporary file in the same directory, then rename over ``path``."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_json(path, obj):
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n")


def params_to_text(params):
    lines = [f"{SNAPSHOT_MAGIC} {SNAPSHOT_VERSION}", "layout " + " ".join(str(n) for n in params.layout)]
    lines.extend(repr(float(v)) for v in params.values)
    return "\n".join(lines) + "\n"


def params_from_text(text):
    lines = [ln.strip() for ln in text.splitlines()]
    if not lines or lines[0].split() != [SNAPSHOT_MAGIC, str(SNAPSHOT_VERSION)]:
        raise ParseError(f"not a version-{SNAPSHOT_VERSION} parameter snapshot", 1)
    if len(lines) < 2 or not lines[1].startswith("layout "):
        raise ParseError("missing layout line", 2)
    try:
        layout = tuple(int(v) for v in lines[1].split()[1:])
    except ValueError:
        raise ParseError("bad layout line", 2) from None
    values = []
    for lineno, line in enumerate(lines[2:], start=3):
        if not line:
            continue
        try:
            values.append(float(line))
        except ValueError:
            raise ParseError(f"bad parameter value {line!r}", lineno) from None
    try:
        return ParamSet(layout, np.array(values))
    except ValueError as exc:
        raise DataError(f"snapshot does not match its layout: {exc}") from exc


def save_params(params, path):
    atomic_write_text(path, params_to_text(params))


def load_params(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise DataError(f"cannot read parameter file {path}: {exc}") from exc
    return params_from_text(text)
