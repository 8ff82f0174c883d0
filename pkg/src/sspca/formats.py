"""File formats: CSV matrices, model containers, traces and PGM images.

All writers go through :func:`atomic_write` (temp file + rename).
"""

from __future__ import annotations

import csv
import io
import logging
import math
import os
import tempfile
from pathlib import Path

import numpy as np

from .groups import GridSpec
from .regularizer import EtaState, Partition
from .solver import FactorModel, TraceRow

log = logging.getLogger(__name__)

MODEL_MAGIC = "# sspca-model"
MODEL_VERSION = 1
SIZE_WARNING = 10**7


class FormatError(ValueError):
    """Malformed or inconsistent input file."""


def atomic_write(path, text: str):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(x: float) -> str:
    return "%.17g" % x


def format_matrix(M) -> str:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    return "".join(",".join(_fmt(v) for v in row) + "\n" for row in M)


def _parse_rows(lines, source: str, first_line: int = 1) -> np.ndarray:
    rows = []
    width = None
    for offset, fields in enumerate(csv.reader(lines)):
        lineno = first_line + offset
        if not fields or all(not f.strip() for f in fields):
            continue
        vals = []
        for col, tok in enumerate(fields, start=1):
            try:
                v = float(tok)
            except ValueError:
                raise FormatError(f"{source}: row {lineno}, column {col}: cannot parse {tok!r}") from None
            if not math.isfinite(v):
                raise FormatError(f"{source}: row {lineno}, column {col}: non-finite value {tok.strip()!r}")
            vals.append(v)
        if width is None:
            width = len(vals)
        elif len(vals) != width:
            raise FormatError(f"{source}: row {lineno} has {len(vals)} fields, expected {width} (ragged row)")
        rows.append(vals)
    if not rows:
        return np.zeros((0, 0))
    return np.array(rows, dtype=float)


def load_matrix(path) -> np.ndarray:
    """Read a headerless numeric CSV (rows are observations)."""
    with open(path, newline="") as fh:
        M = _parse_rows(fh, str(path))
    if M.size == 0:
        raise FormatError(f"{path}: no data")
    if M.size > SIZE_WARNING:
        log.warning("%s: %d entries; CSV is slow at this size", path, M.size)
    return M


def save_matrix(path, M):
    atomic_write(path, format_matrix(M))


def load_labels(path) -> np.ndarray:
    """One label per line (first CSV field); integer labels are parsed as ints."""
    with open(path, newline="") as fh:
        labels = [row[0].strip() for row in csv.reader(fh) if row and row[0].strip()]
    try:
        return np.array([int(x) for x in labels])
    except ValueError:
        return np.array(labels)


def save_labels(path, labels):
    atomic_write(path, "".join(f"{x}\n" for x in np.asarray(labels).tolist()))


def format_model(model: FactorModel, etas: EtaState | None = None) -> str:
    info = model.info
    n, r = model.U.shape
    p = model.V.shape[0]
    head = [
        f"{MODEL_MAGIC} v{MODEL_VERSION}",
        f"n={n}",
        f"p={p}",
        f"r={r}",
        f"alpha={info.get('alpha', float('nan'))!r}",
        f"lambda={info.get('lam', float('nan'))!r}",
        f"partition={model.partition.format()}",
        f"coeff_norm={info.get('coeff_norm', 'l2')}",
        f"nonneg={int(bool(info.get('nonneg', False)))}",
    ]
    parts = ["\n".join(head) + "\n", "[U]\n", format_matrix(model.U), "[V]\n", format_matrix(model.V)]
    if etas is not None:
        parts += ["[ETA]\n", format_matrix(etas.eta)]
    return "".join(parts)


def save_model(model: FactorModel, path, etas: EtaState | None = None):
    atomic_write(path, format_model(model, etas))


def parse_model(text: str, source: str = "<model>") -> tuple[FactorModel, np.ndarray | None]:
    lines = text.splitlines()
    if not lines or not lines[0].startswith(MODEL_MAGIC):
        raise FormatError(f"{source}: not an sspca model file")
    version = lines[0][len(MODEL_MAGIC):].strip()
    if version != f"v{MODEL_VERSION}":
        raise FormatError(f"{source}: unsupported model version {version!r}")
    header = {}
    sections: dict[str, list] = {}
    current = None
    for lineno, line in enumerate(lines[1:], start=2):
        s = line.strip()
        if s.startswith("[") and s.endswith("]"):
            current = s[1:-1]
            sections[current] = []
        elif current is None:
            if s and not s.startswith("#"):
                key, sep, val = s.partition("=")
                if not sep:
                    raise FormatError(f"{source}: line {lineno}: bad header entry {s!r}")
                header[key.strip()] = val.strip()
        else:
            sections[current].append((lineno, line))
    try:
        n, p, r = int(header["n"]), int(header["p"]), int(header["r"])
    except (KeyError, ValueError):
        raise FormatError(f"{source}: header must define integer n, p, r") from None

    def block(name, shape):
        if name not in sections:
            raise FormatError(f"{source}: missing [{name}] block (dimension mismatch)")
        entries = sections[name]
        first = entries[0][0] if entries else 0
        M = _parse_rows([ln for _, ln in entries], source, first)
        if M.size == 0:
            M = M.reshape(0, shape[1])
        if M.shape != shape:
            raise FormatError(f"{source}: [{name}] block has shape {M.shape}, header says {shape} (dimension mismatch)")
        return np.ascontiguousarray(M)

    U = block("U", (n, r))
    V = block("V", (p, r))
    part = Partition.parse(header.get("partition", ""), r) if header.get("partition") else Partition.singletons(r)
    info = {
        "alpha": float(header.get("alpha", "nan")),
        "lam": float(header.get("lambda", "nan")),
        "coeff_norm": header.get("coeff_norm", "l2"),
        "nonneg": header.get("nonneg", "0") == "1",
    }
    eta = None
    if "ETA" in sections:
        eta = _parse_rows([ln for _, ln in sections["ETA"]], source)
        if eta.ndim != 2 or eta.shape[1] != len(part):
            raise FormatError(f"{source}: [ETA] block has {eta.shape} entries for {len(part)} classes")
    return FactorModel(U, V, part, info), eta


def load_model(path) -> FactorModel:
    with open(path) as fh:
        model, _ = parse_model(fh.read(), str(path))
    return model


def load_model_with_eta(path) -> tuple[FactorModel, np.ndarray | None]:
    with open(path) as fh:
        return parse_model(fh.read(), str(path))


TRACE_HEADER = ("iteration", "objective", "loss", "penalty", "elapsed")


def format_trace(trace: list[TraceRow], timing: bool = True) -> str:
    buf = io.StringIO()
    cols = TRACE_HEADER if timing else TRACE_HEADER[:-1]
    buf.write(",".join(cols) + "\n")
    for row in trace:
        vals = [str(row.iteration), _fmt(row.objective), _fmt(row.loss), _fmt(row.penalty)]
        if timing:
            vals.append("%.6f" % row.elapsed)
        buf.write(",".join(vals) + "\n")
    return buf.getvalue()


def save_trace(path, trace: list[TraceRow], timing: bool = True):
    atomic_write(path, format_trace(trace, timing))


def format_pgm(img) -> str:
    img = np.asarray(img)
    h, w = img.shape
    rows = [" ".join(str(int(v)) for v in row) for row in img]
    return f"P2\n{w} {h}\n255\n" + "\n".join(rows) + "\n"


def to_gray(v) -> np.ndarray:
    """Affine map of ``v`` onto 0..255 (min -> 0, max -> 255); constant -> 128."""
    v = np.asarray(v, dtype=float)
    lo, hi = v.min(), v.max()
    if hi == lo:
        return np.full(v.shape, 128, dtype=np.int64)
    return np.rint(255.0 * (v - lo) / (hi - lo)).astype(np.int64)


def read_pgm(path) -> np.ndarray:
    with open(path) as fh:
        toks = [t for line in fh for t in line.split("#")[0].split()]
    if not toks or toks[0] != "P2":
        raise FormatError(f"{path}: not a plain PGM (P2) file")
    w, h, maxval = int(toks[1]), int(toks[2]), int(toks[3])
    data = np.array([int(t) for t in toks[4:]], dtype=np.int64)
    if data.size != w * h or data.max(initial=0) > maxval:
        raise FormatError(f"{path}: expected {w * h} pixels <= {maxval}")
    return data.reshape(h, w)


def render_dictionary(model: FactorModel, grid: GridSpec, prefix) -> list[Path]:
    """One P2 PGM per element, in decreasing explained-energy order.

    Files are named ``<prefix>_<rank>.pgm`` with a 3-digit rank.
    """
    from .pipeline import order_by_explained_variance

    if len(grid.dims) != 2:
        raise ValueError(f"rendering needs a 2-D grid, got {len(grid.dims)}-D (unsupported geometry)")
    if grid.p != model.V.shape[0]:
        raise ValueError(f"grid has {grid.p} cells, dictionary has {model.V.shape[0]} rows")
    ordered, _ = order_by_explained_variance(model)
    h, w = grid.dims
    paths = []
    for i in range(ordered.rank):
        img = to_gray(ordered.V[:, i]).reshape(h, w)
        path = Path(f"{prefix}_{i:03d}.pgm")
        atomic_write(path, format_pgm(img))
        paths.append(path)
    return paths
