"""File formats: embeddings, kernels, masks, labels, game instances, reports.

Binary layouts (all little-endian, shared magic/version scheme):

  embeddings  "MVNE" | version u8 = 1 | n u64 | d u64 | n*d f64 row-major
              | label flag u8 | if flag == 1: n i32 labels
  kernel      "MVNE" | version u8 = 1 | n u64 | n*n f64 row-major
              | kind u8 (0 linear, 1 rbf, 2 cosine, 3 precomputed)
              | if kind == 1: bandwidth f64 | normalized u8

Text formats:

  embeddings CSV   optional header of column names (labels present iff the
                   last header name is "label"), then one comma-separated
                   row per sample; values round-trip via repr.
  kernel CSV       optional metadata line "# kind=<kind> bandwidth=<b>
                   normalized=<0|1>", then n rows of n comma-separated values.
  mask             header "# mvne-mask v1 n=<n> include_diagonal=<0|1>",
                   then sorted lines "i j value".
  labels           optional header "# mvne-labels v1 n=<n>", one integer
                   per line.
  game instance    JSON with schema "mvne-instance/1", type "polytope"
                   (eps, vertices) or "constraints" (observables, targets).
"""

from __future__ import annotations

import json
import math
import struct
import warnings
from pathlib import Path

import numpy as np

from .completion import ObservationMask
from .games import ConstraintSet, PolytopeAmbiguitySet
from .kernels import KERNEL_KINDS, EmbeddingMatrix, KernelMatrix
from .spectral import DensityMatrix, EpsilonFloor

MAGIC = b"MVNE"
FORMAT_VERSION = 1

_KIND_CODES = {"linear": 0, "rbf": 1, "cosine": 2, "precomputed": 3}
_KIND_NAMES = {v: k for k, v in _KIND_CODES.items()}


class ParseError(ValueError):
    """Malformed input file; the message carries the line or byte offset."""


class NonFinite(ValueError):
    """NaN or infinity encountered in a data file."""


class DuplicatePair(ValueError):
    """A mask file lists the same pair twice."""


class OutOfRange(ValueError):
    """An index in a file is outside [0, n)."""


class AsymmetryWarning(UserWarning):
    """Loaded kernel deviated from symmetry by more than 1e-8."""


def _is_binary(path) -> bool:
    with open(path, "rb") as fh:
        return fh.read(4) == MAGIC


def _fmt_float(x: float) -> str:
    return repr(float(x))


# ---------------------------------------------------------------------------
# Embeddings
# ---------------------------------------------------------------------------


def save_embeddings(emb: EmbeddingMatrix, path, fmt: str = "binary") -> None:
    path = Path(path)
    if fmt == "binary":
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<B", FORMAT_VERSION))
            fh.write(struct.pack("<QQ", emb.n, emb.d))
            fh.write(emb.rows.astype("<f8").tobytes(order="C"))
            if emb.labels is not None:
                fh.write(struct.pack("<B", 1))
                fh.write(emb.labels.astype("<i4").tobytes(order="C"))
            else:
                fh.write(struct.pack("<B", 0))
    elif fmt == "csv":
        with open(path, "w") as fh:
            names = [f"x{i}" for i in range(emb.d)]
            if emb.labels is not None:
                names.append("label")
            fh.write(",".join(names) + "\n")
            for i in range(emb.n):
                cells = [_fmt_float(v) for v in emb.rows[i]]
                if emb.labels is not None:
                    cells.append(str(int(emb.labels[i])))
                fh.write(",".join(cells) + "\n")
    else:
        raise ValueError(f"unknown format {fmt!r}")


def _load_embeddings_binary(path) -> EmbeddingMatrix:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise ParseError(f"{path}: bad magic bytes at offset 0")
    if len(raw) < 21:
        raise ParseError(f"{path}: truncated header at offset {len(raw)}")
    version = raw[4]
    if version != FORMAT_VERSION:
        raise ParseError(f"{path}: unsupported format version {version}")
    n, d = struct.unpack_from("<QQ", raw, 5)
    offset = 21
    need = n * d * 8
    if len(raw) < offset + need + 1:
        raise ParseError(f"{path}: truncated data at offset {len(raw)}")
    rows = np.frombuffer(raw, dtype="<f8", count=n * d, offset=offset)
    rows = rows.reshape(n, d).astype(float)
    offset += need
    flag = raw[offset]
    offset += 1
    labels = None
    if flag == 1:
        if len(raw) < offset + 4 * n:
            raise ParseError(f"{path}: truncated labels at offset {len(raw)}")
        labels = np.frombuffer(raw, dtype="<i4", count=n, offset=offset).astype(int)
    elif flag != 0:
        raise ParseError(f"{path}: bad label flag {flag} at offset {offset - 1}")
    if not np.all(np.isfinite(rows)):
        raise NonFinite(f"{path}: non-finite embedding values")
    return EmbeddingMatrix(rows, labels)


def _load_embeddings_csv(path) -> EmbeddingMatrix:
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise ParseError(f"{path}: empty file")
    start = 0
    has_labels = False
    first = lines[0].split(",")
    try:
        [float(c) for c in first]
    except ValueError:
        start = 1
        has_labels = first[-1].strip().lower() == "label"
    rows, labels = [], []
    for ln, line in enumerate(lines[start:], start=start + 1):
        if not line.strip():
            continue
        cells = line.split(",")
        try:
            if has_labels:
                rows.append([float(c) for c in cells[:-1]])
                labels.append(int(cells[-1]))
            else:
                rows.append([float(c) for c in cells])
        except ValueError as exc:
            raise ParseError(f"{path}: line {ln}: {exc}") from exc
    if not rows:
        raise ParseError(f"{path}: no data rows")
    rows = np.array(rows, dtype=float)
    if not np.all(np.isfinite(rows)):
        raise NonFinite(f"{path}: non-finite embedding values")
    return EmbeddingMatrix(rows, labels if has_labels else None)


def load_embeddings(path) -> EmbeddingMatrix:
    """Load an embedding matrix from binary or CSV (auto-detected)."""
    if _is_binary(path):
        return _load_embeddings_binary(path)
    return _load_embeddings_csv(path)


# ---------------------------------------------------------------------------
# Kernels
# ---------------------------------------------------------------------------


def save_kernel(k: KernelMatrix, path, fmt: str = "binary") -> None:
    path = Path(path)
    if fmt == "binary":
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<B", FORMAT_VERSION))
            fh.write(struct.pack("<Q", k.n))
            fh.write(k.mat.astype("<f8").tobytes(order="C"))
            fh.write(struct.pack("<B", _KIND_CODES[k.kind]))
            if k.kind == "rbf":
                fh.write(struct.pack("<d", k.bandwidth))
            fh.write(struct.pack("<B", 1 if k.normalized else 0))
    elif fmt == "csv":
        with open(path, "w") as fh:
            bw = "" if k.bandwidth is None else f" bandwidth={_fmt_float(k.bandwidth)}"
            fh.write(f"# kind={k.kind}{bw} normalized={1 if k.normalized else 0}\n")
            for i in range(k.n):
                fh.write(",".join(_fmt_float(v) for v in k.mat[i]) + "\n")
    else:
        raise ValueError(f"unknown format {fmt!r}")


def _symmetrize_loaded(mat: np.ndarray, path) -> np.ndarray:
    asym = float(np.max(np.abs(mat - mat.T))) if mat.size else 0.0
    if asym > 1e-8:
        warnings.warn(f"{path}: max asymmetry {asym:.3e} symmetrized away",
                      AsymmetryWarning, stacklevel=3)
    return (mat + mat.T) / 2.0


def _load_kernel_binary(path) -> KernelMatrix:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise ParseError(f"{path}: bad magic bytes at offset 0")
    version = raw[4]
    if version != FORMAT_VERSION:
        raise ParseError(f"{path}: unsupported format version {version}")
    (n,) = struct.unpack_from("<Q", raw, 5)
    offset = 13
    if len(raw) < offset + n * n * 8 + 2:
        raise ParseError(f"{path}: truncated data at offset {len(raw)}")
    mat = np.frombuffer(raw, dtype="<f8", count=n * n, offset=offset)
    mat = mat.reshape(n, n).astype(float)
    offset += n * n * 8
    kind_code = raw[offset]
    offset += 1
    if kind_code not in _KIND_NAMES:
        raise ParseError(f"{path}: unknown kernel kind code {kind_code}")
    kind = _KIND_NAMES[kind_code]
    bandwidth = None
    if kind == "rbf":
        (bandwidth,) = struct.unpack_from("<d", raw, offset)
        offset += 8
    if len(raw) < offset + 1:
        raise ParseError(f"{path}: truncated metadata at offset {len(raw)}")
    normalized = raw[offset] == 1
    if not np.all(np.isfinite(mat)):
        raise NonFinite(f"{path}: non-finite kernel values")
    mat = _symmetrize_loaded(mat, path)
    return KernelMatrix(mat, kind=kind, bandwidth=bandwidth, normalized=normalized)


def _load_kernel_csv(path) -> KernelMatrix:
    lines = Path(path).read_text().splitlines()
    kind, bandwidth, normalized = "precomputed", None, False
    start = 0
    if lines and lines[0].startswith("#"):
        start = 1
        for token in lines[0][1:].split():
            if token.startswith("kind="):
                kind = token[5:]
                if kind not in KERNEL_KINDS:
                    raise ParseError(f"{path}: unknown kind {kind!r}")
            elif token.startswith("bandwidth="):
                bandwidth = float(token[10:])
            elif token.startswith("normalized="):
                normalized = token[11:] == "1"
    rows = []
    for ln, line in enumerate(lines[start:], start=start + 1):
        if not line.strip():
            continue
        try:
            rows.append([float(c) for c in line.split(",")])
        except ValueError as exc:
            raise ParseError(f"{path}: line {ln}: {exc}") from exc
    if not rows:
        raise ParseError(f"{path}: no data rows")
    mat = np.array(rows, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ParseError(f"{path}: expected a square matrix, got {mat.shape}")
    if not np.all(np.isfinite(mat)):
        raise NonFinite(f"{path}: non-finite kernel values")
    mat = _symmetrize_loaded(mat, path)
    return KernelMatrix(mat, kind=kind, bandwidth=bandwidth, normalized=normalized)


def load_kernel(path) -> KernelMatrix:
    """Load a kernel matrix from binary or CSV (auto-detected)."""
    if _is_binary(path):
        return _load_kernel_binary(path)
    return _load_kernel_csv(path)


# ---------------------------------------------------------------------------
# Masks and labels
# ---------------------------------------------------------------------------


def save_mask(mask: ObservationMask, path) -> None:
    with open(path, "w") as fh:
        fh.write(f"# mvne-mask v1 n={mask.n} "
                 f"include_diagonal={1 if mask.include_diagonal else 0}\n")
        for (i, j), v in zip(mask.pairs, mask.values):
            fh.write(f"{i} {j} {_fmt_float(v)}\n")


def load_mask(path) -> ObservationMask:
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith("# mvne-mask v1"):
        raise ParseError(f"{path}: missing mask header")
    n = None
    include_diagonal = True
    for token in lines[0][1:].split():
        if token.startswith("n="):
            n = int(token[2:])
        elif token.startswith("include_diagonal="):
            include_diagonal = token.split("=", 1)[1] == "1"
    if n is None:
        raise ParseError(f"{path}: header missing n=")
    pairs, values = [], []
    seen = set()
    for ln, line in enumerate(lines[1:], start=2):
        if not line.strip() or line.startswith("#"):
            continue
        cells = line.split()
        if len(cells) != 3:
            raise ParseError(f"{path}: line {ln}: expected 'i j value'")
        try:
            i, j, v = int(cells[0]), int(cells[1]), float(cells[2])
        except ValueError as exc:
            raise ParseError(f"{path}: line {ln}: {exc}") from exc
        if not 0 <= i <= j < n:
            raise OutOfRange(f"{path}: line {ln}: pair ({i}, {j}) outside n={n}")
        if (i, j) in seen:
            raise DuplicatePair(f"{path}: line {ln}: pair ({i}, {j}) repeated")
        seen.add((i, j))
        pairs.append((i, j))
        values.append(v)
    return ObservationMask(n, pairs, values, include_diagonal=include_diagonal)


def save_labels(labels, path) -> None:
    labels = np.asarray(labels, dtype=int)
    with open(path, "w") as fh:
        fh.write(f"# mvne-labels v1 n={labels.size}\n")
        for v in labels:
            fh.write(f"{int(v)}\n")


def load_labels(path) -> np.ndarray:
    lines = Path(path).read_text().splitlines()
    out = []
    for ln, line in enumerate(lines, start=1):
        if not line.strip() or line.startswith("#"):
            continue
        try:
            out.append(int(line.strip()))
        except ValueError as exc:
            raise ParseError(f"{path}: line {ln}: {exc}") from exc
    if not out:
        raise ParseError(f"{path}: no labels")
    return np.array(out, dtype=int)


# ---------------------------------------------------------------------------
# Game instances
# ---------------------------------------------------------------------------


def save_instance(obj, path) -> None:
    """Serialize a PolytopeAmbiguitySet or ConstraintSet to JSON."""
    if isinstance(obj, PolytopeAmbiguitySet):
        doc = {
            "schema": "mvne-instance/1",
            "type": "polytope",
            "eps": obj.eps.eps,
            "vertices": [v.mat.tolist() for v in obj.vertices],
        }
    elif isinstance(obj, ConstraintSet):
        doc = {
            "schema": "mvne-instance/1",
            "type": "constraints",
            "observables": [a.mat.tolist() for a in obj.observables],
            "targets": obj.targets.tolist(),
        }
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def load_instance(path):
    """Load a polytope or constraint-set instance from JSON."""
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    if doc.get("schema") != "mvne-instance/1":
        raise ParseError(f"{path}: missing or unknown schema")
    kind = doc.get("type")
    if kind == "polytope":
        eps = EpsilonFloor(float(doc["eps"]))
        vertices = [DensityMatrix(np.array(v, dtype=float))
                    for v in doc["vertices"]]
        return PolytopeAmbiguitySet(vertices, eps)
    if kind == "constraints":
        return ConstraintSet([np.array(a, dtype=float) for a in doc["observables"]],
                             doc["targets"])
    raise ParseError(f"{path}: unknown instance type {kind!r}")


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


def _render_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        x = float(v)
        if not math.isfinite(x):
            raise ValueError(f"non-finite report value {x!r}")
        return repr(x)
    if isinstance(v, (list, tuple, np.ndarray)):
        return ", ".join(_render_value(x) for x in v)
    return str(v)


def render_report(command: str, sections) -> str:
    """Render a report as versioned, diffable key-value text.

    ``sections`` is a list of (name, content) with content either a mapping
    or a sequence (rendered with integer keys). Identical inputs render to
    identical bytes.
    """
    lines = ["mvne-report v1", f"command = {command}"]
    for name, content in sections:
        lines.append("")
        lines.append(f"[{name}]")
        if hasattr(content, "items"):
            for key, val in content.items():
                lines.append(f"{key} = {_render_value(val)}")
        else:
            for i, val in enumerate(content):
                lines.append(f"{i} = {_render_value(val)}")
    return "\n".join(lines) + "\n"
