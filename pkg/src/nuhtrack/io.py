"""File formats. Frames are 1-based on disk and 0-based in memory.

Parsers are strict: a malformed line raises :class:`FormatError` naming the line.
Lines starting with ``#`` are header comments; they are returned to the caller
and written back verbatim so canonical files round-trip byte for byte.
"""
from __future__ import annotations

import json
import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import __version__
from .config import Config
from .model import Detection, NonUniformHypergraph, PointTrajectory, WeightVector

EMB_MAGIC = b"NTEMB1"
HIST_MAGIC = b"NTHIS1"
GRAPH_MAGIC = "# nuhtrack-hypergraph v1"
WEIGHTS_VERSION = 1


class FormatError(ValueError):
    def __init__(self, msg, path=None, line=None):
        where = f"{path}:{line}: " if line is not None else (f"{path}: " if path else "")
        super().__init__(where + msg)
        self.path, self.line = path, line


class DimensionMismatchError(FormatError):
    pass


def provenance(cfg: Config | None = None, extra: str = "") -> list[str]:
    """Header lines naming the tool version and config hash."""
    h = cfg.hash() if cfg is not None else "none"
    line = f"# nuhtrack {__version__} config={h}"
    return [line + (f" {extra}" if extra else "")]


def _split(path) -> tuple[list[str], list[tuple[int, str]]]:
    header, body = [], []
    text = Path(path).read_text()
    for no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        if line.startswith("#"):
            if body:
                raise FormatError("comment after data", path, no)
            header.append(line)
        else:
            body.append((no, line))
    return header, body


def _write_lines(path, header: Sequence[str], lines: Iterable[str]):
    with open(path, "w", newline="\n") as fh:
        for h in header:
            fh.write(h + "\n")
        for line in lines:
            fh.write(line + "\n")


# MOTChallenge ---------------------------------------------------------------

@dataclass
class MotFile:
    rows: list[tuple[int, Detection]]  # (identity or -1, detection)
    header: list[str] = field(default_factory=list)

    @property
    def detections(self) -> list[Detection]:
        return [d for _, d in self.rows]


def read_mot(path) -> MotFile:
    """``frame,id,left,top,width,height,conf,x,y,z`` per line; detection_id = data line index."""
    header, body = _split(path)
    rows = []
    for k, (no, line) in enumerate(body):
        parts = line.split(",")
        if len(parts) != 10:
            raise FormatError(f"expected 10 fields, got {len(parts)}", path, no)
        try:
            frame, ident = int(parts[0]), int(float(parts[1]))
            left, top, w, h, conf = (float(x) for x in parts[2:7])
            [float(x) for x in parts[7:]]
        except ValueError as e:
            raise FormatError(str(e), path, no) from None
        if frame < 1:
            raise FormatError(f"frame must be >= 1, got {frame}", path, no)
        try:
            d = Detection(frame - 1, left + w / 2.0, top + h / 2.0, w, h, conf, detection_id=k)
        except ValueError as e:
            raise FormatError(str(e), path, no) from None
        rows.append((ident, d))
    return MotFile(rows, header)


def format_mot_row(ident: int, d: Detection) -> str:
    left, top, w, h = d.tlwh
    return f"{d.frame + 1},{ident},{left:.2f},{top:.2f},{w:.2f},{h:.2f},{d.confidence:.4f},-1,-1,-1"


def write_mot(path, rows: Iterable[tuple[int, Detection]], header: Sequence[str] = ()):
    """Rows are written sorted by (frame, identity)."""
    ordered = sorted(rows, key=lambda r: (r[1].frame, r[0]))
    _write_lines(path, header, (format_mot_row(i, d) for i, d in ordered))


# binary feature tables ------------------------------------------------------

def write_features(path, table: np.ndarray, magic: bytes = EMB_MAGIC):
    table = np.asarray(table, dtype="<f4")
    if table.ndim != 2:
        raise ValueError("feature table must be 2-D")
    with open(path, "wb") as fh:
        fh.write(magic)
        fh.write(struct.pack("<II", table.shape[0], table.shape[1]))
        fh.write(table.tobytes())


def read_features(path, magic: bytes = EMB_MAGIC) -> np.ndarray:
    data = Path(path).read_bytes()
    if data[:len(magic)] != magic:
        raise FormatError(f"bad magic {data[:len(magic)]!r}, expected {magic!r}", path)
    off = len(magic)
    if len(data) < off + 8:
        raise FormatError("truncated header", path)
    count, dim = struct.unpack("<II", data[off:off + 8])
    body = data[off + 8:]
    if len(body) != count * dim * 4:
        raise DimensionMismatchError(f"payload holds {len(body)} bytes, header promises {count}x{dim} floats", path)
    return np.frombuffer(body, dtype="<f4").reshape(count, dim).astype(np.float64)


def attach_features(dets: Sequence[Detection], embeddings: np.ndarray | None = None,
                    histograms: np.ndarray | None = None) -> list[Detection]:
    from dataclasses import replace
    for name, table in (("embeddings", embeddings), ("histograms", histograms)):
        if table is not None and len(table) != len(dets):
            raise DimensionMismatchError(f"{name} hold {len(table)} rows for {len(dets)} detections")
    out = []
    for k, d in enumerate(dets):
        kw = {}
        if embeddings is not None:
            kw["embedding"] = embeddings[k]
        if histograms is not None:
            kw["histogram"] = histograms[k]
        out.append(replace(d, **kw) if kw else d)
    return out


# point trajectories ---------------------------------------------------------

_POINT_DTYPE = [("t", "<i8"), ("f", "<i8"), ("x", "<f8"), ("y", "<f8")]


def _read_points_fast(body) -> list[PointTrajectory] | None:
    # vectorised path for well-formed files; None sends the caller to the line-by-line parser
    if not body:
        return []
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            arr = np.loadtxt([line for _, line in body], delimiter=",", dtype=_POINT_DTYPE, ndmin=1)
    except (ValueError, Warning):
        return None
    t, f = arr["t"], arr["f"]
    dt, df = np.diff(t), np.diff(f)
    if np.any(f < 1) or np.any((dt < 0) | ((dt == 0) & (df <= 0))):
        return None
    cuts = np.flatnonzero(dt) + 1
    bounds = np.concatenate([[0], cuts, [len(t)]])
    if np.any(np.diff(bounds) < 2):
        return None
    return [PointTrajectory(int(t[a]), f[a:b] - 1, arr["x"][a:b], arr["y"][a:b])
            for a, b in zip(bounds[:-1], bounds[1:])]


def read_points(path) -> list[PointTrajectory]:
    """``trajectory_id,frame,x,y`` sorted by (trajectory_id, frame)."""
    _, body = _split(path)
    fast = _read_points_fast(body)
    if fast is not None:
        return fast
    groups: dict[int, list] = {}
    order = []
    last_key = None
    for no, line in body:
        parts = line.split(",")
        if len(parts) != 4:
            raise FormatError(f"expected 4 fields, got {len(parts)}", path, no)
        try:
            tid, frame, x, y = int(parts[0]), int(parts[1]), float(parts[2]), float(parts[3])
        except ValueError as e:
            raise FormatError(str(e), path, no) from None
        if frame < 1:
            raise FormatError(f"frame must be >= 1, got {frame}", path, no)
        key = (tid, frame)
        if last_key is not None and key <= last_key:
            raise FormatError("rows must be sorted by (trajectory_id, frame) without repeats", path, no)
        last_key = key
        if tid not in groups:
            groups[tid] = []
            order.append(tid)
        groups[tid].append((frame - 1, x, y))
    out = []
    for tid in order:
        rows = groups[tid]
        if len(rows) < 2:
            raise FormatError(f"trajectory {tid} has fewer than 2 samples", path)
        f, x, y = zip(*rows)
        out.append(PointTrajectory(tid, f, x, y))
    return out


def write_points(path, trajectories: Iterable[PointTrajectory], header: Sequence[str] = ()):
    def lines():
        for tr in sorted(trajectories, key=lambda t: t.trajectory_id):
            for f, x, y in zip(tr.frames, tr.xs, tr.ys):
                yield f"{tr.trajectory_id},{int(f) + 1},{x:.2f},{y:.2f}"
    _write_lines(path, header, lines())


# hypergraph dump ------------------------------------------------------------

def write_graph(path, G: NonUniformHypergraph, header: Sequence[str] = ()):
    def lines():
        yield f"n={G.n} D={G.max_degree} arity=" + ",".join(str(G.arity[d]) for d in range(1, G.max_degree + 1))
        for d in range(1, G.max_degree + 1):
            for t in sorted(G.edges[d]):
                vals = ",".join(repr(float(x)) for x in G.edges[d][t])
                yield f"{d}," + ",".join(str(v) for v in t) + "," + vals
    _write_lines(path, [GRAPH_MAGIC, *header], lines())


def read_graph(path) -> NonUniformHypergraph:
    header, body = _split(path)
    if not header or header[0] != GRAPH_MAGIC:
        raise FormatError(f"missing '{GRAPH_MAGIC}' header", path, 1)
    if not body:
        raise FormatError("missing size line", path)
    no, first = body[0]
    try:
        fields_ = dict(kv.split("=", 1) for kv in first.split())
        n, D = int(fields_["n"]), int(fields_["D"])
        arity = [int(x) for x in fields_["arity"].split(",")]
    except (KeyError, ValueError) as e:
        raise FormatError(f"bad size line: {e}", path, no) from None
    if len(arity) != D:
        raise FormatError(f"arity lists {len(arity)} degrees, D={D}", path, no)
    G = NonUniformHypergraph(n, D, {d + 1: a for d, a in enumerate(arity)})
    for no, line in body[1:]:
        parts = line.split(",")
        try:
            d = int(parts[0])
            if not 1 <= d <= D:
                raise ValueError(f"degree {d} outside 1..{D}")
            if len(parts) != 1 + d + arity[d - 1]:
                raise ValueError(f"degree-{d} line needs {1 + d + arity[d - 1]} fields, got {len(parts)}")
            nodes = [int(x) for x in parts[1:1 + d]]
            if nodes != sorted(nodes):
                raise ValueError("node ids must be ascending")
            vals = [float(x) for x in parts[1 + d:]]
            if tuple(nodes) in G.edges[d]:
                raise ValueError(f"duplicate edge {nodes}")
            G.add_edge(nodes, vals)
        except ValueError as e:
            raise FormatError(str(e), path, no) from None
    return G


# weights --------------------------------------------------------------------

def write_weights(path, W: WeightVector, config_hash: str = "none", extra: Sequence[str] = ()):
    head = [f"# version: {WEIGHTS_VERSION}", f"# tool: nuhtrack {__version__}", f"# config: {config_hash}", *extra]
    lines = (f"{d + 1}: " + " ".join(repr(float(x)) for x in v) for d, v in enumerate(W.per_degree))
    _write_lines(path, head, lines)


def read_weights(path) -> tuple[WeightVector, dict]:
    header, body = _split(path)
    meta = {}
    for h in header:
        if ":" in h:
            k, v = h[1:].split(":", 1)
            meta[k.strip()] = v.strip()
    per = []
    for no, line in body:
        try:
            d, rest = line.split(":", 1)
            if int(d) != len(per) + 1:
                raise ValueError(f"expected degree {len(per) + 1}, got {d}")
            vals = [float(x) for x in rest.split()]
            if not vals:
                raise ValueError("no weight components")
        except ValueError as e:
            raise FormatError(str(e), path, no) from None
        per.append(vals)
    if not per:
        raise FormatError("no weights", path)
    return WeightVector(per), meta


# config ---------------------------------------------------------------------

def read_config(path) -> Config:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise FormatError(f"invalid JSON: {e.msg}", path, e.lineno) from None
    try:
        return Config.from_dict(data)
    except (TypeError, ValueError) as e:
        raise FormatError(str(e), path) from None


def write_config(path, cfg: Config):
    Path(path).write_text(cfg.to_json() + "\n")


# search output ----------------------------------------------------------------

def write_structures(path, structures, header: Sequence[str] = ()):
    """``rank,theta,start,converged,node ids (space separated)``."""
    def lines():
        yield "rank,theta,start,converged,nodes"
        for k, s in enumerate(structures, start=1):
            nodes = " ".join(str(v) for v in sorted(s.support))
            yield f"{k},{s.theta!r},{s.start},{int(s.converged)},{nodes}"
    _write_lines(path, header, lines())


def write_report(path_base, summary: dict, header: Sequence[str] = ()):
    """Write ``<base>.json`` and a delimited ``<base>.csv`` of metric,value rows."""
    base = Path(path_base)
    base = base.with_suffix("") if base.suffix in (".json", ".csv") else base
    meta = [h.lstrip("# ") for h in header]
    Path(str(base) + ".json").write_text(json.dumps({"meta": meta, "metrics": summary}, sort_keys=True, indent=2) + "\n")
    _write_lines(str(base) + ".csv", header,
                 ["metric,value"] + [f"{k},{summary[k]!r}" for k in sorted(summary)])
    return base
