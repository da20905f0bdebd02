"""Binary model files (TNMW) and their JSON provenance sidecars.

Layout, all little-endian::

    magic "TNMW" | version u16 | topology u8 | n_features u32 | n_classes u16
    | local_dim u16 | height u16 | width u16 | permutation u32[n_features]
    | n_links u32 | (id u32, end_a i32, end_b i32, dim u32) * n_links
    | n_nodes u32 | per node: id u32, n_axes u16, link ids u32[n_axes],
                    n_entries u64, entries f64[n_entries] (row-major)
    | center i32 (-1 when unknown) | n_open u32 | open link ids u32[n_open]

Open links store ``-1`` as their second endpoint. Every variable-size
section is preceded by its length so a truncated file is always detected.
"""
from __future__ import annotations

import json
import struct

import numpy as np

from .classifier import TNClassifier
from .encoding import _atomic_write
from .errors import FormatError, ShapeError
from .network import TensorNetwork

__all__ = ["save_model", "load_model", "model_to_bytes", "model_from_bytes", "write_sidecar", "read_sidecar", "sidecar_path"]

MAGIC = b"TNMW"
VERSION = 1
_TOPOLOGIES = ("tree", "mps", "ttn")

_HEAD = struct.Struct("<4sHBIHHHH")
_LINK = struct.Struct("<IiiI")


def model_to_bytes(model: TNClassifier) -> bytes:
    net = model.net
    h, w = model.image_shape
    d = net.link(net.feature_links[0]).dim if net.feature_links else 0
    out = [_HEAD.pack(MAGIC, VERSION, _TOPOLOGIES.index(net.topology), net.n_features,
                      model.n_classes, d, h, w)]
    out.append(np.asarray(model.permutation, dtype="<u4").tobytes())
    links = [net.links[k] for k in sorted(net.links)]
    out.append(struct.pack("<I", len(links)))
    for link in links:
        a, b = link.endpoints
        out.append(_LINK.pack(link.id, a, -1 if b is None else b, link.dim))
    out.append(struct.pack("<I", len(net.nodes)))
    for node in net.nodes:
        ax = net.node_links(node)
        t = net.tensor(node)
        out.append(struct.pack("<IH", node, len(ax)))
        out.append(np.asarray(ax, dtype="<u4").tobytes())
        out.append(struct.pack("<Q", t.size))
        out.append(np.ascontiguousarray(t, dtype="<f8").tobytes())
    out.append(struct.pack("<i", -1 if net.center is None else net.center))
    out.append(struct.pack("<I", len(net.open_links)))
    out.append(np.asarray(net.open_links, dtype="<u4").tobytes())
    return b"".join(out)


class _Reader:
    def __init__(self, raw: bytes):
        self.raw = raw
        self.off = 0

    def take(self, n: int, what: str) -> bytes:
        if self.off + n > len(self.raw):
            raise FormatError("truncated payload", f"file ends inside {what}")
        chunk = self.raw[self.off:self.off + n]
        self.off += n
        return chunk

    def unpack(self, fmt: struct.Struct | str, what: str):
        s = fmt if isinstance(fmt, struct.Struct) else struct.Struct(fmt)
        return s.unpack(self.take(s.size, what))

    def array(self, dtype: str, count: int, what: str) -> np.ndarray:
        dt = np.dtype(dtype)
        return np.frombuffer(self.take(dt.itemsize * count, what), dtype=dt).copy()


def model_from_bytes(raw: bytes) -> TNClassifier:
    r = _Reader(raw)
    if len(raw) >= 4 and raw[:4] != MAGIC:
        raise FormatError("bad magic", f"expected {MAGIC!r}, found {raw[:4]!r}")
    magic, version, topo, n_features, n_classes, local_dim, h, w = r.unpack(_HEAD, "header")
    if version != VERSION:
        raise FormatError("unsupported version", f"TNMW version {version}")
    if topo >= len(_TOPOLOGIES):
        raise FormatError("malformed header", f"unknown topology tag {topo}")
    perm = r.array("<u4", n_features, "permutation")
    (n_links,) = r.unpack("<I", "link table")
    table = {}
    for _ in range(n_links):
        lid, a, b, dim = r.unpack(_LINK, "link table")
        table[lid] = ((a, None if b < 0 else b), dim)
    (n_nodes,) = r.unpack("<I", "node table")
    tensors, axes = {}, {}
    for _ in range(n_nodes):
        node, n_axes = r.unpack("<IH", "node table")
        ax = tuple(int(x) for x in r.array("<u4", n_axes, f"axes of node {node}"))
        (size,) = r.unpack("<Q", f"payload length of node {node}")
        shape = []
        for lid in ax:
            if lid not in table:
                raise FormatError("graph validation", f"node {node} uses undeclared link {lid}")
            shape.append(table[lid][1])
        if int(np.prod(shape, dtype=np.int64)) != size:
            raise FormatError("graph validation", f"node {node}: payload size {size} does not match its link dims")
        data = r.array("<f8", size, f"payload of node {node}").astype(np.float64)
        if node in tensors:
            raise FormatError("graph validation", f"node {node} appears twice")
        tensors[node] = data.reshape(shape)
        axes[node] = ax
    (center,) = r.unpack("<i", "center")
    (n_open,) = r.unpack("<I", "open links")
    open_links = tuple(int(x) for x in r.array("<u4", n_open, "open links"))
    if r.off != len(raw):
        raise FormatError("malformed header", "trailing bytes after the model")
    try:
        net = TensorNetwork(tensors, axes, open_links, None if center < 0 else center, _TOPOLOGIES[topo])
    except (ShapeError, ValueError, KeyError) as exc:
        raise FormatError("graph validation", str(exc)) from exc
    for lid, (ends, dim) in table.items():
        if lid not in net.links:
            raise FormatError("graph validation", f"dangling link {lid}")
        link = net.link(lid)
        if link.dim != dim or set(link.endpoints) != set(ends):
            raise FormatError("graph validation", f"link {lid} table entry disagrees with the node axes")
    if len(table) != len(net.links):
        raise FormatError("graph validation", "link table is incomplete")
    if net.feature_links and net.link(net.feature_links[0]).dim != local_dim:
        raise FormatError("graph validation", "local dimension disagrees with the feature links")
    try:
        return TNClassifier(net, tuple(int(p) for p in perm), int(n_classes), (int(h), int(w)))
    except ShapeError as exc:
        raise FormatError("graph validation", str(exc)) from exc


def save_model(model: TNClassifier, path, provenance: dict | None = None) -> None:
    """Write ``model`` atomically; with ``provenance`` also write the sidecar."""
    _atomic_write(path, model_to_bytes(model))
    if provenance is not None:
        write_sidecar(path, provenance)


def load_model(path) -> TNClassifier:
    with open(path, "rb") as fh:
        return model_from_bytes(fh.read())


def sidecar_path(path) -> str:
    return f"{path}.json"


def write_sidecar(path, provenance: dict) -> None:
    text = json.dumps(provenance, indent=2, sort_keys=True, default=_jsonable) + "\n"
    _atomic_write(sidecar_path(path), text.encode())


def read_sidecar(path) -> dict:
    with open(sidecar_path(path)) as fh:
        return json.load(fh)


def _jsonable(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")
