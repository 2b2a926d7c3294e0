"""Workbench config files: INI-style ``.cfg`` text or an equivalent JSON document.

See ``docs/formats.md`` for the schema.  Errors name the section, key and
line so a hand-written config can be fixed without guesswork.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .errors import ParseError, SchemaError
from .gog import Edge, GraphOfGroups, Vertex
from .groupcore import BackendSpec

VERTEX_KEYS = {"free", "center"}
EDGE_KEYS = {"source", "target", "reverse", "basis", "image"}
GRAPH_KEYS = {"name", "base", "spanning_tree"}


@dataclass
class WorkbenchConfig:
    gog: GraphOfGroups
    experiments: dict = field(default_factory=dict)
    path: str = ""
    sha256: str = ""

    def experiment(self, name: str) -> dict:
        return dict(self.experiments.get(name, {}))


def shipped_configs() -> list[str]:
    return sorted(p.name for p in resources.files("gogbench").joinpath("configs").iterdir() if p.name.endswith(".cfg"))


def resolve_config_path(path: str | Path) -> Path:
    """A file path, or the name of a config shipped with the package."""
    p = Path(path)
    if p.exists():
        return p
    shipped = resources.files("gogbench").joinpath("configs", p.name)
    if shipped.is_file():
        return Path(str(shipped))
    raise ParseError(f"config {str(path)!r} not found (shipped: {', '.join(shipped_configs())})")


def parse_config(path: str | Path, validate: bool = True) -> WorkbenchConfig:
    p = resolve_config_path(path)
    raw = p.read_bytes()
    text = raw.decode("utf-8")
    if text.lstrip().startswith("{") or p.suffix == ".json":
        doc = _load_json(text)
    else:
        doc = _load_ini(text)
    cfg = build_config(doc)
    cfg.path = str(p)
    cfg.sha256 = hashlib.sha256(raw).hexdigest()
    if validate:
        cfg.gog.require_valid()
    return cfg


def parse_config_text(text: str, validate: bool = True) -> WorkbenchConfig:
    doc = _load_json(text) if text.lstrip().startswith("{") else _load_ini(text)
    cfg = build_config(doc)
    cfg.sha256 = hashlib.sha256(text.encode()).hexdigest()
    if validate:
        cfg.gog.require_valid()
    return cfg


# -- front ends: both produce the same plain document ---------------------------


def _load_json(text: str) -> dict:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as err:
        raise ParseError(f"line {err.lineno}: {err.msg}") from None
    if not isinstance(doc, dict):
        raise SchemaError("top level must be an object")
    out = {"graph": doc.get("graph", {}), "vertices": [], "edges": [], "experiments": doc.get("experiments", {}), "lines": {}}
    for v in doc.get("vertices", []):
        v = dict(v)
        if isinstance(v.get("free"), list):
            v["free"] = " ".join(v["free"])
        out["vertices"].append(v)
    for e in doc.get("edges", []):
        e = dict(e)
        for key in ("basis", "image"):
            if isinstance(e.get(key), list):
                e[key] = ", ".join(e[key])
        out["edges"].append(e)
    return out


_SECTION = re.compile(r"^\s*\[([^\]]+)\]")
_KEY = re.compile(r"^\s*([^=:#;\s][^=:]*?)\s*[=:]")


def _line_index(text: str) -> dict:
    lines, section = {}, None
    for n, line in enumerate(text.splitlines(), 1):
        m = _SECTION.match(line)
        if m:
            section = m.group(1).strip()
            lines[(section, None)] = n
            continue
        m = _KEY.match(line)
        if m and section is not None:
            lines[(section, m.group(1).strip().lower())] = n
    return lines


def _load_ini(text: str) -> dict:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text)
    except configparser.Error as err:
        raise ParseError(str(err).replace("\n", " ")) from None
    out = {"graph": {}, "vertices": [], "edges": [], "experiments": {}, "lines": _line_index(text)}
    for sec in cp.sections():
        kind, _, ident = sec.partition(" ")
        body = dict(cp[sec])
        ident = ident.strip()
        if kind == "graph" and not ident:
            out["graph"] = body
        elif kind == "vertex" and ident:
            out["vertices"].append({"id": ident, **body, "_section": sec})
        elif kind == "edge" and ident:
            out["edges"].append({"id": ident, **body, "_section": sec})
        elif kind == "experiment" and ident:
            out["experiments"][ident] = body
        else:
            line = out["lines"].get((sec, None), "?")
            raise SchemaError(f"line {line}: unknown section [{sec}]")
    return out


# -- schema ----------------------------------------------------------------------


def build_config(doc: dict) -> WorkbenchConfig:
    errors: list[str] = []
    lines = doc.get("lines", {})

    def where(section, key=None):
        n = lines.get((section, key)) or lines.get((section, None))
        return f"line {n}: " if n else ""

    graph = doc.get("graph", {})
    for k in graph:
        if k not in GRAPH_KEYS:
            errors.append(f"{where('graph', k)}[graph] unknown key {k!r}")

    vertices = []
    backends = {}
    seen_v = set()
    for v in doc.get("vertices", []):
        sec = v.get("_section", f"vertex {v.get('id')}")
        vid = str(v.get("id", "")).strip()
        if not vid:
            errors.append(f"{where(sec)}vertex without id")
            continue
        if vid in seen_v:
            errors.append(f"{where(sec)}duplicate vertex {vid!r}")
        seen_v.add(vid)
        for k in v:
            if k not in VERTEX_KEYS | {"id", "_section"}:
                errors.append(f"{where(sec, k)}[{sec}] unknown key {k!r}")
        free = str(v.get("free", "")).split()
        center = str(v.get("center", "")).strip()
        if not free:
            errors.append(f"{where(sec, 'free')}[{sec}] needs 'free' generator names")
            continue
        try:
            b = BackendSpec.product(free, center) if center else BackendSpec.free(free)
        except ValueError as err:
            errors.append(f"{where(sec)}[{sec}] {err}")
            continue
        backends[vid] = b
        vertices.append(Vertex(vid, b))

    edges = []
    ids = [str(e.get("id", "")).strip() for e in doc.get("edges", [])]
    for e in doc.get("edges", []):
        eid = str(e.get("id", "")).strip()
        sec = e.get("_section", f"edge {eid}")
        if not eid:
            errors.append(f"{where(sec)}edge without id")
            continue
        for k in e:
            if k not in EDGE_KEYS | {"id", "_section"}:
                errors.append(f"{where(sec, k)}[{sec}] unknown key {k!r}")
        missing = [k for k in sorted(EDGE_KEYS) if not str(e.get(k, "")).strip()]
        if missing:
            errors.append(f"{where(sec)}edge {eid!r} is missing {', '.join(missing)}")
            continue
        src, dst, rev = (str(e[k]).strip() for k in ("source", "target", "reverse"))
        if rev not in ids:
            errors.append(f"{where(sec, 'reverse')}edge {eid!r} names reverse edge {rev!r}, which has no entry")
            continue
        bad = False
        for key, vtx in (("source", src), ("target", dst)):
            if vtx not in backends:
                errors.append(f"{where(sec, key)}edge {eid!r}: unknown {key} vertex {vtx!r}")
                bad = True
        if bad:
            continue
        elems = {}
        for key, vtx in (("basis", src), ("image", dst)):
            parts = [s.strip() for s in str(e[key]).split(",")]
            if len(parts) != 2:
                errors.append(f"{where(sec, key)}edge {eid!r}: '{key}' needs two comma-separated elements")
                bad = True
                continue
            try:
                elems[key] = tuple(backends[vtx].parse(s) for s in parts)
            except Exception as err:  # UnknownGenerator or ParseError
                errors.append(f"{where(sec, key)}edge {eid!r}: '{key}': {err}")
                bad = True
        if bad:
            continue
        edges.append(Edge(eid, src, dst, rev, elems["basis"], elems["image"]))

    if errors:
        raise SchemaError("config schema errors:\n  " + "\n  ".join(errors))

    tree = graph.get("spanning_tree")
    if isinstance(tree, str):
        tree = tree.replace(",", " ").split()
    gog = GraphOfGroups(
        vertices,
        edges,
        base=(str(graph["base"]).strip() if graph.get("base") else None),
        spanning_tree=tree,
        name=str(graph.get("name", "")).strip(),
    )
    return WorkbenchConfig(gog, {k: dict(v) for k, v in doc.get("experiments", {}).items()})
