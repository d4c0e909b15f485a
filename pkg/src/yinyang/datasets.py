"""Convert raw citation-network dumps into the edge-list / feature-matrix formats.

Two layouts are understood:

* LINQS ``<name>.content`` (``id f1 ... fD label``) and ``<name>.cites``
  (``cited citing``), as distributed for Cora and Citeseer;
* Pubmed-Diabetes ``*.NODE.paper.tab`` and ``*.DIRECTED.cites.tab``.

Node ids are assigned in content-file order. Citations naming unknown papers
(a known quirk of the Citeseer dump) and self-citations are dropped.
"""
from __future__ import annotations

import logging
from pathlib import Path

import numpy as np

from .graph import GraphFormatError, from_edges, save_edge_list, save_features

log = logging.getLogger(__name__)


def read_linqs(content_path, cites_path):
    ids, rows = {}, []
    with open(content_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) < 3:
                raise GraphFormatError(f"{content_path}:{lineno}: expected 'id features... label'")
            if parts[0] in ids:
                raise GraphFormatError(f"{content_path}:{lineno}: duplicate paper id {parts[0]!r}")
            ids[parts[0]] = len(ids)
            rows.append([float(x) for x in parts[1:-1]])
    X = np.array(rows, dtype=np.float64)
    edges, dropped = [], 0
    with open(cites_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 2:
                raise GraphFormatError(f"{cites_path}:{lineno}: expected 'cited citing'")
            a, b = ids.get(parts[0]), ids.get(parts[1])
            if a is None or b is None:
                dropped += 1
                continue
            edges.append((a, b))
    if dropped:
        log.info("dropped %d citations to unknown papers", dropped)
    return np.array(edges, dtype=np.int64).reshape(-1, 2), X


def read_pubmed_tab(node_path, cites_path):
    with open(node_path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if len(lines) < 3:
        raise GraphFormatError(f"{node_path}: too short")
    # line 2 declares the feature vocabulary as "numeric:w-word:0.0" entries
    vocab = [f.split(":")[1] for f in lines[1].split("\t") if f.startswith("numeric:")]
    col = {w: i for i, w in enumerate(vocab)}
    ids, rows = {}, []
    for lineno, line in enumerate(lines[2:], 3):
        parts = line.split("\t")
        if not parts or not parts[0].strip():
            continue
        ids[parts[0].strip()] = len(ids)
        row = np.zeros(len(vocab))
        for f in parts[1:]:
            if "=" not in f or f.startswith(("label=", "summary=")):
                continue
            w, v = f.split("=", 1)
            if w in col:
                row[col[w]] = float(v)
        rows.append(row)
    edges = []
    with open(cites_path, encoding="utf-8") as fh:
        for line in fh.read().splitlines()[2:]:
            parts = line.split("\t")
            if len(parts) < 4:
                continue
            a = ids.get(parts[1].split(":", 1)[-1])
            b = ids.get(parts[3].split(":", 1)[-1])
            if a is not None and b is not None:
                edges.append((a, b))
    return np.array(edges, dtype=np.int64).reshape(-1, 2), np.array(rows)


def find_raw(raw_dir) -> tuple[str, Path, Path]:
    d = Path(raw_dir)
    content = sorted(d.glob("*.content"))
    if content:
        cites = content[0].with_suffix(".cites")
        if not cites.is_file():
            raise FileNotFoundError(f"{cites} not found next to {content[0]}")
        return "linqs", content[0], cites
    nodes = sorted(d.glob("*NODE.paper.tab"))
    cites = sorted(d.glob("*DIRECTED.cites.tab"))
    if nodes and cites:
        return "pubmed", nodes[0], cites[0]
    raise FileNotFoundError(f"{d}: no *.content/*.cites or Pubmed *.tab files")


def prepare(raw_dir, out_dir, name: str | None = None) -> tuple[Path, Path, int, int]:
    """Write ``<name>.edges`` and ``<name>.features`` into ``out_dir``; returns paths, n, |E|."""
    kind, a, b = find_raw(raw_dir)
    edges, X = read_linqs(a, b) if kind == "linqs" else read_pubmed_tab(a, b)
    g = from_edges(edges, len(X))
    name = name or a.name.split(".")[0].lower()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ep, fp = out / f"{name}.edges", out / f"{name}.features"
    save_edge_list(ep, g.edges())
    save_features(fp, X)
    return ep, fp, g.num_nodes, g.num_edges
