"""Plain-text and binary artifact formats.

Every file starts with a version line ``#graphweld.<kind>\\t<version>``; readers
reject a missing line, another kind or an unknown version. Accounts are written
as ``<network-name>:<external-id>``; :class:`IdMap` translates between those
strings and positional :class:`AccountRef` values.
"""
from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .candidates import CandidateSet
from .factorgraph import Parameters
from .model import AccountRef, AlignedPair, GlobalSocialGraph, NetworkBuilder, NetworkCollection, Profile

VERSION = 1
MANIFEST = "manifest.txt"
TRUTH = "truth.tsv"


class FormatError(ValueError):
    """Malformed, mis-versioned or inconsistent artifact."""


def header(kind: str, version: int = VERSION) -> str:
    return f"#graphweld.{kind}\t{version}"


def _check_header(line: str, kind: str, path) -> None:
    line = line.rstrip("\n")
    if not line.startswith("#graphweld."):
        raise FormatError(f"{path}: missing version line")
    found, _, ver = line[len("#graphweld."):].partition("\t")
    if found != kind:
        raise FormatError(f"{path}: expected a {kind} file, found {found!r}")
    if ver != str(VERSION):
        raise FormatError(f"{path}: unsupported {kind} format version {ver!r}")


def _read_lines(path, kind: str) -> list[str]:
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().split("\n")
    except FileNotFoundError as e:
        raise FormatError(f"{path}: no such file") from e
    except UnicodeDecodeError as e:
        raise FormatError(f"{path}: not UTF-8") from e
    if not lines or not lines[0]:
        raise FormatError(f"{path}: empty file")
    _check_header(lines[0], kind, path)
    return [ln for ln in lines[1:] if ln]


def _write_lines(path, kind: str, rows: Iterable[str]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(header(kind) + "\n")
        for r in rows:
            fh.write(r + "\n")
    os.replace(tmp, path)


def _fields(line: str, n: int, path, lineno: int) -> list[str]:
    parts = line.split("\t")
    if len(parts) != n:
        raise FormatError(f"{path}:{lineno}: expected {n} tab-separated fields, got {len(parts)}")
    return parts


def _float(text: str, path, lineno: int) -> float:
    try:
        return float(text)
    except ValueError as e:
        raise FormatError(f"{path}:{lineno}: bad number {text!r}") from e


def _num(x) -> str:
    # shortest round-tripping text of a float
    return repr(float(x))


def digest(path) -> str:
    h = hashlib.sha256()
    p = Path(path)
    files = sorted(q for q in p.rglob("*") if q.is_file()) if p.is_dir() else [p]
    for q in files:
        if p.is_dir():
            h.update(str(q.relative_to(p)).encode())
        with open(q, "rb") as fh:
            for block in iter(lambda: fh.read(1 << 20), b""):
                h.update(block)
    return h.hexdigest()


class IdMap:
    """Network names and external account ids, in positional order."""

    def __init__(self, names: Sequence[str], ids: Sequence[Sequence[str]]):
        if len(names) != len(ids):
            raise ValueError("one id list per network is required")
        if len(set(names)) != len(names) or any(":" in n or "\t" in n or not n for n in names):
            raise ValueError(f"bad network names {list(names)}")
        self.names = list(names)
        self.ids = [list(x) for x in ids]
        self._net = {n: k for k, n in enumerate(self.names)}
        self._local = []
        for k, xs in enumerate(self.ids):
            d = {}
            for i, x in enumerate(xs):
                if not x or "\t" in x or "\n" in x:
                    raise ValueError(f"bad external id {x!r} in network {self.names[k]}")
                if x in d:
                    raise ValueError(f"duplicate external id {x!r} in network {self.names[k]}")
                d[x] = i
            self._local.append(d)

    @classmethod
    def default(cls, collection: NetworkCollection) -> "IdMap":
        return cls([f"net{n.id}" for n in collection], [[f"acct{i:06d}" for i in range(len(n))] for n in collection])

    def ref(self, text: str) -> AccountRef:
        net, sep, ext = text.partition(":")
        if not sep:
            raise KeyError(f"account {text!r} is not of the form network:id")
        k = self._net.get(net)
        if k is None:
            raise KeyError(f"unknown network {net!r}")
        i = self._local[k].get(ext)
        if i is None:
            raise KeyError(f"unknown account {text!r}")
        return AccountRef(k, i)

    def text(self, ref: AccountRef) -> str:
        return f"{self.names[ref.network]}:{self.ids[ref.network][ref.local_id]}"


# --- networks ---

def write_collection(directory, collection: NetworkCollection, ids: IdMap | None = None,
                     truth: Iterable[tuple[AccountRef, AccountRef]] | None = None) -> IdMap:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    ids = ids or IdMap.default(collection)
    rows = []
    for net in collection:
        name = ids.names[net.id]
        prof, edges = f"{name}.profiles.jsonl", f"{name}.edges.tsv"
        rows.append(f"{name}\t{prof}\t{edges}")
        _write_lines(d / prof, "profiles", (
            json.dumps({"id": ids.ids[net.id][i], "name": p.name, "strong": dict(sorted(p.strong_ids.items())),
                        "weak": dict(sorted(p.weak_fields.items()))}, ensure_ascii=False, sort_keys=True)
            for i, p in enumerate(net.profiles)))
        _write_lines(d / edges, "edges", (f"{ids.ids[net.id][u]}\t{ids.ids[net.id][v]}" for u, v in net.sorted_edges()))
    _write_lines(d / MANIFEST, "networks", rows)
    if truth is not None:
        write_truth(d / TRUTH, truth, ids)
    return ids


def read_collection(directory) -> tuple[NetworkCollection, IdMap]:
    d = Path(directory)
    path = d / MANIFEST
    entries = [_fields(ln, 3, path, k + 2) for k, ln in enumerate(_read_lines(path, "networks"))]
    if not entries:
        raise FormatError(f"{path}: no networks listed")
    names, all_ids, nets = [], [], []
    for k, (name, prof, edges) in enumerate(entries):
        builder = NetworkBuilder(k)
        local: dict[str, int] = {}
        ids = []
        ppath = d / prof
        for n, line in enumerate(_read_lines(ppath, "profiles"), start=2):
            try:
                rec = json.loads(line)
                ext = str(rec["id"])
                p = Profile(str(rec["name"]), {str(a): str(b) for a, b in rec.get("strong", {}).items()},
                            {str(a): str(b) for a, b in rec.get("weak", {}).items()})
            except (json.JSONDecodeError, KeyError, TypeError, AttributeError) as e:
                raise FormatError(f"{ppath}:{n}: bad profile record ({e})") from e
            if ext in local:
                raise FormatError(f"{ppath}:{n}: duplicate account id {ext!r}")
            local[ext] = builder.add_account(p)
            ids.append(ext)
        epath = d / edges
        for n, line in enumerate(_read_lines(epath, "edges"), start=2):
            u, v = _fields(line, 2, epath, n)
            if u not in local or v not in local:
                raise FormatError(f"{epath}:{n}: edge references unknown account")
            if u == v:
                raise FormatError(f"{epath}:{n}: self-loop on {u!r}")
            builder.add_edge(local[u], local[v])
        names.append(name)
        all_ids.append(ids)
        nets.append(builder.build())
    try:
        idmap = IdMap(names, all_ids)
    except ValueError as e:
        raise FormatError(f"{path}: {e}") from e
    return NetworkCollection(nets), idmap


def _pair_rows(path, kind, idmap: IdMap, n_fields: int):
    for n, line in enumerate(_read_lines(path, kind), start=2):
        parts = _fields(line, n_fields, path, n)
        try:
            a, b = idmap.ref(parts[0]), idmap.ref(parts[1])
        except KeyError as e:
            raise FormatError(f"{path}:{n}: {e.args[0]}") from e
        if a.network == b.network:
            raise FormatError(f"{path}:{n}: both accounts on network {idmap.names[a.network]}")
        if a.network > b.network:
            a, b = b, a
        yield n, a, b, parts[2:]


def read_string_pairs(path, kind: str) -> list[tuple[str, str]]:
    """First two columns of a pair file (truth, alignment, candidates) as raw account strings."""
    n = 2 if kind == "truth" else 3
    return [tuple(_fields(line, n, path, k + 2)[:2]) for k, line in enumerate(_read_lines(path, kind))]


def write_truth(path, pairs: Iterable[tuple[AccountRef, AccountRef]], idmap: IdMap) -> None:
    canon = sorted((a, b) if a.network < b.network else (b, a) for a, b in pairs)
    _write_lines(path, "truth", (f"{idmap.text(a)}\t{idmap.text(b)}" for a, b in canon))


def read_truth(path, idmap: IdMap) -> set[tuple[AccountRef, AccountRef]]:
    return {(a, b) for _, a, b, _ in _pair_rows(path, "truth", idmap, 2)}


# --- candidates, features ---

def write_candidates(path, candidates: CandidateSet, idmap: IdMap) -> None:
    _write_lines(path, "candidates", (f"{idmap.text(p.a)}\t{idmap.text(p.b)}\t{_num(p.name_similarity)}"
                                      for p in candidates))


def read_candidates(path, idmap: IdMap) -> CandidateSet:
    rows = []
    for n, a, b, rest in _pair_rows(path, "candidates", idmap, 3):
        s = _float(rest[0], path, n)
        if not 0.0 <= s <= 1.0:
            raise FormatError(f"{path}:{n}: similarity {s} outside [0, 1]")
        rows.append((a, b, s))
    return CandidateSet(rows)


def schema_path(features_path) -> Path:
    p = Path(features_path)
    return p.with_name(p.name + ".schema.txt")


def write_features(path, values: np.ndarray, schema: Sequence[str]) -> None:
    values = np.ascontiguousarray(values, dtype="<f8")
    if values.ndim != 2 or values.shape[1] != len(schema):
        raise ValueError("feature matrix does not match the schema")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = json.dumps({"rows": values.shape[0], "cols": values.shape[1], "dtype": "<f8"}, sort_keys=True)
    with open(path, "wb") as fh:
        fh.write((header("features") + "\n" + meta + "\n").encode())
        fh.write(values.tobytes())
    _write_lines(schema_path(path), "schema", schema)


def read_features(path) -> tuple[np.ndarray, list[str]]:
    try:
        raw = Path(path).read_bytes()
    except FileNotFoundError as e:
        raise FormatError(f"{path}: no such file") from e
    first = raw.find(b"\n")
    second = raw.find(b"\n", first + 1)
    if first < 0 or second < 0:
        raise FormatError(f"{path}: truncated header")
    _check_header(raw[:first].decode("utf-8", "replace"), "features", path)
    try:
        meta = json.loads(raw[first + 1:second])
        rows, cols = int(meta["rows"]), int(meta["cols"])
    except (ValueError, KeyError, TypeError) as e:
        raise FormatError(f"{path}: bad metadata line") from e
    if meta.get("dtype") != "<f8":
        raise FormatError(f"{path}: unsupported dtype {meta.get('dtype')!r}")
    body = raw[second + 1:]
    if len(body) != rows * cols * 8:
        raise FormatError(f"{path}: expected {rows * cols * 8} data bytes, found {len(body)}")
    schema = _read_lines(schema_path(path), "schema")
    if len(schema) != cols:
        raise FormatError(f"{path}: schema lists {len(schema)} slots, matrix has {cols} columns")
    return np.frombuffer(body, dtype="<f8").reshape(rows, cols).copy(), schema


# --- model ---

@dataclass
class ModelFile:
    schema: list[str]
    mean: np.ndarray
    scale: np.ndarray
    params: Parameters
    threshold: float | None = None


def write_model(path, model: ModelFile) -> None:
    p = model.params
    if len(p.alpha) != len(model.schema) + 1:
        raise ValueError("alpha must hold a bias plus one weight per schema slot")
    rows = [f"bias\t{_num(p.alpha[0])}"]
    rows += [f"slot\t{name}\t{_num(m)}\t{_num(s)}\t{_num(a)}"
             for name, m, s, a in zip(model.schema, model.mean, model.scale, p.alpha[1:])]
    rows += [f"beta\t{_num(p.beta)}", f"gamma\t{_num(p.gamma)}", f"eta\t{_num(p.eta)}"]
    if model.threshold is not None:
        rows.append(f"threshold\t{_num(model.threshold)}")
    _write_lines(path, "model", rows)


def read_model(path) -> ModelFile:
    schema, mean, scale, alpha = [], [], [], []
    scalars: dict[str, float] = {}
    for n, line in enumerate(_read_lines(path, "model"), start=2):
        key = line.split("\t", 1)[0]
        if key == "slot":
            _, name, m, s, a = _fields(line, 5, path, n)
            schema.append(name)
            mean.append(_float(m, path, n))
            scale.append(_float(s, path, n))
            alpha.append(_float(a, path, n))
        elif key in ("bias", "beta", "gamma", "eta", "threshold"):
            if key in scalars:
                raise FormatError(f"{path}:{n}: duplicate {key}")
            scalars[key] = _float(_fields(line, 2, path, n)[1], path, n)
        else:
            raise FormatError(f"{path}:{n}: unknown key {key!r}")
    missing = {"bias", "beta", "gamma", "eta"} - set(scalars)
    if missing:
        raise FormatError(f"{path}: missing {sorted(missing)}")
    params = Parameters(np.array([scalars["bias"]] + alpha), scalars["beta"], scalars["gamma"], scalars["eta"])
    if not params.is_finite():
        raise FormatError(f"{path}: non-finite parameters")
    return ModelFile(schema, np.array(mean), np.array(scale), params, scalars.get("threshold"))


# --- alignments, reports, sweeps ---

def write_alignment(path, pairs: Iterable[AlignedPair], idmap: IdMap) -> None:
    rows = sorted(AlignedPair.make(a, b, p) for a, b, p in pairs)
    _write_lines(path, "alignment", (f"{idmap.text(r.a)}\t{idmap.text(r.b)}\t{_num(r.probability)}" for r in rows))


def read_alignment(path, idmap: IdMap) -> list[AlignedPair]:
    out = []
    for n, a, b, rest in _pair_rows(path, "alignment", idmap, 3):
        p = _float(rest[0], path, n)
        if not 0.0 <= p <= 1.0:
            raise FormatError(f"{path}:{n}: probability {p} outside [0, 1]")
        out.append(AlignedPair(a, b, p))
    return out


def write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def write_sweep(path, rows: Sequence[dict]) -> None:
    if not rows:
        _write_lines(path, "sweep", ["threshold"])
        return
    cols = list(rows[0])
    body = ["\t".join(cols)]
    body += ["\t".join(f"{r[c]:.2f}" if c == "threshold" else str(r[c]) if isinstance(r[c], int)
                       else f"{r[c]:.6f}" for c in cols) for r in rows]
    _write_lines(path, "sweep", body)


def read_sweep(path) -> list[dict]:
    lines = _read_lines(path, "sweep")
    cols = lines[0].split("\t")
    out = []
    for n, line in enumerate(lines[1:], start=3):
        vals = _fields(line, len(cols), path, n)
        out.append({c: (int(v) if c.startswith("size.") else _float(v, path, n)) for c, v in zip(cols, vals)})
    return out


# --- global graph ---

def write_global_graph(directory, graph: GlobalSocialGraph, idmap: IdMap) -> None:
    d = Path(directory)
    _write_lines(d / "persons.tsv", "persons", (
        f"p{k:06d}\t" + ",".join(idmap.text(a) for a in sorted(p.accounts)) for k, p in enumerate(graph.persons)))
    _write_lines(d / "edges.tsv", "multiedges", (
        f"p{u:06d}\tp{v:06d}\t{idmap.names[s]}" for u, v, s in graph.edges))
    _write_lines(d / "repairs.tsv", "repairs",
                 [f"dropped_intra_person_edges\t{graph.dropped_edges}"]
                 + [f"removed_pair\t{idmap.text(r.a)}\t{idmap.text(r.b)}\t{_num(r.probability)}"
                    for r in graph.removed_pairs])


def read_persons(path, idmap: IdMap) -> list[frozenset[AccountRef]]:
    out = []
    for n, line in enumerate(_read_lines(path, "persons"), start=2):
        _, accs = _fields(line, 2, path, n)
        try:
            out.append(frozenset(idmap.ref(x) for x in accs.split(",") if x))
        except KeyError as e:
            raise FormatError(f"{path}:{n}: {e.args[0]}") from e
    return out


# --- manifests ---

def write_manifest(path, entries: Sequence[tuple[str, object]]) -> None:
    """Key-value manifest; values are flattened to one line each."""
    def flat(v):
        s = v if isinstance(v, str) else json.dumps(v, sort_keys=True, default=str)
        return s.replace("\t", " ").replace("\n", " ")
    _write_lines(path, "manifest", (f"{k}\t{flat(v)}" for k, v in entries))


def read_manifest(path) -> dict[str, str]:
    out = {}
    for line in _read_lines(path, "manifest"):
        k, _, v = line.partition("\t")
        out[k] = v
    return out
