"""Reading and writing hypergraphs, labels, ratings, kernels and results.

Text formats are UTF-8, line oriented, tolerate surrounding whitespace and
skip blank lines and ``#`` comments. Parsers fail with :class:`ParseError`
carrying the file and line number.
"""
import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import (
    DuplicateLabel,
    HyperGPError,
    InputError,
    IoFailure,
    ParseError,
    UnknownVertexInLabels,
)
from .gp import CategoricalLikelihood, GaussianLikelihood, SVGPState
from .hypergraph import Hypergraph, build_hypergraph, incidence_matrix
from .kernels import GramKernel
from .kpmf import FactorPair, RatingsMatrix

GRAM_MAGIC = b"HGPGRAM\x01"


def _content_lines(path):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError as exc:
        raise ParseError("file not found", path) from exc
    except (OSError, UnicodeDecodeError) as exc:
        raise ParseError(f"cannot read file: {exc}", path) from exc
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield lineno, line


def sidecar_path(path):
    return Path(str(path) + ".vertices.json")


# ---------------------------------------------------------------------------
# hypergraphs


def read_hypergraph(path, names_path=None) -> Hypergraph:
    """Parse the ``N M`` header plus one ``[w=<float>] name name ...`` line per edge.

    Vertex indices come from the JSON sidecar when present, otherwise from
    the order of first appearance.
    """
    path = Path(path)
    lines = _content_lines(path)
    try:
        lineno, header = next(lines)
    except StopIteration:
        raise ParseError("empty file, expected 'N M' header", path) from None
    parts = header.split()
    try:
        n, m = (int(t) for t in parts)
    except ValueError:
        raise ParseError(f"bad header {header!r}, expected 'N M'", path, lineno) from None
    names_path = Path(names_path) if names_path else sidecar_path(path)
    index = {}
    if names_path.exists():
        try:
            index = {str(k): int(v) for k, v in json.loads(names_path.read_text()).items()}
        except (ValueError, AttributeError) as exc:
            raise ParseError(f"bad vertex sidecar: {exc}", names_path) from exc
    fixed = bool(index)
    edges, weights = [], []
    for lineno, line in lines:
        tokens = line.split()
        w = 1.0
        if tokens[0].startswith("w="):
            try:
                w = float(tokens[0][2:])
            except ValueError:
                raise ParseError(f"bad weight {tokens[0]!r}", path, lineno) from None
            tokens = tokens[1:]
        if not tokens:
            raise ParseError("hyperedge with no vertices", path, lineno)
        edge = []
        for name in tokens:
            if name not in index:
                if fixed:
                    raise ParseError(f"vertex {name!r} not in sidecar", path, lineno)
                index[name] = len(index)
            edge.append(index[name])
        if len(set(edge)) != len(edge):
            raise ParseError("hyperedge repeats a vertex", path, lineno)
        edges.append(edge)
        weights.append(w)
    if len(edges) != m:
        raise ParseError(f"header declares {m} hyperedges, found {len(edges)}", path)
    if len(index) != n:
        raise ParseError(f"header declares {n} vertices, found {len(index)}", path)
    names = [None] * n
    for name, i in index.items():
        if not 0 <= i < n or names[i] is not None:
            raise ParseError(f"sidecar index {i} for {name!r} is invalid", names_path)
        names[i] = name
    try:
        return build_hypergraph(n, edges, weights, vertex_names=names)
    except HyperGPError as exc:
        raise ParseError(str(exc), path) from exc


def write_hypergraph(g: Hypergraph, path, sidecar=True):
    path = Path(path)
    names = list(g.vertex_names) if g.vertex_names else [f"v{i}" for i in range(g.num_vertices)]
    for name in names:
        if not name or any(ch.isspace() for ch in name) or name.startswith(("#", "w=")):
            raise InputError(f"vertex name {name!r} cannot be written")
    lines = [f"{g.num_vertices} {g.num_edges}"]
    for e, w in zip(g.hyperedges, g.weights):
        body = " ".join(names[v] for v in e)
        lines.append(body if w == 1.0 else f"w={float(w)!r} {body}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    if sidecar:
        sidecar_path(path).write_text(
            json.dumps({name: i for i, name in enumerate(names)}, indent=1) + "\n")


def write_incidence_coo(g: Hypergraph, path):
    h = incidence_matrix(g)
    rows, cols = np.nonzero(h)
    order = np.lexsort((rows, cols))
    Path(path).write_text("".join(f"{rows[i]} {cols[i]}\n" for i in order))


def read_incidence_coo(path, shape=None) -> np.ndarray:
    pairs = []
    for lineno, line in _content_lines(path):
        try:
            v, e = (int(t) for t in line.split())
        except ValueError:
            raise ParseError(f"expected 'vertex_index edge_index', got {line!r}",
                             path, lineno) from None
        pairs.append((v, e))
    arr = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    if shape is None:
        shape = (int(arr[:, 0].max()) + 1, int(arr[:, 1].max()) + 1) if arr.size else (0, 0)
    h = np.zeros(shape)
    h[arr[:, 0], arr[:, 1]] = 1.0
    return h


# ---------------------------------------------------------------------------
# labels and splits


def _name_index(g: Hypergraph):
    names = g.vertex_names or tuple(f"v{i}" for i in range(g.num_vertices))
    return {name: i for i, name in enumerate(names)}, names


def read_labels(path, g: Hypergraph):
    """Return ``(labels, class_names)``; every vertex must be labelled once."""
    index, names = _name_index(g)
    found = {}
    for lineno, line in _content_lines(path):
        parts = line.split("\t") if "\t" in line else line.split()
        if len(parts) != 2:
            raise ParseError(f"expected 'vertex<TAB>class', got {line!r}", path, lineno)
        name, cls = parts[0].strip(), parts[1].strip()
        if name not in index:
            raise UnknownVertexInLabels(f"{path}:{lineno}: unknown vertex {name!r}")
        if name in found:
            raise DuplicateLabel(f"{path}:{lineno}: vertex {name!r} labelled twice")
        found[name] = cls
    missing = [n for n in names if n not in found]
    if missing:
        raise UnknownVertexInLabels(f"{path}: no label for vertices {missing}")
    class_names = sorted(set(found.values()))
    lookup = {c: i for i, c in enumerate(class_names)}
    labels = np.array([lookup[found[n]] for n in names], dtype=np.int64)
    return labels, class_names


def write_labels(path, names, labels, class_names=None):
    lines = []
    for name, lab in zip(names, labels):
        cls = class_names[lab] if class_names is not None else str(lab)
        lines.append(f"{name}\t{cls}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_splits(path, g: Hypergraph) -> np.ndarray:
    """Boolean test mask from ``vertex<TAB>{train|test}`` lines."""
    index, names = _name_index(g)
    found = {}
    for lineno, line in _content_lines(path):
        parts = line.split()
        if len(parts) != 2 or parts[1] not in ("train", "test"):
            raise ParseError(f"expected 'vertex<TAB>train|test', got {line!r}", path, lineno)
        if parts[0] not in index:
            raise UnknownVertexInLabels(f"{path}:{lineno}: unknown vertex {parts[0]!r}")
        if parts[0] in found:
            raise DuplicateLabel(f"{path}:{lineno}: vertex {parts[0]!r} listed twice")
        found[parts[0]] = parts[1] == "test"
    missing = [n for n in names if n not in found]
    if missing:
        raise UnknownVertexInLabels(f"{path}: no split for vertices {missing}")
    return np.array([found[n] for n in names], dtype=bool)


def write_splits(path, names, test_mask):
    Path(path).write_text("".join(f"{n}\t{'test' if t else 'train'}\n"
                                  for n, t in zip(names, test_mask)))


def stratified_split(labels, test_fraction, seed=0) -> np.ndarray:
    """Boolean test mask with ``round(fraction * class size)`` test vertices per class."""
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    mask = np.zeros(labels.size, dtype=bool)
    for c in np.unique(labels):
        members = np.flatnonzero(labels == c)
        n_test = int(round(test_fraction * members.size))
        mask[rng.permutation(members)[:n_test]] = True
    return mask


def uniform_split(n, test_fraction, seed=0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    mask = np.zeros(n, dtype=bool)
    mask[rng.permutation(n)[: int(round(test_fraction * n))]] = True
    return mask


@dataclass(frozen=True)
class Dataset:
    hypergraph: Hypergraph
    names: tuple
    labels: Optional[np.ndarray] = None
    class_names: Optional[list] = None
    test_mask: Optional[np.ndarray] = None

    @property
    def index(self):
        return {n: i for i, n in enumerate(self.names)}


def load_dataset(hypergraph_path, labels_path=None, test_fraction=None, seed=0,
                 splits_path=None) -> Dataset:
    g = read_hypergraph(hypergraph_path)
    _, names = _name_index(g)
    labels = class_names = None
    if labels_path is not None:
        labels, class_names = read_labels(labels_path, g)
    mask = None
    if splits_path is not None:
        mask = read_splits(splits_path, g)
    elif test_fraction is not None:
        if labels is not None:
            mask = stratified_split(labels, test_fraction, seed)
        else:
            mask = uniform_split(g.num_vertices, test_fraction, seed)
    return Dataset(g, tuple(names), labels, class_names, mask)


def load_attribute_table(path, name_col=0, label_col=-1, delimiter=",") -> Dataset:
    """Attribute table (e.g. UCI Zoo) as a hypergraph.

    Every (attribute column, value) pair becomes one hyperedge over the
    rows sharing that value; the label column supplies classes.
    """
    rows = []
    for lineno, line in _content_lines(path):
        rows.append((lineno, [t.strip() for t in line.split(delimiter)]))
    if not rows:
        raise ParseError("empty attribute table", path)
    width = len(rows[0][1])
    for lineno, r in rows:
        if len(r) != width:
            raise ParseError(f"expected {width} fields, got {len(r)}", path, lineno)
    name_col %= width
    label_col %= width
    names = [r[name_col] for _, r in rows]
    if len(set(names)) != len(names):
        # duplicate names (the Zoo table lists 'frog' twice) get a positional suffix
        seen = {}
        uniq = []
        for n in names:
            seen[n] = seen.get(n, 0) + 1
            uniq.append(n if seen[n] == 1 else f"{n}_{seen[n]}")
        names = uniq
    edges, edge_names = [], []
    for col in range(width):
        if col in (name_col, label_col):
            continue
        values = [r[col] for _, r in rows]
        for v in sorted(set(values)):
            edges.append([i for i, x in enumerate(values) if x == v])
            edge_names.append(f"a{col}={v}")
    g = build_hypergraph(len(names), edges, vertex_names=names, edge_names=edge_names)
    raw = [r[label_col] for _, r in rows]
    class_names = sorted(set(raw))
    lookup = {c: i for i, c in enumerate(class_names)}
    return Dataset(g, tuple(names), np.array([lookup[c] for c in raw]), class_names)


# ---------------------------------------------------------------------------
# ratings


def read_ratings(path):
    """``user item rating [timestamp]`` triples, tab, comma or space separated.

    Returns ``(RatingsMatrix, user_names, item_names)`` with ids indexed in
    order of first appearance.
    """
    users, items = {}, {}
    rows, cols, vals = [], [], []
    for lineno, line in _content_lines(path):
        parts = line.replace(",", " ").split()
        if len(parts) < 3:
            raise ParseError(f"expected 'user item rating', got {line!r}", path, lineno)
        try:
            value = float(parts[2])
        except ValueError:
            raise ParseError(f"bad rating {parts[2]!r}", path, lineno) from None
        u = users.setdefault(parts[0], len(users))
        i = items.setdefault(parts[1], len(items))
        rows.append(u)
        cols.append(i)
        vals.append(value)
    try:
        r = RatingsMatrix(len(users), len(items), rows, cols, vals)
    except HyperGPError as exc:
        raise ParseError(str(exc), path) from exc
    return r, list(users), list(items)


def write_ratings(path, r: RatingsMatrix, user_names=None, item_names=None):
    un = user_names or [str(i) for i in range(r.n_rows)]
    iname = item_names or [str(i) for i in range(r.n_cols)]
    Path(path).write_text("".join(f"{un[a]}\t{iname[b]}\t{float(v)!r}\n"
                                  for a, b, v in zip(r.rows, r.cols, r.values)))


# ---------------------------------------------------------------------------
# kernels


def write_gram(k: GramKernel, path, names=None):
    """Binary Gram container plus a ``.json`` metadata sidecar.

    Layout (little endian): 8-byte magic, uint64 N, 16-byte ASCII family tag,
    uint64 P, P float64 hyperparameters (sorted by name), N*N float64 entries
    in row-major order.
    """
    mat = np.ascontiguousarray(k.matrix, dtype="<f8")
    keys = sorted(k.params)
    tag = k.family.encode("ascii")[:16].ljust(16, b"\0")
    with open(path, "wb") as fh:
        fh.write(GRAM_MAGIC)
        fh.write(struct.pack("<Q", mat.shape[0]))
        fh.write(tag)
        fh.write(struct.pack("<Q", len(keys)))
        fh.write(np.asarray([k.params[key] for key in keys], dtype="<f8").tobytes())
        fh.write(mat.tobytes())
    meta = {"family": k.family, "params": {key: float(k.params[key]) for key in keys},
            "param_order": keys, "n": int(mat.shape[0]), "normalize": bool(k.normalize)}
    if names is not None:
        meta["vertex_names"] = list(names)
    Path(str(path) + ".json").write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n")


def read_gram(path) -> GramKernel:
    data = Path(path).read_bytes()
    if data[:8] != GRAM_MAGIC:
        raise ParseError("not a Gram container (bad magic)", path)
    (n,) = struct.unpack_from("<Q", data, 8)
    family = data[16:32].rstrip(b"\0").decode("ascii")
    (p,) = struct.unpack_from("<Q", data, 32)
    values = np.frombuffer(data, dtype="<f8", count=p, offset=40)
    offset = 40 + 8 * p
    if len(data) != offset + 8 * n * n:
        raise ParseError("Gram container has the wrong length", path)
    mat = np.frombuffer(data, dtype="<f8", count=n * n, offset=offset).reshape(n, n).copy()
    meta_path = Path(str(path) + ".json")
    keys = [f"p{i}" for i in range(p)]
    normalize = False
    if meta_path.exists():
        meta = json.loads(meta_path.read_text())
        keys = meta.get("param_order", keys)
        normalize = meta.get("normalize", False)
    return GramKernel(mat, family, dict(zip(keys, map(float, values))), None, normalize)


# ---------------------------------------------------------------------------
# checkpoints, embeddings, traces, results


def _lik_to_json(lik):
    if isinstance(lik, GaussianLikelihood):
        return {"type": "gaussian", "noise_variance": lik.noise_variance,
                "transform": "softplus"}
    return {"type": "categorical", "num_classes": lik.num_classes,
            "mc_samples": lik.mc_samples, "seed": lik.seed}


def _lik_from_json(d):
    if d["type"] == "gaussian":
        return GaussianLikelihood(d["noise_variance"])
    return CategoricalLikelihood(d["num_classes"], d["mc_samples"], d["seed"])


def save_svgp(state: SVGPState, path, meta=None):
    """``<path>.json`` header and ``<path>.npz`` payload (mean, Cholesky factors)."""
    path = Path(path)
    header = {
        "inducing_indices": [int(i) for i in state.inducing_indices],
        "kernel_params": {k: float(v) for k, v in state.kernel_params.items()},
        "kernel_transform": "softplus",
        "likelihood": _lik_to_json(state.likelihood),
        "num_outputs": int(state.num_outputs),
        **(meta or {}),
    }
    path.with_suffix(".json").write_text(json.dumps(header, indent=1, sort_keys=True) + "\n")
    np.savez(path.with_suffix(".npz"), mean=state.mean, chol=state.chol)


def load_svgp(path) -> SVGPState:
    path = Path(path)
    header = json.loads(path.with_suffix(".json").read_text())
    with np.load(path.with_suffix(".npz")) as payload:
        mean, chol = payload["mean"], payload["chol"]
    return SVGPState(np.asarray(header["inducing_indices"], dtype=np.int64), mean, chol,
                     header["kernel_params"], _lik_from_json(header["likelihood"]))


def save_factors(fp: FactorPair, path, meta=None):
    path = Path(path)
    np.savez(path.with_suffix(".npz"), U=fp.U, W=fp.W)
    header = {"noise_variance": float(fp.noise_variance), "D": int(fp.D), **(meta or {})}
    path.with_suffix(".json").write_text(json.dumps(header, indent=1, sort_keys=True) + "\n")


def load_factors(path) -> FactorPair:
    path = Path(path)
    header = json.loads(path.with_suffix(".json").read_text())
    with np.load(path.with_suffix(".npz")) as payload:
        return FactorPair(payload["U"], payload["W"], header["noise_variance"])


def write_embedding(path, names, X, labels=None, delimiter="\t"):
    X = np.asarray(X)
    lines = []
    for i, name in enumerate(names):
        fields = [str(name)] + [repr(float(v)) for v in X[i]]
        if labels is not None:
            fields.append(str(labels[i]))
        lines.append(delimiter.join(fields))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_embedding(path, Q, delimiter="\t"):
    """Return ``(names, X, labels_or_None)``."""
    names, rows, labels = [], [], []
    for lineno, line in _content_lines(path):
        parts = line.split(delimiter)
        if len(parts) not in (Q + 1, Q + 2):
            raise ParseError(f"expected {Q} coordinates", path, lineno)
        names.append(parts[0])
        try:
            rows.append([float(v) for v in parts[1:Q + 1]])
        except ValueError:
            raise ParseError("bad coordinate", path, lineno) from None
        if len(parts) == Q + 2:
            labels.append(parts[-1])
    return names, np.asarray(rows), (labels or None)


def write_trace(path, trace):
    Path(path).write_text("".join(f"{i}\t{float(v)!r}\n" for i, v in enumerate(trace)))


def read_trace(path) -> np.ndarray:
    values = []
    for lineno, line in _content_lines(path):
        parts = line.split()
        if len(parts) != 2:
            raise ParseError("expected 'step value'", path, lineno)
        values.append(float(parts[1]))
    return np.asarray(values)


def config_hash(config) -> str:
    blob = json.dumps(config or {}, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def save_results(table, path, seed=None, config=None, conventions=None):
    """Write metrics inside a metadata envelope with sorted keys."""
    envelope = {
        "metrics": _jsonable(table),
        "conventions": _jsonable(conventions or {}),
        "seed": seed,
        "config_hash": config_hash(config),
    }
    try:
        Path(path).write_text(json.dumps(envelope, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc
    return envelope


def read_results(path) -> dict:
    return json.loads(Path(path).read_text())
