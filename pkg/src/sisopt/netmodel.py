"""Network instances: data model, validation, random generation and file I/O.

The infection matrix follows the column-is-source convention: an edge
``(src, dst, beta)`` puts ``beta`` at ``B[dst, src]``, so ``(B @ p)[i]`` is the
secondary infection pressure on node ``i``.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, TextIO

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import breadth_first_order, connected_components

from .exceptions import GenerationFailed, ParseError

__all__ = [
    "NetworkInstance",
    "ValidationReport",
    "validate",
    "generate_scale_free",
    "parse_instance",
    "serialize_instance",
    "read_instance",
    "write_instance",
    "parse_svec",
    "serialize_svec",
]

MAX_GENERATION_RETRIES = 50


@dataclass(frozen=True, eq=False)
class NetworkInstance:
    """Directed dependence graph plus all SIS model parameters.

    Instances are immutable; arrays are stored read-only so one instance can be
    shared between concurrent solver runs.
    """

    n: int
    edges: tuple  # ((src, dst, beta), ...) sorted by (src, dst)
    lam: np.ndarray
    delta: np.ndarray
    kappa: np.ndarray
    cost_c: np.ndarray
    w_weights: np.ndarray
    alpha: np.ndarray = field(init=False)

    def __post_init__(self):
        edges = tuple(sorted((int(a), int(b), float(beta)) for a, b, beta in self.edges))
        object.__setattr__(self, "edges", edges)
        for name in ("lam", "delta", "kappa", "cost_c", "w_weights"):
            arr = np.array(getattr(self, name), dtype=float).reshape(-1)
            if arr.shape != (self.n,):
                raise ValueError(f"{name} must have length {self.n}, got {arr.shape[0]}")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        alpha = self.kappa * self.delta
        alpha.setflags(write=False)
        object.__setattr__(self, "alpha", alpha)

    @classmethod
    def from_matrix(cls, B, lam, delta, kappa, cost_c, w_weights=None):
        """Build an instance from a dense or sparse infection matrix ``B``."""
        B = sp.coo_matrix(B)
        n = B.shape[0]
        edges = [(int(j), int(i), float(v)) for i, j, v in zip(B.row, B.col, B.data) if v != 0]
        if w_weights is None:
            w_weights = np.ones(n)
        return cls(n, tuple(edges), lam, delta, kappa, cost_c, w_weights)

    def replace(self, **changes) -> "NetworkInstance":
        kw = dict(
            n=self.n,
            edges=self.edges,
            lam=self.lam,
            delta=self.delta,
            kappa=self.kappa,
            cost_c=self.cost_c,
            w_weights=self.w_weights,
        )
        kw.update(changes)
        return NetworkInstance(**kw)

    @cached_property
    def B(self) -> sp.csr_matrix:
        if not self.edges:
            return sp.csr_matrix((self.n, self.n))
        src, dst, beta = zip(*self.edges)
        return sp.csr_matrix((beta, (dst, src)), shape=(self.n, self.n))

    @cached_property
    def BT(self) -> sp.csr_matrix:
        return self.B.T.tocsr()

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def investment_cost(self, s) -> float:
        return float(self.w_weights @ np.asarray(s, dtype=float))


@dataclass
class ValidationReport:
    ok: bool
    violations: list

    def __bool__(self):
        return self.ok


def _strongly_connected(B) -> bool:
    if B.shape[0] == 1:
        return True
    ncomp, _ = connected_components(B, directed=True, connection="strong")
    return ncomp == 1


def _reachable_from(sources, n, edges) -> np.ndarray:
    """Nodes reachable along directed edges from any node in ``sources``."""
    seen = np.zeros(n, dtype=bool)
    if not len(sources):
        return seen
    # node n is a virtual super-source feeding every source, so one BFS suffices
    rows = [e[0] for e in edges] + [n] * len(sources)
    cols = [e[1] for e in edges] + list(sources)
    A = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n + 1, n + 1))
    order = breadth_first_order(A, n, directed=True, return_predecessors=False)
    seen[order[order < n]] = True
    return seen


def validate(instance: NetworkInstance) -> ValidationReport:
    """Check every model invariant; violations are collected, not raised."""
    v = []
    n = instance.n
    if n < 1:
        v.append("node count must be >= 1")
    for src, dst, beta in instance.edges:
        if not (0 <= src < n and 0 <= dst < n):
            v.append(f"edge ({src},{dst}) index out of range")
        elif src == dst:
            v.append(f"self-loop on node {src}")
        if not beta > 0:
            v.append(f"edge ({src},{dst}) has non-positive rate {beta}")
    pairs = [(a, b) for a, b, _ in instance.edges]
    if len(set(pairs)) != len(pairs):
        v.append("duplicate edges")
    if np.any(~np.isfinite(instance.lam)) or np.any(instance.lam < 0):
        v.append("lambda must be finite and >= 0")
    for name in ("delta", "kappa", "cost_c", "w_weights"):
        arr = getattr(instance, name)
        if np.any(~np.isfinite(arr)) or np.any(arr <= 0):
            v.append(f"{name} must be finite and > 0")
    if v:
        return ValidationReport(False, v)

    if not _strongly_connected(instance.B):
        sources = np.flatnonzero(instance.lam > 0)
        reach = _reachable_from(sources, n, instance.edges)
        reach[sources] = True
        missing = np.flatnonzero(~reach)
        if missing.size:
            v.append(
                "graph is not strongly connected and nodes "
                f"{missing[:10].tolist()} have lambda=0 with no path from a lambda>0 node"
            )
    return ValidationReport(not v, v)


def _truncated_power_law(rng, size, power, dmin, dmax):
    d = np.arange(dmin, dmax + 1)
    pmf = d.astype(float) ** (-power)
    pmf /= pmf.sum()
    return rng.choice(d, size=size, p=pmf)


def _pair_stubs(rng, degrees):
    stubs = np.repeat(np.arange(len(degrees)), degrees)
    rng.shuffle(stubs)
    adj = set()
    for a, b in zip(stubs[0::2], stubs[1::2]):
        if a != b:
            adj.add((min(a, b), max(a, b)))
    return adj


def _degree(adj, n):
    deg = np.zeros(n, dtype=int)
    for a, b in adj:
        deg[a] += 1
        deg[b] += 1
    return deg


def _repair(rng, adj, n, dmin, dmax):
    """Top up low-degree nodes, then join components; degrees stay <= dmax."""
    deg = _degree(adj, n)
    for i in rng.permutation(n):
        while deg[i] < dmin:
            cand = [j for j in range(n) if j != i and deg[j] < dmax and (min(i, j), max(i, j)) not in adj]
            if not cand:
                return False
            # prefer partners that are also short of edges
            short = [j for j in cand if deg[j] < dmin]
            j = int(rng.choice(short if short else cand))
            adj.add((min(i, j), max(i, j)))
            deg[i] += 1
            deg[j] += 1

    while True:
        if not adj:
            comps = n
            labels = np.arange(n)
        else:
            a, b = zip(*adj)
            U = sp.coo_matrix((np.ones(len(a)), (a, b)), shape=(n, n))
            comps, labels = connected_components(U, directed=False)
        if comps <= 1:
            return True
        # link component 0 to every other component through nodes with spare degree
        base = [i for i in np.flatnonzero(labels == 0) if deg[i] < dmax]
        other = [i for i in np.flatnonzero(labels != 0) if deg[i] < dmax]
        if not base or not other:
            return False
        i = int(rng.choice(base))
        j = int(rng.choice(other))
        adj.add((min(i, j), max(i, j)))
        deg[i] += 1
        deg[j] += 1


def default_dmax(n: int) -> int:
    return max(1, math.ceil(3 * math.log(n)))


def generate_scale_free(
    n: int,
    power: float = 1.5,
    dmin: int = 2,
    dmax: int | None = None,
    seed: int = 0,
    nu: float = 1.0,
    zero_lambda: bool = False,
) -> NetworkInstance:
    """Random strongly connected scale-free instance with the benchmark parameters.

    Degrees are i.i.d. truncated power-law draws, realized by stub pairing with
    multi-edges and self-loops dropped, then repaired to keep every degree in
    ``[dmin, dmax]`` and the graph connected.  Each undirected adjacency becomes
    two directed edges with independent Uniform(0,1) rates.  Model parameters:
    alpha=1, delta=0.1 (kappa=10), lambda ~ U(0,1) (or 0), w=1 and
    ``c = nu * B^T 1 + 2 * U(0,1)``.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    if dmax is None:
        dmax = default_dmax(n)
    dmax = min(dmax, n - 1)
    if dmin < 1 or dmax < dmin:
        raise ValueError("need 1 <= dmin <= dmax")
    rng = np.random.default_rng(seed)

    for _ in range(MAX_GENERATION_RETRIES):
        degrees = _truncated_power_law(rng, n, power, dmin, dmax)
        if degrees.sum() % 2:
            i = int(rng.integers(n))
            degrees[i] += 1 if degrees[i] < dmax else -1
        adj = _pair_stubs(rng, degrees)
        if _repair(rng, adj, n, dmin, dmax):
            break
    else:
        raise GenerationFailed(f"no connected degree-feasible graph after {MAX_GENERATION_RETRIES} attempts")

    directed = sorted([(a, b) for a, b in adj] + [(b, a) for a, b in adj])
    beta = rng.uniform(0.0, 1.0, size=len(directed))
    # Uniform(0,1) can return exactly 0.0; keep rates strictly positive
    beta = np.where(beta > 0, beta, np.finfo(float).tiny)
    edges = tuple((int(a), int(b), float(x)) for (a, b), x in zip(directed, beta))
    lam = np.zeros(n) if zero_lambda else rng.uniform(0.0, 1.0, size=n)
    c_rand = rng.uniform(0.0, 1.0, size=n)

    delta = np.full(n, 0.1)
    kappa = np.full(n, 10.0)
    inst = NetworkInstance(n, edges, lam, delta, kappa, np.ones(n), np.ones(n))
    out_rate = np.asarray(inst.B.sum(axis=0)).ravel()  # B^T 1
    cost = nu * out_rate + 2.0 * c_rand
    return inst.replace(cost_c=cost)


# ---------------------------------------------------------------------------
# text formats

_VECTOR_KEYS = ("lambda", "delta", "kappa", "cost", "wlin")


def _fmt(x: float) -> str:
    return repr(float(x))


def serialize_instance(instance: NetworkInstance) -> str:
    lines = ["sisnet v1", f"nodes {instance.n}", f"edges {instance.n_edges}"]
    lines += [f"e {a} {b} {_fmt(beta)}" for a, b, beta in instance.edges]
    for key, arr in zip(
        _VECTOR_KEYS,
        (instance.lam, instance.delta, instance.kappa, instance.cost_c, instance.w_weights),
    ):
        lines.append(" ".join([key] + [_fmt(x) for x in arr]))
    return "\n".join(lines) + "\n"


def _float(tok, lineno):
    try:
        return float(tok)
    except ValueError:
        raise ParseError(f"bad number {tok!r}", lineno) from None


def _int(tok, lineno):
    try:
        return int(tok)
    except ValueError:
        raise ParseError(f"bad count {tok!r}", lineno) from None


def parse_instance(stream: TextIO | str) -> NetworkInstance:
    """Read a ``sisnet v1`` instance; any invariant violation raises ParseError."""
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    rows = []
    for lineno, raw in enumerate(stream, start=1):
        text = raw.split("#", 1)[0].strip()
        if text:
            rows.append((lineno, text.split()))
    if not rows or rows[0][1] != ["sisnet", "v1"]:
        raise ParseError("missing 'sisnet v1' header", rows[0][0] if rows else 1)

    it = iter(rows[1:])

    def expect(key):
        try:
            lineno, toks = next(it)
        except StopIteration:
            raise ParseError(f"missing section '{key}'", rows[-1][0]) from None
        if toks[0] != key:
            raise ParseError(f"missing section '{key}' (found '{toks[0]}')", lineno)
        return lineno, toks

    lineno, toks = expect("nodes")
    if len(toks) != 2:
        raise ParseError("bad count line", lineno)
    n = _int(toks[1], lineno)
    if n < 1:
        raise ParseError("bad count: nodes must be >= 1", lineno)
    lineno, toks = expect("edges")
    if len(toks) != 2:
        raise ParseError("bad count line", lineno)
    m = _int(toks[1], lineno)
    if m < 0:
        raise ParseError("bad count: edges must be >= 0", lineno)

    edges = []
    seen = set()
    for k in range(m):
        try:
            lineno, toks = expect("e")
        except ParseError as exc:
            raise ParseError(f"bad count: header declares {m} edges, found {k}", exc.line) from None
        if len(toks) != 4:
            raise ParseError("edge line needs 'e <src> <dst> <beta>'", lineno)
        a, b, beta = _int(toks[1], lineno), _int(toks[2], lineno), _float(toks[3], lineno)
        if not (0 <= a < n and 0 <= b < n):
            raise ParseError(f"edge index out of range [0, {n})", lineno)
        if a == b:
            raise ParseError("self-loop", lineno)
        if not (beta > 0 and math.isfinite(beta)):
            raise ParseError("negative rate: beta must be > 0", lineno)
        if (a, b) in seen:
            raise ParseError("duplicate edge", lineno)
        seen.add((a, b))
        edges.append((a, b, beta))

    vectors = {}
    for key in _VECTOR_KEYS:
        lineno, toks = expect(key)
        vals = [_float(t, lineno) for t in toks[1:]]
        if len(vals) != n:
            raise ParseError(f"bad count: '{key}' has {len(vals)} values, expected {n}", lineno)
        arr = np.array(vals)
        if not np.all(np.isfinite(arr)):
            raise ParseError(f"non-finite value in '{key}'", lineno)
        if key == "lambda":
            if np.any(arr < 0):
                raise ParseError("negative rate in 'lambda'", lineno)
        elif np.any(arr <= 0):
            raise ParseError(f"negative rate: '{key}' values must be > 0", lineno)
        vectors[key] = (lineno, arr)
    extra = next(it, None)
    if extra is not None:
        raise ParseError(f"unexpected trailing content '{extra[1][0]}'", extra[0])

    inst = NetworkInstance(
        n,
        tuple(edges),
        vectors["lambda"][1],
        vectors["delta"][1],
        vectors["kappa"][1],
        vectors["cost"][1],
        vectors["wlin"][1],
    )
    report = validate(inst)
    if not report.ok:
        raise ParseError("; ".join(report.violations), vectors["lambda"][0])
    return inst


def read_instance(path) -> NetworkInstance:
    with open(path) as fh:
        return parse_instance(fh)


def write_instance(instance: NetworkInstance, path) -> None:
    with open(path, "w") as fh:
        fh.write(serialize_instance(instance))


def serialize_svec(values: Iterable[float]) -> str:
    return "svec v1\n" + "".join(_fmt(x) + "\n" for x in values)


def parse_svec(stream: TextIO | str, n: int | None = None) -> np.ndarray:
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    toks = []
    header = None
    for lineno, raw in enumerate(stream, start=1):
        text = raw.split("#", 1)[0].strip()
        if not text:
            continue
        if header is None:
            header = text
            if text.split() != ["svec", "v1"]:
                raise ParseError("missing 'svec v1' header", lineno)
            continue
        toks += [(lineno, t) for t in text.split()]
    if header is None:
        raise ParseError("missing 'svec v1' header", 1)
    vec = np.array([_float(t, ln) for ln, t in toks])
    if n is not None and vec.size != n:
        raise ParseError(f"bad count: vector has {vec.size} values, expected {n}")
    return vec
