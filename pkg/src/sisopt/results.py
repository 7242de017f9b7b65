"""``sisresult v1`` result files.

A result is a block of ``key value...`` lines::

    sisresult v1
    method rgm
    objective 1.8
    lower_bound nan
    upper_bound 1.8
    exact false
    route -
    iters_outer 14
    iters_inner 2
    runtime_ms 3.2
    s 0.8
    p 0.1
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import TextIO

import numpy as np

from .exceptions import ParseError

__all__ = ["SolveResult", "serialize_result", "parse_result", "write_result", "read_result"]

HEADER = "sisresult v1"


@dataclass
class SolveResult:
    method: str
    objective: float
    s: np.ndarray
    p: np.ndarray
    lower_bound: float = float("nan")
    upper_bound: float = float("nan")
    exact: bool = False
    route: str = "-"
    iters_outer: int = 0
    iters_inner: int = 0
    runtime_ms: float = 0.0
    extra: dict = field(default_factory=dict)  # additional scalar fields, written after the fixed ones


def _fmt(x) -> str:
    return repr(float(x))


def serialize_result(res: SolveResult) -> str:
    lines = [
        HEADER,
        f"method {res.method}",
        f"objective {_fmt(res.objective)}",
        f"lower_bound {_fmt(res.lower_bound)}",
        f"upper_bound {_fmt(res.upper_bound)}",
        f"exact {'true' if res.exact else 'false'}",
        f"route {res.route}",
        f"iters_outer {int(res.iters_outer)}",
        f"iters_inner {int(res.iters_inner)}",
        f"runtime_ms {_fmt(res.runtime_ms)}",
    ]
    for key, val in res.extra.items():
        lines.append(f"{key} {_fmt(val)}")
    lines.append("s " + " ".join(_fmt(v) for v in res.s))
    lines.append("p " + " ".join(_fmt(v) for v in res.p))
    return "\n".join(lines) + "\n"


def parse_result(stream: TextIO | str) -> SolveResult:
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    lines = [ln.strip() for ln in stream.read().splitlines()]
    if not lines or lines[0] != HEADER:
        raise ParseError("missing 'sisresult v1' header", line=1)
    fields = {}
    for lineno, line in enumerate(lines[1:], start=2):
        if not line or line.startswith("#"):
            continue
        key, _, rest = line.partition(" ")
        if key in fields:
            raise ParseError(f"duplicate key {key!r}", line=lineno)
        fields[key] = (rest.split(), lineno)
    required = ("method", "objective", "s", "p")
    for key in required:
        if key not in fields:
            raise ParseError(f"missing section {key!r}")

    def scalar(key, conv, default):
        if key not in fields:
            return default
        toks, lineno = fields.pop(key)
        if len(toks) != 1:
            raise ParseError(f"{key} expects one value", line=lineno)
        try:
            return conv(toks[0])
        except ValueError:
            raise ParseError(f"bad value for {key}: {toks[0]!r}", line=lineno) from None

    def vector(key):
        toks, lineno = fields.pop(key)
        try:
            return np.array([float(t) for t in toks])
        except ValueError:
            raise ParseError(f"bad number in {key}", line=lineno) from None

    def boolean(tok):
        if tok not in ("true", "false"):
            raise ValueError(tok)
        return tok == "true"

    res = SolveResult(
        method=scalar("method", str, ""),
        objective=scalar("objective", float, float("nan")),
        lower_bound=scalar("lower_bound", float, float("nan")),
        upper_bound=scalar("upper_bound", float, float("nan")),
        exact=scalar("exact", boolean, False),
        route=scalar("route", str, "-"),
        iters_outer=scalar("iters_outer", int, 0),
        iters_inner=scalar("iters_inner", int, 0),
        runtime_ms=scalar("runtime_ms", float, 0.0),
        s=vector("s"),
        p=vector("p"),
    )
    for key in list(fields):
        res.extra[key] = scalar(key, float, float("nan"))
    if res.s.shape != res.p.shape:
        raise ParseError("s and p have different lengths")
    return res


def write_result(res: SolveResult, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_result(res))


def read_result(path) -> SolveResult:
    with open(path, encoding="utf-8") as fh:
        return parse_result(fh)
