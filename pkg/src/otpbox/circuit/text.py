"""Line-oriented circuit text format.

::

    # comment
    wires 3
    gen_in 0
    evl_in 1
    out 2
    AND 0 1 -> 2

``gen_val <bits>`` may follow the headers to embed generator input values.
"""

from __future__ import annotations

import io
from array import array

from ..errors import ParseError
from .ir import KIND_CODES, NOT, Circuit, KIND_NAMES

_HEADERS = ("wires", "gen_in", "evl_in", "out", "gen_val")


def parse_circuit(text) -> Circuit:
    lines = io.StringIO(text) if isinstance(text, str) else text
    header = {}
    kinds, in_a, in_b, out = array("B"), array("l"), array("l"), array("l")
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        word = parts[0]
        if word in _HEADERS:
            if word in header:
                raise ParseError(f"duplicate {word!r} header", lineno)
            if kinds:
                raise ParseError(f"{word!r} header after the first gate", lineno)
            if word == "gen_val":
                header[word] = "".join(parts[1:])
                continue
            header[word] = _ints(parts[1:], lineno)
            if word == "wires" and len(header[word]) != 1:
                raise ParseError("'wires' takes exactly one count", lineno)
            continue
        kind = KIND_CODES.get(word.upper())
        if kind is None:
            raise ParseError(f"unknown statement {word!r}", lineno)
        arity = 1 if kind == NOT else 2
        if len(parts) != arity + 3 or parts[arity + 1] != "->":
            raise ParseError(f"expected '{word} {' '.join(['w'] * arity)} -> w'", lineno)
        wires = _ints(parts[1:arity + 1] + [parts[arity + 2]], lineno)
        kinds.append(kind)
        in_a.append(wires[0])
        in_b.append(wires[1] if arity == 2 else -1)
        out.append(wires[-1])
    if "wires" not in header:
        raise ParseError("missing 'wires' header")
    return Circuit(header["wires"][0], kinds, in_a, in_b, out,
                   header.get("gen_in", []), header.get("evl_in", []),
                   header.get("out", []), header.get("gen_val"))


def _ints(tokens, lineno):
    try:
        values = [int(t) for t in tokens]
    except ValueError:
        raise ParseError(f"expected wire numbers, got {' '.join(tokens)!r}", lineno) from None
    if any(v < 0 for v in values):
        raise ParseError("wire numbers must be non-negative", lineno)
    return values


def serialize_circuit(c: Circuit, include_values=False) -> str:
    buf = io.StringIO()
    buf.write(f"wires {c.wire_count}\n")
    buf.write(" ".join(["gen_in"] + [str(w) for w in c.generator_inputs]) + "\n")
    buf.write(" ".join(["evl_in"] + [str(w) for w in c.evaluator_inputs]) + "\n")
    buf.write(" ".join(["out"] + [str(w) for w in c.outputs]) + "\n")
    if include_values and c.gen_values is not None:
        buf.write(f"gen_val {c.gen_values}\n")
    names = KIND_NAMES
    for k, a, b, o in zip(c.kinds, c.in_a, c.in_b, c.out):
        if k == NOT:
            buf.write(f"NOT {a} -> {o}\n")
        else:
            buf.write(f"{names[k]} {a} {b} -> {o}\n")
    return buf.getvalue()
