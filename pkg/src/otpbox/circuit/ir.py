"""Boolean circuit IR and the plaintext evaluator."""

from __future__ import annotations

from array import array
from typing import NamedTuple, Optional, Sequence

from ..bits import check_bits
from ..errors import ArityMismatch, ValidationError

AND, XOR, OR, NOT = 0, 1, 2, 3
KIND_NAMES = ("AND", "XOR", "OR", "NOT")
KIND_CODES = {name: code for code, name in enumerate(KIND_NAMES)}

# truth tables indexed by 2*a + b (NOT uses a only)
TRUTH = (
    (0, 0, 0, 1),
    (0, 1, 1, 0),
    (0, 1, 1, 1),
    (1, 1, 0, 0),
)


class Gate(NamedTuple):
    kind: str
    inputs: tuple
    output: int


class Circuit:
    """An immutable, topologically ordered gate list.

    Gates are stored column-wise in ``array`` buffers (``kinds``, ``in_a``,
    ``in_b``, ``out``; ``in_b`` is -1 for NOT) so million-gate circuits stay
    compact. ``gen_values`` optionally carries generator input bits fixed at
    compile time.
    """

    __slots__ = ("wire_count", "kinds", "in_a", "in_b", "out",
                 "generator_inputs", "evaluator_inputs", "outputs", "gen_values")

    def __init__(self, wire_count, kinds, in_a, in_b, out, generator_inputs,
                 evaluator_inputs, outputs, gen_values=None, validate=True):
        self.wire_count = int(wire_count)
        self.kinds = kinds if isinstance(kinds, array) else array("B", kinds)
        self.in_a = in_a if isinstance(in_a, array) else array("l", in_a)
        self.in_b = in_b if isinstance(in_b, array) else array("l", in_b)
        self.out = out if isinstance(out, array) else array("l", out)
        self.generator_inputs = tuple(generator_inputs)
        self.evaluator_inputs = tuple(evaluator_inputs)
        self.outputs = tuple(outputs)
        self.gen_values = gen_values
        if validate:
            self.validate()

    @classmethod
    def from_gates(cls, wire_count, gates: Sequence, generator_inputs,
                   evaluator_inputs, outputs, gen_values=None):
        kinds, a, b, out = array("B"), array("l"), array("l"), array("l")
        for g in gates:
            if g.kind not in KIND_CODES:
                raise ValidationError(f"unknown gate kind {g.kind!r}")
            kinds.append(KIND_CODES[g.kind])
            a.append(g.inputs[0])
            b.append(g.inputs[1] if len(g.inputs) > 1 else -1)
            out.append(g.output)
        return cls(wire_count, kinds, a, b, out, generator_inputs,
                   evaluator_inputs, outputs, gen_values)

    # -- views ------------------------------------------------------------------

    def __len__(self):
        return len(self.kinds)

    @property
    def gate_count(self) -> int:
        return len(self.kinds)

    @property
    def gates(self) -> list:
        return [Gate(KIND_NAMES[k], (a,) if k == NOT else (a, b), o)
                for k, a, b, o in zip(self.kinds, self.in_a, self.in_b, self.out)]

    @property
    def gen_width(self) -> int:
        return len(self.generator_inputs)

    @property
    def evl_width(self) -> int:
        return len(self.evaluator_inputs)

    def kind_counts(self) -> dict:
        counts = dict.fromkeys(KIND_NAMES, 0)
        for k in set(self.kinds):
            counts[KIND_NAMES[k]] = self.kinds.count(k)
        return counts

    def depth(self) -> int:
        level = [0] * self.wire_count
        deepest = 0
        for k, a, b, o in zip(self.kinds, self.in_a, self.in_b, self.out):
            d = 1 + (level[a] if k == NOT else max(level[a], level[b]))
            level[o] = d
            if d > deepest:
                deepest = d
        return deepest

    def topology(self) -> tuple:
        """Everything except embedded generator values; equal circuits compare equal."""
        return (self.wire_count, self.kinds.tobytes(), self.in_a.tobytes(),
                self.in_b.tobytes(), self.out.tobytes(), self.generator_inputs,
                self.evaluator_inputs, self.outputs)

    def __eq__(self, other):
        if not isinstance(other, Circuit):
            return NotImplemented
        return self.topology() == other.topology() and self.gen_values == other.gen_values

    def __repr__(self):
        return (f"Circuit(wires={self.wire_count}, gates={self.gate_count}, "
                f"gen={self.gen_width}, evl={self.evl_width}, out={len(self.outputs)})")

    # -- checks ------------------------------------------------------------------

    def validate(self):
        n = self.wire_count
        driven = bytearray(n)
        for w in self.generator_inputs + self.evaluator_inputs:
            if not 0 <= w < n:
                raise ValidationError(f"input wire {w} outside 0..{n - 1}")
            if driven[w]:
                raise ValidationError(f"wire {w} declared as input twice")
            driven[w] = 1
        if self.gen_values is not None:
            check_bits(self.gen_values)
            if len(self.gen_values) != len(self.generator_inputs):
                raise ValidationError("gen_values length differs from generator inputs")
        if not (len(self.kinds) == len(self.in_a) == len(self.in_b) == len(self.out)):
            raise ValidationError("gate columns have different lengths")
        for i, (k, a, b, o) in enumerate(zip(self.kinds, self.in_a, self.in_b, self.out)):
            if k > NOT:
                raise ValidationError(f"gate {i}: unknown kind code {k}")
            ins = (a,) if k == NOT else (a, b)
            if k != NOT and b < 0:
                raise ValidationError(f"gate {i}: {KIND_NAMES[k]} needs two inputs")
            if not 0 <= o < n:
                raise ValidationError(f"gate {i}: output wire {o} outside 0..{n - 1}")
            for w in ins:
                if not 0 <= w < n:
                    raise ValidationError(f"gate {i}: input wire {w} outside 0..{n - 1}")
                if w >= o:
                    raise ValidationError(f"gate {i}: output wire {o} must exceed input {w}")
                if not driven[w]:
                    raise ValidationError(f"gate {i}: wire {w} used before it is driven")
            if driven[o]:
                raise ValidationError(f"gate {i}: wire {o} driven twice")
            driven[o] = 1
        for w in self.outputs:
            if not 0 <= w < n or not driven[w]:
                raise ValidationError(f"output wire {w} is not driven")
        return self


def eval_plain(c: Circuit, gen_bits: Optional[str], evl_bits: str) -> str:
    """Evaluate ``c`` in the clear; ``gen_bits=None`` uses embedded values."""
    if gen_bits is None:
        gen_bits = c.gen_values if c.gen_values is not None else ""
    check_bits(gen_bits)
    check_bits(evl_bits)
    if len(gen_bits) != c.gen_width:
        raise ArityMismatch(f"generator input has {len(gen_bits)} bits, circuit wants {c.gen_width}")
    if len(evl_bits) != c.evl_width:
        raise ArityMismatch(f"evaluator input has {len(evl_bits)} bits, circuit wants {c.evl_width}")
    v = bytearray(c.wire_count)
    for w, bit in zip(c.generator_inputs, gen_bits):
        v[w] = bit == "1"
    for w, bit in zip(c.evaluator_inputs, evl_bits):
        v[w] = bit == "1"
    for k, a, b, o in zip(c.kinds, c.in_a, c.in_b, c.out):
        if k == AND:
            v[o] = v[a] & v[b]
        elif k == XOR:
            v[o] = v[a] ^ v[b]
        elif k == OR:
            v[o] = v[a] | v[b]
        else:
            v[o] = v[a] ^ 1
    return "".join("1" if v[w] else "0" for w in c.outputs)
