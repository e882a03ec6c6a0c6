"""Circuit builder and arithmetic gadgets.

Multi-bit values inside the builder are lists of wires, least significant bit
first. Standalone gadget circuits (``add_signed`` and friends) expose their
inputs and outputs most significant bit first so bit strings read naturally.
"""

from __future__ import annotations

from array import array

from ..errors import ValidationError
from .ir import AND, NOT, OR, XOR, Circuit


class CircuitBuilder:
    def __init__(self):
        self.wire_count = 0
        self.kinds = array("B")
        self.in_a = array("l")
        self.in_b = array("l")
        self.out = array("l")
        self.generator_inputs = []
        self.evaluator_inputs = []
        self.gen_values = []
        self.outputs = []

    def _new(self, n=1):
        start = self.wire_count
        self.wire_count += n
        return list(range(start, start + n))

    def gen_input(self, n):
        wires = self._new(n)
        self.generator_inputs += wires
        self.gen_values += [None] * n
        return wires

    def const_input(self, bits: str):
        """Generator inputs whose values are fixed now, at compile time."""
        wires = self._new(len(bits))
        self.generator_inputs += wires
        self.gen_values += list(bits)
        return wires

    def evl_input(self, n):
        wires = self._new(n)
        self.evaluator_inputs += wires
        return wires

    def _gate(self, kind, a, b):
        o = self.wire_count
        self.wire_count += 1
        self.kinds.append(kind)
        self.in_a.append(a)
        self.in_b.append(b)
        self.out.append(o)
        return o

    def and_(self, a, b):
        return self._gate(AND, a, b)

    def xor(self, a, b):
        return self._gate(XOR, a, b)

    def or_(self, a, b):
        return self._gate(OR, a, b)

    def not_(self, a):
        return self._gate(NOT, a, -1)

    def set_outputs(self, wires):
        self.outputs = list(wires)

    @property
    def gate_count(self):
        return len(self.kinds)

    def build(self, validate=True) -> Circuit:
        values = None
        if self.gen_values and all(v is not None for v in self.gen_values):
            values = "".join(self.gen_values)
        return Circuit(self.wire_count, self.kinds, self.in_a, self.in_b, self.out,
                       self.generator_inputs, self.evaluator_inputs, self.outputs,
                       values, validate=validate)


# -- gadgets on a builder ------------------------------------------------------------

def full_add(bld, a, b, c, carry=True):
    t1 = bld.xor(a, c)
    s = bld.xor(t1, b)
    if not carry:
        return s, None
    t2 = bld.xor(b, c)
    return s, bld.xor(bld.and_(t1, t2), c)


def half_add(bld, a, b, carry=True):
    return bld.xor(a, b), (bld.and_(a, b) if carry else None)


def add(bld, xs, ys, width=None):
    """Ripple-carry sum of two LSB-first values, truncated to ``width`` bits.

    Operands may differ in width; missing high bits count as zero.
    ``width`` defaults to ``max(len(xs), len(ys)) + 1``.
    """
    if len(xs) < len(ys):
        xs, ys = ys, xs
    if width is None:
        width = len(xs) + 1
    out = []
    carry = None
    for i in range(min(width, len(xs))):
        need_carry = i + 1 < width
        if i < len(ys):
            if carry is None:
                s, carry = half_add(bld, xs[i], ys[i], need_carry)
            else:
                s, carry = full_add(bld, xs[i], ys[i], carry, need_carry)
        elif carry is not None:
            s, carry = half_add(bld, xs[i], carry, need_carry)
        else:
            s = xs[i]
        out.append(s)
    if len(out) < width and carry is not None:
        out.append(carry)
    return out


def equal(bld, xs, ys, ys_negated=False):
    """1 iff the two equal-width values match. ``ys_negated`` saves the NOTs."""
    if len(xs) != len(ys) or not xs:
        raise ValidationError("equal() needs two non-empty operands of one width")
    if ys_negated:
        same = [bld.xor(x, ny) for x, ny in zip(xs, ys)]
    else:
        same = [bld.not_(bld.xor(x, y)) for x, y in zip(xs, ys)]
    return and_tree(bld, same)


def and_tree(bld, wires):
    wires = list(wires)
    while len(wires) > 1:
        nxt = [bld.and_(wires[i], wires[i + 1]) for i in range(0, len(wires) - 1, 2)]
        if len(wires) % 2:
            nxt.append(wires[-1])
        wires = nxt
    return wires[0]


def mux(bld, sel, xs, ys):
    """``xs`` if ``sel`` else ``ys``, bitwise: y ^ (sel & (x ^ y))."""
    return [bld.xor(y, bld.and_(sel, bld.xor(x, y))) for x, y in zip(xs, ys)]


def popcount(bld, bits, cap=16):
    """Number of set wires as an LSB-first value, wrapping at ``cap`` bits."""
    bits = list(bits)
    if not bits:
        raise ValidationError("popcount of nothing")
    if len(bits) == 1:
        return bits
    mid = len(bits) // 2
    left = popcount(bld, bits[:mid], cap)
    right = popcount(bld, bits[mid:], cap)
    return add(bld, left, right, min(cap, max(len(left), len(right)) + 1))


def mul(bld, xs, ys, width):
    """Product of two LSB-first values modulo ``2**width`` (schoolbook)."""
    acc = None
    for i, x in enumerate(xs[:width]):
        row = [bld.and_(x, y) for y in ys[:width - i]]
        if acc is None:
            acc = row
            continue
        high = add(bld, acc[i:], row, width - i)
        acc = acc[:i] + high
    return acc


def sign_extend(xs, width):
    return list(xs) + [xs[-1]] * (width - len(xs))


# -- standalone sub-circuits (MSB-first I/O) ------------------------------------------

def _msb_in(bld, width, side):
    wires = bld.gen_input(width) if side == "gen" else bld.evl_input(width)
    return wires[::-1]


def add_signed(width) -> Circuit:
    """Generator a + evaluator b, two's complement, wrapping at ``width`` bits."""
    if width < 1:
        raise ValidationError("width must be >= 1")
    bld = CircuitBuilder()
    a = _msb_in(bld, width, "gen")
    b = _msb_in(bld, width, "evl")
    bld.set_outputs(add(bld, a, b, width)[::-1])
    return bld.build()


def equal_circuit(width) -> Circuit:
    if width < 1:
        raise ValidationError("width must be >= 1")
    bld = CircuitBuilder()
    a = _msb_in(bld, width, "gen")
    b = _msb_in(bld, width, "evl")
    bld.set_outputs([equal(bld, a, b)])
    return bld.build()


def mux_circuit(width) -> Circuit:
    """Generator inputs: x then y (each MSB first); evaluator input: select bit."""
    if width < 1:
        raise ValidationError("width must be >= 1")
    bld = CircuitBuilder()
    x = _msb_in(bld, width, "gen")
    y = _msb_in(bld, width, "gen")
    (sel,) = bld.evl_input(1)
    bld.set_outputs(mux(bld, sel, x, y)[::-1])
    return bld.build()


def const_input(bits: str) -> Circuit:
    """Circuit that outputs its compile-time generator constants unchanged."""
    bld = CircuitBuilder()
    wires = bld.const_input(bits)
    bld.set_outputs(wires)
    return bld.build()
