"""Compile the BRCA1 risk test into a fixed-shape circuit.

Generator inputs are the vendor records (40 bits each, embedded at compile
time); evaluator inputs are the client records (32 bits each), both in the
byte-wise bit order of :func:`otpbox.bits.hex_to_bits`. For every vendor
record the circuit tests all client records for an (id, allele) match,
counts the matches, multiplies the count by the record's risk and adds the
product to a 16-bit accumulator. Every pair is compared no matter what, so the
gate list depends only on the two record counts.
"""

from __future__ import annotations

from functools import lru_cache

from ..bits import hex_to_bits
from ..errors import EmptyVendorInput, InputError, RecordOverflow
from ..genomics import CLIENT_RECORD_BITS, RESULT_BITS, VENDOR_RECORD_BITS, SnpRecord
from .gadgets import CircuitBuilder, add, equal, mul, popcount, sign_extend
from .ir import Circuit

KEY_BITS = CLIENT_RECORD_BITS  # id + allele


def vendor_bits(vendor_records) -> str:
    return "".join(hex_to_bits(_check_vendor(r).vendor_hex()) for r in vendor_records)


def client_bits(client_records) -> str:
    return "".join(hex_to_bits(r.client_hex()) for r in client_records)


def _check_vendor(r):
    if not isinstance(r, SnpRecord) or r.risk_deci is None:
        raise InputError("vendor records need a risk factor")
    # SnpRecord validates ranges on construction; re-check for hand-made objects
    if not 0 <= r.snp_id < 1 << 28 or not -128 <= r.risk_deci <= 127:
        raise RecordOverflow(f"vendor record {r} does not fit its fields")
    return r


def compile_genomic(vendor_records, client_record_count: int, validate=True) -> Circuit:
    vendor_records = list(vendor_records)
    if not vendor_records:
        raise EmptyVendorInput("at least one vendor record is required")
    if client_record_count < 1:
        raise InputError("client_record_count must be >= 1")

    bld = CircuitBuilder()
    vendor = [bld.const_input(hex_to_bits(_check_vendor(r).vendor_hex()))
              for r in vendor_records]
    client_wires = bld.evl_input(CLIENT_RECORD_BITS * client_record_count)
    clients = [client_wires[i:i + KEY_BITS]
               for i in range(0, len(client_wires), KEY_BITS)]

    # XOR with a negated bit is XNOR, so negate each vendor key once
    negated = [[bld.not_(w) for w in vw[:KEY_BITS]] for vw in vendor]

    total = None
    for vw, nkey in zip(vendor, negated):
        risk = sign_extend(vw[KEY_BITS:VENDOR_RECORD_BITS], RESULT_BITS)
        matches = [equal(bld, cw, nkey, ys_negated=True) for cw in clients]
        count = popcount(bld, matches, RESULT_BITS)
        term = mul(bld, count, risk, RESULT_BITS)
        total = term if total is None else add(bld, total, term, RESULT_BITS)

    bld.set_outputs(total[::-1])
    return bld.build(validate=validate)


# -- shape without building ---------------------------------------------------------

class _Counter(CircuitBuilder):
    """Builder stand-in that only counts gates."""

    def _gate(self, kind, a, b):
        self.wire_count += 1
        self.kinds.append(kind)
        return self.wire_count - 1


def _cost(fn, *widths):
    c = _Counter()
    operands = [c._new(w) for w in widths]
    fn(c, *operands)
    return c.gate_count


@lru_cache(maxsize=None)
def _popcount_width(n):
    if n == 1:
        return 1
    return min(RESULT_BITS, max(_popcount_width(n // 2), _popcount_width(n - n // 2)) + 1)


@lru_cache(maxsize=None)
def _add_cost(wl, wr, width):
    return _cost(lambda b, x, y: add(b, x, y, width), wl, wr)


@lru_cache(maxsize=None)
def _popcount_cost(n):
    if n == 1:
        return 0
    left, right = n // 2, n - n // 2
    wl, wr = _popcount_width(left), _popcount_width(right)
    return (_popcount_cost(left) + _popcount_cost(right)
            + _add_cost(wl, wr, min(RESULT_BITS, max(wl, wr) + 1)))


@lru_cache(maxsize=None)
def _mul_cost(count_width):
    return _cost(lambda b, x, y: mul(b, x, y, RESULT_BITS), count_width, RESULT_BITS)


@lru_cache(maxsize=None)
def _equal_cost():
    return _cost(lambda b, x, y: equal(b, x, y, ys_negated=True), KEY_BITS, KEY_BITS)


def genomic_gate_count(vendor_count: int, client_count: int) -> int:
    """Gate count of ``compile_genomic`` for these record counts, in O(log n)."""
    if vendor_count < 1 or client_count < 1:
        raise InputError("record counts must be >= 1")
    per_vendor = (KEY_BITS
                  + client_count * _equal_cost()
                  + _popcount_cost(client_count)
                  + _mul_cost(_popcount_width(client_count)))
    return vendor_count * per_vendor + (vendor_count - 1) * _add_cost(
        RESULT_BITS, RESULT_BITS, RESULT_BITS)
