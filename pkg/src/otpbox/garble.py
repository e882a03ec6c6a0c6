"""Yao garbling split into standalone ``gen`` and ``evl`` phases.

Labels are 16 random bytes plus a point-and-permute byte (0 or 1). Each table
row is ``(H(ka || kb || gate || row)[:17] XOR out_label) || H(...)[17:32]``,
with H = SHA-256. The row key is used exactly once, so the trailing 15 bytes
act as a 120-bit authenticator: a wrong or forged input label is detected
instead of silently decrypting to garbage. Evaluator input wires additionally
carry truncated hash checks of both labels (in permuted order) so forged
labels are rejected even on wires no gate reads.

No free-XOR and no row reduction: every gate gets a full table.
"""

from __future__ import annotations

import hashlib
import secrets
import struct
from dataclasses import dataclass
from typing import Optional

from .bits import check_bits
from .circuit.ir import NOT, TRUTH, Circuit
from .circuit.text import parse_circuit, serialize_circuit
from .errors import ArityMismatch, DecryptionFailure, InputError

KEY_SIZE = 16
LABEL_SIZE = KEY_SIZE + 1
ROW_SIZE = 32
TAG_SIZE = ROW_SIZE - LABEL_SIZE
CHECK_SIZE = 16
GC_MAGIC = b"OTPGC001"

_sha = hashlib.sha256


@dataclass(frozen=True)
class WireLabelPair:
    label0: bytes
    label1: bytes

    def __post_init__(self):
        if len(self.label0) != LABEL_SIZE or len(self.label1) != LABEL_SIZE:
            raise ValueError("labels are 17 bytes")
        if self.label0[-1] ^ self.label1[-1] != 1:
            raise ValueError("permute bits of a pair must be complementary")

    def label(self, bit: int) -> bytes:
        return self.label1 if bit else self.label0

    def to_bytes(self) -> bytes:
        return self.label0 + self.label1

    @classmethod
    def from_bytes(cls, raw: bytes) -> "WireLabelPair":
        return cls(bytes(raw[:LABEL_SIZE]), bytes(raw[LABEL_SIZE:2 * LABEL_SIZE]))


class KeyFile(list):
    """Selected evaluator labels, one per input bit, in input order."""

    def to_text(self) -> str:
        return "".join(label.hex() + "\n" for label in self)

    @classmethod
    def from_text(cls, text: str) -> "KeyFile":
        out = cls()
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.strip()
            if not line:
                continue
            try:
                out.append(bytes.fromhex(line))
            except ValueError:
                raise InputError(f"key file line {lineno} is not hex") from None
        return out

    def write(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_text())

    @classmethod
    def read(cls, path) -> "KeyFile":
        with open(path) as fh:
            return cls.from_text(fh.read())


@dataclass(frozen=True)
class GarbledCircuit:
    circuit: Circuit
    tables: bytes
    output_decode: bytes
    generator_input_labels: tuple
    input_checks: bytes

    def table_offsets(self):
        offsets, pos = [], 0
        for k in self.circuit.kinds:
            offsets.append(pos)
            pos += ROW_SIZE * (2 if k == NOT else 4)
        return offsets

    def table(self, gate_index: int) -> list:
        pos = self.table_offsets()[gate_index]
        rows = 2 if self.circuit.kinds[gate_index] == NOT else 4
        return [self.tables[pos + r * ROW_SIZE:pos + (r + 1) * ROW_SIZE] for r in range(rows)]

    # -- file format ---------------------------------------------------------------

    def to_bytes(self) -> bytes:
        text = serialize_circuit(self.circuit).encode()
        return b"".join([
            GC_MAGIC,
            struct.pack("<I", len(text)), text,
            struct.pack("<Q", len(self.tables)), self.tables,
            struct.pack("<I", len(self.output_decode)), self.output_decode,
            struct.pack("<I", len(self.generator_input_labels)),
            *self.generator_input_labels,
            struct.pack("<I", len(self.input_checks)), self.input_checks,
        ])

    @classmethod
    def from_bytes(cls, raw: bytes) -> "GarbledCircuit":
        if raw[:8] != GC_MAGIC:
            raise InputError("not a garbled circuit file")
        try:
            pos = 8
            (n,) = struct.unpack_from("<I", raw, pos)
            circuit = parse_circuit(raw[pos + 4:pos + 4 + n].decode())
            pos += 4 + n
            (n,) = struct.unpack_from("<Q", raw, pos)
            tables = raw[pos + 8:pos + 8 + n]
            pos += 8 + n
            (n,) = struct.unpack_from("<I", raw, pos)
            decode = raw[pos + 4:pos + 4 + n]
            pos += 4 + n
            (n,) = struct.unpack_from("<I", raw, pos)
            pos += 4
            labels = tuple(raw[pos + i * LABEL_SIZE:pos + (i + 1) * LABEL_SIZE] for i in range(n))
            pos += n * LABEL_SIZE
            (n,) = struct.unpack_from("<I", raw, pos)
            checks = raw[pos + 4:pos + 4 + n]
            pos += 4 + n
        except (struct.error, UnicodeDecodeError) as exc:
            raise InputError(f"truncated garbled circuit file: {exc}") from None
        if pos != len(raw):
            raise InputError("trailing bytes in garbled circuit file")
        expected = sum(ROW_SIZE * (2 if k == NOT else 4) for k in circuit.kinds)
        if len(tables) != expected or len(decode) != len(circuit.outputs) \
                or len(labels) != circuit.gen_width \
                or len(checks) != 2 * CHECK_SIZE * circuit.evl_width:
            raise InputError("garbled circuit sections do not match the circuit")
        return cls(circuit, bytes(tables), bytes(decode), labels, bytes(checks))

    def write(self, path):
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def read(cls, path) -> "GarbledCircuit":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


def _check(wire: int, label: bytes) -> bytes:
    return _sha(b"otpbox-input-check" + wire.to_bytes(4, "little") + label).digest()[:CHECK_SIZE]


def fresh_pairs(width: int, rng=None) -> list:
    """``width`` random label pairs (the evaluator-side keys of a gen run)."""
    rng = rng or secrets.SystemRandom()
    raw = rng.randbytes(width * 2 * KEY_SIZE)
    perms = rng.randbytes(width)
    out = []
    for i in range(width):
        p = perms[i] & 1
        base = 2 * KEY_SIZE * i
        out.append(WireLabelPair(raw[base:base + KEY_SIZE] + bytes((p,)),
                                 raw[base + KEY_SIZE:base + 2 * KEY_SIZE] + bytes((p ^ 1,))))
    return out


def gen(c: Circuit, gen_bits: Optional[str] = None, rng=None):
    """Garble ``c`` with the generator's input fixed; returns ``(gc, evaluator_pairs)``.

    ``rng`` needs a ``randbytes`` method (``random.Random`` for reproducible
    runs); the default draws from the OS.
    """
    rng = rng or secrets.SystemRandom()
    if gen_bits is None:
        gen_bits = c.gen_values if c.gen_values is not None else ""
    check_bits(gen_bits)
    if len(gen_bits) != c.gen_width:
        raise ArityMismatch(f"generator input has {len(gen_bits)} bits, circuit wants {c.gen_width}")

    n = c.wire_count
    raw = rng.randbytes(n * 2 * KEY_SIZE)
    perm = [b & 1 for b in rng.randbytes(n)]
    k0 = [raw[2 * KEY_SIZE * w:2 * KEY_SIZE * w + KEY_SIZE] for w in range(n)]
    k1 = [raw[2 * KEY_SIZE * w + KEY_SIZE:2 * KEY_SIZE * (w + 1)] for w in range(n)]

    tables = bytearray()
    from_bytes = int.from_bytes
    for gi, (kind, a, b, o) in enumerate(zip(c.kinds, c.in_a, c.in_b, c.out)):
        gid = gi.to_bytes(4, "little")
        truth = TRUTH[kind]
        po = perm[o]
        outs = (from_bytes(k0[o] + bytes((po,)), "little"),
                from_bytes(k1[o] + bytes((po ^ 1,)), "little"))
        pa = perm[a]
        if kind == NOT:
            rows = [None, None]
            for va, ka in ((0, k0[a]), (1, k1[a])):
                pos = pa ^ va
                pad = _sha(ka + gid + bytes((pos,))).digest()
                rows[pos] = (from_bytes(pad[:LABEL_SIZE], "little") ^ outs[truth[2 * va]]
                             ).to_bytes(LABEL_SIZE, "little") + pad[LABEL_SIZE:]
        else:
            pb = perm[b]
            rows = [None] * 4
            for va, ka in ((0, k0[a]), (1, k1[a])):
                for vb, kb in ((0, k0[b]), (1, k1[b])):
                    pos = 2 * (pa ^ va) + (pb ^ vb)
                    pad = _sha(ka + kb + gid + bytes((pos,))).digest()
                    rows[pos] = (from_bytes(pad[:LABEL_SIZE], "little") ^ outs[truth[2 * va + vb]]
                                 ).to_bytes(LABEL_SIZE, "little") + pad[LABEL_SIZE:]
        tables += b"".join(rows)

    gen_labels = []
    for w, bit in zip(c.generator_inputs, gen_bits):
        v = bit == "1"
        gen_labels.append((k1[w] if v else k0[w]) + bytes((perm[w] ^ v,)))

    pairs, checks = [], bytearray()
    for w in c.evaluator_inputs:
        pair = WireLabelPair(k0[w] + bytes((perm[w],)), k1[w] + bytes((perm[w] ^ 1,)))
        pairs.append(pair)
        by_perm = sorted((pair.label0, pair.label1), key=lambda lab: lab[-1])
        checks += _check(w, by_perm[0]) + _check(w, by_perm[1])

    topology = Circuit(c.wire_count, c.kinds, c.in_a, c.in_b, c.out,
                       c.generator_inputs, c.evaluator_inputs, c.outputs, None, validate=False)
    decode = bytes(perm[w] for w in c.outputs)
    return GarbledCircuit(topology, bytes(tables), decode, tuple(gen_labels), bytes(checks)), pairs


def evl(gc: GarbledCircuit, selected) -> str:
    """Evaluate with one label per evaluator input bit; never needs the other."""
    c = gc.circuit
    selected = list(selected)
    if len(selected) != c.evl_width:
        raise ArityMismatch(f"{len(selected)} labels supplied, circuit has "
                            f"{c.evl_width} evaluator inputs")
    labels = [None] * c.wire_count
    for w, lab in zip(c.generator_inputs, gc.generator_input_labels):
        labels[w] = lab
    checks = gc.input_checks
    for i, (w, lab) in enumerate(zip(c.evaluator_inputs, selected)):
        if len(lab) != LABEL_SIZE or lab[-1] > 1:
            raise DecryptionFailure(f"evaluator label {i} is malformed")
        base = 2 * CHECK_SIZE * i + CHECK_SIZE * lab[-1]
        if _check(w, lab) != checks[base:base + CHECK_SIZE]:
            raise DecryptionFailure(f"evaluator label {i} is not a valid selection")
        labels[w] = bytes(lab)

    tables = gc.tables
    from_bytes = int.from_bytes
    pos = 0
    for gi, (kind, a, b, o) in enumerate(zip(c.kinds, c.in_a, c.in_b, c.out)):
        la = labels[a]
        if kind == NOT:
            r = la[16]
            pad = _sha(la[:16] + gi.to_bytes(4, "little") + bytes((r,))).digest()
            start = pos + ROW_SIZE * r
            pos += 2 * ROW_SIZE
        else:
            lb = labels[b]
            r = 2 * la[16] + lb[16]
            pad = _sha(la[:16] + lb[:16] + gi.to_bytes(4, "little") + bytes((r,))).digest()
            start = pos + ROW_SIZE * r
            pos += 4 * ROW_SIZE
        row = tables[start:start + ROW_SIZE]
        if row[LABEL_SIZE:] != pad[LABEL_SIZE:]:
            raise DecryptionFailure(f"gate {gi}: no table row opens under the held labels")
        out = (from_bytes(row[:LABEL_SIZE], "little") ^ from_bytes(pad[:LABEL_SIZE], "little")
               ).to_bytes(LABEL_SIZE, "little")
        if out[16] > 1:
            raise DecryptionFailure(f"gate {gi}: decrypted label is malformed")
        labels[o] = out
    return "".join(str(labels[w][16] ^ d) for w, d in zip(c.outputs, gc.output_decode))
