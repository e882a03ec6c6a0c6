import os
import random

import pytest
from _support import random_bits, random_circuit
from hypothesis import given, settings
from hypothesis import strategies as st

from otpbox.bits import twos_complement
from otpbox.circuit import client_bits, compile_genomic, eval_plain, parse_circuit
from otpbox.errors import ArityMismatch, DecryptionFailure, InputError
from otpbox.garble import (LABEL_SIZE, ROW_SIZE, GarbledCircuit, KeyFile, WireLabelPair,
                           evl, fresh_pairs, gen)
from otpbox.genomics import brca1_table, random_client, risk_plain

AND = parse_circuit("wires 3\ngen_in 0\nevl_in 1\nout 2\nAND 0 1 -> 2\n")


def select(pairs, bits):
    return KeyFile(p.label(int(b)) for p, b in zip(pairs, bits))


def test_and_gate_structure_and_output():
    gc, pairs = gen(AND, "1", random.Random(1))
    assert len(gc.tables) == 4 * ROW_SIZE
    assert len(gc.table(0)) == 4
    assert len(gc.generator_input_labels) == 1
    assert len(pairs) == 1
    assert evl(gc, select(pairs, "1")) == "1"
    assert evl(gc, select(pairs, "0")) == "0"


def test_generator_gets_single_labels_only():
    gc, pairs = gen(AND, "0", random.Random(2))
    (lab,) = gc.generator_input_labels
    assert len(lab) == LABEL_SIZE
    assert lab not in (pairs[0].label0, pairs[0].label1)


def test_distinct_seeds_give_disjoint_labels():
    c = compile_genomic(brca1_table(), 1)
    _, a = gen(c, rng=random.Random(1))
    _, b = gen(c, rng=random.Random(2))
    la = {p.label0[:16] for p in a} | {p.label1[:16] for p in a}
    lb = {p.label0[:16] for p in b} | {p.label1[:16] for p in b}
    assert not la & lb


def test_224_bit_input_gives_224_pairs():
    c = compile_genomic(brca1_table(), 7)
    assert c.evl_width == 224
    _, pairs = gen(c, rng=random.Random(3))
    assert len(pairs) == 224


def test_pairs_are_well_formed():
    for p in fresh_pairs(64, random.Random(4)):
        assert p.label0 != p.label1
        assert p.label0[-1] ^ p.label1[-1] == 1
    with pytest.raises(ValueError):
        WireLabelPair(b"\0" * 17, b"\1" * 16 + b"\0")


def test_random_label_fails():
    gc, pairs = gen(AND, "1", random.Random(5))
    for perm in (0, 1):
        with pytest.raises(DecryptionFailure):
            evl(gc, [os.urandom(16) + bytes((perm,))])


def test_arity():
    gc, pairs = gen(AND, "1", random.Random(6))
    with pytest.raises(ArityMismatch):
        evl(gc, [])
    with pytest.raises(ArityMismatch):
        gen(AND, "10")


def test_random_circuits_match_plain_evaluation():
    rng = random.Random(99)
    for _ in range(300):
        c = random_circuit(rng)
        a, b = random_bits(rng, c.gen_width), random_bits(rng, c.evl_width)
        gc, pairs = gen(c, a, rng)
        assert evl(gc, select(pairs, b)) == eval_plain(c, a, b)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_evl_gen_property(seed):
    rng = random.Random(seed)
    c = random_circuit(rng, max_gates=32, max_inputs=8)
    a, b = random_bits(rng, c.gen_width), random_bits(rng, c.evl_width)
    gc, pairs = gen(c, a, rng)
    assert evl(gc, select(pairs, b)) == eval_plain(c, a, b)


def test_flipped_input_label_never_silently_succeeds():
    rng = random.Random(8)
    c = compile_genomic(brca1_table(), 1)
    gc, pairs = gen(c, rng=rng)
    keys = select(pairs, "0" * 32)
    for i in range(0, 32, 3):
        for byte in (0, 8, 16):
            bad = KeyFile(keys)
            lab = bytearray(bad[i])
            lab[byte] ^= 1
            bad[i] = bytes(lab)
            with pytest.raises(DecryptionFailure):
                evl(gc, bad)


def test_tampered_table_fails():
    gc, pairs = gen(AND, "1", random.Random(9))
    keys = select(pairs, "1")
    raw = bytearray(gc.to_bytes())
    # flip a byte in every table row; whichever row evl opens is corrupted
    tables_at = raw.index(gc.tables)
    for r in range(4):
        raw[tables_at + r * ROW_SIZE + 20] ^= 0x40
    with pytest.raises(DecryptionFailure):
        evl(GarbledCircuit.from_bytes(bytes(raw)), keys)


def test_transcript_shape_is_input_independent():
    c = compile_genomic(brca1_table(), 2)
    shapes = set()
    for seed, bits in ((1, "0" * 64), (2, "1" * 64)):
        gc, _ = gen(c, rng=random.Random(seed))
        shapes.add((len(gc.tables), len(gc.output_decode), len(gc.generator_input_labels),
                    len(gc.input_checks), gc.circuit.topology()))
    assert len(shapes) == 1


def test_file_round_trip(tmp_path):
    c = compile_genomic(brca1_table(), 3)
    gc, pairs = gen(c, rng=random.Random(10))
    gc.write(tmp_path / "c.gc")
    again = GarbledCircuit.read(tmp_path / "c.gc")
    assert again == gc
    assert again.to_bytes()[:8] == b"OTPGC001"
    client = random_client(3, random.Random(1), brca1_table(), hit_rate=1.0)
    bits = client_bits(client)
    out = evl(again, select(pairs, bits))
    assert twos_complement(out) == risk_plain(brca1_table(), client)


def test_keyfile_format(tmp_path):
    keys = KeyFile([bytes(range(17)), bytes(17)])
    keys.write(tmp_path / "k")
    text = (tmp_path / "k").read_text()
    assert text.splitlines()[0] == bytes(range(17)).hex()
    assert text == text.lower()
    assert KeyFile.read(tmp_path / "k") == keys
    with pytest.raises(InputError):
        KeyFile.from_text("zz\n")


def test_not_and_or_gates():
    c = parse_circuit("wires 5\ngen_in 0\nevl_in 1\nout 3 4\n"
                      "OR 0 1 -> 2\nNOT 2 -> 3\nXOR 0 1 -> 4\n")
    for a in "01":
        for b in "01":
            gc, pairs = gen(c, a, random.Random(a + b))
            assert evl(gc, select(pairs, b)) == eval_plain(c, a, b)
