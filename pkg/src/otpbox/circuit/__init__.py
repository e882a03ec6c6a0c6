from .gadgets import (CircuitBuilder, add, add_signed, const_input, equal,
                      equal_circuit, mux, mux_circuit, popcount)
from .genomic import client_bits, compile_genomic, genomic_gate_count, vendor_bits
from .ir import Circuit, Gate, eval_plain
from .text import parse_circuit, serialize_circuit

__all__ = [
    "Circuit", "CircuitBuilder", "Gate", "add", "add_signed", "client_bits",
    "compile_genomic", "const_input", "equal", "equal_circuit", "eval_plain",
    "genomic_gate_count", "mux", "mux_circuit", "parse_circuit", "popcount",
    "serialize_circuit", "vendor_bits",
]
