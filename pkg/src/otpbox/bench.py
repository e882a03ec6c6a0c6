"""Operation-count benchmarks for both variants, plus the variant recommender.

Every row runs the real provisioning and execution workflows on a fresh box
and records exact TPM operation counts:

* ``seal_ops``: ``seal`` plus ``nv_write`` calls while provisioning (writing
  the sealed master key into NVRAM is the second of the master-key pair);
* ``unseal_ops``: ``unseal`` calls while executing.

Wall-clock columns include the simulated TPM latency, so ``--latency-ms 500``
reproduces the shape of a slow chip without waiting for it when the virtual
clock is on.
"""

from __future__ import annotations

import csv
import io
import json
import random
import tempfile
import time
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Optional

from . import otm, otp
from .circuit import client_bits as client_bit_string
from .circuit import compile_genomic, genomic_gate_count
from .errors import InputError, ResourceLimit
from .garble import fresh_pairs
from .genomics import (CLIENT_RECORD_BITS, VENDOR_RECORD_BITS, padded_vendor, random_client,
                       risk_plain)

TXT = "txt"
GC = "gc"
VARIANTS = (TXT, GC)

DEFAULT_CAP = 2_000_000
BIG_CAP = 22_447_296  # one full AncestryDNA export
DEFAULT_GARBLE_BUDGET = 2_000_000  # gates; larger rows skip gen/evl

BASE_CLIENT_BITS = 224
BASE_VENDOR_BITS = 880
CLIENT_SWEEP = (224, 2_240, 22_400, 224_000)
VENDOR_SWEEP = (880, 8_800, 88_000)

GC_BASED = "GC-based"
TXT_ONLY = "TXT-only"
LARGE_VENDOR_BITS = 8_800
SMALL_CLIENT_BITS = 224_000


@dataclass
class BenchRow:
    variant: str
    axis: str
    vendor_bits: int
    client_bits: int
    seal_ops: int
    unseal_ops: int
    gate_count: Optional[int]
    pairs: Optional[int]
    garbled: bool
    result: Optional[int]
    provision_ms: float
    execute_ms: float

    def counts(self):
        """Everything except the timings."""
        d = asdict(self)
        d.pop("provision_ms")
        d.pop("execute_ms")
        return d


COLUMNS = [f.name for f in fields(BenchRow)]


def recommend(vendor_bits: int, client_bits: int) -> str:
    """GC-based only for large vendor input against small client input."""
    if vendor_bits <= 0 or client_bits <= 0:
        raise InputError("input sizes must be positive")
    if vendor_bits >= LARGE_VENDOR_BITS and client_bits <= SMALL_CLIENT_BITS:
        return GC_BASED
    return TXT_ONLY


def _records(bits: int, record_bits: int, what: str) -> int:
    if bits <= 0 or bits % record_bits:
        raise InputError(f"{what} size {bits} is not a positive multiple of {record_bits} bits")
    return bits // record_bits


class _Timer:
    def __init__(self, state):
        self.state = state

    def __enter__(self):
        self.state.simulated_ms = 0.0
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.ms = (time.perf_counter() - self.t0) * 1000.0 + self.state.simulated_ms
        return False


def _fresh_state(root: Path, latency_ms: float, virtual_clock: bool):
    box = otp.Box(root)
    state = box.state()
    state.latency_ms = latency_ms
    state.virtual_clock = virtual_clock
    return box, state


def run_txt(vendor_bits: int, client_bits: int, rng: random.Random, root: Path,
            latency_ms: float = 0.0, virtual_clock: bool = True, axis: str = "") -> BenchRow:
    vendor = padded_vendor(_records(vendor_bits, VENDOR_RECORD_BITS, "vendor"), rng)
    client = random_client(_records(client_bits, CLIENT_RECORD_BITS, "client"), rng, vendor)
    box, state = _fresh_state(root, latency_ms, virtual_clock)

    state.reset_counters()
    with _Timer(state) as tp:
        with box.launch(state, otp.TXT_PAYLOAD, otp.PROVISION) as s:
            otp.txt_provision(s, vendor, box.txt_dir)
    seal_ops = state.ops["seal"] + state.ops["nv_write"]

    state.reset_counters()
    with _Timer(state) as te:
        image = otp.TxtOnlyImage.load(box.txt_dir)
        with box.launch(state, otp.TXT_PAYLOAD, otp.EXECUTE) as s:
            result = otp.txt_execute(s, image, client, box.txt_dir / "result.txt")
    return BenchRow(TXT, axis, vendor_bits, client_bits, seal_ops, state.ops["unseal"],
                    None, None, False, result.decoded, round(tp.ms, 3), round(te.ms, 3))


def run_gc(vendor_bits: int, client_bits: int, rng: random.Random, root: Path,
           mode: str = otm.MASTER_KEY, chunk: int = 1, latency_ms: float = 0.0,
           virtual_clock: bool = True, garble_budget: int = DEFAULT_GARBLE_BUDGET,
           axis: str = "") -> BenchRow:
    """GC-based row. Above ``garble_budget`` gates the circuit is only counted;
    the OTM still stores and selects a full width of real label pairs."""
    n_vendor = _records(vendor_bits, VENDOR_RECORD_BITS, "vendor")
    n_client = _records(client_bits, CLIENT_RECORD_BITS, "client")
    vendor = padded_vendor(n_vendor, rng)
    client = random_client(n_client, rng, vendor)
    gates = genomic_gate_count(n_vendor, n_client)
    garbled = gates <= garble_budget
    box, state = _fresh_state(root, latency_ms, virtual_clock)

    state.reset_counters()
    with _Timer(state) as tp:
        with box.launch(state, otp.GC_SELECT_PAYLOAD, otp.PROVISION) as s:
            if garbled:
                circuit = compile_genomic(vendor, n_client)
                _, image = otp.gc_provision(s, circuit, None, client_bits, mode, box.gc_dir,
                                            chunk, rng)
            else:
                image = otm.provision(s, fresh_pairs(client_bits, rng), mode, box.otm_dir,
                                      chunk)
    seal_ops = state.ops["seal"] + state.ops["nv_write"]
    pairs = image.evaluator_width

    state.reset_counters()
    bits = client_bit_string(client)
    with _Timer(state) as te:
        s = box.launch(state, otp.GC_SELECT_PAYLOAD, otp.EXECUTE)
        if garbled:
            result = otp.gc_run(s, box.gc_file, image, bits, box.keys_file,
                                box.gc_dir / "result.txt").decoded
        else:
            with s:
                otp.gc_select(s, image, bits, box.keys_file)
            result = None
    unseal_ops = state.ops["unseal"]
    if garbled and result != risk_plain(vendor, client):
        raise AssertionError(f"garbled result {result} disagrees with the plaintext oracle")
    return BenchRow(GC, axis, vendor_bits, client_bits, seal_ops, unseal_ops, gates, pairs,
                    garbled, result, round(tp.ms, 3), round(te.ms, 3))


def bench_sweep(variant: str, axis: str, sizes, *, fixed_vendor_bits: int = BASE_VENDOR_BITS,
                fixed_client_bits: int = BASE_CLIENT_BITS, mode: str = otm.MASTER_KEY,
                chunk: int = 1, latency_ms: float = 0.0, virtual_clock: bool = True,
                seed: int = 0, big: bool = False,
                garble_budget: int = DEFAULT_GARBLE_BUDGET, workdir=None) -> list:
    """One row per size along ``axis`` ("vendor" or "client"), each on a fresh box."""
    if variant not in VARIANTS:
        raise InputError(f"unknown variant {variant!r}")
    if axis not in ("vendor", "client"):
        raise InputError(f"unknown axis {axis!r}")
    sizes = [int(s) for s in sizes]
    if not sizes or any(s <= 0 for s in sizes):
        raise InputError("sizes must be positive")
    cap = BIG_CAP if big else DEFAULT_CAP
    fixed = fixed_client_bits if axis == "vendor" else fixed_vendor_bits
    for s in sizes + [fixed]:
        if s > cap:
            raise ResourceLimit(f"{s} bits exceeds the desk-scale cap of {cap} bits"
                                + ("" if big else " (use --big to raise it)"))

    rows = []
    with tempfile.TemporaryDirectory(prefix="otpbox-bench-", dir=workdir) as tmp:
        for i, size in enumerate(sizes):
            vbits, cbits = (size, fixed) if axis == "vendor" else (fixed, size)
            rng = random.Random(f"{seed}:{variant}:{axis}:{size}")
            root = Path(tmp) / f"box{i}"
            if variant == TXT:
                rows.append(run_txt(vbits, cbits, rng, root, latency_ms, virtual_clock, axis))
            else:
                rows.append(run_gc(vbits, cbits, rng, root, mode, chunk, latency_ms,
                                   virtual_clock, garble_budget, axis))
    return rows


# -- rendering ---------------------------------------------------------------------

def _cell(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "yes" if v else "no"
    return str(v)


def render_rows(rows, fmt: str = "table") -> str:
    if fmt == "json":
        return json.dumps([asdict(r) for r in rows], indent=1) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in rows:
            w.writerow([_cell(getattr(r, c)) for c in COLUMNS])
        return buf.getvalue()
    if fmt != "table":
        raise InputError(f"unknown format {fmt!r}")
    table = [COLUMNS] + [[_cell(getattr(r, c)) for c in COLUMNS] for r in rows]
    widths = [max(len(row[i]) for row in table) for i in range(len(COLUMNS))]
    lines = ["  ".join(cell.rjust(w) for cell, w in zip(row, widths)) for row in table]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def read_csv_rows(text: str) -> list:
    """Inverse of ``render_rows(..., "csv")``."""
    out = []
    for rec in csv.DictReader(io.StringIO(text)):
        def num(v, cast=int):
            return None if v == "" else cast(v)
        out.append(BenchRow(
            rec["variant"], rec["axis"], int(rec["vendor_bits"]), int(rec["client_bits"]),
            int(rec["seal_ops"]), int(rec["unseal_ops"]), num(rec["gate_count"]),
            num(rec["pairs"]), rec["garbled"] == "yes", num(rec["result"]),
            float(rec["provision_ms"]), float(rec["execute_ms"])))
    return out
